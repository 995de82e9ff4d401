#include "cli.hpp"

#include "gsr/error_lab.hpp"
#include "gsr/errors.hpp"
#include "gsr/random.hpp"
#include "gsr/rotation.hpp"
#include "gsr/tensor_io.hpp"
#include "gsr/transform.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <ostream>
#include <sstream>

namespace gsr::cli {

namespace {

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct GlobalOptions {
    std::uint64_t seed = 0;
    std::string out;
    std::string precision = "f64";
};

struct BlockFlags {
    int hidden = 64;
    int heads = 4;
    int ffn = 128;
    int group = 16;
    int seq_len = 8;
    int outlier_channels = 2;
    double outlier_gain = 8.0;

    void add(CLI::App& app) {
        app.add_option("--hidden", hidden, "hidden width C (power of two)")->capture_default_str();
        app.add_option("--heads", heads, "attention heads")->capture_default_str();
        app.add_option("--ffn", ffn, "feed-forward width H (power of two)")->capture_default_str();
        app.add_option("--group", group, "group size G")->capture_default_str();
        app.add_option("--seq-len", seq_len, "tokens per input")->capture_default_str();
        app.add_option("--outlier-channels", outlier_channels, "hidden channels with folded gain")->capture_default_str();
        app.add_option("--outlier-gain", outlier_gain, "gain of those channels")->capture_default_str();
    }

    ToyBlockConfig config(std::uint64_t seed) const {
        ToyBlockConfig cfg{hidden, heads, ffn, group, seq_len, seed, outlier_channels, outlier_gain};
        try {
            cfg.validate();
        } catch (const Error& e) {
            throw UsageError(e.what());
        }
        return cfg;
    }

    std::string echo() const {
        std::ostringstream o;
        o << " --hidden " << hidden << " --heads " << heads << " --ffn " << ffn << " --group " << group
          << " --seq-len " << seq_len << " --outlier-channels " << outlier_channels << " --outlier-gain "
          << std::setprecision(17) << outlier_gain;
        return o.str();
    }
};

std::string fmt(double v, int precision = 6) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", precision, v);
    return buf;
}

std::string fmt17(double v) { return fmt(v, 17); }

ClipPolicy parse_clip(const std::string& text) {
    if (text == "none") return ClipNone{};
    if (text == "mse") return ClipMse{default_mse_grid()};
    if (text.rfind("ratio:", 0) == 0) {
        char* end = nullptr;
        const double r = std::strtod(text.c_str() + 6, &end);
        if (end == text.c_str() + 6 || *end != '\0' || !(r > 0.0 && r <= 1.0)) {
            throw UsageError("clip ratio must be a number in (0, 1]");
        }
        return ClipFixed{r};
    }
    throw UsageError("clip must be none, mse or ratio:R");
}

RotationChoice parse_rotation(const std::string& text) {
    if (text.rfind("file:", 0) == 0) {
        const std::string path = text.substr(5);
        const Tensor t = read_tensor(path);
        if (t.dtype == DType::I8) return RotationChoice::make_external(ortho_from_tensor(t).dense(), text);
        return RotationChoice::make_external(matrix_from_tensor(t), text);
    }
    try {
        return RotationChoice::parse(text);
    } catch (const Error&) {
        throw UsageError("rotation must be identity, gh, gw, lh, gsr or file:PATH (got '" + text + "')");
    }
}

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> items;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) items.push_back(item);
    }
    return items;
}

void print_sequencies(std::ostream& out, const OrthoMatrix& m, int group) {
    const SequencyProfile p = sequency_profile(m, group > 0 ? group : m.order());
    out << "row sequencies:";
    const std::size_t shown = std::min<std::size_t>(p.per_row_sequency.size(), 64);
    for (std::size_t i = 0; i < shown; ++i) out << ' ' << p.per_row_sequency[i];
    if (shown < p.per_row_sequency.size()) out << " ... (" << p.per_row_sequency.size() << " rows)";
    out << '\n';
    if (group > 0) {
        out << "group size " << group << ": mean group sequency variance " << fmt(mean(p.per_group_variance))
            << " (min " << fmt(*std::min_element(p.per_group_variance.begin(), p.per_group_variance.end()))
            << ", max " << fmt(*std::max_element(p.per_group_variance.begin(), p.per_group_variance.end())) << ")\n";
    }
}

// ---- make-rotation ------------------------------------------------------

struct MakeRotationFlags {
    std::string kind;
    int n = 0;
    int group = 0;
    bool randomize = false;
};

int cmd_make_rotation(const MakeRotationFlags& f, const GlobalOptions& g, std::ostream& out) {
    if (!is_power_of_two(f.n) || f.n < 2 || f.n > kMaxOrder) {
        throw UsageError("n must be a power of two in [2, 65536]");
    }
    const bool grouped = f.kind == "lh" || f.kind == "gsr";
    if (grouped && f.group == 0) throw UsageError("--group is required for lh and gsr");
    if (f.group != 0 && (!is_power_of_two(f.group) || f.group < 2 || f.n % f.group != 0)) {
        throw UsageError("group must be a power of two dividing n");
    }

    const std::optional<std::uint64_t> seed = f.randomize ? std::optional<std::uint64_t>(g.seed) : std::nullopt;
    std::optional<OrthoMatrix> m;
    if (f.kind == "gh" || f.kind == "gw") {
        m = hadamard_sylvester(f.n);
        if (f.kind == "gw") m = walsh_from_hadamard(*m);
        if (seed) m = randomize_signs(*m, *seed);
    } else {
        GsrOptions opts;
        opts.base = f.kind == "gsr" ? BlockKind::Walsh : BlockKind::HadamardNatural;
        opts.seed = seed;
        m = gsr(f.n, f.group, opts);
    }

    out << "config: gsr make-rotation --kind " << f.kind << " --n " << f.n;
    if (f.group) out << " --group " << f.group;
    if (f.randomize) out << " --randomize";
    out << " --seed " << g.seed;
    if (!g.out.empty()) out << " --out " << g.out;
    out << '\n';
    out << "kind: " << kind_name(m->kind()) << " order " << m->order() << " block " << m->group_size() << " scale "
        << fmt17(m->scale()) << '\n';
    out << "orthogonality residual: " << fmt(m->orthogonality_residual(), 3) << '\n';
    print_sequencies(out, *m, f.group);
    if (!g.out.empty()) {
        write_tensor(g.out, ortho_to_tensor(*m));
        out << "wrote " << g.out << '\n';
    }
    return kExitOk;
}

// ---- inspect ------------------------------------------------------------

int cmd_inspect(const std::string& file, int group, std::ostream& out) {
    const std::vector<Tensor> records = read_tensors(file);
    const Tensor& t = records.front();
    const auto meta = t.metadata_json();
    const std::string type = meta.is_object() && meta.contains("type") && meta["type"].is_string()
                                 ? meta["type"].get<std::string>()
                                 : "";
    out << "file: " << file << " (" << records.size() << " record" << (records.size() == 1 ? "" : "s") << ")\n";
    out << "metadata: " << t.metadata << '\n';
    if (type == "rotation") {
        const OrthoMatrix m = ortho_from_tensor(t);
        if (group != 0 && (group < 1 || m.order() % group != 0)) {
            throw UsageError("group must divide the rotation order");
        }
        out << "kind: " << kind_name(m.kind()) << " order " << m.order() << " block " << m.group_size() << '\n';
        out << "orthogonality residual: " << fmt(m.orthogonality_residual(), 3) << '\n';
        print_sequencies(out, m, group);
        return kExitOk;
    }
    if (type == "quantized_codes") {
        const QuantizedTensor q = quantized_from_tensors(records);
        out << "quantized " << q.rows() << "x" << q.cols() << " " << q.spec.describe() << '\n';
        return kExitOk;
    }
    const Matrix m = matrix_from_tensor(t);
    out << "tensor " << m.rows() << "x" << m.cols() << " dtype " << static_cast<int>(t.dtype) << '\n';
    const double mu = m.mean();
    const double var = (m.array() - mu).square().mean();
    out << "mean " << fmt(mu) << " std " << fmt(std::sqrt(var)) << " max|w| " << fmt(m.cwiseAbs().maxCoeff()) << '\n';
    std::vector<double> norms(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index c = 0; c < m.cols(); ++c) norms[c] = m.col(c).norm();
    out << "column norm max/median " << fmt(*std::max_element(norms.begin(), norms.end()) / median(norms)) << '\n';
    return kExitOk;
}

// ---- quantize -----------------------------------------------------------

struct QuantizeFlags {
    std::string file;
    int bits = 2;
    int group = 128;
    std::string scheme = "rtn";
    std::string clip = "none";
    bool symmetric = false;
    int calib_samples = 256;
    std::string calib_file;
};

int cmd_quantize(const QuantizeFlags& f, const GlobalOptions& g, std::ostream& out) {
    QuantSpec spec{f.bits, f.group, f.symmetric, parse_clip(f.clip)};
    try {
        spec.validate();
    } catch (const Error& e) {
        throw UsageError(e.what());
    }
    const Matrix w = matrix_from_tensor(read_tensor(f.file));
    if (w.cols() % spec.group_length(static_cast<int>(w.cols())) != 0) {
        throw UsageError("group size must divide the tensor's row length");
    }
    out << "config: gsr quantize --file " << f.file << " --bits " << f.bits << " --group " << f.group << " --scheme "
        << f.scheme << " --clip " << f.clip << (f.symmetric ? " --symmetric" : "") << " --seed " << g.seed;
    if (f.scheme == "gptq") {
        out << (f.calib_file.empty() ? " --calib-samples " + std::to_string(f.calib_samples)
                                     : " --calib " + f.calib_file);
    }
    if (!g.out.empty()) out << " --out " << g.out;
    out << '\n';

    QuantizedTensor q;
    std::optional<CalibrationHessian> hessian;
    if (f.scheme == "gptq") {
        Matrix x;
        if (!f.calib_file.empty()) {
            x = matrix_from_tensor(read_tensor(f.calib_file));
        } else {
            Rng rng(g.seed);
            x.resize(f.calib_samples, w.cols());
            for (Eigen::Index r = 0; r < x.rows(); ++r) {
                for (Eigen::Index c = 0; c < x.cols(); ++c) x(r, c) = rng.normal();
            }
        }
        if (x.cols() != w.cols()) throw UsageError("calibration width differs from the tensor's row length");
        hessian = hessian_from_calibration(x);
        q = gptq_quantize(w, *hessian, spec);
    } else {
        q = rtn_quantize(w, spec);
    }
    const Matrix w_hat = dequantize(q);
    out << "spec: " << spec.describe() << '\n';
    out << "mse: " << fmt17(quant_error(w, w_hat, MetricMse{})) << '\n';
    out << "max_abs: " << fmt17(quant_error(w, w_hat, MetricMaxAbs{})) << '\n';
    if (hessian) out << "proxy: " << fmt17(quant_error(w, w_hat, MetricProxyHessian{&hessian->h})) << '\n';
    if (!g.out.empty()) {
        write_tensors(g.out, quantized_to_tensors(q));
        out << "wrote " << g.out << '\n';
    }
    return kExitOk;
}

// ---- compare ------------------------------------------------------------

struct CompareFlags {
    CorpusSpec corpus;
    std::string dist = "t";
    std::string variants = "gh,gw,lh,gsr";
    int bits = 2;
    int group = 64;
    std::string scheme = "rtn";
    std::string clip = "mse";
    bool symmetric = false;
    int calib_samples = 256;
};

void print_sign_line(std::ostream& out, const ExperimentReport& report, const std::string& a, const std::string& b) {
    const SignTest t = compare_variants(report, a, b);
    const double ma = report.variant(a).metrics.find(kMetricMse)->second.median;
    const double mb = report.variant(b).metrics.find(kMetricMse)->second.median;
    const bool holds = ma < mb && t.p_value < 0.05;
    out << "sign test " << a << " < " << b << ": median mse " << fmt(ma) << " vs " << fmt(mb) << ", wins " << t.wins
        << "/" << (t.wins + t.losses) << ", p = " << fmt(t.p_value, 3) << " -> "
        << (holds ? "HOLDS" : "DOES NOT HOLD") << '\n';
}

int cmd_compare(CompareFlags f, const GlobalOptions& g, std::ostream& out, std::ostream& err) {
    if (f.dist == "gaussian") {
        f.corpus.base = BaseDist::Gaussian;
    } else if (f.dist == "t") {
        f.corpus.base = BaseDist::StudentT;
    } else {
        throw UsageError("dist must be gaussian or t");
    }
    f.corpus.seed = g.seed;
    const QuantSpec spec{f.bits, f.group, f.symmetric, parse_clip(f.clip)};
    try {
        f.corpus.validate();
        spec.validate();
    } catch (const Error& e) {
        throw UsageError(e.what());
    }
    if (!is_power_of_two(f.corpus.cols)) throw UsageError("cols must be a power of two");
    if (!is_power_of_two(f.group) || f.group < 2 || f.corpus.cols % f.group != 0) {
        throw UsageError("group must be a power of two dividing cols");
    }
    const auto names = split_list(f.variants);
    if (names.empty()) throw UsageError("at least one variant is required");
    std::vector<Variant> variants;
    for (std::size_t i = 0; i < names.size(); ++i) {
        const RotationChoice choice = parse_rotation(names[i]);
        Variant v;
        v.name = names[i];
        v.rotation = materialize(choice, f.corpus.cols, f.group, derive_seed(g.seed, 1000 + i));
        variants.push_back(std::move(v));
    }

    std::ostringstream echo;
    echo << "gsr compare --seed " << g.seed << " --count " << f.corpus.count << " --rows " << f.corpus.rows
         << " --cols " << f.corpus.cols << " --dist " << f.dist << " --nu " << fmt17(f.corpus.nu) << " --outliers "
         << f.corpus.outlier_channels << " --gain " << fmt17(f.corpus.outlier_gain) << " --smooth "
         << fmt17(f.corpus.smooth_weight) << " --smooth-corr " << fmt17(f.corpus.smooth_correlation)
         << " --variants " << f.variants << " --bits " << f.bits << " --group " << f.group << " --scheme " << f.scheme
         << " --clip " << f.clip << (f.symmetric ? " --symmetric" : "") << " --calib-samples " << f.calib_samples;
    if (!g.out.empty()) echo << " --out " << g.out;
    out << "config: " << echo.str() << '\n';

    ComparisonOptions opts;
    opts.weight_spec = spec;
    opts.quantizer = f.scheme == "gptq" ? Quantizer::GPTQ : Quantizer::RTN;
    opts.calibration_samples = f.calib_samples;
    opts.seed = g.seed;
    const ExperimentReport report = run_comparison(gen_corpus(f.corpus), variants, opts);

    out << "corpus: " << f.corpus.describe() << '\n';
    out << "spec: " << report.spec_text << '\n';
    out << "corpus hash " << std::hex << report.corpus_hash << " spec hash " << report.spec_hash << std::dec << '\n';

    // Method x variant x metric, the same shape as the published comparison table.
    const std::string method = f.scheme == "gptq" ? "GPTQ" : "RTN";
    const std::string bits = "W" + std::to_string(f.bits) + "A16";
    out << std::left << std::setw(8) << "Method" << std::setw(8) << "Bits" << std::setw(12) << "R1" << std::right
        << std::setw(14) << "median mse" << std::setw(14) << "mean mse" << std::setw(14) << "median max"
        << std::setw(14) << "median proxy" << std::setw(18) << "input hash" << '\n';
    for (const auto& v : report.variants) {
        std::string label = v.name;
        std::transform(label.begin(), label.end(), label.begin(), ::toupper);
        std::ostringstream hash;
        hash << std::hex << v.input_hash;
        out << std::left << std::setw(8) << method << std::setw(8) << bits << std::setw(12) << label << std::right
            << std::setw(14) << fmt(v.metrics.find(kMetricMse)->second.median) << std::setw(14)
            << fmt(v.metrics.find(kMetricMse)->second.mean) << std::setw(14)
            << fmt(v.metrics.find(kMetricMaxAbs)->second.median) << std::setw(14)
            << fmt(v.metrics.find(kMetricProxy)->second.median) << std::setw(18) << hash.str() << '\n';
    }
    const auto has = [&](const std::string& n) { return std::find(names.begin(), names.end(), n) != names.end(); };
    for (const auto& [a, b] : std::vector<std::pair<std::string, std::string>>{{"gw", "gh"}, {"gsr", "lh"}, {"gsr", "gh"}}) {
        if (has(a) && has(b)) print_sign_line(out, report, a, b);
    }
    out << "fairness: " << (report.fairness_ok() ? "OK (all variants consumed identical corpus bytes)" : "FAILED")
        << '\n';
    if (!report.fairness_ok()) {
        err << "variant input hashes differ from the corpus hash\n";
        return kExitFailure;
    }
    if (!g.out.empty()) {
        write_report_csv(g.out, report.rows());
        out << "wrote " << g.out << " (" << report.rows().size() << " rows)\n";
    }
    return kExitOk;
}

// ---- invariance ---------------------------------------------------------

struct InvarianceFlags {
    BlockFlags block;
    std::string r1 = "gsr", r2 = "gh", r3 = "gh", r4 = "gh";
    std::string r4_mode = "global";
    int seeds = 20;
    double tol = 0.0;
};

RotationAssignment make_assignment(const std::string& r1, const std::string& r2, const std::string& r3,
                                   const std::string& r4, const std::string& mode) {
    if (mode != "global" && mode != "local") throw UsageError("r4-mode must be global or local");
    return {parse_rotation(r1), parse_rotation(r2), parse_rotation(r3), parse_rotation(r4),
            mode == "local" ? R4Mode::Local : R4Mode::Global};
}

int cmd_invariance(const InvarianceFlags& f, const GlobalOptions& g, std::ostream& out) {
    if (f.seeds < 1) throw UsageError("seeds must be >= 1");
    const bool single = g.precision == "f32";
    const double tol = f.tol > 0.0 ? f.tol : (single ? 1e-4 : 1e-10);
    const ToyBlockConfig base = f.block.config(g.seed);
    const RotationAssignment assign = make_assignment(f.r1, f.r2, f.r3, f.r4, f.r4_mode);
    out << "config: gsr invariance --seed " << g.seed << " --precision " << g.precision << f.block.echo() << " --r1 "
        << f.r1 << " --r2 " << f.r2 << " --r3 " << f.r3 << " --r4 " << f.r4 << " --r4-mode " << f.r4_mode
        << " --seeds " << f.seeds << " --tol " << fmt(tol, 3) << '\n';

    double worst = 0.0;
    for (int s = 0; s < f.seeds; ++s) {
        ToyBlockConfig cfg = base;
        cfg.seed = derive_seed(g.seed, static_cast<std::uint64_t>(s));
        const ToyBlock block = build_toy_block(cfg);
        const ToyBlock fused = fuse_rotations(block, assign);
        const Matrix input = random_input(cfg, derive_seed(cfg.seed, 7));
        double diff = 0.0;
        if (single) {
            const MatrixT<float> x = input.cast<float>();
            diff = (forward<float>(fused, x) - forward<float>(block, x)).cwiseAbs().maxCoeff();
        } else {
            diff = (forward<double>(fused, input) - forward<double>(block, input)).cwiseAbs().maxCoeff();
        }
        worst = std::max(worst, diff);
    }
    const bool pass = worst < tol;
    out << "max abs diff = " << fmt(worst, 3) << '\n';
    out << "max abs diff < " << fmt(tol, 3) << ": " << (pass ? "PASS" : "FAIL") << '\n';
    return pass ? kExitOk : kExitFailure;
}

// ---- r4-ablation --------------------------------------------------------

struct AblationFlags {
    BlockFlags block;
    int seeds = 50;
    int wbits = 2;
    int abits = 4;
    std::string r1 = "gsr";
    int bootstrap = 1000;
};

int cmd_r4_ablation(const AblationFlags& f, const GlobalOptions& g, std::ostream& out) {
    if (f.seeds < 1) throw UsageError("seeds must be >= 1");
    AblationOptions opts = AblationOptions::defaults(f.block.config(g.seed));
    opts.seeds = f.seeds;
    opts.r1 = f.r1;
    opts.bootstrap_resamples = f.bootstrap;
    opts.weight_spec.bits = f.wbits;
    opts.activation_spec.bits = f.abits;
    try {
        RotationChoice::parse(f.r1);
        opts.weight_spec.validate();
        opts.activation_spec.validate();
    } catch (const Error& e) {
        throw UsageError(e.what());
    }
    out << "config: gsr r4-ablation --seed " << g.seed << f.block.echo() << " --seeds " << f.seeds << " --wbits "
        << f.wbits << " --abits " << f.abits << " --r1 " << f.r1 << " --bootstrap " << f.bootstrap << '\n';
    const AblationReport report = r4_ablation(opts);
    out << "ablation: " << report.config << '\n';
    out << std::left << std::setw(6) << "R1" << std::setw(8) << "R4" << std::right << std::setw(16) << "W16A16"
        << std::setw(16) << "W2A16" << std::setw(16) << "W2A4" << "   (median output MSE vs full precision)\n";
    for (R4Mode mode : {R4Mode::Global, R4Mode::Local}) {
        std::string r1 = f.r1;
        std::transform(r1.begin(), r1.end(), r1.begin(), ::toupper);
        out << std::left << std::setw(6) << r1 << std::setw(8) << (mode == R4Mode::Global ? "GH" : "LH") << std::right;
        for (const char* s : {"W16A16", "W2A16", "W2A4"}) out << std::setw(16) << fmt(report.cell(s, mode).median);
        out << '\n';
    }
    for (const auto& c : report.comparisons) {
        out << c.setting << " local-global median diff " << fmt(c.local_minus_global.estimate) << " 95% CI ["
            << fmt(c.local_minus_global.lower) << ", " << fmt(c.local_minus_global.upper) << "], local better in "
            << c.local_better.wins << "/" << (c.local_better.wins + c.local_better.losses) << " seeds -> "
            << (c.significant ? (c.local_minus_global.estimate < 0 ? "local significantly better"
                                                                    : "local significantly worse")
                              : "not significant")
            << '\n';
    }
    out << "W16A16 max cell mse " << fmt(std::max(report.cell("W16A16", R4Mode::Global).median,
                                                  report.cell("W16A16", R4Mode::Local).median), 3)
        << '\n';
    return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Sequency-ordered rotations for low-bit group quantization", "gsr"};
    app.require_subcommand(1);
    app.fallthrough();
    GlobalOptions global;
    app.add_option("--seed", global.seed, "run seed")->capture_default_str();
    app.add_option("--out", global.out, "output file");
    app.add_option("--precision", global.precision, "forward-pass precision")
        ->check(CLI::IsMember({"f32", "f64"}))
        ->capture_default_str();

    MakeRotationFlags mr;
    auto* make_rotation = app.add_subcommand("make-rotation", "construct and save a rotation matrix");
    make_rotation->add_option("--kind", mr.kind, "gh, gw, lh or gsr")->required()->check(
        CLI::IsMember({"gh", "gw", "lh", "gsr"}));
    make_rotation->add_option("--n", mr.n, "matrix order")->required();
    make_rotation->add_option("--group", mr.group, "block size for lh/gsr");
    make_rotation->add_flag("--randomize", mr.randomize, "flip column signs from --seed");

    std::string inspect_file;
    int inspect_group = 0;
    auto* inspect = app.add_subcommand("inspect", "describe a tensor file");
    inspect->add_option("--file", inspect_file, "tensor file")->required();
    inspect->add_option("--group", inspect_group, "group size for sequency statistics");

    QuantizeFlags qf;
    auto* quantize = app.add_subcommand("quantize", "quantize a 2-D tensor file");
    quantize->add_option("--file", qf.file, "tensor file")->required();
    quantize->add_option("--bits", qf.bits, "bit width")->capture_default_str();
    quantize->add_option("--group", qf.group, "group size (0 = per channel)")->capture_default_str();
    quantize->add_option("--scheme", qf.scheme, "rtn or gptq")->check(CLI::IsMember({"rtn", "gptq"}))->capture_default_str();
    quantize->add_option("--clip", qf.clip, "none, mse or ratio:R")->capture_default_str();
    quantize->add_flag("--symmetric", qf.symmetric, "symmetric codes");
    quantize->add_option("--calib-samples", qf.calib_samples, "random calibration rows for gptq")->capture_default_str();
    quantize->add_option("--calib", qf.calib_file, "calibration activations (samples x d) for gptq");

    CompareFlags cf;
    auto* compare = app.add_subcommand("compare", "rotation variant comparison on a synthetic corpus");
    compare->add_option("--count", cf.corpus.count, "tensors")->capture_default_str();
    compare->add_option("--rows", cf.corpus.rows, "rows per tensor")->capture_default_str();
    compare->add_option("--cols", cf.corpus.cols, "input channels per tensor")->capture_default_str();
    compare->add_option("--dist", cf.dist, "gaussian or t")->capture_default_str();
    compare->add_option("--nu", cf.corpus.nu, "Student-t degrees of freedom")->capture_default_str();
    compare->add_option("--outliers", cf.corpus.outlier_channels, "outlier input channels")->capture_default_str();
    compare->add_option("--gain", cf.corpus.outlier_gain, "outlier channel gain")->capture_default_str();
    compare->add_option("--smooth", cf.corpus.smooth_weight, "smooth component weight")->capture_default_str();
    compare->add_option("--smooth-corr", cf.corpus.smooth_correlation, "smooth component correlation")
        ->capture_default_str();
    compare->add_option("--variants", cf.variants, "comma list of identity,gh,gw,lh,gsr,file:PATH")
        ->capture_default_str();
    compare->add_option("--bits", cf.bits, "weight bits")->capture_default_str();
    compare->add_option("--group", cf.group, "group size")->capture_default_str();
    compare->add_option("--scheme", cf.scheme, "rtn or gptq")->check(CLI::IsMember({"rtn", "gptq"}))->capture_default_str();
    compare->add_option("--clip", cf.clip, "none, mse or ratio:R")->capture_default_str();
    compare->add_flag("--symmetric", cf.symmetric, "symmetric weight codes");
    compare->add_option("--calib-samples", cf.calib_samples, "calibration rows per tensor")->capture_default_str();

    InvarianceFlags inf;
    auto* invariance = app.add_subcommand("invariance", "full-precision invariance of a fused toy block");
    inf.block.add(*invariance);
    invariance->add_option("--r1", inf.r1)->capture_default_str();
    invariance->add_option("--r2", inf.r2)->capture_default_str();
    invariance->add_option("--r3", inf.r3)->capture_default_str();
    invariance->add_option("--r4", inf.r4)->capture_default_str();
    invariance->add_option("--r4-mode", inf.r4_mode, "global or local")->capture_default_str();
    invariance->add_option("--seeds", inf.seeds, "block seeds to test")->capture_default_str();
    invariance->add_option("--tol", inf.tol, "tolerance (default 1e-10 f64, 1e-4 f32)");

    AblationFlags af;
    auto* ablation = app.add_subcommand("r4-ablation", "global vs local R4 under W2 and W2A4");
    af.block.add(*ablation);
    ablation->add_option("--seeds", af.seeds, "block seeds")->capture_default_str();
    ablation->add_option("--wbits", af.wbits, "weight bits")->capture_default_str();
    ablation->add_option("--abits", af.abits, "activation bits")->capture_default_str();
    ablation->add_option("--r1", af.r1, "R1 rotation")->capture_default_str();
    ablation->add_option("--bootstrap", af.bootstrap, "bootstrap resamples")->capture_default_str();

    // CLI11 consumes a vector in reverse order, without the program name.
    std::vector<std::string> reversed;
    for (std::size_t i = args.size(); i-- > 1;) reversed.push_back(args[i]);
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << '\n';
        return kExitUsage;
    }

    try {
        if (*make_rotation) return cmd_make_rotation(mr, global, out);
        if (*inspect) return cmd_inspect(inspect_file, inspect_group, out);
        if (*quantize) return cmd_quantize(qf, global, out);
        if (*compare) return cmd_compare(cf, global, out, err);
        if (*invariance) return cmd_invariance(inf, global, out);
        if (*ablation) return cmd_r4_ablation(af, global, out);
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitFailure;
    }
    return kExitUsage;
}

}  // namespace gsr::cli
