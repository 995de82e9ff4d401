#include "gsr/error_lab.hpp"

#include "gsr/errors.hpp"
#include "gsr/random.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace gsr {

namespace {

constexpr std::uint64_t kCalibrationStream = 0x5ca1ab1e;

Matrix calibration_activations(int samples, int cols, std::uint64_t seed) {
    Rng rng(seed);
    Matrix x(samples, cols);
    for (int r = 0; r < samples; ++r) {
        for (int c = 0; c < cols; ++c) x(r, c) = rng.normal();
    }
    return x;
}

double output_mse(const Matrix& a, const Matrix& b) { return (a - b).squaredNorm() / static_cast<double>(a.size()); }

MetricSummary summarize(std::vector<double> values) {
    MetricSummary s;
    s.mean = mean(values);
    s.median = median(values);
    s.values = std::move(values);
    return s;
}

}  // namespace

void CorpusSpec::validate() const {
    const auto fail = [](const std::string& what) { throw Error(Errc::InvalidSpec, what); };
    if (count < 1) fail("corpus needs at least one tensor");
    if (rows < 1 || cols < 1) fail("tensor dims must be positive");
    if (outlier_channels < 0 || outlier_channels >= cols) fail("outlier channels must be in [0, cols)");
    if (!(outlier_gain > 0.0)) fail("outlier gain must be positive");
    if (smooth_weight < 0.0) fail("smooth weight must be non-negative");
    if (!(smooth_correlation >= 0.0 && smooth_correlation < 1.0)) fail("smooth correlation must be in [0, 1)");
    if (base == BaseDist::StudentT && !(nu > 2.0)) fail("Student-t needs nu > 2 for finite variance");
}

double CorpusSpec::nominal_base_variance() const {
    return base == BaseDist::Gaussian ? 1.0 : nu / (nu - 2.0);
}

std::string CorpusSpec::describe() const {
    std::ostringstream out;
    out.precision(17);
    out << "count=" << count << " rows=" << rows << " cols=" << cols
        << " dist=" << (base == BaseDist::Gaussian ? "gaussian" : "t") << " nu=" << nu
        << " outliers=" << outlier_channels << " gain=" << outlier_gain << " smooth=" << smooth_weight
        << " smooth_corr=" << smooth_correlation << " seed=" << seed;
    return out.str();
}

std::vector<int> outlier_columns(const CorpusSpec& spec, int index) {
    spec.validate();
    Rng rng(derive_seed(spec.seed, static_cast<std::uint64_t>(index)));
    std::vector<int> columns(spec.cols);
    for (int c = 0; c < spec.cols; ++c) columns[c] = c;
    for (int i = 0; i < spec.outlier_channels; ++i) {
        const auto pick = i + static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.cols - i)));
        std::swap(columns[i], columns[pick]);
    }
    columns.resize(spec.outlier_channels);
    std::sort(columns.begin(), columns.end());
    return columns;
}

Matrix gen_tensor(const CorpusSpec& spec, int index) {
    spec.validate();
    Rng rng(derive_seed(spec.seed, static_cast<std::uint64_t>(index)));
    // Consume the same draws as outlier_columns so both agree.
    std::vector<int> columns(spec.cols);
    for (int c = 0; c < spec.cols; ++c) columns[c] = c;
    for (int i = 0; i < spec.outlier_channels; ++i) {
        const auto pick = i + static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.cols - i)));
        std::swap(columns[i], columns[pick]);
    }

    Matrix w(spec.rows, spec.cols);
    for (int r = 0; r < spec.rows; ++r) {
        for (int c = 0; c < spec.cols; ++c) {
            w(r, c) = spec.base == BaseDist::Gaussian ? rng.normal() : rng.student_t(spec.nu);
        }
    }
    if (spec.smooth_weight > 0.0) {
        const double rho = spec.smooth_correlation;
        const double innovation = std::sqrt(1.0 - rho * rho);
        for (int r = 0; r < spec.rows; ++r) {
            double s = rng.normal();
            w(r, 0) += spec.smooth_weight * s;
            for (int c = 1; c < spec.cols; ++c) {
                s = rho * s + innovation * rng.normal();
                w(r, c) += spec.smooth_weight * s;
            }
        }
    }
    for (int i = 0; i < spec.outlier_channels; ++i) w.col(columns[i]) *= spec.outlier_gain;
    return w;
}

std::vector<Matrix> gen_corpus(const CorpusSpec& spec) {
    spec.validate();
    std::vector<Matrix> corpus;
    corpus.reserve(static_cast<std::size_t>(spec.count));
    for (int i = 0; i < spec.count; ++i) corpus.push_back(gen_tensor(spec, i));
    return corpus;
}

std::uint64_t hash_matrix(const Matrix& m, std::uint64_t basis) {
    const std::int64_t dims[2] = {m.rows(), m.cols()};
    std::uint64_t h = fnv1a(std::as_bytes(std::span<const std::int64_t>(dims, 2)), basis);
    return fnv1a(std::as_bytes(std::span<const double>(m.data(), static_cast<std::size_t>(m.size()))), h);
}

Variant make_variant(std::string_view name, int order, int group, std::uint64_t seed) {
    Variant v;
    v.name = std::string(name);
    v.rotation = materialize(RotationChoice::parse(name), order, group, seed);
    return v;
}

bool ExperimentReport::fairness_ok() const {
    return std::all_of(variants.begin(), variants.end(),
                       [&](const VariantResult& v) { return v.input_hash == corpus_hash; });
}

const VariantResult& ExperimentReport::variant(std::string_view name) const {
    for (const auto& v : variants) {
        if (v.name == name) return v;
    }
    throw Error(Errc::InvalidConfig, "no variant named " + std::string(name));
}

std::vector<ReportRow> ExperimentReport::rows() const {
    std::vector<ReportRow> out;
    for (const auto& v : variants) {
        for (const auto& [metric, summary] : v.metrics) {
            for (std::size_t t = 0; t < summary.values.size(); ++t) {
                out.push_back({v.name, static_cast<int>(t), metric, summary.values[t]});
            }
        }
    }
    std::sort(out.begin(), out.end(), [](const ReportRow& a, const ReportRow& b) {
        return std::tie(a.tensor_id, a.variant, a.metric) < std::tie(b.tensor_id, b.variant, b.metric);
    });
    return out;
}

ExperimentReport run_comparison(const std::vector<Matrix>& corpus, const std::vector<Variant>& variants,
                                const ComparisonOptions& options) {
    if (options.quantize) options.weight_spec.validate();
    ExperimentReport report;
    report.seed = options.seed;
    report.spec_text = options.weight_spec.describe();
    report.spec_hash = fnv1a(std::as_bytes(std::span<const char>(report.spec_text.data(), report.spec_text.size())));
    report.corpus_hash = 0xcbf29ce484222325ULL;
    for (const Matrix& w : corpus) report.corpus_hash = hash_matrix(w, report.corpus_hash);

    for (const Matrix& w : corpus) {
        for (const Variant& v : variants) {
            if (v.rotation && (v.rotation->rows() != w.cols() || v.rotation->cols() != w.cols())) {
                throw Error(Errc::DimensionMismatch, "variant " + v.name + " does not match the tensor's input width");
            }
        }
    }

    // Calibration Hessians are shared by every variant.
    std::vector<CalibrationHessian> hessians;
    hessians.reserve(corpus.size());
    for (std::size_t t = 0; t < corpus.size(); ++t) {
        const std::uint64_t seed = derive_seed(options.seed ^ kCalibrationStream, t);
        hessians.push_back(hessian_from_calibration(
            calibration_activations(options.calibration_samples, static_cast<int>(corpus[t].cols()), seed)));
    }

    for (const Variant& v : variants) {
        VariantResult result;
        result.name = v.name;
        result.input_hash = 0xcbf29ce484222325ULL;
        std::vector<double> mse, max_abs, proxy;
        for (std::size_t t = 0; t < corpus.size(); ++t) {
            const Matrix& w = corpus[t];
            result.input_hash = hash_matrix(w, result.input_hash);

            // Input channels are the columns here; in the (in x out) layout
            // this is W' = R^T W with an identity rear rotation.
            const Matrix rotated = v.rotation ? Matrix(rotate_weight(w.transpose(), v.rotation, std::nullopt).transpose())
                                              : w;
            Matrix reconstructed_rotated = rotated;
            if (options.quantize) {
                if (options.quantizer == Quantizer::RTN) {
                    reconstructed_rotated = dequantize(rtn_quantize(rotated, options.weight_spec));
                } else {
                    CalibrationHessian h = hessians[t];
                    if (v.rotation) h.h = v.rotation->transpose() * h.h * (*v.rotation);
                    reconstructed_rotated = dequantize(gptq_quantize(rotated, h, options.weight_spec));
                }
            }
            const Matrix reconstructed =
                v.rotation ? Matrix(reconstructed_rotated * v.rotation->transpose()) : reconstructed_rotated;
            mse.push_back(quant_error(w, reconstructed, MetricMse{}));
            max_abs.push_back(quant_error(w, reconstructed, MetricMaxAbs{}));
            proxy.push_back(quant_error(w, reconstructed, MetricProxyHessian{&hessians[t].h}));
        }
        result.metrics.emplace(std::string(kMetricMse), summarize(std::move(mse)));
        result.metrics.emplace(std::string(kMetricMaxAbs), summarize(std::move(max_abs)));
        result.metrics.emplace(std::string(kMetricProxy), summarize(std::move(proxy)));
        report.variants.push_back(std::move(result));
    }
    return report;
}

SignTest compare_variants(const ExperimentReport& report, std::string_view a, std::string_view b,
                          std::string_view metric) {
    const auto& va = report.variant(a).metrics.find(metric)->second.values;
    const auto& vb = report.variant(b).metrics.find(metric)->second.values;
    return sign_test_less(va, vb);
}

SequencyVarianceTable sequency_variance_report(int order, int group) {
    const OrthoMatrix hadamard = hadamard_sylvester(order);
    const OrthoMatrix walsh = walsh_from_hadamard(hadamard);
    const SequencyProfile hp = sequency_profile(hadamard, group);
    const SequencyProfile wp = sequency_profile(walsh, group);
    SequencyVarianceTable table;
    table.order = order;
    table.group_size = group;
    for (std::size_t g = 0; g < hp.per_group_variance.size(); ++g) {
        table.rows.push_back({static_cast<int>(g), hp.per_group_mean[g], hp.per_group_variance[g], wp.per_group_mean[g],
                              wp.per_group_variance[g]});
    }
    table.mean_hadamard_variance = mean(hp.per_group_variance);
    table.mean_walsh_variance = mean(wp.per_group_variance);
    return table;
}

AblationOptions AblationOptions::defaults(const ToyBlockConfig& block) {
    AblationOptions o;
    o.block = block;
    o.weight_spec = QuantSpec{.bits = 2, .group_size = block.group_size, .symmetric = false, .clip = ClipMse{default_mse_grid()}};
    o.activation_spec = QuantSpec{.bits = 4, .group_size = block.group_size, .symmetric = true, .clip = ClipFixed{0.9}};
    return o;
}

const AblationCell& AblationReport::cell(std::string_view setting, R4Mode mode) const {
    for (const auto& c : cells) {
        if (c.setting == setting && c.mode == mode) return c;
    }
    throw Error(Errc::InvalidConfig, "no ablation cell " + std::string(setting));
}

const AblationComparison& AblationReport::comparison(std::string_view setting) const {
    for (const auto& c : comparisons) {
        if (c.setting == setting) return c;
    }
    throw Error(Errc::InvalidConfig, "no ablation comparison " + std::string(setting));
}

AblationReport r4_ablation(const AblationOptions& options) {
    options.block.validate();
    options.weight_spec.validate();
    options.activation_spec.validate();
    if (options.seeds < 1) throw Error(Errc::InvalidConfig, "ablation needs at least one seed");

    struct Setting {
        std::string name;
        ForwardQuant quant;
    };
    const std::vector<Setting> settings = {
        {"W16A16", {}},
        {"W2A16", {options.weight_spec, std::nullopt}},
        {"W2A4", {options.weight_spec, options.activation_spec}},
    };

    AblationReport report;
    report.config = options.block.describe() + " seeds=" + std::to_string(options.seeds) + " r1=" + options.r1 +
                    " r2=" + options.r2 + " r3=" + options.r3 + " r4=" + options.r4 +
                    " weights=[" + options.weight_spec.describe() + "] activations=[" +
                    options.activation_spec.describe() + "]";
    for (const auto& s : settings) {
        for (R4Mode mode : {R4Mode::Global, R4Mode::Local}) report.cells.push_back({s.name, mode, {}, 0.0});
    }
    const auto cell_index = [](std::size_t setting, R4Mode mode) {
        return setting * 2 + (mode == R4Mode::Local ? 1 : 0);
    };

    for (int s = 0; s < options.seeds; ++s) {
        ToyBlockConfig cfg = options.block;
        cfg.seed = derive_seed(options.block.seed, static_cast<std::uint64_t>(s));
        const ToyBlock block = build_toy_block(cfg);
        const Matrix input = random_input(cfg, derive_seed(cfg.seed, 7));
        const Matrix reference = forward<double>(block, input);
        for (R4Mode mode : {R4Mode::Global, R4Mode::Local}) {
            RotationAssignment assign{RotationChoice::parse(options.r1), RotationChoice::parse(options.r2),
                                      RotationChoice::parse(options.r3), RotationChoice::parse(options.r4), mode};
            const ToyBlock fused = fuse_rotations(block, assign);
            for (std::size_t k = 0; k < settings.size(); ++k) {
                const Matrix out = forward<double>(fused, input, settings[k].quant);
                report.cells[cell_index(k, mode)].output_mse.push_back(output_mse(out, reference));
            }
        }
    }
    for (auto& c : report.cells) c.median = median(c.output_mse);

    for (std::size_t k = 1; k < settings.size(); ++k) {
        const auto& global = report.cells[cell_index(k, R4Mode::Global)].output_mse;
        const auto& local = report.cells[cell_index(k, R4Mode::Local)].output_mse;
        std::vector<double> diff(global.size());
        for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = local[i] - global[i];
        AblationComparison cmp;
        cmp.setting = settings[k].name;
        cmp.local_minus_global =
            bootstrap_median_ci(diff, options.bootstrap_resamples, 0.95, derive_seed(options.block.seed, 991 + k));
        cmp.local_better = sign_test_less(local, global);
        cmp.significant = !cmp.local_minus_global.contains_zero();
        report.comparisons.push_back(cmp);
    }
    return report;
}

}  // namespace gsr
