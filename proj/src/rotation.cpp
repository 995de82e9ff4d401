#include "gsr/rotation.hpp"

#include "gsr/errors.hpp"
#include "gsr/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace gsr {

namespace {

constexpr double kRopeBase = 10000.0;
constexpr double kNormEps = 1e-6;
constexpr double kExternalTolerance = 1e-8;

Matrix gaussian_matrix(int rows, int cols, double stddev, Rng& rng) {
    Matrix m(rows, cols);
    for (int j = 0; j < cols; ++j) {
        for (int i = 0; i < rows; ++i) m(i, j) = stddev * rng.normal();
    }
    return m;
}

Matrix per_head(const Matrix& rotation, int heads) {
    const auto d = rotation.rows();
    Matrix out = Matrix::Zero(d * heads, d * heads);
    for (int h = 0; h < heads; ++h) out.block(h * d, h * d, d, d) = rotation;
    return out;
}

template <typename Scalar>
MatrixT<Scalar> rms_norm(const MatrixT<Scalar>& x) {
    MatrixT<Scalar> out(x.rows(), x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        const Scalar ms = x.row(r).squaredNorm() / static_cast<Scalar>(x.cols());
        out.row(r) = x.row(r) / std::sqrt(ms + static_cast<Scalar>(kNormEps));
    }
    return out;
}

// Half-split pairing: dimension i rotates with i + head_dim/2.
template <typename Scalar>
void apply_rope(MatrixT<Scalar>& x) {
    const Eigen::Index dim = x.cols();
    const Eigen::Index half = dim / 2;
    for (Eigen::Index pos = 0; pos < x.rows(); ++pos) {
        for (Eigen::Index i = 0; i < half; ++i) {
            const double freq = std::pow(kRopeBase, -2.0 * static_cast<double>(i) / static_cast<double>(dim));
            const double angle = static_cast<double>(pos) * freq;
            const Scalar c = static_cast<Scalar>(std::cos(angle));
            const Scalar s = static_cast<Scalar>(std::sin(angle));
            const Scalar a = x(pos, i);
            const Scalar b = x(pos, i + half);
            x(pos, i) = a * c - b * s;
            x(pos, i + half) = a * s + b * c;
        }
    }
}

template <typename Scalar>
MatrixT<Scalar> quantized_weight(const Matrix& weight, const std::optional<QuantSpec>& spec) {
    if (!spec) return weight.cast<Scalar>();
    // Groups run along input channels, which are the rows of this layout.
    const Matrix transposed = weight.transpose();
    return dequantize(rtn_quantize(transposed, *spec)).transpose().cast<Scalar>();
}

template <typename Scalar>
MatrixT<Scalar> quantize_activations(const MatrixT<Scalar>& a, const QuantSpec& spec) {
    const Matrix as_double = a.template cast<double>();
    return dequantize(rtn_quantize(as_double, spec)).cast<Scalar>();
}

void check_square(const Matrix& m, int order, std::string_view slot) {
    if (m.rows() != order || m.cols() != order) {
        throw Error(Errc::DimensionMismatch, std::string(slot) + " must be " + std::to_string(order) + "x" +
                                                 std::to_string(order));
    }
}

Matrix perturbed_columns(const Matrix& m, int group, int group_index, bool inside, std::uint64_t seed) {
    Rng rng(seed);
    Matrix out = m;
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
        const bool in_group = c / group == group_index;
        if (in_group == inside) {
            for (Eigen::Index r = 0; r < m.rows(); ++r) out(r, c) = rng.normal();
        }
    }
    return out;
}

void check_locality_args(const Matrix& weight, const Matrix& front, const Matrix& rear, int group,
                         int group_index) {
    if (front.rows() != weight.rows() || front.cols() != weight.rows() || rear.rows() != weight.cols() ||
        rear.cols() != weight.cols()) {
        throw Error(Errc::DimensionMismatch, "rotation orders must match the weight shape");
    }
    if (group < 1 || weight.rows() % group != 0 || group_index < 0 || group_index >= weight.rows() / group) {
        throw Error(Errc::DimensionMismatch, "group does not tile the weight rows");
    }
}

}  // namespace

std::string_view role_name(Role role) noexcept {
    switch (role) {
        case Role::Wq: return "Wq";
        case Role::Wk: return "Wk";
        case Role::Wv: return "Wv";
        case Role::Wo: return "Wo";
        case Role::Wup: return "Wup";
        case Role::Wgate: return "Wgate";
        case Role::Wdown: return "Wdown";
    }
    return "?";
}

std::string_view slot_name(Slot slot) noexcept {
    switch (slot) {
        case Slot::Identity: return "I";
        case Slot::R1: return "R1";
        case Slot::R2: return "R2";
        case Slot::R4: return "R4";
    }
    return "?";
}

std::vector<WeightRole> assignment_table() {
    return {
        {Role::Wq, Slot::R1, Slot::Identity},   {Role::Wk, Slot::R1, Slot::Identity},
        {Role::Wv, Slot::R1, Slot::R2},         {Role::Wo, Slot::R2, Slot::R1},
        {Role::Wup, Slot::R1, Slot::Identity},  {Role::Wgate, Slot::R1, Slot::Identity},
        {Role::Wdown, Slot::R4, Slot::R1},
    };
}

Matrix rotate_weight(const Matrix& weight, const std::optional<Matrix>& front,
                     const std::optional<Matrix>& rear) {
    if (front && (front->rows() != weight.rows() || front->cols() != weight.rows())) {
        throw Error(Errc::DimensionMismatch, "front rotation order differs from the weight's row count");
    }
    if (rear && (rear->rows() != weight.cols() || rear->cols() != weight.cols())) {
        throw Error(Errc::DimensionMismatch, "rear rotation order differs from the weight's column count");
    }
    Matrix out = front ? Matrix(front->transpose() * weight) : weight;
    if (rear) out = out * (*rear);
    return out;
}

double rotated_element(const Matrix& weight, const Matrix& front, const Matrix& rear, int i, int j) {
    const Eigen::VectorXd front_filter = front.col(i);  // row i of Rf^T
    double value = 0.0;
    for (Eigen::Index c = 0; c < weight.cols(); ++c) {
        value += front_filter.dot(weight.col(c)) * rear(c, j);
    }
    return value;
}

void ToyBlockConfig::validate() const {
    const auto fail = [](const std::string& what) { throw Error(Errc::InvalidConfig, what); };
    if (hidden < 2 || heads < 1 || ffn < 2 || group_size < 2 || seq_len < 1) fail("all dimensions must be >= 2");
    if (hidden % heads != 0) fail("heads must divide hidden");
    if (head_dim() < 2 || head_dim() % 2 != 0) fail("head_dim must be even and >= 2");
    if (!is_power_of_two(hidden) || !is_power_of_two(ffn) || !is_power_of_two(group_size)) {
        fail("hidden, ffn and group size must be powers of two");
    }
    if (hidden % group_size != 0 || ffn % group_size != 0) fail("group size must divide hidden and ffn");
    if (outlier_channels < 0 || outlier_channels >= hidden) fail("outlier channels must be in [0, hidden)");
    if (!(outlier_gain > 0.0)) fail("outlier gain must be positive");
}

std::string ToyBlockConfig::describe() const {
    std::ostringstream out;
    out << "hidden=" << hidden << " heads=" << heads << " ffn=" << ffn << " group=" << group_size
        << " seq_len=" << seq_len << " seed=" << seed << " outlier_channels=" << outlier_channels
        << " outlier_gain=" << outlier_gain;
    return out.str();
}

RotationChoice RotationChoice::parse(std::string_view name) {
    RotationChoice choice;
    choice.label = std::string(name);
    if (name == "identity" || name == "none") {
        choice.kind = RotationKind::Identity;
        choice.label = "identity";
    } else if (name == "gh") {
        choice.kind = RotationKind::GH;
    } else if (name == "gw") {
        choice.kind = RotationKind::GW;
    } else if (name == "lh") {
        choice.kind = RotationKind::LH;
    } else if (name == "gsr") {
        choice.kind = RotationKind::GSR;
    } else {
        throw Error(Errc::InvalidConfig, "unknown rotation '" + std::string(name) + "'");
    }
    return choice;
}

RotationChoice RotationChoice::make_external(Matrix matrix, std::string label) {
    RotationChoice choice;
    choice.kind = RotationKind::External;
    choice.external = std::move(matrix);
    choice.label = std::move(label);
    return choice;
}

std::optional<Matrix> materialize(const RotationChoice& choice, int order, int group, std::uint64_t seed) {
    const int local_group = std::min(group, order);
    switch (choice.kind) {
        case RotationKind::Identity:
            return std::nullopt;
        case RotationKind::GH:
            return randomize_signs(hadamard_sylvester(order), seed).dense();
        case RotationKind::GW:
            return walsh_from_hadamard(hadamard_sylvester(order)).dense();
        case RotationKind::LH:
            return gsr(order, local_group, {.base = BlockKind::HadamardNatural, .seed = seed}).dense();
        case RotationKind::GSR:
            return gsr(order, local_group, GsrOptions{}).dense();
        case RotationKind::External: {
            if (!choice.external) throw Error(Errc::InvalidConfig, "external rotation without a matrix");
            const Matrix& m = *choice.external;
            check_square(m, order, choice.label);
            const double residual = (m * m.transpose() - Matrix::Identity(order, order)).cwiseAbs().maxCoeff();
            if (residual > kExternalTolerance) {
                throw Error(Errc::NotOrthogonal, choice.label + " has orthogonality residual " + std::to_string(residual));
            }
            return m;
        }
    }
    return std::nullopt;
}

const Matrix& ToyBlock::weight(Role role) const {
    switch (role) {
        case Role::Wq: return wq;
        case Role::Wk: return wk;
        case Role::Wv: return wv;
        case Role::Wo: return wo;
        case Role::Wup: return wup;
        case Role::Wgate: return wgate;
        case Role::Wdown: return wdown;
    }
    return wq;
}

Matrix& ToyBlock::weight(Role role) {
    return const_cast<Matrix&>(static_cast<const ToyBlock&>(*this).weight(role));
}

ToyBlock build_toy_block(const ToyBlockConfig& config) {
    config.validate();
    Rng rng(config.seed);
    const int c = config.hidden;
    const int f = config.ffn;
    const double hidden_std = 1.0 / std::sqrt(static_cast<double>(c));
    const double ffn_std = 1.0 / std::sqrt(static_cast<double>(f));

    ToyBlock block;
    block.config = config;
    block.wq = gaussian_matrix(c, c, hidden_std, rng);
    block.wk = gaussian_matrix(c, c, hidden_std, rng);
    block.wv = gaussian_matrix(c, c, hidden_std, rng);
    block.wo = gaussian_matrix(c, c, hidden_std, rng);
    block.wup = gaussian_matrix(c, f, hidden_std, rng);
    block.wgate = gaussian_matrix(c, f, hidden_std, rng);
    block.wdown = gaussian_matrix(f, c, ffn_std, rng);

    // A few hidden channels carry folded norm gains, as in real checkpoints.
    std::vector<int> channels(c);
    for (int i = 0; i < c; ++i) channels[i] = i;
    for (int i = 0; i < config.outlier_channels; ++i) {
        std::swap(channels[i], channels[i + static_cast<int>(rng.below(static_cast<std::uint64_t>(c - i)))]);
        for (Role role : {Role::Wq, Role::Wk, Role::Wv, Role::Wup, Role::Wgate}) {
            block.weight(role).row(channels[i]) *= config.outlier_gain;
        }
    }
    return block;
}

ToyBlock fuse_rotations(const ToyBlock& block, const RotationAssignment& assignment) {
    if (block.r1 || block.r3 || block.r4 || !block.fusion_log.empty()) {
        throw Error(Errc::InvalidConfig, "block already carries fused rotations");
    }
    const ToyBlockConfig& cfg = block.config;
    const int head_dim = cfg.head_dim();

    RotationChoice r4_choice = assignment.r4;
    if (assignment.r4_mode == R4Mode::Local) {
        if (r4_choice.kind == RotationKind::GH) r4_choice.kind = RotationKind::LH;
        if (r4_choice.kind == RotationKind::GW) r4_choice.kind = RotationKind::GSR;
    }

    const auto r1 = materialize(assignment.r1, cfg.hidden, cfg.group_size, derive_seed(cfg.seed, 101));
    const auto r2 = materialize(assignment.r2, head_dim, cfg.group_size, derive_seed(cfg.seed, 102));
    const auto r3 = materialize(assignment.r3, head_dim, cfg.group_size, derive_seed(cfg.seed, 103));
    const auto r4 = materialize(r4_choice, cfg.ffn, cfg.group_size, derive_seed(cfg.seed, 104));
    const std::optional<Matrix> r2_heads = r2 ? std::optional<Matrix>(per_head(*r2, cfg.heads)) : std::nullopt;

    const auto slot_matrix = [&](Slot slot) -> const std::optional<Matrix>& {
        static const std::optional<Matrix> identity;
        switch (slot) {
            case Slot::R1: return r1;
            case Slot::R2: return r2_heads;
            case Slot::R4: return r4;
            case Slot::Identity: return identity;
        }
        return identity;
    };

    ToyBlock fused = block;
    for (const WeightRole& entry : assignment_table()) {
        const auto& front = slot_matrix(entry.front);
        const auto& rear = slot_matrix(entry.rear);
        fused.weight(entry.role) = rotate_weight(block.weight(entry.role), front, rear);
        fused.fusion_log.push_back({entry.role, front ? entry.front : Slot::Identity,
                                    rear ? entry.rear : Slot::Identity});
    }
    fused.r1 = r1;
    fused.r3 = r3;
    fused.r4 = r4;
    return fused;
}

template <typename Scalar>
MatrixT<Scalar> forward(const ToyBlock& block, const MatrixT<Scalar>& input, const ForwardQuant& quant) {
    const ToyBlockConfig& cfg = block.config;
    if (input.cols() != cfg.hidden || input.rows() < 1) {
        throw Error(Errc::ShapeMismatch, "input must be seq x hidden");
    }
    if (quant.weights) quant.weights->validate();
    if (quant.activations) quant.activations->validate();

    const Eigen::Index seq = input.rows();
    const int heads = cfg.heads;
    const int head_dim = cfg.head_dim();

    const MatrixT<Scalar> wq = quantized_weight<Scalar>(block.wq, quant.weights);
    const MatrixT<Scalar> wk = quantized_weight<Scalar>(block.wk, quant.weights);
    const MatrixT<Scalar> wv = quantized_weight<Scalar>(block.wv, quant.weights);
    const MatrixT<Scalar> wo = quantized_weight<Scalar>(block.wo, quant.weights);
    const MatrixT<Scalar> wup = quantized_weight<Scalar>(block.wup, quant.weights);
    const MatrixT<Scalar> wgate = quantized_weight<Scalar>(block.wgate, quant.weights);
    const MatrixT<Scalar> wdown = quantized_weight<Scalar>(block.wdown, quant.weights);

    MatrixT<Scalar> x = block.r1 ? MatrixT<Scalar>(input * block.r1->cast<Scalar>()) : input;

    // Attention.
    const MatrixT<Scalar> h1 = rms_norm(x);
    const MatrixT<Scalar> q = h1 * wq;
    const MatrixT<Scalar> k = h1 * wk;
    const MatrixT<Scalar> v = h1 * wv;
    MatrixT<Scalar> attn(seq, cfg.hidden);
    const Scalar inv_sqrt_d = static_cast<Scalar>(1.0 / std::sqrt(static_cast<double>(head_dim)));
    for (int h = 0; h < heads; ++h) {
        MatrixT<Scalar> qh = q.middleCols(h * head_dim, head_dim);
        MatrixT<Scalar> kh = k.middleCols(h * head_dim, head_dim);
        apply_rope(qh);
        apply_rope(kh);
        if (block.r3) {
            const MatrixT<Scalar> r3 = block.r3->cast<Scalar>();
            qh = qh * r3;
            kh = kh * r3;
        }
        MatrixT<Scalar> scores = (qh * kh.transpose()) * inv_sqrt_d;
        for (Eigen::Index i = 0; i < seq; ++i) {
            Scalar row_max = -std::numeric_limits<Scalar>::infinity();
            for (Eigen::Index j = 0; j <= i; ++j) row_max = std::max(row_max, scores(i, j));
            Scalar total = 0;
            for (Eigen::Index j = 0; j < seq; ++j) {
                scores(i, j) = j <= i ? std::exp(scores(i, j) - row_max) : Scalar(0);
                total += scores(i, j);
            }
            scores.row(i) /= total;
        }
        attn.middleCols(h * head_dim, head_dim) = scores * v.middleCols(h * head_dim, head_dim);
    }
    x += attn * wo;

    // SwiGLU feed-forward.
    const MatrixT<Scalar> h2 = rms_norm(x);
    const MatrixT<Scalar> up = h2 * wup;
    const MatrixT<Scalar> gate = h2 * wgate;
    MatrixT<Scalar> act = (gate.array() / (Scalar(1) + (-gate.array()).exp())).matrix().cwiseProduct(up);
    if (block.r4) act = act * block.r4->cast<Scalar>();
    if (quant.activations) act = quantize_activations(act, *quant.activations);
    x += act * wdown;

    if (block.r1) x = x * block.r1->transpose().cast<Scalar>();
    return x;
}

template MatrixT<double> forward<double>(const ToyBlock&, const MatrixT<double>&, const ForwardQuant&);
template MatrixT<float> forward<float>(const ToyBlock&, const MatrixT<float>&, const ForwardQuant&);

Matrix random_input(const ToyBlockConfig& config, std::uint64_t seed) {
    Rng rng(seed);
    return gaussian_matrix(config.seq_len, config.hidden, 1.0, rng);
}

bool front_locality_holds(const Matrix& weight, const Matrix& front, const Matrix& rear, int group,
                           int group_index, std::uint64_t seed) {
    return front_perturbation_delta(weight, front, rear, group, group_index, false, seed) <= 1e-12;
}

double front_perturbation_delta(const Matrix& weight, const Matrix& front, const Matrix& rear, int group,
                                int group_index, bool inside, std::uint64_t seed) {
    check_locality_args(weight, front, rear, group, group_index);
    const Matrix perturbed = perturbed_columns(front, group, group_index, inside, seed);
    const Matrix reference = front.transpose() * weight * rear;
    const Matrix changed = perturbed.transpose() * weight * rear;
    return (changed.middleRows(group_index * group, group) - reference.middleRows(group_index * group, group))
        .cwiseAbs()
        .maxCoeff();
}

std::vector<double> rear_perturbation_deltas(const Matrix& weight, const Matrix& front, const Matrix& rear,
                                             int group, int column, std::uint64_t seed) {
    check_locality_args(weight, front, rear, group, 0);
    if (column < 0 || column >= rear.cols()) throw Error(Errc::DimensionMismatch, "column out of range");
    Rng rng(seed);
    Matrix perturbed = rear;
    for (Eigen::Index r = 0; r < rear.rows(); ++r) perturbed(r, column) = rng.normal();
    const Matrix reference = front.transpose() * weight * rear;
    const Matrix changed = front.transpose() * weight * perturbed;
    std::vector<double> deltas;
    for (Eigen::Index g = 0; g < weight.rows() / group; ++g) {
        deltas.push_back((changed.block(g * group, column, group, 1) - reference.block(g * group, column, group, 1))
                             .cwiseAbs()
                             .maxCoeff());
    }
    return deltas;
}

}  // namespace gsr
