#include "gsr/quant.hpp"

#include "gsr/errors.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace gsr {

namespace {

std::span<const double> row_group(const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>& m,
                                  int row, int group, int length) {
    return {m.data() + static_cast<std::ptrdiff_t>(row) * m.cols() + static_cast<std::ptrdiff_t>(group) * length,
            static_cast<std::size_t>(length)};
}

void require_groups(int cols, const QuantSpec& spec) {
    const int length = spec.group_length(cols);
    if (length <= 0 || cols % length != 0) {
        throw Error(Errc::GroupDoesNotDivide,
                    "group size " + std::to_string(length) + " does not divide row length " + std::to_string(cols));
    }
}

double squared_roundtrip_error(std::span<const double> group, const GroupParams& params, const QuantSpec& spec) {
    double err = 0.0;
    for (double w : group) {
        const double d = w - dequantize_value(quantize_value(w, params, spec), params);
        err += d * d;
    }
    return err;
}

double choose_ratio(std::span<const double> group, const QuantSpec& spec) {
    return std::visit(
        [&](const auto& clip) -> double {
            using T = std::decay_t<decltype(clip)>;
            if constexpr (std::is_same_v<T, ClipNone>) {
                return 1.0;
            } else if constexpr (std::is_same_v<T, ClipFixed>) {
                return clip.ratio;
            } else {
                return mse_clip_search(group, spec, clip.grid).ratio;
            }
        },
        spec.clip);
}

using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct FixedParams {
    Matrix scales;
    ZeroPointMatrix zero_points;
};

FixedParams fit_params(const RowMajorMatrix& w, const QuantSpec& spec) {
    const int rows = static_cast<int>(w.rows());
    const int cols = static_cast<int>(w.cols());
    const int length = spec.group_length(cols);
    const int groups = cols / length;
    FixedParams fitted;
    fitted.scales.resize(rows, groups);
    fitted.zero_points = ZeroPointMatrix::Zero(rows, groups);
    for (int r = 0; r < rows; ++r) {
        for (int g = 0; g < groups; ++g) {
            const auto group = row_group(w, r, g, length);
            const GroupParams params = group_params(group, spec, choose_ratio(group, spec));
            fitted.scales(r, g) = params.scale;
            fitted.zero_points(r, g) = params.zero_point;
        }
    }
    return fitted;
}

QuantizedTensor package(CodeMatrix codes, FixedParams fitted, const QuantSpec& spec) {
    QuantizedTensor q;
    q.codes = std::move(codes);
    q.scales = std::move(fitted.scales);
    if (!spec.symmetric) q.zero_points = std::move(fitted.zero_points);
    q.spec = spec;
    q.check_code_range();
    return q;
}

}  // namespace

std::vector<double> default_mse_grid() {
    std::vector<double> grid;
    for (int k = 100; k >= 50; --k) grid.push_back(k / 100.0);
    return grid;
}

void QuantSpec::validate() const {
    if (bits < 2 || bits > 8) throw Error(Errc::InvalidSpec, "bits must be in [2, 8]");
    if (group_size < 0) throw Error(Errc::InvalidSpec, "group size must be positive");
    if (const auto* fixed = std::get_if<ClipFixed>(&clip)) {
        if (!(fixed->ratio > 0.0 && fixed->ratio <= 1.0)) {
            throw Error(Errc::InvalidSpec, "clip ratio must lie in (0, 1]");
        }
    }
    if (const auto* mse = std::get_if<ClipMse>(&clip)) {
        if (mse->grid.empty()) throw Error(Errc::InvalidSpec, "MSE clip grid is empty");
        for (double r : mse->grid) {
            if (!(r > 0.0 && r <= 1.0)) throw Error(Errc::InvalidSpec, "MSE clip grid ratio outside (0, 1]");
        }
    }
}

std::string QuantSpec::describe() const {
    std::ostringstream out;
    out << "bits=" << bits << " group=";
    if (group_size == kPerChannel) {
        out << "per-channel";
    } else {
        out << group_size;
    }
    out << (symmetric ? " sym" : " asym") << " clip=";
    std::visit(
        [&](const auto& c) {
            using T = std::decay_t<decltype(c)>;
            if constexpr (std::is_same_v<T, ClipNone>) {
                out << "none";
            } else if constexpr (std::is_same_v<T, ClipFixed>) {
                out << "ratio:" << c.ratio;
            } else {
                out << "mse[" << c.grid.size() << "]";
            }
        },
        clip);
    return out.str();
}

void QuantizedTensor::check_code_range() const {
    const int lo = spec.code_min();
    const int hi = spec.code_max();
    for (Eigen::Index i = 0; i < codes.size(); ++i) {
        const int c = codes.data()[i];
        if (c < lo || c > hi) throw Error(Errc::InvalidSpec, "code outside the representable range");
    }
}

GroupParams group_params(std::span<const double> group, const QuantSpec& spec, double ratio) {
    GroupParams params;
    if (group.empty()) return params;
    if (spec.symmetric) {
        double amax = 0.0;
        for (double w : group) amax = std::max(amax, std::abs(w));
        if (amax == 0.0) return params;  // degenerate: scale 1, every code 0
        params.scale = amax * ratio / spec.code_max();
        return params;
    }
    // The range is widened to contain zero, then shrunk about its midpoint.
    const auto [lo_it, hi_it] = std::minmax_element(group.begin(), group.end());
    const double lo_raw = std::min(*lo_it, 0.0);
    const double hi_raw = std::max(*hi_it, 0.0);
    if (hi_raw == lo_raw) return params;  // all zeros: scale 1, zero point 0
    const double mid = 0.5 * (lo_raw + hi_raw);
    const double half = 0.5 * (hi_raw - lo_raw) * ratio;
    const double lo = mid - half;
    params.scale = 2.0 * half / spec.code_max();
    params.zero_point = static_cast<int>(std::clamp(std::round(-lo / params.scale), 0.0,
                                                    static_cast<double>(spec.code_max())));
    return params;
}

int quantize_value(double w, const GroupParams& params, const QuantSpec& spec) noexcept {
    const double code = std::round(w / params.scale) + params.zero_point;
    return static_cast<int>(std::clamp(code, static_cast<double>(spec.code_min()),
                                       static_cast<double>(spec.code_max())));
}

double dequantize_value(int code, const GroupParams& params) noexcept {
    return static_cast<double>(code - params.zero_point) * params.scale;
}

ClipChoice mse_clip_search(std::span<const double> group, const QuantSpec& spec,
                           std::span<const double> grid) {
    if (grid.empty()) throw Error(Errc::InvalidSpec, "MSE clip grid is empty");
    std::vector<double> ordered(grid.begin(), grid.end());
    std::sort(ordered.begin(), ordered.end(), std::greater<>());
    ClipChoice best{ordered.front(), squared_roundtrip_error(group, group_params(group, spec, ordered.front()), spec)};
    for (std::size_t k = 1; k < ordered.size(); ++k) {
        const double err = squared_roundtrip_error(group, group_params(group, spec, ordered[k]), spec);
        if (err < best.error) best = {ordered[k], err};
    }
    return best;
}

QuantizedTensor rtn_quantize(const Matrix& weights, const QuantSpec& spec) {
    spec.validate();
    const int cols = static_cast<int>(weights.cols());
    require_groups(cols, spec);
    const RowMajorMatrix w = weights;
    FixedParams fitted = fit_params(w, spec);
    const int length = spec.group_length(cols);

    CodeMatrix codes(w.rows(), w.cols());
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
        for (int c = 0; c < cols; ++c) {
            const int g = c / length;
            const GroupParams params{fitted.scales(r, g), fitted.zero_points(r, g)};
            codes(r, c) = static_cast<std::int16_t>(quantize_value(w(r, c), params, spec));
        }
    }
    return package(std::move(codes), std::move(fitted), spec);
}

Matrix dequantize(const QuantizedTensor& q) {
    const int length = q.spec.group_length(q.cols());
    Matrix out(q.rows(), q.cols());
    for (int r = 0; r < q.rows(); ++r) {
        for (int c = 0; c < q.cols(); ++c) {
            const int g = c / length;
            const int zero = q.spec.symmetric ? 0 : q.zero_points(r, g);
            out(r, c) = dequantize_value(q.codes(r, c), GroupParams{q.scales(r, g), zero});
        }
    }
    return out;
}

CalibrationHessian hessian_from_calibration(const Matrix& activations) {
    if (activations.rows() < 1 || activations.cols() < 1) {
        throw Error(Errc::EmptyCalibration, "calibration needs at least one sample");
    }
    CalibrationHessian h;
    h.sample_count = static_cast<int>(activations.rows());
    h.h = (2.0 / static_cast<double>(h.sample_count)) * (activations.transpose() * activations);
    h.h = 0.5 * (h.h + h.h.transpose()).eval();
    return h;
}

QuantizedTensor gptq_quantize(const Matrix& weights, const CalibrationHessian& hessian,
                              const QuantSpec& spec, const GptqOptions& options) {
    spec.validate();
    const int rows = static_cast<int>(weights.rows());
    const int cols = static_cast<int>(weights.cols());
    if (hessian.h.rows() != cols || hessian.h.cols() != cols) {
        throw Error(Errc::DimensionMismatch, "Hessian order differs from the weight row length");
    }
    require_groups(cols, spec);
    const int length = spec.group_length(cols);

    RowMajorMatrix w = weights;
    FixedParams fitted = fit_params(w, spec);

    Matrix h = hessian.h;
    for (int i = 0; i < cols; ++i) {
        if (h(i, i) == 0.0) h(i, i) = 1.0;  // dead input channel
    }
    const double damp = options.damp_fraction * h.diagonal().mean();
    h.diagonal().array() += damp;

    Eigen::LLT<Matrix> chol(h);
    if (chol.info() != Eigen::Success) {
        throw Error(Errc::SingularHessian, "Cholesky of the dampened Hessian failed");
    }
    const Matrix h_inv = chol.solve(Matrix::Identity(cols, cols));
    Eigen::LLT<Matrix> inv_chol(0.5 * (h_inv + h_inv.transpose()));
    if (inv_chol.info() != Eigen::Success) {
        throw Error(Errc::SingularHessian, "Cholesky of the inverse Hessian failed");
    }
    const Matrix upper = inv_chol.matrixU();

    CodeMatrix codes(rows, cols);
    for (int j = 0; j < cols; ++j) {
        const int g = j / length;
        const double pivot = upper(j, j);
        for (int r = 0; r < rows; ++r) {
            const GroupParams params{fitted.scales(r, g), fitted.zero_points(r, g)};
            const int code = quantize_value(w(r, j), params, spec);
            codes(r, j) = static_cast<std::int16_t>(code);
            const double err = (w(r, j) - dequantize_value(code, params)) / pivot;
            for (int k = j + 1; k < cols; ++k) w(r, k) -= err * upper(j, k);
        }
    }

    // The proxy objective splits into one quadratic form per row, so a row
    // keeps its RTN codes whenever greedy feedback made it worse.
    const RowMajorMatrix original = weights;
    Eigen::RowVectorXd delta_gptq(cols);
    Eigen::RowVectorXd delta_rtn(cols);
    for (int r = 0; r < rows; ++r) {
        CodeMatrix::RowXpr row_codes = codes.row(r);
        std::vector<std::int16_t> rtn_codes(static_cast<std::size_t>(cols));
        for (int c = 0; c < cols; ++c) {
            const GroupParams params{fitted.scales(r, c / length), fitted.zero_points(r, c / length)};
            rtn_codes[c] = static_cast<std::int16_t>(quantize_value(original(r, c), params, spec));
            delta_gptq(c) = original(r, c) - dequantize_value(row_codes(c), params);
            delta_rtn(c) = original(r, c) - dequantize_value(rtn_codes[c], params);
        }
        const double e_gptq = delta_gptq * hessian.h * delta_gptq.transpose();
        const double e_rtn = delta_rtn * hessian.h * delta_rtn.transpose();
        if (e_rtn < e_gptq) {
            for (int c = 0; c < cols; ++c) row_codes(c) = rtn_codes[c];
        }
    }
    return package(std::move(codes), std::move(fitted), spec);
}

double quant_error(const Matrix& original, const Matrix& reconstructed, const ErrorMetric& metric) {
    if (original.rows() != reconstructed.rows() || original.cols() != reconstructed.cols()) {
        throw Error(Errc::ShapeMismatch, "original and reconstruction differ in shape");
    }
    const Matrix delta = original - reconstructed;
    return std::visit(
        [&](const auto& m) -> double {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, MetricMse>) {
                return delta.size() == 0 ? 0.0 : delta.squaredNorm() / static_cast<double>(delta.size());
            } else if constexpr (std::is_same_v<T, MetricMaxAbs>) {
                return delta.size() == 0 ? 0.0 : delta.cwiseAbs().maxCoeff();
            } else {
                if (m.h == nullptr || m.h->rows() != delta.cols() || m.h->cols() != delta.cols()) {
                    throw Error(Errc::ShapeMismatch, "proxy Hessian order differs from the row length");
                }
                return (delta * (*m.h)).cwiseProduct(delta).sum();
            }
        },
        metric);
}

}  // namespace gsr
