#pragma once

// Group quantizers: round-to-nearest with optional clipping search, and a
// column-sequential GPTQ with Hessian-weighted error feedback.

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace gsr {

using Matrix = Eigen::MatrixXd;
using CodeMatrix = Eigen::Matrix<std::int16_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ZeroPointMatrix = Eigen::Matrix<std::int32_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ClipNone {
    bool operator==(const ClipNone&) const = default;
};
struct ClipFixed {
    double ratio = 1.0;
    bool operator==(const ClipFixed&) const = default;
};
struct ClipMse {
    std::vector<double> grid;
    bool operator==(const ClipMse&) const = default;
};
using ClipPolicy = std::variant<ClipNone, ClipFixed, ClipMse>;

/// 1.00, 0.99, ..., 0.50
std::vector<double> default_mse_grid();

struct QuantSpec {
    static constexpr int kPerChannel = 0;

    int bits = 2;
    int group_size = 128;  // kPerChannel: one group per row
    bool symmetric = false;
    ClipPolicy clip = ClipNone{};

    void validate() const;
    int code_min() const noexcept { return symmetric ? -(1 << (bits - 1)) : 0; }
    int code_max() const noexcept { return symmetric ? (1 << (bits - 1)) - 1 : (1 << bits) - 1; }
    /// Group length for a row of `cols` values.
    int group_length(int cols) const noexcept { return group_size == kPerChannel ? cols : group_size; }
    /// Compact text form, e.g. "bits=2 group=64 asym clip=mse".
    std::string describe() const;

    bool operator==(const QuantSpec&) const = default;
};

/// Groups run along each row: row r, group g covers columns [g*G, (g+1)*G).
struct QuantizedTensor {
    CodeMatrix codes;
    Matrix scales;               // rows x groups
    ZeroPointMatrix zero_points;  // rows x groups, empty when symmetric
    QuantSpec spec;

    int rows() const noexcept { return static_cast<int>(codes.rows()); }
    int cols() const noexcept { return static_cast<int>(codes.cols()); }
    int groups_per_row() const noexcept { return static_cast<int>(scales.cols()); }
    /// Throws InvalidSpec if any code is outside the spec's code range.
    void check_code_range() const;

    bool operator==(const QuantizedTensor&) const = default;
};

struct GroupParams {
    double scale = 1.0;
    int zero_point = 0;  // always 0 for symmetric specs
};

/// Scale/zero-point for one group at clipping ratio `ratio`.
GroupParams group_params(std::span<const double> group, const QuantSpec& spec, double ratio);
int quantize_value(double w, const GroupParams& params, const QuantSpec& spec) noexcept;
double dequantize_value(int code, const GroupParams& params) noexcept;

struct ClipChoice {
    double ratio = 1.0;
    double error = 0.0;  // sum of squared reconstruction errors
};

/// argmin over `grid` of the squared round-trip error; ties keep the larger ratio.
ClipChoice mse_clip_search(std::span<const double> group, const QuantSpec& spec,
                           std::span<const double> grid);

QuantizedTensor rtn_quantize(const Matrix& weights, const QuantSpec& spec);
Matrix dequantize(const QuantizedTensor& quantized);

struct CalibrationHessian {
    Matrix h;
    int sample_count = 0;
};

/// H = 2 X^T X / samples for a samples x d activation matrix.
CalibrationHessian hessian_from_calibration(const Matrix& activations);

struct GptqOptions {
    double damp_fraction = 0.01;
};

QuantizedTensor gptq_quantize(const Matrix& weights, const CalibrationHessian& hessian,
                              const QuantSpec& spec, const GptqOptions& options = {});

struct MetricMse {};
struct MetricMaxAbs {};
struct MetricProxyHessian {
    const Matrix* h = nullptr;
};
using ErrorMetric = std::variant<MetricMse, MetricMaxAbs, MetricProxyHessian>;

/// MSE: mean squared error. MaxAbs: largest |w - w_hat|.
/// ProxyHessian: tr((W - W_hat) H (W - W_hat)^T).
double quant_error(const Matrix& original, const Matrix& reconstructed, const ErrorMetric& metric);

}  // namespace gsr
