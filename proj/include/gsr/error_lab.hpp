#pragma once

// Experiment harness: synthetic weight corpora, the GH/GW/LH/GSR quantization
// error comparison, sequency-variance tables and the R4 global/local ablation.

#include "gsr/quant.hpp"
#include "gsr/rotation.hpp"
#include "gsr/stats.hpp"
#include "gsr/tensor_io.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace gsr {

enum class BaseDist { Gaussian, StudentT };

struct CorpusSpec {
    int count = 100;
    int rows = 512;
    int cols = 512;
    BaseDist base = BaseDist::StudentT;
    double nu = 4.0;
    /// Input channels (columns) multiplied by outlier_gain.
    int outlier_channels = 4;
    double outlier_gain = 20.0;
    /// Weight of a unit-variance AR(1) component running along the input channels.
    double smooth_weight = 0.3;
    double smooth_correlation = 0.95;
    std::uint64_t seed = 0;

    void validate() const;
    double nominal_base_variance() const;
    std::string describe() const;
};

Matrix gen_tensor(const CorpusSpec& spec, int index);
std::vector<Matrix> gen_corpus(const CorpusSpec& spec);
/// Indices of the outlier columns of tensor `index`, ascending.
std::vector<int> outlier_columns(const CorpusSpec& spec, int index);

std::uint64_t hash_matrix(const Matrix& m, std::uint64_t basis = 0xcbf29ce484222325ULL);

struct Variant {
    std::string name;
    std::optional<Matrix> rotation;  // acts on input channels; nullopt = identity
};

/// "identity", "gh", "gw", "lh" or "gsr" at the given order and group.
Variant make_variant(std::string_view name, int order, int group, std::uint64_t seed);

enum class Quantizer { RTN, GPTQ };

struct ComparisonOptions {
    QuantSpec weight_spec;
    Quantizer quantizer = Quantizer::RTN;
    int calibration_samples = 256;
    std::uint64_t seed = 0;
    /// Metrics are computed without quantization when false.
    bool quantize = true;
};

inline constexpr std::string_view kMetricMse = "mse";
inline constexpr std::string_view kMetricMaxAbs = "max_abs";
inline constexpr std::string_view kMetricProxy = "proxy";

struct MetricSummary {
    std::vector<double> values;  // per tensor
    double mean = 0.0;
    double median = 0.0;
};

struct VariantResult {
    std::string name;
    std::uint64_t input_hash = 0;  // hash of the corpus bytes this variant consumed
    std::map<std::string, MetricSummary, std::less<>> metrics;
};

struct ExperimentReport {
    std::string config;
    std::uint64_t seed = 0;
    std::uint64_t corpus_hash = 0;
    std::string spec_text;
    std::uint64_t spec_hash = 0;
    std::vector<VariantResult> variants;

    bool fairness_ok() const;
    const VariantResult& variant(std::string_view name) const;
    /// Rows sorted by tensor_id, then variant name, then metric.
    std::vector<ReportRow> rows() const;
};

ExperimentReport run_comparison(const std::vector<Matrix>& corpus, const std::vector<Variant>& variants,
                                const ComparisonOptions& options);

/// One-sided sign test of `a < b` on a metric's per-tensor values.
SignTest compare_variants(const ExperimentReport& report, std::string_view a, std::string_view b,
                          std::string_view metric = kMetricMse);

struct SequencyVarianceRow {
    int group = 0;
    double hadamard_mean = 0.0;
    double hadamard_variance = 0.0;
    double walsh_mean = 0.0;
    double walsh_variance = 0.0;
};

struct SequencyVarianceTable {
    int order = 0;
    int group_size = 0;
    std::vector<SequencyVarianceRow> rows;
    double mean_hadamard_variance = 0.0;
    double mean_walsh_variance = 0.0;
};

SequencyVarianceTable sequency_variance_report(int order, int group);

struct AblationOptions {
    ToyBlockConfig block;
    int seeds = 50;
    std::string r1 = "gsr";
    std::string r2 = "gh";
    std::string r3 = "gh";
    std::string r4 = "gh";
    QuantSpec weight_spec;
    QuantSpec activation_spec;
    int bootstrap_resamples = 1000;

    /// W2 asymmetric MSE-clipped weights, A4 symmetric activations at clip 0.9.
    static AblationOptions defaults(const ToyBlockConfig& block);
};

struct AblationCell {
    std::string setting;  // "W16A16", "W2A16", "W2A4"
    R4Mode mode = R4Mode::Global;
    std::vector<double> output_mse;  // per seed, vs the unrotated full-precision block
    double median = 0.0;
};

struct AblationComparison {
    std::string setting;
    ConfidenceInterval local_minus_global;  // median paired difference with bootstrap CI
    SignTest local_better;
    bool significant = false;
};

struct AblationReport {
    std::vector<AblationCell> cells;
    std::vector<AblationComparison> comparisons;
    std::string config;

    const AblationCell& cell(std::string_view setting, R4Mode mode) const;
    const AblationComparison& comparison(std::string_view setting) const;
};

AblationReport r4_ablation(const AblationOptions& options);

}  // namespace gsr
