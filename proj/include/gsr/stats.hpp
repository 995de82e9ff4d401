#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace gsr {

double mean(std::span<const double> values);
double median(std::span<const double> values);

struct SignTest {
    int wins = 0;    // pairs with a < b
    int losses = 0;  // pairs with a > b
    int ties = 0;
    double p_value = 1.0;  // one-sided, H1: a tends to be smaller than b
};

/// Paired one-sided sign test of `a < b`. Ties are dropped.
SignTest sign_test_less(std::span<const double> a, std::span<const double> b);

struct ConfidenceInterval {
    double estimate = 0.0;
    double lower = 0.0;
    double upper = 0.0;

    bool contains_zero() const { return lower <= 0.0 && upper >= 0.0; }
};

/// Percentile bootstrap CI for the median of `values`.
ConfidenceInterval bootstrap_median_ci(std::span<const double> values, int resamples,
                                       double level, std::uint64_t seed);

/// FNV-1a over raw bytes. Used for fairness fingerprints in reports.
std::uint64_t fnv1a(std::span<const std::byte> bytes, std::uint64_t basis = 0xcbf29ce484222325ULL);

}  // namespace gsr
