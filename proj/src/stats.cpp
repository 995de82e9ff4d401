#include "gsr/stats.hpp"

#include "gsr/errors.hpp"
#include "gsr/random.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace gsr {

double mean(std::span<const double> values) {
    if (values.empty()) return 0.0;
    return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

double median(std::span<const double> values) {
    if (values.empty()) return 0.0;
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    const std::size_t mid = sorted.size() / 2;
    if (sorted.size() % 2 == 1) return sorted[mid];
    return 0.5 * (sorted[mid - 1] + sorted[mid]);
}

SignTest sign_test_less(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw Error(Errc::ShapeMismatch, "sign test needs paired samples");
    SignTest result;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] < b[i]) {
            ++result.wins;
        } else if (a[i] > b[i]) {
            ++result.losses;
        } else {
            ++result.ties;
        }
    }
    const int trials = result.wins + result.losses;
    if (trials == 0) {
        result.p_value = 1.0;
        return result;
    }
    // P(X >= wins), X ~ Binomial(trials, 1/2), summed in log space.
    double p = 0.0;
    for (int k = result.wins; k <= trials; ++k) {
        const double log_term = std::lgamma(trials + 1.0) - std::lgamma(k + 1.0) -
                                std::lgamma(trials - k + 1.0) - trials * std::log(2.0);
        p += std::exp(log_term);
    }
    result.p_value = std::min(1.0, p);
    return result;
}

ConfidenceInterval bootstrap_median_ci(std::span<const double> values, int resamples,
                                       double level, std::uint64_t seed) {
    ConfidenceInterval ci;
    if (values.empty()) return ci;
    ci.estimate = median(values);
    Rng rng(seed);
    std::vector<double> medians;
    medians.reserve(static_cast<std::size_t>(resamples));
    std::vector<double> sample(values.size());
    for (int r = 0; r < resamples; ++r) {
        for (auto& v : sample) v = values[rng.below(values.size())];
        medians.push_back(median(sample));
    }
    std::sort(medians.begin(), medians.end());
    const double alpha = (1.0 - level) / 2.0;
    const auto pick = [&](double q) {
        const auto idx = static_cast<std::size_t>(std::floor(q * static_cast<double>(medians.size() - 1) + 0.5));
        return medians[std::min(idx, medians.size() - 1)];
    };
    ci.lower = pick(alpha);
    ci.upper = pick(1.0 - alpha);
    return ci;
}

std::uint64_t fnv1a(std::span<const std::byte> bytes, std::uint64_t basis) {
    std::uint64_t hash = basis;
    for (std::byte b : bytes) {
        hash ^= static_cast<std::uint64_t>(b);
        hash *= 0x100000001b3ULL;
    }
    return hash;
}

}  // namespace gsr
