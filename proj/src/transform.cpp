#include "gsr/transform.hpp"

#include "gsr/errors.hpp"
#include "gsr/random.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <string>

namespace gsr {

namespace {

void require_power_of_two(std::int64_t n, std::string_view what) {
    if (!is_power_of_two(n)) {
        throw Error(Errc::NonPowerOfTwo, std::string(what) + " = " + std::to_string(n) + " is not a power of two");
    }
}

void require_order(int n) {
    require_power_of_two(n, "order");
    if (n > kMaxOrder) throw Error(Errc::OrderTooLarge, "order " + std::to_string(n) + " exceeds 2^16");
}

int log2_exact(int n) { return std::countr_zero(static_cast<unsigned>(n)); }

// Sign flips counted over the non-zero support of a row; block-diagonal rows
// are zero outside their block.
int support_sequency(std::span<const std::int8_t> row) {
    int flips = 0;
    std::int8_t previous = 0;
    for (std::int8_t v : row) {
        if (v == 0) continue;
        if (previous != 0 && v != previous) ++flips;
        previous = v;
    }
    return flips;
}

std::span<const std::int8_t> row_span(const SignMatrix& m, int row) {
    return {m.data() + static_cast<std::ptrdiff_t>(row) * m.cols(), static_cast<std::size_t>(m.cols())};
}

}  // namespace

std::string_view kind_name(MatrixKind kind) noexcept {
    switch (kind) {
        case MatrixKind::HadamardNatural: return "hadamard_natural";
        case MatrixKind::WalshSequency: return "walsh_sequency";
        case MatrixKind::GroupedBlockDiagonal: return "grouped_block_diagonal";
    }
    return "unknown";
}

std::string_view block_kind_name(BlockKind kind) noexcept {
    return kind == BlockKind::Walsh ? "walsh" : "hadamard_natural";
}

OrthoMatrix::OrthoMatrix(SignMatrix signs, double scale, MatrixKind kind, int group_size,
                         BlockKind block_kind, std::optional<std::uint64_t> seed)
    : signs_(std::move(signs)),
      scale_(scale),
      kind_(kind),
      group_size_(group_size),
      block_kind_(block_kind),
      seed_(seed) {
    if (signs_.rows() != signs_.cols()) {
        throw Error(Errc::DimensionMismatch, "rotation must be square");
    }
}

double OrthoMatrix::orthogonality_residual() const {
    const int n = order();
    const int words = (n + 63) / 64;
    std::vector<std::uint64_t> nonzero(static_cast<std::size_t>(n) * words, 0);
    std::vector<std::uint64_t> negative(static_cast<std::size_t>(n) * words, 0);
    std::vector<int> first_word(n, words);
    std::vector<int> last_word(n, -1);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            const std::int8_t v = signs_(i, j);
            if (v == 0) continue;
            const std::size_t w = static_cast<std::size_t>(i) * words + j / 64;
            const std::uint64_t bit = std::uint64_t{1} << (j % 64);
            nonzero[w] |= bit;
            if (v < 0) negative[w] |= bit;
            first_word[i] = std::min(first_word[i], j / 64);
            last_word[i] = std::max(last_word[i], j / 64);
        }
    }
    const double scale2 = scale_ * scale_;
    double residual = 0.0;
    for (int i = 0; i < n; ++i) {
        const std::uint64_t* nz_i = &nonzero[static_cast<std::size_t>(i) * words];
        const std::uint64_t* ng_i = &negative[static_cast<std::size_t>(i) * words];
        for (int j = i; j < n; ++j) {
            const std::uint64_t* nz_j = &nonzero[static_cast<std::size_t>(j) * words];
            const std::uint64_t* ng_j = &negative[static_cast<std::size_t>(j) * words];
            long dot = 0;
            const int lo = std::max(first_word[i], first_word[j]);
            const int hi = std::min(last_word[i], last_word[j]);
            for (int w = lo; w <= hi; ++w) {
                const std::uint64_t both = nz_i[w] & nz_j[w];
                dot += std::popcount(both) - 2 * std::popcount(both & (ng_i[w] ^ ng_j[w]));
            }
            const double target = (i == j) ? 1.0 : 0.0;
            residual = std::max(residual, std::abs(scale2 * static_cast<double>(dot) - target));
        }
    }
    return residual;
}

std::uint32_t bit_reverse(std::uint32_t value, int bits) noexcept {
    std::uint32_t out = 0;
    for (int b = 0; b < bits; ++b) {
        out = (out << 1) | ((value >> b) & 1U);
    }
    return out;
}

std::uint32_t binary_to_gray(std::uint32_t value) noexcept { return value ^ (value >> 1); }

std::uint32_t gray_to_binary(std::uint32_t gray) noexcept {
    std::uint32_t value = gray;
    for (std::uint32_t shift = gray >> 1; shift != 0; shift >>= 1) value ^= shift;
    return value;
}

int natural_row_sequency(std::uint32_t index, int bits) noexcept {
    return static_cast<int>(gray_to_binary(bit_reverse(index, bits)));
}

OrthoMatrix hadamard_sylvester(int n) {
    require_order(n);
    if (n < 2) throw Error(Errc::NonPowerOfTwo, "order must be at least 2");
    SignMatrix signs(n, n);
    // Entry (i, j) of the Sylvester matrix is (-1)^popcount(i & j).
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            signs(i, j) = (std::popcount(static_cast<unsigned>(i & j)) & 1) ? -1 : 1;
        }
    }
    return OrthoMatrix(std::move(signs), 1.0 / std::sqrt(static_cast<double>(n)),
                       MatrixKind::HadamardNatural, n, BlockKind::HadamardNatural, std::nullopt);
}

int row_sequency(std::span<const std::int8_t> row) {
    if (row.empty()) throw Error(Errc::EmptyRow, "row has no entries");
    int flips = 0;
    for (std::size_t j = 0; j < row.size(); ++j) {
        if (row[j] != 1 && row[j] != -1) {
            throw Error(Errc::InvalidEntry, "row entries must be +1 or -1");
        }
        if (j > 0 && row[j] != row[j - 1]) ++flips;
    }
    return flips;
}

std::vector<int> walsh_permutation(int n) {
    require_order(n);
    const int bits = log2_exact(n);
    std::vector<int> perm(n);
    for (int k = 0; k < n; ++k) {
        perm[k] = static_cast<int>(bit_reverse(binary_to_gray(static_cast<std::uint32_t>(k)), bits));
    }
    return perm;
}

OrthoMatrix walsh_from_hadamard(const OrthoMatrix& hadamard) {
    if (hadamard.kind() != MatrixKind::HadamardNatural || hadamard.seed().has_value()) {
        throw Error(Errc::NotHadamard, "walsh ordering needs an unrandomized natural-order Hadamard matrix");
    }
    const int n = hadamard.order();
    const SignMatrix& signs = hadamard.signs();

    std::vector<int> sequencies(n);
    for (int i = 0; i < n; ++i) sequencies[i] = row_sequency(row_span(signs, i));
    std::vector<int> sorted(n);
    std::iota(sorted.begin(), sorted.end(), 0);
    std::stable_sort(sorted.begin(), sorted.end(),
                     [&](int a, int b) { return sequencies[a] < sequencies[b]; });

    const std::vector<int> closed_form = walsh_permutation(n);
    if (closed_form != sorted) {
        throw Error(Errc::PermutationMismatch,
                    "bit-reversal/Gray permutation disagrees with sequency sort at order " + std::to_string(n));
    }

    SignMatrix walsh(n, n);
    for (int k = 0; k < n; ++k) walsh.row(k) = signs.row(closed_form[k]);
    return OrthoMatrix(std::move(walsh), hadamard.scale(), MatrixKind::WalshSequency, n,
                       BlockKind::Walsh, std::nullopt);
}

std::vector<std::int8_t> sign_diagonal(std::uint64_t seed, int n) {
    SplitMix64 gen(seed);
    std::vector<std::int8_t> signs(static_cast<std::size_t>(n));
    for (auto& s : signs) s = (gen.next() >> 63) ? -1 : 1;
    return signs;
}

OrthoMatrix apply_sign_diagonal(const OrthoMatrix& matrix, std::span<const std::int8_t> signs,
                                std::optional<std::uint64_t> seed) {
    if (static_cast<int>(signs.size()) != matrix.order()) {
        throw Error(Errc::DimensionMismatch, "sign diagonal length differs from matrix order");
    }
    SignMatrix out = matrix.signs();
    for (int j = 0; j < out.cols(); ++j) {
        if (signs[j] < 0) out.col(j) = -out.col(j);
    }
    return OrthoMatrix(std::move(out), matrix.scale(), matrix.kind(), matrix.group_size(),
                       matrix.block_kind(), seed);
}

OrthoMatrix randomize_signs(const OrthoMatrix& matrix, std::uint64_t seed) {
    const auto diagonal = sign_diagonal(seed, matrix.order());
    return apply_sign_diagonal(matrix, diagonal, seed);
}

OrthoMatrix gsr(int order, int group, const GsrOptions& options) {
    require_order(order);
    require_power_of_two(group, "group size");
    if (group < 2 || order % group != 0) {
        throw Error(Errc::GroupDoesNotDivide,
                    "group " + std::to_string(group) + " does not divide order " + std::to_string(order));
    }
    OrthoMatrix block = hadamard_sylvester(group);
    if (options.base == BlockKind::Walsh) block = walsh_from_hadamard(block);
    if (options.seed && !options.independent_block_signs) {
        block = randomize_signs(block, *options.seed);
    }

    SignMatrix signs = SignMatrix::Zero(order, order);
    for (int b = 0; b < order / group; ++b) {
        signs.block(b * group, b * group, group, group) = block.signs();
    }
    OrthoMatrix full(std::move(signs), block.scale(), MatrixKind::GroupedBlockDiagonal, group,
                     options.base, options.seed);
    if (options.seed && options.independent_block_signs) {
        full = randomize_signs(full, *options.seed);
    }
    return full;
}

SequencyProfile sequency_profile(const OrthoMatrix& matrix, int group) {
    const int n = matrix.order();
    if (group < 1 || n % group != 0) {
        throw Error(Errc::GroupDoesNotDivide,
                    "group " + std::to_string(group) + " does not divide order " + std::to_string(n));
    }
    SequencyProfile profile;
    profile.group_size = group;
    profile.per_row_sequency.resize(n);
    const bool has_zeros = matrix.kind() == MatrixKind::GroupedBlockDiagonal;
    for (int i = 0; i < n; ++i) {
        const auto row = row_span(matrix.signs(), i);
        profile.per_row_sequency[i] = has_zeros ? support_sequency(row) : row_sequency(row);
    }
    const int groups = n / group;
    profile.per_group_mean.resize(groups);
    profile.per_group_variance.resize(groups);
    for (int g = 0; g < groups; ++g) {
        double sum = 0.0;
        for (int k = 0; k < group; ++k) sum += profile.per_row_sequency[g * group + k];
        const double mu = sum / group;
        double ss = 0.0;
        for (int k = 0; k < group; ++k) {
            const double d = profile.per_row_sequency[g * group + k] - mu;
            ss += d * d;
        }
        profile.per_group_mean[g] = mu;
        profile.per_group_variance[g] = ss / group;
    }
    return profile;
}

std::vector<double> fwht(std::span<const double> x, Ordering ordering) {
    const auto n = static_cast<std::int64_t>(x.size());
    require_power_of_two(n, "vector length");
    if (n > kMaxOrder) throw Error(Errc::OrderTooLarge, "vector length exceeds 2^16");
    std::vector<double> y(x.begin(), x.end());
    for (std::int64_t half = 1; half < n; half *= 2) {
        for (std::int64_t start = 0; start < n; start += 2 * half) {
            for (std::int64_t k = start; k < start + half; ++k) {
                const double a = y[k];
                const double b = y[k + half];
                y[k] = a + b;
                y[k + half] = a - b;
            }
        }
    }
    const double norm = 1.0 / std::sqrt(static_cast<double>(n));
    for (auto& v : y) v *= norm;
    if (ordering == Ordering::Natural || n == 1) return y;

    const auto perm = walsh_permutation(static_cast<int>(n));
    std::vector<double> sequency(y.size());
    for (std::int64_t k = 0; k < n; ++k) sequency[k] = y[perm[k]];
    return sequency;
}

}  // namespace gsr
