#pragma once

// Hadamard-family rotation matrices: Sylvester (natural order), Walsh
// (sequency order), sign-randomized variants and grouped block-diagonal
// rotations whose diagonal blocks are a single G x G base matrix.

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace gsr {

using SignMatrix = Eigen::Matrix<std::int8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr int kMaxOrder = 1 << 16;

enum class MatrixKind { HadamardNatural, WalshSequency, GroupedBlockDiagonal };
enum class BlockKind { Walsh, HadamardNatural };
enum class Ordering { Natural, Sequency };

std::string_view kind_name(MatrixKind kind) noexcept;
std::string_view block_kind_name(BlockKind kind) noexcept;

constexpr bool is_power_of_two(std::int64_t n) noexcept { return n > 0 && (n & (n - 1)) == 0; }

/// Orthogonal rotation stored as an exact +-1/0 sign pattern and a scalar
/// scale (1/sqrt(block order)). The two are only combined when the matrix is
/// applied, so construction checks and serialization stay exact.
class OrthoMatrix {
public:
    OrthoMatrix(SignMatrix signs, double scale, MatrixKind kind, int group_size,
                BlockKind block_kind, std::optional<std::uint64_t> seed);

    int order() const noexcept { return static_cast<int>(signs_.rows()); }
    const SignMatrix& signs() const noexcept { return signs_; }
    double scale() const noexcept { return scale_; }
    MatrixKind kind() const noexcept { return kind_; }
    /// Block order for grouped matrices, order() otherwise.
    int group_size() const noexcept { return group_size_; }
    BlockKind block_kind() const noexcept { return block_kind_; }
    std::optional<std::uint64_t> seed() const noexcept { return seed_; }

    template <typename Scalar = double>
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> dense() const {
        return (signs_.cast<double>() * scale_).cast<Scalar>();
    }

    /// max |(R R^T - I)_ij| computed exactly on the sign pattern.
    double orthogonality_residual() const;

    bool operator==(const OrthoMatrix&) const = default;

private:
    SignMatrix signs_;
    double scale_;
    MatrixKind kind_;
    int group_size_;
    BlockKind block_kind_;
    std::optional<std::uint64_t> seed_;
};

struct SequencyProfile {
    std::vector<int> per_row_sequency;
    int group_size = 0;
    std::vector<double> per_group_mean;
    std::vector<double> per_group_variance;  // population variance
};

OrthoMatrix hadamard_sylvester(int n);

/// Number of adjacent sign changes. Entries must be +-1.
int row_sequency(std::span<const std::int8_t> row);

/// Sequency of natural-order Sylvester row `index` for order 2^bits, via
/// gray_to_binary(bit_reverse(index)).
int natural_row_sequency(std::uint32_t index, int bits) noexcept;

std::uint32_t bit_reverse(std::uint32_t value, int bits) noexcept;
std::uint32_t binary_to_gray(std::uint32_t value) noexcept;
std::uint32_t gray_to_binary(std::uint32_t gray) noexcept;

/// Walsh row k takes natural row p[k]; p[k] = bit_reverse(binary_to_gray(k)).
std::vector<int> walsh_permutation(int n);

/// Reorders a natural Hadamard matrix into sequency order. The closed-form
/// permutation is cross-checked against explicit sorting by row_sequency.
OrthoMatrix walsh_from_hadamard(const OrthoMatrix& hadamard);

/// One +-1 per column from splitmix64(seed): the top bit set means -1.
std::vector<std::int8_t> sign_diagonal(std::uint64_t seed, int n);

/// M * D for the diagonal sign matrix D drawn from `seed`.
OrthoMatrix randomize_signs(const OrthoMatrix& matrix, std::uint64_t seed);

/// M * diag(signs). Exposed so callers can apply a known diagonal.
OrthoMatrix apply_sign_diagonal(const OrthoMatrix& matrix, std::span<const std::int8_t> signs,
                                std::optional<std::uint64_t> seed);

struct GsrOptions {
    BlockKind base = BlockKind::Walsh;
    std::optional<std::uint64_t> seed;
    /// Draw a separate sign diagonal for each block instead of sharing one.
    bool independent_block_signs = false;
};

/// Block-diagonal rotation of order `order` with order/group identical G x G blocks.
OrthoMatrix gsr(int order, int group, const GsrOptions& options = {});

SequencyProfile sequency_profile(const OrthoMatrix& matrix, int group);

/// Orthonormal fast Walsh-Hadamard transform. Natural ordering matches
/// hadamard_sylvester(n) * x, Sequency ordering matches the Walsh matrix.
std::vector<double> fwht(std::span<const double> x, Ordering ordering);

}  // namespace gsr
