#pragma once

// Fusing front/rear rotations into the weights of a LLaMA-style block and
// checking that the full-precision function is unchanged.
//
// Weights use the (input channels x output channels) layout, so a linear
// layer computes y = x W for a row vector x and a rotated weight is
// W' = Rf^T W Rr.

#include "gsr/quant.hpp"
#include "gsr/transform.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace gsr {

template <typename Scalar>
using MatrixT = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

enum class Role { Wq, Wk, Wv, Wo, Wup, Wgate, Wdown };
enum class Slot { Identity, R1, R2, R4 };

std::string_view role_name(Role role) noexcept;
std::string_view slot_name(Slot slot) noexcept;

struct WeightRole {
    Role role;
    Slot front;
    Slot rear;
    bool operator==(const WeightRole&) const = default;
};

/// Front/rear rotation for each of the seven block weights.
std::vector<WeightRole> assignment_table();

/// W' = Rf^T W Rr; std::nullopt stands for the identity on that side.
Matrix rotate_weight(const Matrix& weight, const std::optional<Matrix>& front,
                     const std::optional<Matrix>& rear);

/// W'[i, j] through the nested inner products <<Rf^T[i,:], W[:,c]>_c, Rr[:,j]>.
double rotated_element(const Matrix& weight, const Matrix& front, const Matrix& rear, int i, int j);

struct ToyBlockConfig {
    int hidden = 64;
    int heads = 4;
    int ffn = 128;
    int group_size = 16;
    int seq_len = 8;
    std::uint64_t seed = 0;
    /// Input channels of the hidden-reading projections that get scaled up.
    int outlier_channels = 2;
    double outlier_gain = 8.0;

    int head_dim() const noexcept { return heads > 0 ? hidden / heads : 0; }
    void validate() const;
    std::string describe() const;
};

enum class RotationKind { Identity, GH, GW, LH, GSR, External };
enum class R4Mode { Global, Local };

struct RotationChoice {
    RotationKind kind = RotationKind::Identity;
    std::optional<Matrix> external;  // only for RotationKind::External
    std::string label = "identity";

    /// "identity", "gh", "gw", "lh", "gsr"; external matrices come from make_external.
    static RotationChoice parse(std::string_view name);
    static RotationChoice make_external(Matrix matrix, std::string label);
};

struct RotationAssignment {
    RotationChoice r1;
    RotationChoice r2;
    RotationChoice r3;
    RotationChoice r4;
    R4Mode r4_mode = R4Mode::Global;
};

/// Dense rotation of order `order` for a choice; std::nullopt for identity.
/// Hadamard kinds are sign-randomized from `seed`, Walsh kinds are not.
std::optional<Matrix> materialize(const RotationChoice& choice, int order, int group, std::uint64_t seed);

struct FusionRecord {
    Role role;
    Slot front;
    Slot rear;
    bool operator==(const FusionRecord&) const = default;
};

struct ToyBlock {
    ToyBlockConfig config;
    Matrix wq, wk, wv, wo, wup, wgate, wdown;
    /// Residual-stream basis: inputs enter as X R1 and outputs leave as Y R1^T.
    std::optional<Matrix> r1;
    /// Online head_dim rotation of q and k after RoPE.
    std::optional<Matrix> r3;
    /// Online rotation of the down-projection input.
    std::optional<Matrix> r4;
    std::vector<FusionRecord> fusion_log;

    const Matrix& weight(Role role) const;
    Matrix& weight(Role role);
};

ToyBlock build_toy_block(const ToyBlockConfig& config);

ToyBlock fuse_rotations(const ToyBlock& block, const RotationAssignment& assignment);

struct ForwardQuant {
    std::optional<QuantSpec> weights;      // RTN on every projection, groups along inputs
    std::optional<QuantSpec> activations;  // RTN on the down-projection input
};

template <typename Scalar>
MatrixT<Scalar> forward(const ToyBlock& block, const MatrixT<Scalar>& input,
                        const ForwardQuant& quant = {});

extern template MatrixT<double> forward<double>(const ToyBlock&, const MatrixT<double>&, const ForwardQuant&);
extern template MatrixT<float> forward<float>(const ToyBlock&, const MatrixT<float>&, const ForwardQuant&);

/// Seeded unit-Gaussian block input of shape seq_len x hidden.
Matrix random_input(const ToyBlockConfig& config, std::uint64_t seed);

/// Perturbs every column of Rf outside column group `group_index` and reports
/// whether rows [group_index*G, (group_index+1)*G) of Rf^T W Rr stay within 1e-12.
bool front_locality_holds(const Matrix& weight, const Matrix& front, const Matrix& rear, int group,
                           int group_index, std::uint64_t seed = 0);

/// Max change of the group_index row block of Rf^T W Rr after perturbing Rf
/// columns inside (true) or outside (false) that column group.
double front_perturbation_delta(const Matrix& weight, const Matrix& front, const Matrix& rear, int group,
                                int group_index, bool inside, std::uint64_t seed = 0);

/// Per row group, max change of column `column` of Rf^T W Rr after perturbing
/// column `column` of Rr.
std::vector<double> rear_perturbation_deltas(const Matrix& weight, const Matrix& front, const Matrix& rear,
                                             int group, int column, std::uint64_t seed = 0);

}  // namespace gsr
