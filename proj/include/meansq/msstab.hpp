#pragma once

#include <limits>
#include <optional>
#include <vector>

#include "meansq/channel.hpp"
#include "meansq/sysrep.hpp"

namespace meansq {

// Closed-loop description: plant P (strictly proper), controller K, one
// channel statistic per plant input, and the diagonal of the white-noise
// variance.
struct LoopDescription {
    TransferMatrix plant;
    TransferMatrix controller;
    std::vector<ChannelStatistics> channels;
    Vector noise_variance;

    void validate() const;
    // Diagonal FIR of the channel means.
    [[nodiscard]] StateSpaceModel nominal_h() const;
};

struct StabilityReport {
    Matrix t_hat_w;  // ||T_{i1 i2} W_{i2}||_2^2
    Matrix g_hat;    // ||G_{i1 i2}||_2^2
    double rho = std::numeric_limits<double>::quiet_NaN();
    bool nominal_stable = false;
    bool ms_stable = false;
    // Stationary input powers ||u_i||^2 from the linear fixed point; present
    // iff the loop is mean-square stable.
    std::optional<Vector> powers;
};

struct ClosedLoopTransfers {
    TransferMatrix t;            // K (I + P H K)^{-1} P H
    TransferMatrix g;            // K (I + P H K)^{-1} P
    StateSpaceModel loop_state;  // full interconnection (plant + H + K states)
};

ClosedLoopTransfers build_complementary_sensitivity(const LoopDescription& loop);

StabilityReport ms_stability_test(const LoopDescription& loop);

// Diagonal FIR realization of per-channel means (shared with the simulator).
StateSpaceModel nominal_channel_model(const std::vector<ChannelStatistics>& channels);

}  // namespace meansq
