#pragma once

#include <vector>

#include "meansq/laurent.hpp"
#include "meansq/numkit.hpp"
#include "meansq/sysrep.hpp"

namespace meansq {

// Per-channel random transmission-delay description: pmf[j] is the
// probability that a packet takes j steps, weights[j] the receiver weight
// applied to a packet arriving j steps late. Total pmf mass below one models
// additional packet loss.
struct DelayChannelSpec {
    int max_delay = 0;
    std::vector<double> pmf;
    std::vector<double> weights;

    static DelayChannelSpec perfect();
    // Memoryless erasure channel with the given loss rate.
    static DelayChannelSpec dropout(double loss_rate);
    // One-step random delay: Pr{delay}=p_delay, weight alpha on late packets.
    static DelayChannelSpec one_step_delay(double p_delay, double alpha);

    void validate() const;
    [[nodiscard]] double drop_probability() const;
};

// Derived second-order description of one subchannel.
struct ChannelStatistics {
    Vector mu;        // mean impulse response, mu_j = alpha_j p_j
    Matrix r;         // covariance of the impulse-response vector
    LaurentPoly esd;  // energy spectral density S_Omega(z)
    LaurentPoly phi;  // minimum-phase spectral factor, positive leading coeff
    TransferMatrix w; // coefficient of frequency variation phi/H (scalar)

    bool phi_boundary_root = false;  // spectral factor touches the unit circle
    bool w_invertible = false;       // W and W^{-1} both stable and proper

    [[nodiscard]] int max_delay() const { return static_cast<int>(mu.size()) - 1; }
    [[nodiscard]] LaurentPoly nominal() const;  // H(z) = sum_j mu_j z^{-j}
    [[nodiscard]] double r0() const;            // integrated esd = trace(r)
    [[nodiscard]] bool is_null() const { return phi.is_zero(); }
    // W as a rational function (zero when the channel is exact).
    [[nodiscard]] RationalFn w_rational() const;
};

struct SpectralFactor {
    LaurentPoly phi;
    bool boundary_root = false;
};

// Minimum-phase Phi with Phi * Phi~ = esd, positive leading coefficient.
SpectralFactor spectral_factor(const LaurentPoly& esd);

ChannelStatistics statistics_from_spec(const DelayChannelSpec& spec);

}  // namespace meansq
