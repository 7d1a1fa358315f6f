#pragma once

#include <string>
#include <variant>
#include <vector>

#include "meansq/channel.hpp"
#include "meansq/msstab.hpp"
#include "meansq/sysrep.hpp"

namespace meansq {

// ---------------------------------------------------------------------------
// Plant families
// ---------------------------------------------------------------------------

// Minimum-phase square plant given as its delay-free (biproper) part plus one
// input delay per channel: P = ss * diag{z^{-tau_i}}.
struct GeneralMp {
    StateSpaceModel ss;
    std::vector<int> delays;
};

// Input-decoupled nonminimum-phase family P = base * diag{(z-s_i)/z} with
// `base` minimum phase of relative degree one.
struct DecoupledNmp {
    StateSpaceModel base;
    std::vector<double> zeros;
};

// Two-channel family with one unstable pole at lambda, zero s_i and delay
// tau_i attached to column i.
struct ExampleFamily {
    double lambda = 1.5;
    double s1 = 3.0;
    double s2 = 4.0;
    int tau1 = 1;
    int tau2 = 1;

    [[nodiscard]] bool minimum_phase() const { return std::abs(s1) < 1.0 && std::abs(s2) < 1.0; }
};

using PlantFamily = std::variant<GeneralMp, DecoupledNmp, ExampleFamily>;

// Full plant transfer matrix of a family (delays and zero factors included).
StateSpaceModel family_plant(const PlantFamily& family);
// Number of loop channels of the family.
int family_inputs(const PlantFamily& family);

// ---------------------------------------------------------------------------
// Gamma scalings and reports
// ---------------------------------------------------------------------------

struct GammaScaling {
    Vector gammas;  // diagonal entries gamma_i^2 > 0, first entry pinned to 1

    static GammaScaling ones(int m);
    void validate() const;
    [[nodiscard]] Matrix diagonal() const;
    [[nodiscard]] GammaScaling normalized() const;  // divide by the first entry
};

struct OptimizerTracePoint {
    int evaluations = 0;
    double mu = 0.0;
    std::string stage;
};

struct StabilizabilityReport {
    double rho_min = 0.0;
    GammaScaling gamma_star;
    Vector per_channel_q;
    bool stabilizable = false;
    std::string method;              // "delay-mp" | "nmp-zeros" | "sufficient"
    bool optimizer_converged = true; // false: rho_min is only an upper bound
    std::vector<OptimizerTracePoint> optimizer_trace;
};

struct GammaObjective {
    double mu = 0.0;
    Vector q;
    std::string diagnosis;  // nonempty when mu is +infinity
};

// ---------------------------------------------------------------------------
// Stabilizability operations
// ---------------------------------------------------------------------------

GammaObjective gamma_objective(const PlantFamily& family,
                               const std::vector<ChannelStatistics>& channels,
                               const GammaScaling& gamma);

StabilizabilityReport optimize_gamma(const PlantFamily& family,
                                     const std::vector<ChannelStatistics>& channels);

// Lyapunov-form feasibility of the pair (gamma, mu); the per-channel scalings
// enter reciprocally relative to the quadratic-form parameterization.
bool rho_min_lyapunov_form(const PlantFamily& family,
                           const std::vector<ChannelStatistics>& channels,
                           const GammaScaling& gamma, double mu);

// Per-channel sufficient test from the triangular-factorization bound; all
// true implies mean-square stabilizability.
std::vector<bool> sufficient_check_diagonal(const std::vector<StateSpaceModel>& diag_inners,
                                            const std::vector<double>& zeros,
                                            const std::vector<ChannelStatistics>& channels);

// Balanced realization (compound block orthogonal) of the scalar inner whose
// transmission zeros are the given reals outside the unit circle.
StateSpaceModel blaschke_inner_balanced(const std::vector<double>& poles);

// Controller achieving (up to solver tolerance) the objective value mu(gamma)
// for the minimum-phase-with-delays family.
TransferMatrix synthesize_controller(const PlantFamily& family,
                                     const std::vector<ChannelStatistics>& channels,
                                     const GammaScaling& gamma);

// ---------------------------------------------------------------------------
// Closed forms for the two-channel single-pole example family (tau = 1)
// ---------------------------------------------------------------------------

struct ExampleClosedFormInput {
    double lambda = 1.5;
    double s1 = 3.0;
    double s2 = 4.0;
    double p0 = 0.4;   // delay probability of channel 1
    double p1 = 0.3;   // loss rate of channel 2
    double alpha = 2.0 / 3.0;
};

// Margin of the admissible-region inequality; positive means stabilizable.
// Two conventions are kept side by side because published variants of this
// bound differ in the exponent of the zero factor n_s and in the sign of the
// delayed-weight cross term; the "squared" variant is the one consistent
// with the Riccati-based computation in this library.
double example_closed_form_margin_linear(const ExampleClosedFormInput& in);
double example_closed_form_margin_squared(const ExampleClosedFormInput& in);

// Harmonic closed-form rho_min for one unstable pole (any channel count):
// 1/rho = sum_i 1/c_i^2 over the per-channel single-input values.
double single_pole_rho_min(double lambda, const std::vector<double>& channel_weights_sq);

}  // namespace meansq
