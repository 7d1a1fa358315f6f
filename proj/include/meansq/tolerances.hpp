#pragma once

namespace meansq {

// Every numerical knob in one place. Values are the project-wide defaults;
// the CLI can scale them through the MEANSQ_TOL_PROFILE environment variable.
struct Tolerances {
    double dare_step = 1e-13;       // successive-iterate gap declaring the DARE converged
    double dare_residual = 1e-10;   // accepted DARE residual, relative to 1+|X|
    double lyap_residual = 1e-10;   // accepted Lyapunov residual, relative to 1+|X|
    double minreal_rank = 1e-9;     // rank cutoff in Kalman reduction
    double freq_match = 1e-8;       // frequency-response agreement on the circle grid
    double inner_identity = 1e-8;   // max |M~M - I| over the circle grid
    double esd_negative = 1e-12;    // allowed dip of an energy spectrum below zero
    double unit_circle = 1e-7;      // |.|-1 band treated as "on the unit circle"
    double pole_zero_collision = 1e-8;
    double symmetry = 1e-12;        // relative asymmetry accepted before symmetrizing
    double spectral_radius = 1e-12; // power-iteration bound gap
    int dare_max_iter = 8000;
    int lyap_max_iter = 20000;
    int power_max_iter = 20000;
    int circle_points = 64;         // pass/fail frequency grid
    int quadrature_points = 4096;   // H2 quadrature oracle grid
};

// Mutable process-wide instance.
Tolerances& tolerances();

}  // namespace meansq
