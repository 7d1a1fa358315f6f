#pragma once

#include <Eigen/Dense>

#include <complex>
#include <vector>

#include "meansq/laurent.hpp"

namespace meansq {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using ComplexMatrix = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;
using Complex = std::complex<double>;

// ---------------------------------------------------------------------------
// Eigen-computations
// ---------------------------------------------------------------------------

// All eigenvalues of a square real matrix (dimension capped at 64).
std::vector<Complex> eigenvalues(const Matrix& m);

// Largest eigenvalue modulus.
double spectral_radius(const Matrix& m);

// Roots of a real polynomial given by ascending coefficients c0 + c1 x + ...
// computed from the companion matrix.
std::vector<Complex> poly_roots(const std::vector<double>& ascending);

// ---------------------------------------------------------------------------
// Linear matrix equations
// ---------------------------------------------------------------------------

enum class LyapunovForm {
    forward,  // X = A X A^T + Q
    adjoint,  // X = A^T X A + Q
};

// Solves the requested Stein/Lyapunov equation. Spectra with rho(A) > 1 are
// handled by rewriting in A^{-1}; the only hard failure is an eigenvalue pair
// with lambda_i * lambda_j = 1, which makes the equation singular.
Matrix solve_discrete_lyapunov(const Matrix& a, const Matrix& q, LyapunovForm form);

// Stabilizing solution of
//   X = A'XA + Q - (A'XB + S)(R + B'XB)^{-1}(B'XA + S')
// by damped fixed-point iteration with a structured-doubling fallback.
Matrix solve_dare_standard(const Matrix& a, const Matrix& b, const Matrix& q, const Matrix& r,
                           const Matrix& s);

// Riccati equation attached to an inner realization (A,B,C,D) and a diagonal
// weight Gamma:
//   X = A'XA + C'GC - (A'XB + C'GD)(D'GD + B'XB)^{-1}(B'XA + D'GC).
// Returns the positive definite solution.
Matrix solve_dare(const Matrix& a_in, const Matrix& b_in, const Matrix& c_in, const Matrix& d_in,
                  const Matrix& gamma);

// LQR gain for x+ = Ax + Bu with weights (Q, R): returns F with A + BF stable,
// i.e. F = -(R + B'XB)^{-1} B'XA.
Matrix stabilizing_state_feedback(const Matrix& a, const Matrix& b, const Matrix& q,
                                  const Matrix& r);

// ---------------------------------------------------------------------------
// Nonnegative spectral radius and rational matrix functions
// ---------------------------------------------------------------------------

// Perron radius of an entrywise nonnegative matrix via power iteration with
// Collatz-Wielandt bounds (squaring fallback for reducible patterns).
double spectral_radius_nonneg(const Matrix& m);

// num(M) * den(M)^{-1} with p(M) = sum_k p_k M^k over the stored Laurent
// powers. M and den(M) must be invertible.
Matrix eval_rational_at_matrix(const LaurentPoly& num, const LaurentPoly& den, const Matrix& m);

// p(M) alone.
Matrix eval_poly_at_matrix(const LaurentPoly& p, const Matrix& m);

// ---------------------------------------------------------------------------
// Small symmetric-matrix helpers
// ---------------------------------------------------------------------------

bool is_symmetric(const Matrix& m, double rel_tol);
Matrix symmetrized(const Matrix& m);
// Symmetric PSD square root.
Matrix spd_sqrt(const Matrix& m);
double min_eig_sym(const Matrix& m);
bool is_positive_definite(const Matrix& m, double tol = 0.0);

}  // namespace meansq
