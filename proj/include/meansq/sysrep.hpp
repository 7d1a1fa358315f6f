#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "meansq/laurent.hpp"
#include "meansq/numkit.hpp"

namespace meansq {

// ---------------------------------------------------------------------------
// Core representations
// ---------------------------------------------------------------------------

// Discrete-time realization y = C x + D u, x+ = A x + B u.
struct StateSpaceModel {
    Matrix a, b, c, d;

    StateSpaceModel() = default;
    StateSpaceModel(Matrix a_, Matrix b_, Matrix c_, Matrix d_);

    static StateSpaceModel gain(const Matrix& d);
    static StateSpaceModel identity(int m);

    [[nodiscard]] int states() const { return static_cast<int>(a.rows()); }
    [[nodiscard]] int inputs() const { return static_cast<int>(d.cols()); }
    [[nodiscard]] int outputs() const { return static_cast<int>(d.rows()); }

    // All eigenvalues of A strictly inside the unit circle.
    [[nodiscard]] bool is_stable(double margin = 0.0) const;

    [[nodiscard]] ComplexMatrix eval(Complex z) const;
};

// Scalar rational function num/den in z; den is kept monic.
struct RationalFn {
    LaurentPoly num;  // polynomial in z (lo >= 0)
    LaurentPoly den;  // polynomial in z (lo >= 0), monic

    RationalFn() : num(), den(LaurentPoly::constant(1.0)) {}
    RationalFn(LaurentPoly n, LaurentPoly d);

    static RationalFn constant(double c);
    // Ratio of polynomials in z^{-1} (numerator and denominator share the
    // z^{-chi} clearing factor).
    static RationalFn from_zinv_ratio(const LaurentPoly& num_zinv, const LaurentPoly& den_zinv);

    [[nodiscard]] bool is_zero() const { return num.is_zero(); }
    [[nodiscard]] Complex eval(Complex z) const;
    [[nodiscard]] bool is_proper() const { return num.hi() <= den.hi(); }
};

// Rational transfer matrix held as a state-space model, a grid of scalar
// rationals, or both. Conversions are cached; equality is always judged by
// frequency response, never by realization.
class TransferMatrix {
public:
    using Grid = std::vector<std::vector<RationalFn>>;

    TransferMatrix() = default;
    explicit TransferMatrix(StateSpaceModel ss);
    explicit TransferMatrix(Grid grid);
    static TransferMatrix scalar(RationalFn f);
    static TransferMatrix identity(int m);
    static TransferMatrix zero(int outputs, int inputs);

    [[nodiscard]] int outputs() const;
    [[nodiscard]] int inputs() const;
    [[nodiscard]] bool empty() const { return !ss_ && !grid_; }

    [[nodiscard]] const StateSpaceModel& ss() const;  // converts on demand
    [[nodiscard]] const Grid& grid() const;           // converts on demand
    [[nodiscard]] bool has_ss() const { return ss_.has_value(); }
    [[nodiscard]] bool has_grid() const { return grid_.has_value(); }

    [[nodiscard]] ComplexMatrix eval(Complex z) const;
    [[nodiscard]] bool is_stable(double margin = 0.0) const;

private:
    mutable std::optional<StateSpaceModel> ss_;
    mutable std::optional<Grid> grid_;
};

// Stable factors of PH = N M^{-1} = Mt^{-1} Nt with the double Bezout
// identity, plus the stabilizing gains used to build them.
struct CoprimeQuadruple {
    TransferMatrix n, m, n_tilde, m_tilde;
    TransferMatrix u, v, u_tilde, v_tilde;
    Matrix state_feedback;  // F with A + BF stable
    Matrix observer_gain;   // L with A + LC stable
};

// ---------------------------------------------------------------------------
// Realization algebra
// ---------------------------------------------------------------------------

// y = g2(g1(u)).
StateSpaceModel series(const StateSpaceModel& g2, const StateSpaceModel& g1);
StateSpaceModel add(const StateSpaceModel& g1, const StateSpaceModel& g2);
StateSpaceModel subtract(const StateSpaceModel& g1, const StateSpaceModel& g2);
StateSpaceModel scale(const StateSpaceModel& g, double s);
// Constant matrices applied on either side.
StateSpaceModel left_multiply(const Matrix& m, const StateSpaceModel& g);
StateSpaceModel right_multiply(const StateSpaceModel& g, const Matrix& m);
StateSpaceModel block_diag(const StateSpaceModel& g1, const StateSpaceModel& g2);
// Inverse of a square biproper system (D invertible).
StateSpaceModel inverse(const StateSpaceModel& g);

// Kalman reduction to the controllable and observable part.
StateSpaceModel minimal_realization(const StateSpaceModel& g);

// ---------------------------------------------------------------------------
// Frequency-domain utilities
// ---------------------------------------------------------------------------

// Unit-circle sample points; log-interleaved angles, conjugate-closed.
std::vector<Complex> unit_circle_grid(int n);
// max over the grid of the Frobenius distance of responses.
double freq_response_distance(const TransferMatrix& g1, const TransferMatrix& g2);
double freq_response_distance(const StateSpaceModel& g1, const StateSpaceModel& g2);
// max over the grid of |M~(z) M(z) - I|.
double inner_identity_defect(const StateSpaceModel& m);

// Squared H2 norm trace(D'D + B' Xo B) with Xo the observability gramian.
double h2_norm_sq(const StateSpaceModel& g);
double h2_norm_sq(const TransferMatrix& g);
// Squared H2 norms of every row of g at once (controllability gramian route).
Vector h2_norm_sq_rows(const StateSpaceModel& g);

// ---------------------------------------------------------------------------
// Factorizations
// ---------------------------------------------------------------------------

CoprimeQuadruple coprime_factorize(const StateSpaceModel& gh);

struct InnerOuter {
    StateSpaceModel inner;  // minimal, carries the zeros outside the disk
    TransferMatrix outer;   // stable with stable inverse
};
InnerOuter inner_outer_factorize(const TransferMatrix& m);

// Inner factor of Gamma^{1/2> M_in Gamma^{-1/2} built from the DARE solution.
StateSpaceModel gamma_inner(const StateSpaceModel& m_in, const Matrix& gamma);
// Outer companion Gamma^{1/2} m_in gamma_inner(...)^{-1} (stable, stably
// invertible); exposed for controller construction.
StateSpaceModel gamma_inner_outer_part(const StateSpaceModel& m_in, const Matrix& gamma);
// Anti-stable realization of M_gin^{-1}.
StateSpaceModel gamma_inner_inverse(const StateSpaceModel& m_gin);

// ||Pi_1{(f_tau,i - M_gin^{-1} e_i) z^tau G}||_2^2 through the unstable-side
// gramian; `g_hat` must be scalar and stable.
double projection_norm_sq(const StateSpaceModel& m_gin_inv, int column, int tau,
                          const TransferMatrix& g_hat);

// Additive decomposition helper: stable projection of (anti * stab) where
// `anti` has all poles outside the circle and `stab` all inside.
StateSpaceModel stable_projection_of_product(const StateSpaceModel& anti,
                                             const StateSpaceModel& stab);

// (num, den) z-polynomials of a scalar system, via minimal realization.
RationalFn to_rational(const StateSpaceModel& scalar_sys);

}  // namespace meansq
