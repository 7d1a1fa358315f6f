#include "meansq/sysrep.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "meansq/errors.hpp"
#include "meansq/tolerances.hpp"

namespace meansq {

namespace {

void require(bool ok, ErrorKind kind, const std::string& msg) {
    if (!ok) fail(kind, msg);
}

Matrix hstack(const Matrix& a, const Matrix& b) {
    Matrix r(a.rows(), a.cols() + b.cols());
    r << a, b;
    return r;
}

Matrix vstack(const Matrix& a, const Matrix& b) {
    Matrix r(a.rows() + b.rows(), a.cols());
    r << a, b;
    return r;
}

Matrix blkdiag(const Matrix& a, const Matrix& b) {
    Matrix r = Matrix::Zero(a.rows() + b.rows(), a.cols() + b.cols());
    r.topLeftCorner(a.rows(), a.cols()) = a;
    r.bottomRightCorner(b.rows(), b.cols()) = b;
    return r;
}

// Real polynomial (ascending powers of z) with the given roots.
std::vector<double> poly_from_roots(const std::vector<Complex>& roots) {
    std::vector<Complex> c{1.0};
    for (const Complex& r : roots) {
        std::vector<Complex> next(c.size() + 1, Complex{0.0, 0.0});
        for (std::size_t i = 0; i < c.size(); ++i) {
            next[i + 1] += c[i];
            next[i] -= r * c[i];
        }
        c = std::move(next);
    }
    std::vector<double> out(c.size());
    for (std::size_t i = 0; i < c.size(); ++i) out[i] = c[i].real();
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// StateSpaceModel
// ---------------------------------------------------------------------------

StateSpaceModel::StateSpaceModel(Matrix a_, Matrix b_, Matrix c_, Matrix d_)
    : a(std::move(a_)), b(std::move(b_)), c(std::move(c_)), d(std::move(d_)) {
    require(a.rows() == a.cols(), ErrorKind::dimension, "state matrix must be square");
    require(b.rows() == a.rows(), ErrorKind::dimension, "B row count must match state count");
    require(c.cols() == a.rows(), ErrorKind::dimension, "C column count must match state count");
    require(d.rows() == c.rows() && d.cols() == b.cols(), ErrorKind::dimension,
            "D must be outputs x inputs");
}

StateSpaceModel StateSpaceModel::gain(const Matrix& d) {
    return {Matrix(0, 0), Matrix(0, d.cols()), Matrix(d.rows(), 0), d};
}

StateSpaceModel StateSpaceModel::identity(int m) { return gain(Matrix::Identity(m, m)); }

bool StateSpaceModel::is_stable(double margin) const {
    if (states() == 0) return true;
    return spectral_radius(a) < 1.0 - margin;
}

ComplexMatrix StateSpaceModel::eval(Complex z) const {
    if (states() == 0) return d.cast<Complex>();
    ComplexMatrix zi = ComplexMatrix::Identity(a.rows(), a.rows()) * z - a.cast<Complex>();
    return d.cast<Complex>() + c.cast<Complex>() * zi.partialPivLu().solve(b.cast<Complex>());
}

// ---------------------------------------------------------------------------
// RationalFn
// ---------------------------------------------------------------------------

RationalFn::RationalFn(LaurentPoly n, LaurentPoly d) : num(std::move(n)), den(std::move(d)) {
    require(!den.is_zero(), ErrorKind::domain, "rational function with zero denominator");
    require(den.lo() >= 0 && num.lo() >= 0, ErrorKind::domain,
            "rational function stores plain polynomials in z");
    // Strip a common z^k factor, then make the denominator monic.
    if (!num.is_zero()) {
        int k = std::min(num.lo(), den.lo());
        num = num.shifted(-k);
        den = den.shifted(-k);
    } else {
        den = den.shifted(-den.lo());
    }
    const double lead = den.coeffs().back();
    den = (1.0 / lead) * den;
    num = (1.0 / lead) * num;
}

RationalFn RationalFn::constant(double c) {
    return {LaurentPoly::constant(c), LaurentPoly::constant(1.0)};
}

RationalFn RationalFn::from_zinv_ratio(const LaurentPoly& num_zinv, const LaurentPoly& den_zinv) {
    require(!den_zinv.is_zero(), ErrorKind::domain, "zero denominator");
    int k = std::max(0, -std::min(num_zinv.is_zero() ? 0 : num_zinv.lo(), den_zinv.lo()));
    return {num_zinv.shifted(k), den_zinv.shifted(k)};
}

Complex RationalFn::eval(Complex z) const {
    if (num.is_zero()) return {0.0, 0.0};
    return num.eval(z) / den.eval(z);
}

// ---------------------------------------------------------------------------
// Realization algebra
// ---------------------------------------------------------------------------

StateSpaceModel series(const StateSpaceModel& g2, const StateSpaceModel& g1) {
    require(g2.inputs() == g1.outputs(), ErrorKind::dimension, "series: dimension mismatch");
    Matrix a = blkdiag(g1.a, g2.a);
    a.bottomLeftCorner(g2.states(), g1.states()) = g2.b * g1.c;
    Matrix b = vstack(g1.b, Matrix(g2.b * g1.d));
    Matrix c = hstack(Matrix(g2.d * g1.c), g2.c);
    Matrix d = g2.d * g1.d;
    return {std::move(a), std::move(b), std::move(c), std::move(d)};
}

StateSpaceModel add(const StateSpaceModel& g1, const StateSpaceModel& g2) {
    require(g1.inputs() == g2.inputs() && g1.outputs() == g2.outputs(), ErrorKind::dimension,
            "add: dimension mismatch");
    return {blkdiag(g1.a, g2.a), vstack(g1.b, g2.b), hstack(g1.c, g2.c), Matrix(g1.d + g2.d)};
}

StateSpaceModel subtract(const StateSpaceModel& g1, const StateSpaceModel& g2) {
    return add(g1, scale(g2, -1.0));
}

StateSpaceModel scale(const StateSpaceModel& g, double s) {
    return {g.a, g.b, Matrix(s * g.c), Matrix(s * g.d)};
}

StateSpaceModel left_multiply(const Matrix& m, const StateSpaceModel& g) {
    require(m.cols() == g.outputs(), ErrorKind::dimension, "left_multiply: dimension mismatch");
    return {g.a, g.b, Matrix(m * g.c), Matrix(m * g.d)};
}

StateSpaceModel right_multiply(const StateSpaceModel& g, const Matrix& m) {
    require(g.inputs() == m.rows(), ErrorKind::dimension, "right_multiply: dimension mismatch");
    return {g.a, Matrix(g.b * m), g.c, Matrix(g.d * m)};
}

StateSpaceModel block_diag(const StateSpaceModel& g1, const StateSpaceModel& g2) {
    return {blkdiag(g1.a, g2.a), blkdiag(g1.b, g2.b), blkdiag(g1.c, g2.c), blkdiag(g1.d, g2.d)};
}

StateSpaceModel inverse(const StateSpaceModel& g) {
    require(g.inputs() == g.outputs(), ErrorKind::dimension, "inverse: system must be square");
    Eigen::FullPivLU<Matrix> lu(g.d);
    lu.setThreshold(1e-12);
    require(lu.isInvertible(), ErrorKind::singular, "inverse: feedthrough matrix is singular");
    Matrix di = lu.inverse();
    if (g.states() == 0) return StateSpaceModel::gain(di);
    return {Matrix(g.a - g.b * di * g.c), Matrix(g.b * di), Matrix(-di * g.c), di};
}

namespace {

// Orthonormal basis of the reachable subspace of (A, B).
Matrix reachable_basis(const Matrix& a, const Matrix& b, double tol) {
    const Eigen::Index n = a.rows();
    if (n == 0 || b.cols() == 0) return Matrix(n, 0);
    Matrix k(n, n * b.cols());
    Matrix blk = b;
    for (Eigen::Index i = 0; i < n; ++i) {
        k.middleCols(i * b.cols(), b.cols()) = blk;
        blk = a * blk;
    }
    Eigen::JacobiSVD<Matrix> svd(k, Eigen::ComputeThinU);
    const auto& sv = svd.singularValues();
    const double cut = tol * std::max(1.0, sv.size() > 0 ? sv(0) : 0.0);
    Eigen::Index rank = 0;
    while (rank < sv.size() && sv(rank) > cut) ++rank;
    return svd.matrixU().leftCols(rank);
}

}  // namespace

StateSpaceModel minimal_realization(const StateSpaceModel& g) {
    const double tol = tolerances().minreal_rank;
    if (g.states() == 0) return g;
    // Controllable part.
    Matrix t = reachable_basis(g.a, g.b, tol);
    StateSpaceModel gc{Matrix(t.transpose() * g.a * t), Matrix(t.transpose() * g.b),
                       Matrix(g.c * t), g.d};
    if (gc.states() == 0) return StateSpaceModel::gain(g.d);
    // Observable part via duality.
    Matrix s = reachable_basis(gc.a.transpose(), gc.c.transpose(), tol);
    return {Matrix(s.transpose() * gc.a * s), Matrix(s.transpose() * gc.b), Matrix(gc.c * s),
            g.d};
}

// ---------------------------------------------------------------------------
// TransferMatrix
// ---------------------------------------------------------------------------

namespace {

// Characteristic polynomial of A (ascending coefficients, monic).
std::vector<double> charpoly(const Matrix& a) { return poly_from_roots(eigenvalues(a)); }

// Numerator of a scalar proper system with known monic denominator `den`
// (ascending, degree n): sample G(z)*den(z) on a circle of radius R and
// invert the DFT. Exact for rational data up to conditioning.
LaurentPoly interpolate_numerator(const StateSpaceModel& sys, const std::vector<double>& den) {
    const int n = static_cast<int>(den.size()) - 1;
    const int npts = n + 1;
    const double radius = std::max(2.0, sys.states() > 0 ? 2.0 * spectral_radius(sys.a) : 2.0);
    std::vector<Complex> vals(static_cast<std::size_t>(npts));
    LaurentPoly denp = LaurentPoly::from_z(den);
    for (int k = 0; k < npts; ++k) {
        const double ang = 2.0 * M_PI * k / npts;
        Complex z = radius * Complex{std::cos(ang), std::sin(ang)};
        vals[static_cast<std::size_t>(k)] = sys.eval(z)(0, 0) * denp.eval(z);
    }
    std::vector<double> coeffs(static_cast<std::size_t>(npts), 0.0);
    for (int j = 0; j <= n; ++j) {
        Complex acc{0.0, 0.0};
        for (int k = 0; k < npts; ++k) {
            const double ang = -2.0 * M_PI * k * j / npts;
            acc += vals[static_cast<std::size_t>(k)] * Complex{std::cos(ang), std::sin(ang)};
        }
        coeffs[static_cast<std::size_t>(j)] = acc.real() / (npts * std::pow(radius, j));
    }
    // Snap coefficients that are pure roundoff to zero.
    double scale = 0.0;
    for (double c : coeffs) scale = std::max(scale, std::abs(c));
    for (double& c : coeffs)
        if (std::abs(c) < 1e-12 * std::max(1.0, scale)) c = 0.0;
    return LaurentPoly::from_z(coeffs);
}

RationalFn entry_to_rational(const StateSpaceModel& sys, int row, int col) {
    StateSpaceModel entry{sys.a, sys.b.col(col), sys.c.row(row),
                          Matrix::Constant(1, 1, sys.d(row, col))};
    StateSpaceModel mr = minimal_realization(entry);
    std::vector<double> den = mr.states() > 0 ? charpoly(mr.a) : std::vector<double>{1.0};
    LaurentPoly num = interpolate_numerator(mr, den);
    return {num, LaurentPoly::from_z(den)};
}

StateSpaceModel column_to_ss(const std::vector<RationalFn>& column) {
    // Common monic denominator for the column, then a bottom-companion
    // controllable canonical block.
    LaurentPoly den = LaurentPoly::constant(1.0);
    for (const auto& f : column) {
        require(f.is_proper(), ErrorKind::domain, "transfer matrix entry is improper");
        den = den * f.den;
    }
    const int n = den.hi();
    const int rows = static_cast<int>(column.size());
    Matrix a = Matrix::Zero(n, n);
    for (int i = 0; i + 1 < n; ++i) a(i, i + 1) = 1.0;
    const double lead = den.coeff(n);
    for (int j = 0; j < n; ++j) a(n - 1, j) = -den.coeff(j) / lead;
    Matrix b = Matrix::Zero(n, 1);
    if (n > 0) b(n - 1, 0) = 1.0 / lead;
    Matrix c = Matrix::Zero(rows, n);
    Matrix d = Matrix::Zero(rows, 1);
    for (int i = 0; i < rows; ++i) {
        // num_i(z) * (den / den_i)(z), reduced against the common denominator.
        LaurentPoly cof = LaurentPoly::constant(1.0);
        for (int k = 0; k < rows; ++k)
            if (k != i) cof = cof * column[static_cast<std::size_t>(k)].den;
        LaurentPoly num = column[static_cast<std::size_t>(i)].num * cof;
        // num = d*den + rem with deg rem < n.
        const double dterm = num.coeff(n) / lead;
        LaurentPoly rem = num - dterm * den;
        d(i, 0) = dterm;
        for (int j = 0; j < n; ++j) c(i, j) = rem.coeff(j);
    }
    return {std::move(a), std::move(b), std::move(c), std::move(d)};
}

}  // namespace

TransferMatrix::TransferMatrix(StateSpaceModel ss) : ss_(std::move(ss)) {}

TransferMatrix::TransferMatrix(Grid grid) : grid_(std::move(grid)) {
    require(!grid_->empty() && !grid_->front().empty(), ErrorKind::dimension,
            "transfer matrix grid must be nonempty");
    for (const auto& row : *grid_)
        require(row.size() == grid_->front().size(), ErrorKind::dimension,
                "ragged transfer matrix grid");
}

TransferMatrix TransferMatrix::scalar(RationalFn f) { return TransferMatrix(Grid{{std::move(f)}}); }

TransferMatrix TransferMatrix::identity(int m) {
    return TransferMatrix(StateSpaceModel::identity(m));
}

TransferMatrix TransferMatrix::zero(int outputs, int inputs) {
    return TransferMatrix(StateSpaceModel::gain(Matrix::Zero(outputs, inputs)));
}

int TransferMatrix::outputs() const {
    return ss_ ? ss_->outputs() : static_cast<int>(grid_->size());
}

int TransferMatrix::inputs() const {
    return ss_ ? ss_->inputs() : static_cast<int>(grid_->front().size());
}

const StateSpaceModel& TransferMatrix::ss() const {
    if (!ss_) {
        const Grid& g = *grid_;
        StateSpaceModel acc;
        bool first = true;
        for (std::size_t j = 0; j < g.front().size(); ++j) {
            std::vector<RationalFn> column;
            column.reserve(g.size());
            for (const auto& row : g) column.push_back(row[j]);
            StateSpaceModel colsys = column_to_ss(column);
            acc = first ? colsys
                        : StateSpaceModel{blkdiag(acc.a, colsys.a), blkdiag(acc.b, colsys.b),
                                          hstack(acc.c, colsys.c), hstack(acc.d, colsys.d)};
            first = false;
        }
        ss_ = minimal_realization(acc);
    }
    return *ss_;
}

const TransferMatrix::Grid& TransferMatrix::grid() const {
    if (!grid_) {
        const StateSpaceModel& sys = *ss_;
        Grid g(static_cast<std::size_t>(sys.outputs()),
               std::vector<RationalFn>(static_cast<std::size_t>(sys.inputs())));
        for (int i = 0; i < sys.outputs(); ++i)
            for (int j = 0; j < sys.inputs(); ++j)
                g[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] =
                    entry_to_rational(sys, i, j);
        grid_ = std::move(g);
    }
    return *grid_;
}

ComplexMatrix TransferMatrix::eval(Complex z) const {
    if (ss_) return ss_->eval(z);
    const Grid& g = *grid_;
    ComplexMatrix r(outputs(), inputs());
    for (int i = 0; i < outputs(); ++i)
        for (int j = 0; j < inputs(); ++j)
            r(i, j) = g[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)].eval(z);
    return r;
}

bool TransferMatrix::is_stable(double margin) const {
    if (ss_) return ss_->is_stable(margin);
    for (const auto& row : *grid_)
        for (const auto& f : row) {
            if (f.is_zero()) continue;
            for (const Complex& r : poly_roots(f.den.coeffs()))
                if (std::abs(r) >= 1.0 - margin) return false;
        }
    return true;
}

// ---------------------------------------------------------------------------
// Frequency-domain utilities
// ---------------------------------------------------------------------------

std::vector<Complex> unit_circle_grid(int n) {
    // Log-spaced angles in (0, pi], conjugate-closed.
    const int half = n / 2;
    std::vector<Complex> pts;
    pts.reserve(static_cast<std::size_t>(2 * half));
    const double lo = std::log(1e-3);
    const double hi = std::log(M_PI);
    for (int k = 0; k < half; ++k) {
        const double theta = std::exp(lo + (hi - lo) * k / std::max(1, half - 1));
        pts.emplace_back(std::cos(theta), std::sin(theta));
        pts.emplace_back(std::cos(theta), -std::sin(theta));
    }
    return pts;
}

namespace {

template <typename F1, typename F2>
double max_response_diff(const F1& g1, const F2& g2) {
    double worst = 0.0;
    for (const Complex& z : unit_circle_grid(tolerances().circle_points)) {
        ComplexMatrix d = g1.eval(z) - g2.eval(z);
        worst = std::max(worst, d.cwiseAbs().maxCoeff());
    }
    return worst;
}

}  // namespace

double freq_response_distance(const TransferMatrix& g1, const TransferMatrix& g2) {
    require(g1.outputs() == g2.outputs() && g1.inputs() == g2.inputs(), ErrorKind::dimension,
            "freq_response_distance: dimension mismatch");
    return max_response_diff(g1, g2);
}

double freq_response_distance(const StateSpaceModel& g1, const StateSpaceModel& g2) {
    require(g1.outputs() == g2.outputs() && g1.inputs() == g2.inputs(), ErrorKind::dimension,
            "freq_response_distance: dimension mismatch");
    return max_response_diff(g1, g2);
}

double inner_identity_defect(const StateSpaceModel& m) {
    require(m.inputs() == m.outputs(), ErrorKind::dimension, "inner check needs a square system");
    double worst = 0.0;
    const ComplexMatrix eye = ComplexMatrix::Identity(m.inputs(), m.inputs());
    for (const Complex& z : unit_circle_grid(tolerances().circle_points)) {
        ComplexMatrix v = m.eval(z);
        worst = std::max(worst, (v.adjoint() * v - eye).cwiseAbs().maxCoeff());
    }
    return worst;
}

double h2_norm_sq(const StateSpaceModel& g) {
    require(g.is_stable(), ErrorKind::domain, "h2_norm_sq: system is not stable");
    if (g.states() == 0) return g.d.squaredNorm();
    Matrix xo = solve_discrete_lyapunov(g.a, Matrix(g.c.transpose() * g.c), LyapunovForm::adjoint);
    return (g.d.transpose() * g.d + g.b.transpose() * xo * g.b).trace();
}

double h2_norm_sq(const TransferMatrix& g) { return h2_norm_sq(g.ss()); }

Vector h2_norm_sq_rows(const StateSpaceModel& g) {
    require(g.is_stable(), ErrorKind::domain, "h2_norm_sq_rows: system is not stable");
    if (g.states() == 0) return (g.d * g.d.transpose()).diagonal();
    Matrix xc = solve_discrete_lyapunov(g.a, Matrix(g.b * g.b.transpose()), LyapunovForm::forward);
    return (g.d * g.d.transpose() + g.c * xc * g.c.transpose()).diagonal();
}

// ---------------------------------------------------------------------------
// Coprime factorization
// ---------------------------------------------------------------------------

namespace {

void check_pbh(const Matrix& a, const Matrix& bc, bool input_side, const char* what) {
    const Eigen::Index n = a.rows();
    const double scale = 1.0 + a.cwiseAbs().maxCoeff();
    for (const Complex& ev : eigenvalues(a)) {
        if (std::abs(ev) < 1.0 - 1e-9) continue;
        ComplexMatrix pencil;
        if (input_side) {
            pencil.resize(n, n + bc.cols());
            pencil << ComplexMatrix(ev * ComplexMatrix::Identity(n, n) - a.cast<Complex>()),
                bc.cast<Complex>();
        } else {
            pencil.resize(n + bc.rows(), n);
            pencil << ComplexMatrix(ev * ComplexMatrix::Identity(n, n) - a.cast<Complex>()),
                bc.cast<Complex>();
        }
        Eigen::JacobiSVD<ComplexMatrix> svd(pencil);
        if (svd.singularValues().minCoeff() <= 1e-8 * scale) {
            std::ostringstream os;
            os << what << " fails at eigenvalue " << ev;
            fail(ErrorKind::structural, os.str());
        }
    }
}

}  // namespace

CoprimeQuadruple coprime_factorize(const StateSpaceModel& gh) {
    const Matrix& a = gh.a;
    const Matrix& b = gh.b;
    const Matrix& c = gh.c;
    const Matrix& d = gh.d;
    const Eigen::Index n = a.rows();
    check_pbh(a, b, true, "stabilizability");
    check_pbh(a, c, false, "detectability");

    // Unit-weight LQR pair; deterministic and well conditioned at this scale.
    Matrix f = stabilizing_state_feedback(a, b, Matrix::Identity(n, n),
                                          Matrix::Identity(b.cols(), b.cols()));
    Matrix lt = stabilizing_state_feedback(a.transpose(), c.transpose(), Matrix::Identity(n, n),
                                           Matrix::Identity(c.rows(), c.rows()));
    Matrix l = lt.transpose();

    Matrix af = a + b * f;
    Matrix al = a + l * c;
    Matrix cdf = c + d * f;
    Matrix bld = b + l * d;
    const int m = gh.inputs();
    const int p = gh.outputs();
    Matrix eye_m = Matrix::Identity(m, m);
    Matrix eye_p = Matrix::Identity(p, p);

    CoprimeQuadruple q;
    q.state_feedback = f;
    q.observer_gain = l;
    q.m = TransferMatrix(StateSpaceModel{af, b, f, eye_m});
    q.n = TransferMatrix(StateSpaceModel{af, b, cdf, d});
    q.m_tilde = TransferMatrix(StateSpaceModel{al, l, c, eye_p});
    q.n_tilde = TransferMatrix(StateSpaceModel{al, bld, c, d});
    q.u = TransferMatrix(StateSpaceModel{af, l, f, Matrix::Zero(m, p)});
    q.v = TransferMatrix(StateSpaceModel{af, l, Matrix(-cdf), eye_p});
    q.u_tilde = TransferMatrix(StateSpaceModel{al, l, f, Matrix::Zero(m, p)});
    q.v_tilde = TransferMatrix(StateSpaceModel{al, Matrix(-bld), f, eye_m});
    return q;
}

// ---------------------------------------------------------------------------
// Inner-outer machinery
// ---------------------------------------------------------------------------

InnerOuter inner_outer_factorize(const TransferMatrix& m) {
    StateSpaceModel sys = minimal_realization(m.ss());
    require(sys.inputs() == sys.outputs(), ErrorKind::dimension,
            "inner-outer factorization needs a square system");
    require(sys.is_stable(), ErrorKind::domain, "inner-outer factorization needs a stable system");

    // Same Riccati machinery as the scaled-inner construction with unit
    // weight, but here the solution may be only positive semidefinite (it is
    // zero exactly when the input is already outer).
    Matrix x = solve_dare_standard(sys.a, sys.b, Matrix(sys.c.transpose() * sys.c),
                                   Matrix(sys.d.transpose() * sys.d),
                                   Matrix(sys.c.transpose() * sys.d));
    Matrix wr = sys.d.transpose() * sys.d + sys.b.transpose() * x * sys.b;
    require(min_eig_sym(wr) > 1e-12 * (1.0 + wr.cwiseAbs().maxCoeff()), ErrorKind::structural,
            "inner-outer factorization failed: normal-rank defect on the unit circle");
    Matrix f = -wr.fullPivLu().solve(sys.b.transpose() * x * sys.a + sys.d.transpose() * sys.c);
    Matrix wh = spd_sqrt(wr);
    Matrix whi = wh.fullPivLu().inverse();

    StateSpaceModel inner_full{Matrix(sys.a + sys.b * f), Matrix(sys.b * whi),
                               Matrix(sys.c + sys.d * f), Matrix(sys.d * whi)};
    const double rho_cl = inner_full.states() > 0 ? spectral_radius(inner_full.a) : 0.0;
    require(rho_cl < 1.0 - tolerances().unit_circle, ErrorKind::structural,
            "inner-outer factorization failed: zero on or near the unit circle");
    StateSpaceModel inner = minimal_realization(inner_full);
    StateSpaceModel outer{sys.a, sys.b, Matrix(-wh * f), wh};

    require(inner_identity_defect(inner) <= tolerances().inner_identity, ErrorKind::convergence,
            "inner factor fails the all-pass identity");
    require(freq_response_distance(series(inner, outer), sys) <= tolerances().freq_match,
            ErrorKind::convergence, "inner * outer does not reproduce the input");
    return {std::move(inner), TransferMatrix(std::move(outer))};
}

namespace {

struct GammaInnerParts {
    StateSpaceModel gin;
    StateSpaceModel outer_part;
};

GammaInnerParts gamma_inner_build(const StateSpaceModel& m_in, const Matrix& gamma) {
    require(gamma.rows() == gamma.cols() && gamma.rows() == m_in.outputs(), ErrorKind::dimension,
            "gamma must be square and match the channel count");
    require(gamma.isDiagonal(1e-14) && gamma.diagonal().minCoeff() > 0.0, ErrorKind::domain,
            "gamma must be diagonal positive definite");
    require(inner_identity_defect(m_in) <= 1e-6, ErrorKind::structural,
            "gamma_inner requires an inner model");

    Matrix x = solve_dare(m_in.a, m_in.b, m_in.c, m_in.d, gamma);
    Matrix wr = m_in.d.transpose() * gamma * m_in.d + m_in.b.transpose() * x * m_in.b;
    Matrix f = -wr.fullPivLu().solve(m_in.b.transpose() * x * m_in.a +
                                     m_in.d.transpose() * gamma * m_in.c);
    Matrix wh = spd_sqrt(wr);
    Matrix whi = wh.fullPivLu().inverse();
    Matrix gh = spd_sqrt(gamma);

    GammaInnerParts parts;
    parts.gin = StateSpaceModel{Matrix(m_in.a + m_in.b * f), Matrix(m_in.b * whi),
                                Matrix(gh * (m_in.c + m_in.d * f)), Matrix(gh * m_in.d * whi)};
    parts.outer_part = StateSpaceModel{m_in.a, m_in.b, Matrix(-wh * f), wh};
    return parts;
}

}  // namespace

StateSpaceModel gamma_inner(const StateSpaceModel& m_in, const Matrix& gamma) {
    GammaInnerParts parts = gamma_inner_build(m_in, gamma);
    require(inner_identity_defect(parts.gin) <= tolerances().inner_identity, ErrorKind::convergence,
            "gamma-scaled inner fails the all-pass identity");
    return parts.gin;
}

StateSpaceModel gamma_inner_outer_part(const StateSpaceModel& m_in, const Matrix& gamma) {
    return gamma_inner_build(m_in, gamma).outer_part;
}

StateSpaceModel gamma_inner_inverse(const StateSpaceModel& m_gin) {
    StateSpaceModel inv = inverse(m_gin);
    if (inv.states() > 0) {
        for (const Complex& ev : eigenvalues(inv.a))
            require(std::abs(ev) > 1.0, ErrorKind::structural,
                    "inverse of the inner factor must be anti-stable");
    }
    return inv;
}

double projection_norm_sq(const StateSpaceModel& m_gin_inv, int column, int tau,
                          const TransferMatrix& g_hat) {
    require(tau >= 1, ErrorKind::domain, "projection_norm_sq: tau must be >= 1");
    require(column >= 0 && column < m_gin_inv.inputs(), ErrorKind::dimension,
            "projection_norm_sq: column out of range");
    require(g_hat.outputs() == 1 && g_hat.inputs() == 1, ErrorKind::dimension,
            "projection_norm_sq: g_hat must be scalar");
    require(g_hat.is_stable(), ErrorKind::domain, "projection_norm_sq: g_hat must be stable");
    if (m_gin_inv.states() == 0) return 0.0;

    const Matrix& ah = m_gin_inv.a;
    const Matrix& bh = m_gin_inv.b;
    const Matrix& ch = m_gin_inv.c;
    // X = Ah' X Ah - Ch' Ch, solved in the stable direction.
    Matrix x = solve_discrete_lyapunov(ah, Matrix(-ch.transpose() * ch), LyapunovForm::adjoint);

    RationalFn g = g_hat.has_grid() ? g_hat.grid()[0][0] : to_rational(g_hat.ss());
    Matrix gh_at_a = g.is_zero() ? Matrix::Zero(ah.rows(), ah.cols())
                                 : eval_rational_at_matrix(g.num, g.den, ah);
    Matrix apow = Matrix::Identity(ah.rows(), ah.cols());
    for (int k = 1; k < tau; ++k) apow = apow * ah;
    Vector v = apow * gh_at_a * bh.col(column);
    return v.dot(x * v);
}

StateSpaceModel stable_projection_of_product(const StateSpaceModel& anti,
                                             const StateSpaceModel& stab) {
    require(anti.inputs() == stab.outputs(), ErrorKind::dimension,
            "stable_projection_of_product: dimension mismatch");
    const Eigen::Index nu = anti.states();
    const Eigen::Index ns = stab.states();
    if (nu == 0) return series(anti, stab);

    Matrix e = anti.b * stab.c;
    // Sylvester Aa Z - Z As = E.
    Matrix sylv = Matrix::Zero(nu * ns, nu * ns);
    // vec(Aa Z) = (I (x) Aa) vec Z ; vec(Z As) = (As' (x) I) vec Z.
    for (Eigen::Index i = 0; i < ns; ++i)
        sylv.block(i * nu, i * nu, nu, nu) = anti.a;
    for (Eigen::Index i = 0; i < ns; ++i)
        for (Eigen::Index j = 0; j < ns; ++j)
            sylv.block(i * nu, j * nu, nu, nu) -= stab.a(j, i) * Matrix::Identity(nu, nu);
    Vector rhs = Eigen::Map<const Vector>(e.data(), nu * ns);
    Vector zv = sylv.fullPivLu().solve(rhs);
    Matrix z = Eigen::Map<const Matrix>(zv.data(), nu, ns);

    Matrix ai = anti.a.fullPivLu().inverse();
    Matrix dnew = anti.d * stab.d - anti.c * ai * (z * stab.b + anti.b * stab.d);
    if (ns == 0) return StateSpaceModel::gain(dnew);
    Matrix cnew = anti.d * stab.c - anti.c * z;
    return {stab.a, stab.b, cnew, dnew};
}

RationalFn to_rational(const StateSpaceModel& scalar_sys) {
    require(scalar_sys.inputs() == 1 && scalar_sys.outputs() == 1, ErrorKind::dimension,
            "to_rational: system must be scalar");
    return entry_to_rational(scalar_sys, 0, 0);
}

}  // namespace meansq
