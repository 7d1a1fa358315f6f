#include "meansq/numkit.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "meansq/errors.hpp"
#include "meansq/tolerances.hpp"

namespace meansq {

Tolerances& tolerances() {
    static Tolerances t;
    return t;
}

namespace {

void require_square(const Matrix& m, const char* who) {
    if (m.rows() != m.cols()) {
        std::ostringstream os;
        os << who << ": matrix must be square, got " << m.rows() << "x" << m.cols();
        fail(ErrorKind::dimension, os.str());
    }
}

Matrix kron(const Matrix& a, const Matrix& b) {
    Matrix k(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            k.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return k;
}

Matrix lyapunov_kron(const Matrix& a, const Matrix& q) {
    const Eigen::Index n = a.rows();
    Matrix lhs = Matrix::Identity(n * n, n * n) - kron(a, a);
    Eigen::FullPivLU<Matrix> lu(lhs);
    lu.setThreshold(1e-13);
    if (!lu.isInvertible())
        fail(ErrorKind::singular,
             "discrete Lyapunov equation is singular (eigenvalue product lambda_i*lambda_j = 1)");
    Vector rhs = Eigen::Map<const Vector>(q.data(), n * n);
    Vector x = lu.solve(rhs);
    return Eigen::Map<const Matrix>(x.data(), n, n);
}

Matrix lyapunov_smith(const Matrix& a, const Matrix& q) {
    // X = sum_k A^k Q A^{Tk}, accelerated by squaring.
    Matrix x = q;
    Matrix ak = a;
    for (int it = 0; it < tolerances().lyap_max_iter; ++it) {
        Matrix update = ak * x * ak.transpose();
        x += update;
        if (update.cwiseAbs().maxCoeff() <= 1e-16 * (1.0 + x.cwiseAbs().maxCoeff())) return x;
        ak = ak * ak;
    }
    fail(ErrorKind::convergence, "Smith iteration for the Lyapunov equation did not converge");
}

double forward_residual(const Matrix& a, const Matrix& q, const Matrix& x) {
    return (x - a * x * a.transpose() - q).cwiseAbs().maxCoeff();
}

}  // namespace

std::vector<Complex> eigenvalues(const Matrix& m) {
    require_square(m, "eigenvalues");
    if (m.rows() > 64) fail(ErrorKind::dimension, "eigenvalues: dimension capped at 64");
    if (m.rows() == 0) return {};
    Eigen::EigenSolver<Matrix> es(m, /*computeEigenvectors=*/false);
    if (es.info() != Eigen::Success)
        fail(ErrorKind::convergence, "QR iteration did not converge");
    std::vector<Complex> out(static_cast<std::size_t>(m.rows()));
    for (Eigen::Index i = 0; i < m.rows(); ++i) out[static_cast<std::size_t>(i)] = es.eigenvalues()(i);
    return out;
}

double spectral_radius(const Matrix& m) {
    double r = 0.0;
    for (const auto& ev : eigenvalues(m)) r = std::max(r, std::abs(ev));
    return r;
}

std::vector<Complex> poly_roots(const std::vector<double>& ascending) {
    std::size_t deg = ascending.size();
    while (deg > 0 && ascending[deg - 1] == 0.0) --deg;
    if (deg <= 1) return {};
    const std::size_t n = deg - 1;
    Matrix companion = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    const double lead = ascending[deg - 1];
    for (std::size_t i = 0; i < n; ++i)
        companion(0, static_cast<Eigen::Index>(i)) = -ascending[deg - 2 - i] / lead;
    for (std::size_t i = 1; i < n; ++i)
        companion(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i - 1)) = 1.0;
    return eigenvalues(companion);
}

Matrix solve_discrete_lyapunov(const Matrix& a, const Matrix& q, LyapunovForm form) {
    require_square(a, "solve_discrete_lyapunov");
    require_square(q, "solve_discrete_lyapunov");
    if (a.rows() != q.rows())
        fail(ErrorKind::dimension, "solve_discrete_lyapunov: A and Q dimensions differ");
    if (a.rows() == 0) return Matrix(0, 0);
    if (form == LyapunovForm::adjoint)
        return solve_discrete_lyapunov(a.transpose(), q, LyapunovForm::forward);

    const Tolerances& tol = tolerances();
    const Eigen::Index n = a.rows();
    Matrix x;
    if (n <= 16) {
        x = lyapunov_kron(a, q);
    } else {
        const double rho = spectral_radius(a);
        if (rho < 1.0 - 1e-9) {
            x = lyapunov_smith(a, q);
        } else if (rho > 1.0 + 1e-9 && std::abs(eigenvalues(a).back()) > 0.0 &&
                   spectral_radius(a.inverse()) < 1.0 - 1e-9) {
            // X = A X A^T + Q with all eigenvalues outside the circle:
            // rewrite as X = A^{-1} X A^{-T} - A^{-1} Q A^{-T}.
            Matrix ai = a.inverse();
            x = lyapunov_smith(ai, Matrix(-ai * q * ai.transpose()));
        } else {
            x = lyapunov_kron(a, q);
        }
    }
    if (is_symmetric(q, tol.symmetry)) x = symmetrized(x);
    const double res = forward_residual(a, q, x);
    if (res > tol.lyap_residual * (1.0 + x.cwiseAbs().maxCoeff()))
        fail(ErrorKind::singular, "Lyapunov solve residual too large; equation near-singular");
    return x;
}

namespace {

struct DareIterationResult {
    Matrix x;
    bool converged = false;
};

Matrix dare_step_or_throw(const Matrix& a, const Matrix& b, const Matrix& q, const Matrix& r,
                          const Matrix& s, const Matrix& x) {
    Matrix g = r + b.transpose() * x * b;
    Eigen::FullPivLU<Matrix> lu(g);
    lu.setThreshold(1e-13);
    if (!lu.isInvertible())
        fail(ErrorKind::singular, "DARE iterate has singular D'GD + B'XB term");
    Matrix k = lu.solve(b.transpose() * x * a + s.transpose());
    return symmetrized(a.transpose() * x * a + q - (a.transpose() * x * b + s) * k);
}

DareIterationResult dare_fixed_point(const Matrix& a, const Matrix& b, const Matrix& q,
                                     const Matrix& r, const Matrix& s, double damping) {
    const Tolerances& tol = tolerances();
    Matrix x = symmetrized(q);
    for (int it = 0; it < tol.dare_max_iter; ++it) {
        Matrix xn = dare_step_or_throw(a, b, q, r, s, x);
        if (damping != 1.0) xn = damping * xn + (1.0 - damping) * x;
        const double step = (xn - x).cwiseAbs().maxCoeff();
        x = xn;
        if (step <= tol.dare_step * (1.0 + x.cwiseAbs().maxCoeff())) return {x, true};
    }
    return {Matrix(), false};
}

DareIterationResult dare_doubling(const Matrix& a0, const Matrix& b, const Matrix& q0,
                                  const Matrix& r, const Matrix& s) {
    // Eliminate the cross term, then run the structure-preserving doubling
    // iteration on the standard form.
    Eigen::FullPivLU<Matrix> rlu(r);
    rlu.setThreshold(1e-13);
    if (!rlu.isInvertible()) return {Matrix(), false};
    Matrix a = a0 - b * rlu.solve(s.transpose());
    Matrix q = symmetrized(q0 - s * rlu.solve(s.transpose()));
    Matrix g = b * rlu.solve(b.transpose());
    Matrix h = q;
    Matrix ak = a;
    const Eigen::Index n = a.rows();
    for (int it = 0; it < 200; ++it) {
        Matrix w = Matrix::Identity(n, n) + g * h;
        Eigen::FullPivLU<Matrix> wlu(w);
        wlu.setThreshold(1e-13);
        if (!wlu.isInvertible()) return {Matrix(), false};
        Matrix v1 = wlu.solve(ak);
        Matrix v2 = wlu.solve(g);  // (I + GH)^{-1} G
        Matrix hn = symmetrized(h + ak.transpose() * h * v1);
        Matrix gn = symmetrized(g + ak * v2 * ak.transpose());
        Matrix an = ak * v1;
        const double step = (hn - h).cwiseAbs().maxCoeff();
        ak = an;
        g = gn;
        h = hn;
        if (step <= 1e-14 * (1.0 + h.cwiseAbs().maxCoeff())) return {h, true};
    }
    return {Matrix(), false};
}

double dare_residual(const Matrix& a, const Matrix& b, const Matrix& q, const Matrix& r,
                     const Matrix& s, const Matrix& x) {
    Matrix g = r + b.transpose() * x * b;
    Matrix k = g.fullPivLu().solve(b.transpose() * x * a + s.transpose());
    Matrix res = a.transpose() * x * a + q - (a.transpose() * x * b + s) * k - x;
    return res.cwiseAbs().maxCoeff();
}

}  // namespace

Matrix solve_dare_standard(const Matrix& a, const Matrix& b, const Matrix& q, const Matrix& r,
                           const Matrix& s) {
    require_square(a, "solve_dare");
    if (b.rows() != a.rows() || s.rows() != a.rows() || s.cols() != b.cols() ||
        r.rows() != b.cols() || r.cols() != b.cols() || q.rows() != a.rows() || q.cols() != a.rows())
        fail(ErrorKind::dimension, "solve_dare: non-conformable operands");
    if (a.rows() == 0) return Matrix(0, 0);

    DareIterationResult res = dare_fixed_point(a, b, q, r, s, 1.0);
    if (!res.converged) res = dare_fixed_point(a, b, q, r, s, 0.5);
    if (!res.converged) res = dare_doubling(a, b, q, r, s);
    if (!res.converged)
        fail(ErrorKind::convergence, "DARE iteration did not converge within the iteration budget");

    const double resid = dare_residual(a, b, q, r, s, res.x);
    if (resid > tolerances().dare_residual * (1.0 + res.x.cwiseAbs().maxCoeff()))
        fail(ErrorKind::convergence, "DARE residual exceeds tolerance after convergence");
    return res.x;
}

Matrix solve_dare(const Matrix& a_in, const Matrix& b_in, const Matrix& c_in, const Matrix& d_in,
                  const Matrix& gamma) {
    if (gamma.rows() != gamma.cols() || gamma.rows() != d_in.rows())
        fail(ErrorKind::dimension, "solve_dare: Gamma must be square and match the output count");
    Matrix q = c_in.transpose() * gamma * c_in;
    Matrix r = d_in.transpose() * gamma * d_in;
    Matrix s = c_in.transpose() * gamma * d_in;
    Matrix x = solve_dare_standard(a_in, b_in, q, r, s);
    if (x.rows() > 0 && min_eig_sym(x) <= 0.0)
        fail(ErrorKind::structural, "DARE solution is not positive definite");
    return x;
}

Matrix stabilizing_state_feedback(const Matrix& a, const Matrix& b, const Matrix& q,
                                  const Matrix& r) {
    Matrix x = solve_dare_standard(a, b, q, r, Matrix::Zero(a.rows(), b.cols()));
    Matrix g = r + b.transpose() * x * b;
    return -g.fullPivLu().solve(b.transpose() * x * a);
}

double spectral_radius_nonneg(const Matrix& m) {
    require_square(m, "spectral_radius_nonneg");
    if (m.rows() == 0) return 0.0;
    if ((m.array() < 0.0).any())
        fail(ErrorKind::domain, "spectral_radius_nonneg: matrix has a negative entry");

    const Eigen::Index n = m.rows();
    const Tolerances& tol = tolerances();
    // Shift keeps the Perron root dominant and the iterate positive.
    Matrix b = m + Matrix::Identity(n, n);
    Vector v = Vector::Ones(n);
    for (int it = 0; it < tol.power_max_iter; ++it) {
        Vector w = b * v;
        double lo = std::numeric_limits<double>::infinity();
        double hi = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            const double ratio = w(i) / v(i);
            lo = std::min(lo, ratio);
            hi = std::max(hi, ratio);
        }
        if (hi - lo <= tol.spectral_radius * hi) return 0.5 * (hi + lo) - 1.0;
        v = w / w.cwiseAbs().maxCoeff();
    }
    // Collatz bounds stall on reducible patterns; fall back to normalized
    // squaring of the shifted matrix (Gelfand limit).
    double log_scale = std::log(b.cwiseAbs().rowwise().sum().maxCoeff());
    Matrix s = b / std::exp(log_scale);
    double k = 1.0;
    for (int it = 0; it < 60; ++it) {
        Matrix s2 = s * s;
        const double nrm = s2.cwiseAbs().rowwise().sum().maxCoeff();
        if (nrm == 0.0) return 0.0;  // nilpotent shift cannot happen, but be safe
        log_scale = 2.0 * log_scale + std::log(nrm);
        k *= 2.0;
        s = s2 / nrm;
    }
    return std::exp(log_scale / k) - 1.0;
}

Matrix eval_poly_at_matrix(const LaurentPoly& p, const Matrix& m) {
    require_square(m, "eval_poly_at_matrix");
    const Eigen::Index n = m.rows();
    if (p.is_zero()) return Matrix::Zero(n, n);

    Matrix result = Matrix::Zero(n, n);
    // Nonnegative powers by Horner in M.
    if (p.hi() >= 0) {
        Matrix acc = Matrix::Zero(n, n);
        for (int k = p.hi(); k >= 0; --k) {
            acc = acc * m;
            acc.diagonal().array() += p.coeff(k);
        }
        result += acc;
    }
    // Negative powers by Horner in M^{-1}.
    if (p.lo() < 0) {
        Eigen::FullPivLU<Matrix> lu(m);
        lu.setThreshold(1e-13);
        if (!lu.isInvertible())
            fail(ErrorKind::singular, "eval_poly_at_matrix: matrix argument is singular");
        Matrix mi = lu.inverse();
        Matrix acc = Matrix::Zero(n, n);
        for (int k = p.lo(); k <= -1; ++k) {
            acc.diagonal().array() += p.coeff(k);
            acc = acc * mi;
        }
        result += acc;
    }
    return result;
}

Matrix eval_rational_at_matrix(const LaurentPoly& num, const LaurentPoly& den, const Matrix& m) {
    Matrix nm = eval_poly_at_matrix(num, m);
    Matrix dm = eval_poly_at_matrix(den, m);
    Eigen::FullPivLU<Matrix> lu(dm);
    lu.setThreshold(1e-12);
    if (!lu.isInvertible())
        fail(ErrorKind::singular,
             "eval_rational_at_matrix: denominator singular at the matrix argument "
             "(pole-uncertainty collision)");
    // num(M) and den(M)^{-1} commute, so the left solve equals num(M) den(M)^{-1}.
    return lu.solve(nm);
}

bool is_symmetric(const Matrix& m, double rel_tol) {
    if (m.rows() != m.cols()) return false;
    if (m.rows() == 0) return true;
    const double asym = (m - m.transpose()).cwiseAbs().maxCoeff();
    return asym <= rel_tol * (1.0 + m.cwiseAbs().maxCoeff());
}

Matrix symmetrized(const Matrix& m) { return 0.5 * (m + m.transpose()); }

Matrix spd_sqrt(const Matrix& m) {
    require_square(m, "spd_sqrt");
    if (m.rows() == 0) return m;
    Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrized(m));
    if (es.info() != Eigen::Success) fail(ErrorKind::convergence, "spd_sqrt: eigensolver failed");
    Vector d = es.eigenvalues();
    const double scale = std::max(1.0, d.cwiseAbs().maxCoeff());
    for (Eigen::Index i = 0; i < d.size(); ++i) {
        if (d(i) < -1e-10 * scale)
            fail(ErrorKind::domain, "spd_sqrt: matrix has a significantly negative eigenvalue");
        d(i) = std::sqrt(std::max(d(i), 0.0));
    }
    return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose();
}

double min_eig_sym(const Matrix& m) {
    if (m.rows() == 0) return 0.0;
    Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrized(m));
    return es.eigenvalues().minCoeff();
}

bool is_positive_definite(const Matrix& m, double tol) {
    if (m.rows() == 0) return true;
    return min_eig_sym(m) > tol;
}

}  // namespace meansq
