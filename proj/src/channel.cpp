#include "meansq/channel.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <sstream>

#include "meansq/errors.hpp"
#include "meansq/tolerances.hpp"

namespace meansq {

DelayChannelSpec DelayChannelSpec::perfect() { return {0, {1.0}, {1.0}}; }

DelayChannelSpec DelayChannelSpec::dropout(double loss_rate) {
    return {0, {1.0 - loss_rate}, {1.0}};
}

DelayChannelSpec DelayChannelSpec::one_step_delay(double p_delay, double alpha) {
    return {1, {1.0 - p_delay, p_delay}, {1.0, alpha}};
}

void DelayChannelSpec::validate() const {
    if (max_delay < 0) fail(ErrorKind::domain, "channel: max_delay must be >= 0");
    const auto expected = static_cast<std::size_t>(max_delay + 1);
    if (pmf.size() != expected || weights.size() != expected)
        fail(ErrorKind::dimension, "channel: pmf and weights must have max_delay+1 entries");
    double total = 0.0;
    for (double p : pmf) {
        if (p < 0.0 || p > 1.0) fail(ErrorKind::domain, "channel: pmf entry outside [0,1]");
        total += p;
    }
    if (total > 1.0 + 1e-12) fail(ErrorKind::domain, "channel: pmf mass exceeds one");
    for (double a : weights)
        if (a < 0.0) fail(ErrorKind::domain, "channel: weights must be nonnegative");
}

double DelayChannelSpec::drop_probability() const {
    double total = 0.0;
    for (double p : pmf) total += p;
    return std::max(0.0, 1.0 - total);
}

LaurentPoly ChannelStatistics::nominal() const {
    return LaurentPoly::from_zinv(std::vector<double>(mu.data(), mu.data() + mu.size()));
}

double ChannelStatistics::r0() const { return esd.coeff(0); }

RationalFn ChannelStatistics::w_rational() const {
    if (is_null()) return RationalFn{LaurentPoly(), LaurentPoly::constant(1.0)};
    return RationalFn::from_zinv_ratio(phi, nominal());
}

SpectralFactor spectral_factor(const LaurentPoly& esd) {
    if (esd.is_zero()) return {LaurentPoly(), false};
    const Tolerances& tol = tolerances();
    const double scale = std::max(1.0, esd.max_abs_coeff());

    if (coeff_distance(esd, esd.adjoint()) > 1e-12 * scale)
        fail(ErrorKind::structural, "spectral_factor: spectrum is not symmetric");
    for (int k = 0; k < 512; ++k) {
        const double theta = 2.0 * M_PI * k / 512;
        const double v = esd.eval(Complex{std::cos(theta), std::sin(theta)}).real();
        if (v < -tol.esd_negative * scale) {
            std::ostringstream os;
            os << "spectral_factor: spectrum negative on the unit circle (value " << v
               << " at angle " << theta << ")";
            fail(ErrorKind::structural, os.str());
        }
    }

    const int chi = esd.hi();
    // z^chi * S(z) is an ordinary polynomial whose roots pair as (rho, 1/rho).
    std::vector<double> coeffs(static_cast<std::size_t>(2 * chi + 1));
    for (int k = 0; k <= 2 * chi; ++k) coeffs[static_cast<std::size_t>(k)] = esd.coeff(k - chi);
    std::vector<Complex> roots = poly_roots(coeffs);
    std::sort(roots.begin(), roots.end(),
              [](const Complex& a, const Complex& b) { return std::abs(a) < std::abs(b); });
    const std::size_t keep = roots.size() / 2;

    bool boundary = false;
    std::vector<Complex> inside(roots.begin(), roots.begin() + static_cast<long>(keep));
    for (const Complex& r : inside) {
        if (std::abs(r) >= 1.0 - tol.unit_circle) boundary = true;
        if (std::abs(r) > 1.0 + tol.unit_circle)
            fail(ErrorKind::structural, "spectral_factor: root pairing failed (spectrum invalid)");
    }

    // phi_hat(z) = prod (1 - rho z^{-1}); complex conjugate pairs combine to
    // real coefficients.
    std::vector<Complex> c{1.0};
    for (const Complex& r : inside) {
        std::vector<Complex> next(c.size() + 1, Complex{0.0, 0.0});
        for (std::size_t i = 0; i < c.size(); ++i) {
            next[i] += c[i];
            next[i + 1] -= r * c[i];
        }
        c = std::move(next);
    }
    std::vector<double> zinv(c.size());
    for (std::size_t i = 0; i < c.size(); ++i) zinv[i] = c[i].real();
    LaurentPoly phi_hat = LaurentPoly::from_zinv(zinv);

    LaurentPoly ghat = phi_hat * phi_hat.adjoint();
    const double s2 = esd.coeff(0) / ghat.coeff(0);
    if (!(s2 > 0.0)) fail(ErrorKind::structural, "spectral_factor: scaling failed");
    LaurentPoly phi = std::sqrt(s2) * phi_hat;

    if (coeff_distance(phi * phi.adjoint(), esd) > 1e-10 * scale)
        fail(ErrorKind::convergence, "spectral_factor: reconstruction residual too large");
    return {phi, boundary};
}

ChannelStatistics statistics_from_spec(const DelayChannelSpec& spec) {
    spec.validate();
    const int n = spec.max_delay + 1;

    ChannelStatistics st;
    st.mu = Vector(n);
    for (int j = 0; j < n; ++j)
        st.mu(j) = spec.weights[static_cast<std::size_t>(j)] * spec.pmf[static_cast<std::size_t>(j)];

    st.r = Matrix(n, n);
    for (int j1 = 0; j1 < n; ++j1)
        for (int j2 = 0; j2 < n; ++j2) {
            const double p1 = spec.pmf[static_cast<std::size_t>(j1)];
            const double p2 = spec.pmf[static_cast<std::size_t>(j2)];
            const double joint = (j1 == j2) ? p1 : 0.0;
            st.r(j1, j2) = spec.weights[static_cast<std::size_t>(j1)] *
                           spec.weights[static_cast<std::size_t>(j2)] * (joint - p1 * p2);
        }

    // r(lambda) = sum_j r_{j, j+lambda}, symmetric in lambda.
    std::vector<double> two_sided(static_cast<std::size_t>(2 * spec.max_delay + 1), 0.0);
    for (int lam = 0; lam <= spec.max_delay; ++lam) {
        double v = 0.0;
        for (int j = 0; j + lam < n; ++j) v += st.r(j, j + lam);
        two_sided[static_cast<std::size_t>(spec.max_delay - lam)] = v;  // z^{+lam}
        two_sided[static_cast<std::size_t>(spec.max_delay + lam)] = v;  // z^{-lam}
    }
    st.esd = LaurentPoly(-spec.max_delay, two_sided);

    SpectralFactor sf = spectral_factor(st.esd);
    st.phi = sf.phi;
    st.phi_boundary_root = sf.boundary_root;

    // The nominal H must be invertible in RH-infinity for any W-based
    // analysis: biproper (mu_0 != 0) and minimum phase.
    LaurentPoly h = st.nominal();
    if (h.is_zero()) fail(ErrorKind::structural, "channel: nominal response is identically zero");
    if (std::abs(st.mu(0)) <= 0.0)
        fail(ErrorKind::structural,
             "channel: W not invertible, nominal response has no direct term (root at infinity)");
    std::vector<double> hz(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j) hz[static_cast<std::size_t>(j)] = st.mu(n - 1 - j);
    for (const Complex& root : poly_roots(hz)) {
        if (std::abs(root) >= 1.0 - tolerances().unit_circle) {
            std::ostringstream os;
            os << "channel: W not invertible, nominal response has a zero at " << root
               << " (on or outside the unit circle)";
            fail(ErrorKind::structural, os.str());
        }
    }

    st.w = TransferMatrix::scalar(st.w_rational());
    st.w_invertible = !st.phi.is_zero() && !st.phi_boundary_root;
    return st;
}

}  // namespace meansq
