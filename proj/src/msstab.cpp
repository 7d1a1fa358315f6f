#include "meansq/msstab.hpp"

#include <cmath>

#include "meansq/errors.hpp"
#include "meansq/tolerances.hpp"

namespace meansq {

namespace {

StateSpaceModel fir_from_mean(const Vector& mu) {
    const int chi = static_cast<int>(mu.size()) - 1;
    Matrix a = Matrix::Zero(chi, chi);
    for (int i = 0; i + 1 < chi; ++i) a(i + 1, i) = 1.0;
    Matrix b = Matrix::Zero(chi, 1);
    if (chi > 0) b(0, 0) = 1.0;
    Matrix c(1, chi);
    for (int j = 1; j <= chi; ++j) c(0, j - 1) = mu(j);
    Matrix d(1, 1);
    d << mu(0);
    return {a, b, c, d};
}

}  // namespace

StateSpaceModel nominal_channel_model(const std::vector<ChannelStatistics>& channels) {
    StateSpaceModel h = fir_from_mean(channels.front().mu);
    for (std::size_t i = 1; i < channels.size(); ++i)
        h = block_diag(h, fir_from_mean(channels[i].mu));
    return h;
}

void LoopDescription::validate() const {
    if (channels.empty()) fail(ErrorKind::dimension, "loop: at least one channel required");
    const int m = static_cast<int>(channels.size());
    const StateSpaceModel& p = plant.ss();
    if (p.inputs() != m)
        fail(ErrorKind::dimension, "loop: channel count must equal the plant input count");
    if (p.d.cwiseAbs().maxCoeff() > 0.0)
        fail(ErrorKind::structural,
             "loop: plant must have relative degree at least one (no direct feedthrough)");
    const StateSpaceModel& k = controller.ss();
    if (k.outputs() != m || k.inputs() != p.outputs())
        fail(ErrorKind::dimension, "loop: controller dimensions do not close the loop");
    if (noise_variance.size() != m)
        fail(ErrorKind::dimension, "loop: noise variance must have one entry per channel");
    if (noise_variance.minCoeff() < 0.0)
        fail(ErrorKind::domain, "loop: noise variances must be nonnegative");
}

StateSpaceModel LoopDescription::nominal_h() const { return nominal_channel_model(channels); }

ClosedLoopTransfers build_complementary_sensitivity(const LoopDescription& loop) {
    loop.validate();
    const StateSpaceModel p = loop.plant.ss();
    const StateSpaceModel k = loop.controller.ss();
    const StateSpaceModel h = loop.nominal_h();
    const int np = p.states(), nh = h.states(), nk = k.states();
    const int m = p.inputs();

    // States [xp; xh; xk]; input w injected at the plant summing junction;
    // y = Cp xp (plant strictly proper keeps the loop well posed).
    Matrix acl = Matrix::Zero(np + nh + nk, np + nh + nk);
    Matrix ucoef_xp = k.d * p.c;  // u = Dk Cp xp + Ck xk
    acl.block(0, 0, np, np) = p.a - p.b * h.d * ucoef_xp;
    acl.block(0, np, np, nh) = -p.b * h.c;
    acl.block(0, np + nh, np, nk) = -p.b * h.d * k.c;
    acl.block(np, 0, nh, np) = h.b * ucoef_xp;
    acl.block(np, np, nh, nh) = h.a;
    acl.block(np, np + nh, nh, nk) = h.b * k.c;
    acl.block(np + nh, 0, nk, np) = k.b * p.c;
    acl.block(np + nh, np + nh, nk, nk) = k.a;

    Matrix bcl = Matrix::Zero(np + nh + nk, m);
    bcl.block(0, 0, np, m) = p.b;
    Matrix ccl = Matrix::Zero(m, np + nh + nk);
    ccl.block(0, 0, m, np) = ucoef_xp;
    ccl.block(0, np + nh, m, nk) = k.c;

    StateSpaceModel g{acl, bcl, ccl, Matrix::Zero(m, m)};
    ClosedLoopTransfers out;
    out.loop_state = g;
    out.g = TransferMatrix(minimal_realization(g));
    out.t = TransferMatrix(minimal_realization(series(g, h)));
    return out;
}

StabilityReport ms_stability_test(const LoopDescription& loop) {
    ClosedLoopTransfers cl = build_complementary_sensitivity(loop);
    StabilityReport report;
    report.nominal_stable = cl.loop_state.is_stable();
    if (!report.nominal_stable) return report;

    const int m = static_cast<int>(loop.channels.size());
    const StateSpaceModel t = cl.t.ss();
    const StateSpaceModel g = cl.g.ss();
    report.t_hat_w = Matrix::Zero(m, m);
    report.g_hat = Matrix::Zero(m, m);
    for (int j = 0; j < m; ++j) {
        StateSpaceModel tcol{t.a, t.b.col(j), t.c, t.d.col(j)};
        StateSpaceModel w = TransferMatrix::scalar(loop.channels[static_cast<std::size_t>(j)]
                                                       .w_rational())
                                .ss();
        Vector tw = h2_norm_sq_rows(minimal_realization(series(tcol, w)));
        StateSpaceModel gcol{g.a, g.b.col(j), g.c, g.d.col(j)};
        Vector gn = h2_norm_sq_rows(gcol);
        for (int i = 0; i < m; ++i) {
            report.t_hat_w(i, j) = std::max(0.0, tw(i));
            report.g_hat(i, j) = std::max(0.0, gn(i));
        }
    }

    report.rho = spectral_radius_nonneg(report.t_hat_w);
    report.ms_stable = report.rho < 1.0;
    if (!report.ms_stable) return report;

    // ||u||^2 = Ghat sigma^2 + GhatPhi ||u||^2 with GhatPhi = t_hat_w.
    Vector sigma2 = loop.noise_variance;
    Matrix lhs = Matrix::Identity(m, m) - report.t_hat_w;
    Eigen::FullPivLU<Matrix> lu(lhs);
    lu.setThreshold(1e-14);
    if (!lu.isInvertible())
        fail(ErrorKind::singular,
             "stationary power fixed point singular: spectral radius at the stability boundary");
    Vector powers = lu.solve(Vector(report.g_hat * sigma2));
    for (int i = 0; i < m; ++i) powers(i) = std::max(0.0, powers(i));
    report.powers = powers;
    return report;
}

}  // namespace meansq
