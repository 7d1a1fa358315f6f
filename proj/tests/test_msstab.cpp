#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "meansq/errors.hpp"
#include "meansq/msstab.hpp"
#include "meansq/synthesis.hpp"
#include "oracles.hpp"

using namespace meansq;

namespace {

StateSpaceModel scalar_ss(double a, double b, double c, double d) {
    Matrix ma(1, 1), mb(1, 1), mc(1, 1), md(1, 1);
    ma << a;
    mb << b;
    mc << c;
    md << d;
    return {ma, mb, mc, md};
}

// SISO plant 1/(z - lam) with a constant controller k.
LoopDescription siso_loop(double lam, double k, const ChannelStatistics& ch, double sigma2) {
    LoopDescription loop;
    loop.plant = TransferMatrix(scalar_ss(lam, 1.0, 1.0, 0.0));
    loop.controller = TransferMatrix(StateSpaceModel::gain(Matrix::Constant(1, 1, k)));
    loop.channels = {ch};
    loop.noise_variance = Vector::Constant(1, sigma2);
    return loop;
}

}  // namespace

TEST_CASE("complementary sensitivity: zero controller gives zero T") {
    ChannelStatistics ch = statistics_from_spec(DelayChannelSpec::dropout(0.3));
    LoopDescription loop = siso_loop(0.5, 0.0, ch, 1.0);
    ClosedLoopTransfers cl = build_complementary_sensitivity(loop);
    CHECK(freq_response_distance(cl.t, TransferMatrix::zero(1, 1)) < 1e-12);
}

TEST_CASE("complementary sensitivity: SISO hand algebra") {
    // P = 1/(z-lam), H = h0 (dropout mean), K = k: T = k h0 / (z - lam + k h0).
    const double lam = 1.5, k = 1.4;
    ChannelStatistics ch = statistics_from_spec(DelayChannelSpec::dropout(0.3));
    const double h0 = ch.mu(0);
    LoopDescription loop = siso_loop(lam, k, ch, 1.0);
    ClosedLoopTransfers cl = build_complementary_sensitivity(loop);
    for (const Complex& z : unit_circle_grid(16)) {
        const Complex expected = k * h0 / (z - lam + k * h0);
        CHECK(std::abs(cl.t.eval(z)(0, 0) - expected) < 1e-10);
        const Complex expected_g = k / (z - lam + k * h0);
        CHECK(std::abs(cl.g.eval(z)(0, 0) - expected_g) < 1e-10);
    }
}

TEST_CASE("ms_stability_test: perfect channels reduce to nominal stability") {
    ChannelStatistics ch = statistics_from_spec(DelayChannelSpec::perfect());
    LoopDescription loop = siso_loop(1.5, 1.4, ch, 1.0);
    StabilityReport rep = ms_stability_test(loop);
    CHECK(rep.nominal_stable);
    CHECK(rep.rho == doctest::Approx(0.0));
    CHECK(rep.ms_stable);
    REQUIRE(rep.powers.has_value());
    // ||u||^2 = ||G||^2 sigma^2 with G = k/(z - lam + k)
    StateSpaceModel g = scalar_ss(1.5 - 1.4, 1.0, 1.4, 0.0);
    CHECK((*rep.powers)(0) == doctest::Approx(h2_norm_sq(g)).epsilon(1e-9));
}

TEST_CASE("ms_stability_test: erasure threshold behaviour") {
    const double lam = 1.5;
    // T-optimal constant controller k = (lam^2-1)/(lam h0): the closed-loop
    // pole lands at 1/lam and ||T||^2 attains its infimum lam^2 - 1.
    for (double p : {0.3, 0.6}) {
        ChannelStatistics ch = statistics_from_spec(DelayChannelSpec::dropout(p));
        const double k = (lam * lam - 1.0) / (lam * ch.mu(0));
        LoopDescription loop = siso_loop(lam, k, ch, 1.0);
        StabilityReport rep = ms_stability_test(loop);
        CHECK(rep.nominal_stable);
        // optimal-T limit: rho = (lam^2-1) p/(1-p)
        const double expected = (lam * lam - 1.0) * p / (1.0 - p);
        CHECK(rep.rho == doctest::Approx(expected).epsilon(1e-9));
        CHECK(rep.ms_stable == (p < 1.0 / (lam * lam)));
    }
}

TEST_CASE("ms_stability_test: GhatPhi equals t_hat_w through the algebraic identity") {
    // entries ||G_{i1i2} Phi_{i2}||^2 must equal ||T_{i1i2} W_{i2}||^2
    ExampleFamily ex;
    ex.s1 = 0.2;
    ex.s2 = 0.7;
    auto channels = std::vector<ChannelStatistics>{
        statistics_from_spec(DelayChannelSpec::one_step_delay(0.4, 2.0 / 3.0)),
        statistics_from_spec(DelayChannelSpec::dropout(0.3))};
    StabilizabilityReport rep = optimize_gamma(PlantFamily{ex}, channels);
    TransferMatrix k = synthesize_controller(PlantFamily{ex}, channels, rep.gamma_star);

    LoopDescription loop;
    loop.plant = TransferMatrix(family_plant(PlantFamily{ex}));
    loop.controller = k;
    loop.channels = channels;
    loop.noise_variance = Vector::Ones(2);
    StabilityReport st = ms_stability_test(loop);
    REQUIRE(st.nominal_stable);

    ClosedLoopTransfers cl = build_complementary_sensitivity(loop);
    const StateSpaceModel g = cl.g.ss();
    for (int j = 0; j < 2; ++j) {
        StateSpaceModel phi =
            TransferMatrix::scalar(RationalFn::from_zinv_ratio(
                                       channels[static_cast<std::size_t>(j)].phi,
                                       LaurentPoly::constant(1.0)))
                .ss();
        StateSpaceModel gcol{g.a, g.b.col(j), g.c, g.d.col(j)};
        Vector gphi = h2_norm_sq_rows(minimal_realization(series(gcol, phi)));
        for (int i = 0; i < 2; ++i)
            CHECK(gphi(i) == doctest::Approx(st.t_hat_w(i, j)).epsilon(1e-9));
    }

    // spectral radius bound from diagonal scalings: rho <= ||G J G^{-1}||_inf
    for (int trial = 0; trial < 100; ++trial) {
        Vector d(2);
        d << 1.0, std::exp(oracles::uniform(-3.0, 3.0));
        Matrix scaled = d.asDiagonal() * st.t_hat_w * d.cwiseInverse().asDiagonal();
        const double bound = scaled.cwiseAbs().rowwise().sum().maxCoeff();
        CHECK(st.rho <= bound + 1e-12);
    }
}

TEST_CASE("ms_stability_test: powers solve the fixed point and respond monotonically") {
    ChannelStatistics ch = statistics_from_spec(DelayChannelSpec::dropout(0.3));
    LoopDescription loop = siso_loop(1.5, 1.5 / 0.7, ch, 1.0);
    StabilityReport rep = ms_stability_test(loop);
    REQUIRE(rep.powers.has_value());
    // fixed point residual
    Vector x = *rep.powers;
    Vector resid = x - rep.g_hat * loop.noise_variance - rep.t_hat_w * x;
    CHECK(resid.cwiseAbs().maxCoeff() < 1e-9 * (1.0 + x.cwiseAbs().maxCoeff()));

    LoopDescription louder = loop;
    louder.noise_variance = Vector::Constant(1, 2.0);
    StabilityReport rep2 = ms_stability_test(louder);
    REQUIRE(rep2.powers.has_value());
    CHECK((*rep2.powers)(0) >= (*rep.powers)(0));
}

TEST_CASE("ms_stability_test: nominally unstable loop reports without rho claims") {
    ChannelStatistics ch = statistics_from_spec(DelayChannelSpec::dropout(0.3));
    LoopDescription loop = siso_loop(1.5, 0.01, ch, 1.0);  // too weak to stabilize
    StabilityReport rep = ms_stability_test(loop);
    CHECK(!rep.nominal_stable);
    CHECK(!rep.ms_stable);
    CHECK(!rep.powers.has_value());
    CHECK(std::isnan(rep.rho));
}

TEST_CASE("ms_stability_test: channel permutation permutes the report") {
    ExampleFamily ex;
    ex.s1 = 0.2;
    ex.s2 = 0.7;
    auto c1 = statistics_from_spec(DelayChannelSpec::one_step_delay(0.4, 2.0 / 3.0));
    auto c2 = statistics_from_spec(DelayChannelSpec::dropout(0.3));
    auto channels = std::vector<ChannelStatistics>{c1, c2};
    StabilizabilityReport srep = optimize_gamma(PlantFamily{ex}, channels);
    TransferMatrix k = synthesize_controller(PlantFamily{ex}, channels, srep.gamma_star);

    StateSpaceModel p = family_plant(PlantFamily{ex});
    Matrix perm(2, 2);
    perm << 0, 1, 1, 0;
    LoopDescription loop;
    loop.plant = TransferMatrix(p);
    loop.controller = k;
    loop.channels = channels;
    loop.noise_variance = Vector::Ones(2);
    StabilityReport rep = ms_stability_test(loop);

    // permuted loop: P' = P Pi, K' = Pi' K, channels swapped
    LoopDescription ploop;
    ploop.plant = TransferMatrix(right_multiply(p, perm));
    ploop.controller = TransferMatrix(left_multiply(perm.transpose(), k.ss()));
    ploop.channels = {c2, c1};
    ploop.noise_variance = Vector::Ones(2);
    StabilityReport prep = ms_stability_test(ploop);

    REQUIRE(rep.nominal_stable);
    REQUIRE(prep.nominal_stable);
    CHECK(prep.rho == doctest::Approx(rep.rho).epsilon(1e-8));
    Matrix back = perm.transpose() * prep.t_hat_w * perm;
    CHECK((back - rep.t_hat_w).cwiseAbs().maxCoeff() < 1e-8 * (1.0 + rep.t_hat_w.maxCoeff()));
    REQUIRE(prep.powers.has_value());
    CHECK((*prep.powers)(0) == doctest::Approx((*rep.powers)(1)).epsilon(1e-8));
    CHECK((*prep.powers)(1) == doctest::Approx((*rep.powers)(0)).epsilon(1e-8));
}

TEST_CASE("loop validation errors") {
    ChannelStatistics ch = statistics_from_spec(DelayChannelSpec::dropout(0.3));
    // direct feedthrough violates the relative-degree requirement
    LoopDescription loop;
    loop.plant = TransferMatrix(scalar_ss(0.5, 1.0, 1.0, 0.2));
    loop.controller = TransferMatrix(StateSpaceModel::gain(Matrix::Identity(1, 1)));
    loop.channels = {ch};
    loop.noise_variance = Vector::Ones(1);
    CHECK_THROWS_AS((void)ms_stability_test(loop), Error);

    // channel count mismatch
    LoopDescription loop2 = siso_loop(0.5, 0.3, ch, 1.0);
    loop2.channels.push_back(ch);
    CHECK_THROWS_AS((void)ms_stability_test(loop2), Error);
}
