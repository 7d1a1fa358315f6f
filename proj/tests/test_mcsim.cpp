#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "meansq/errors.hpp"
#include "meansq/mcsim.hpp"
#include "meansq/synthesis.hpp"

using namespace meansq;

namespace {

struct SisoSetup {
    LoopDescription loop;
    DelayChannelSpec spec;
};

SisoSetup siso_dropout_loop(double p) {
    Matrix a(1, 1), b(1, 1), c(1, 1), d(1, 1);
    a << 1.5;
    b << 1.0;
    c << 1.5;
    d << 1.0;
    GeneralMp mp{StateSpaceModel{a, b, c, d}, {1}};
    SisoSetup s;
    s.spec = DelayChannelSpec::dropout(p);
    auto ch = std::vector<ChannelStatistics>{statistics_from_spec(s.spec)};
    s.loop.plant = TransferMatrix(family_plant(PlantFamily{mp}));
    s.loop.controller = synthesize_controller(PlantFamily{mp}, ch, GammaScaling::ones(1));
    s.loop.channels = ch;
    s.loop.noise_variance = Vector::Ones(1);
    return s;
}

}  // namespace

TEST_CASE("simulate_loop: seed determinism is bitwise") {
    SisoSetup s = siso_dropout_loop(0.3);
    SimConfig cfg;
    cfg.steps = 20000;
    cfg.trials = 6;
    cfg.seed = 99;
    SimReport a = simulate_loop(s.loop, {s.spec}, cfg);
    SimReport b = simulate_loop(s.loop, {s.spec}, cfg);
    CHECK(a.empirical_powers(0) == b.empirical_powers(0));
    CHECK(a.power_standard_errors(0) == b.power_standard_errors(0));
    SimConfig other = cfg;
    other.seed = 100;
    SimReport c = simulate_loop(s.loop, {s.spec}, other);
    CHECK(a.empirical_powers(0) != c.empirical_powers(0));
}

TEST_CASE("simulate_loop: perfect channels match the deterministic H2 power") {
    Matrix a(1, 1), b(1, 1), c(1, 1), d(1, 1);
    a << 1.5;
    b << 1.0;
    c << 1.5;
    d << 1.0;
    GeneralMp mp{StateSpaceModel{a, b, c, d}, {1}};
    DelayChannelSpec spec = DelayChannelSpec::perfect();
    auto ch = std::vector<ChannelStatistics>{statistics_from_spec(spec)};
    LoopDescription loop;
    loop.plant = TransferMatrix(family_plant(PlantFamily{mp}));
    loop.controller = synthesize_controller(PlantFamily{mp}, ch, GammaScaling::ones(1));
    loop.channels = ch;
    loop.noise_variance = Vector::Ones(1);
    StabilityReport st = ms_stability_test(loop);
    REQUIRE(st.powers.has_value());

    SimConfig cfg;
    cfg.steps = 60000;
    cfg.trials = 10;
    cfg.seed = 5;
    SimReport rep = simulate_loop(loop, {spec}, cfg);
    CHECK(!rep.diverged);
    CHECK(std::abs(rep.empirical_powers(0) - (*st.powers)(0)) <=
          3.0 * rep.power_standard_errors(0) + 1e-12);
}

TEST_CASE("simulate_loop: stationary power matches the fixed point within tolerance") {
    SisoSetup s = siso_dropout_loop(0.3);
    StabilityReport st = ms_stability_test(s.loop);
    REQUIRE(st.ms_stable);
    SimConfig cfg;
    cfg.steps = 100000;
    cfg.trials = 20;
    cfg.seed = 42;
    SimReport rep = simulate_loop(s.loop, {s.spec}, cfg);
    CHECK(!rep.diverged);
    const double rel = std::abs(rep.empirical_powers(0) - (*st.powers)(0)) / (*st.powers)(0);
    CHECK(rel < 0.05);
}

TEST_CASE("simulate_loop: above the erasure threshold the trajectories diverge") {
    SisoSetup s = siso_dropout_loop(0.6);
    StabilityReport st = ms_stability_test(s.loop);
    CHECK(st.nominal_stable);
    CHECK(!st.ms_stable);  // rho = 1.875 > 1
    SimConfig cfg;
    cfg.steps = 200000;
    cfg.trials = 6;
    cfg.seed = 17;
    SimReport rep = simulate_loop(s.loop, {s.spec}, cfg);
    CHECK(rep.diverged);
    CHECK(rep.diverged_trials > 0);
    CHECK_THROWS_AS((void)estimate_cross_correlation(rep), Error);
}

TEST_CASE("simulate_loop: nominally unstable loops need the override") {
    SisoSetup s = siso_dropout_loop(0.3);
    s.loop.controller = TransferMatrix(StateSpaceModel::gain(Matrix::Constant(1, 1, 0.001)));
    SimConfig cfg;
    cfg.steps = 5000;
    cfg.trials = 1;
    CHECK_THROWS_AS((void)simulate_loop(s.loop, {s.spec}, cfg), Error);
    cfg.allow_unstable_nominal = true;
    SimReport rep = simulate_loop(s.loop, {s.spec}, cfg);
    CHECK(rep.diverged);
}

TEST_CASE("simulate_loop: uncertainty outputs of distinct channels are uncorrelated") {
    ExampleFamily ex;
    ex.s1 = 0.2;
    ex.s2 = 0.7;
    auto specs = std::vector<DelayChannelSpec>{DelayChannelSpec::one_step_delay(0.4, 2.0 / 3.0),
                                               DelayChannelSpec::dropout(0.3)};
    auto ch = std::vector<ChannelStatistics>{statistics_from_spec(specs[0]),
                                             statistics_from_spec(specs[1])};
    StabilizabilityReport rep = optimize_gamma(PlantFamily{ex}, ch);
    LoopDescription loop;
    loop.plant = TransferMatrix(family_plant(PlantFamily{ex}));
    loop.controller = synthesize_controller(PlantFamily{ex}, ch, rep.gamma_star);
    loop.channels = ch;
    loop.noise_variance = Vector::Ones(2);

    SimConfig cfg;
    cfg.steps = 60000;
    cfg.trials = 12;
    cfg.seed = 2024;
    SimReport sim = simulate_loop(loop, specs, cfg);
    REQUIRE(!sim.diverged);
    Matrix c = estimate_cross_correlation(sim);
    for (std::size_t l = 0; l < sim.cross_corr_by_lag.size(); ++l) {
        const Matrix& corr = sim.cross_corr_by_lag[l];
        const Matrix& se = sim.cross_corr_se_by_lag[l];
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j)
                if (i != j) CHECK(std::abs(corr(i, j)) <= 4.0 * se(i, j) + 1e-12);
    }
    CHECK(c(0, 1) >= 0.0);
    // single channel: no off-diagonal entries to test
    SisoSetup s = siso_dropout_loop(0.3);
    SimConfig small;
    small.steps = 4000;
    small.trials = 2;
    SimReport rep1 = simulate_loop(s.loop, {s.spec}, small);
    CHECK(estimate_cross_correlation(rep1).rows() == 1);
}

TEST_CASE("simulate_loop: empirical spectra of d match the channel energy spectrum") {
    // Statistics bridge for the sampler: open-loop white-noise drive.
    DelayChannelSpec spec = DelayChannelSpec::one_step_delay(0.4, 2.0 / 3.0);
    ChannelStatistics st = statistics_from_spec(spec);
    ChannelEsdEstimate est = estimate_channel_esd(spec, 16, 200000, 16, 18);
    REQUIRE(est.freqs.size() == 16);
    for (int f = 0; f < est.freqs.size(); ++f) {
        const double truth =
            st.esd.eval(Complex{std::cos(est.freqs(f)), std::sin(est.freqs(f))}).real();
        CHECK(std::abs(est.psd(f) - truth) <= 3.0 * est.se(f) + 1e-9);
    }
}

TEST_CASE("simulate_loop: trajectory dump carries the documented header") {
    SisoSetup s = siso_dropout_loop(0.3);
    SimConfig cfg;
    cfg.steps = 256;
    cfg.trials = 2;
    cfg.seed = 1;
    cfg.burn_in = 16;
    cfg.dump_trajectory_path = "/tmp/meansq_test_dump.txt";
    SimReport rep = simulate_loop(s.loop, {s.spec}, cfg);
    (void)rep;
    std::ifstream in(cfg.dump_trajectory_path);
    REQUIRE(in.good());
    std::string header;
    std::getline(in, header);
    CHECK(header == "# k u1 y1 diverged");
    int rows = 0;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) ++rows;
    CHECK(rows == 256);
    std::remove(cfg.dump_trajectory_path.c_str());
}

TEST_CASE("simulate_loop: config validation") {
    SisoSetup s = siso_dropout_loop(0.3);
    SimConfig cfg;
    cfg.steps = 100;
    cfg.burn_in = 100;
    CHECK_THROWS_AS((void)simulate_loop(s.loop, {s.spec}, cfg), Error);
    SimConfig cfg2;
    cfg2.trials = 0;
    CHECK_THROWS_AS((void)simulate_loop(s.loop, {s.spec}, cfg2), Error);
    SimConfig cfg3;
    CHECK_THROWS_AS((void)simulate_loop(s.loop, {}, cfg3), Error);
}

TEST_CASE("simulate_loop: permuting the channel order permutes the statistics") {
    ExampleFamily ex;
    ex.s1 = 0.2;
    ex.s2 = 0.7;
    auto specs = std::vector<DelayChannelSpec>{DelayChannelSpec::one_step_delay(0.4, 2.0 / 3.0),
                                               DelayChannelSpec::dropout(0.3)};
    auto ch = std::vector<ChannelStatistics>{statistics_from_spec(specs[0]),
                                             statistics_from_spec(specs[1])};
    StabilizabilityReport rep = optimize_gamma(PlantFamily{ex}, ch);
    StateSpaceModel plant = family_plant(PlantFamily{ex});
    TransferMatrix k = synthesize_controller(PlantFamily{ex}, ch, rep.gamma_star);

    SimConfig cfg;
    cfg.steps = 50000;
    cfg.trials = 10;
    cfg.seed = 7;

    LoopDescription loop;
    loop.plant = TransferMatrix(plant);
    loop.controller = k;
    loop.channels = ch;
    loop.noise_variance = Vector::Ones(2);
    SimReport base = simulate_loop(loop, specs, cfg);

    Matrix perm(2, 2);
    perm << 0, 1, 1, 0;
    LoopDescription ploop;
    ploop.plant = TransferMatrix(right_multiply(plant, perm));
    ploop.controller = TransferMatrix(left_multiply(perm.transpose(), k.ss()));
    ploop.channels = {ch[1], ch[0]};
    ploop.noise_variance = Vector::Ones(2);
    SimReport swapped = simulate_loop(ploop, {specs[1], specs[0]}, cfg);

    REQUIRE(!base.diverged);
    REQUIRE(!swapped.diverged);
    for (int i = 0; i < 2; ++i) {
        const double se = base.power_standard_errors(i) + swapped.power_standard_errors(1 - i);
        CHECK(std::abs(swapped.empirical_powers(1 - i) - base.empirical_powers(i)) <=
              4.0 * se + 1e-9);
    }
}
