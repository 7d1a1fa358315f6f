#include "meansq/mcsim.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <complex>
#include <fstream>
#include <thread>

#include "meansq/errors.hpp"
#include "meansq/tolerances.hpp"

namespace meansq {

namespace {

constexpr double kOverflowGuard = 1e12;
constexpr int kPsdBlock = 1024;

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

// Counter-based per-trial stream: trial ordering never affects the draws.
std::uint64_t trial_seed(std::uint64_t master, int trial) {
    return splitmix64(master ^ splitmix64(static_cast<std::uint64_t>(trial) + 1));
}

struct Rng {
    explicit Rng(std::uint64_t seed) : state(seed ? seed : 0x853C49E6748FEA9BULL) {}
    std::uint64_t state;
    bool has_spare = false;
    double spare = 0.0;

    std::uint64_t next_u64() {
        // xorshift* keeps the stream portable across standard libraries
        std::uint64_t x = state;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        state = x;
        return x * 0x2545F4914F6CDD1DULL;
    }
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
    double normal() {
        if (has_spare) {
            has_spare = false;
            return spare;
        }
        double u1 = uniform();
        while (u1 <= 1e-300) u1 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * M_PI * uniform();
        spare = r * std::sin(a);
        has_spare = true;
        return r * std::cos(a);
    }
};

struct ChannelSampler {
    std::vector<double> cdf;      // cumulative pmf; tail mass = drop
    std::vector<double> weights;
    std::vector<double> mean;     // alpha_j p_j
    int chi_bar = 0;

    explicit ChannelSampler(const DelayChannelSpec& spec) {
        chi_bar = spec.max_delay;
        weights = spec.weights;
        double acc = 0.0;
        for (std::size_t j = 0; j < spec.pmf.size(); ++j) {
            acc += spec.pmf[j];
            cdf.push_back(acc);
            mean.push_back(spec.weights[j] * spec.pmf[j]);
        }
    }

    // Returns the transmission time, or -1 for a lost packet.
    int draw(Rng& rng) const {
        const double u = rng.uniform();
        for (std::size_t j = 0; j < cdf.size(); ++j)
            if (u < cdf[j]) return static_cast<int>(j);
        return -1;
    }
};

struct TrialAccumulator {
    Vector power_sum;
    long long power_count = 0;
    bool diverged = false;

    // cross-correlation sums for lags 0..max_lag over ordered pairs
    std::vector<Matrix> xc;  // xc[lag](i1,i2) = sum d_{i1}(k) d_{i2}(k-lag)
    Vector d_sumsq;
    long long xc_count = 0;

    Matrix psd_sum;  // freq x channel, sum of block periodograms
    long long psd_blocks = 0;
};

struct SimPlan {
    StateSpaceModel plant;
    StateSpaceModel controller;
    std::vector<ChannelSampler> samplers;
    Vector noise_std;
    long long steps = 0;
    long long burn_in = 0;
    int max_lag = 5;
    bool record_xc = true;
    bool record_psd = false;
    std::vector<double> psd_thetas;
};

TrialAccumulator run_trial(const SimPlan& plan, std::uint64_t seed, std::ofstream* dump) {
    const int m = static_cast<int>(plan.samplers.size());
    const int np = plan.plant.states();
    const int nk = plan.controller.states();
    Rng rng(seed);

    TrialAccumulator acc;
    acc.power_sum = Vector::Zero(m);
    acc.d_sumsq = Vector::Zero(m);
    if (plan.record_xc)
        acc.xc.assign(static_cast<std::size_t>(plan.max_lag) + 1, Matrix::Zero(m, m));
    if (plan.record_psd)
        acc.psd_sum = Matrix::Zero(static_cast<Eigen::Index>(plan.psd_thetas.size()), m);

    Vector xp = Vector::Zero(np);
    Vector xk = Vector::Zero(nk);
    std::vector<std::vector<double>> u_hist(static_cast<std::size_t>(m));
    std::vector<std::vector<int>> chi_hist(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) {
        const int len = plan.samplers[static_cast<std::size_t>(i)].chi_bar + 1;
        u_hist[static_cast<std::size_t>(i)].assign(static_cast<std::size_t>(len), 0.0);
        chi_hist[static_cast<std::size_t>(i)].assign(static_cast<std::size_t>(len), -2);
    }
    std::vector<std::vector<double>> d_ring(
        static_cast<std::size_t>(m),
        std::vector<double>(static_cast<std::size_t>(plan.max_lag) + 1, 0.0));

    std::vector<ComplexMatrix> psd_acc;
    if (plan.record_psd)
        psd_acc.assign(plan.psd_thetas.size(), ComplexMatrix::Zero(1, m));
    long long block_fill = 0;

    Vector u(m), ud(m), d(m), v(m), y(plan.plant.outputs());
    for (long long k = 0; k < plan.steps; ++k) {
        y = plan.plant.c * xp;
        u = plan.controller.c * xk + plan.controller.d * y;

        for (int i = 0; i < m; ++i) {
            const auto& sampler = plan.samplers[static_cast<std::size_t>(i)];
            const int len = sampler.chi_bar + 1;
            const int slot = static_cast<int>(k % len);
            u_hist[static_cast<std::size_t>(i)][static_cast<std::size_t>(slot)] = u(i);
            chi_hist[static_cast<std::size_t>(i)][static_cast<std::size_t>(slot)] =
                sampler.draw(rng);

            double received = 0.0;
            double nominal = 0.0;
            for (int j = 0; j <= sampler.chi_bar && j <= k; ++j) {
                const int pos = static_cast<int>((k - j) % len);
                const double uj = u_hist[static_cast<std::size_t>(i)][static_cast<std::size_t>(pos)];
                if (chi_hist[static_cast<std::size_t>(i)][static_cast<std::size_t>(pos)] == j)
                    received += sampler.weights[static_cast<std::size_t>(j)] * uj;
                nominal += sampler.mean[static_cast<std::size_t>(j)] * uj;
            }
            ud(i) = received;
            d(i) = received - nominal;
        }

        for (int i = 0; i < m; ++i) v(i) = plan.noise_std(i) * rng.normal();

        if (u.cwiseAbs().maxCoeff() > kOverflowGuard ||
            (np > 0 && xp.cwiseAbs().maxCoeff() > kOverflowGuard))
            acc.diverged = true;

        if (dump) {
            (*dump) << k;
            for (int i = 0; i < m; ++i) (*dump) << ' ' << u(i);
            for (Eigen::Index i = 0; i < y.size(); ++i) (*dump) << ' ' << y(i);
            (*dump) << ' ' << (acc.diverged ? 1 : 0) << '\n';
        }
        if (acc.diverged) break;

        if (k >= plan.burn_in) {
            acc.power_sum += u.cwiseProduct(u);
            ++acc.power_count;
            if (plan.record_xc) {
                const int lag_ring = plan.max_lag + 1;
                const int slot = static_cast<int>(k % lag_ring);
                for (int i = 0; i < m; ++i) d_ring[static_cast<std::size_t>(i)]
                    [static_cast<std::size_t>(slot)] = d(i);
                if (k >= plan.burn_in + plan.max_lag) {
                    ++acc.xc_count;
                    for (int i = 0; i < m; ++i) acc.d_sumsq(i) += d(i) * d(i);
                    for (int lag = 0; lag <= plan.max_lag; ++lag) {
                        const int pos = static_cast<int>((k - lag) % lag_ring);
                        for (int i1 = 0; i1 < m; ++i1)
                            for (int i2 = 0; i2 < m; ++i2)
                                acc.xc[static_cast<std::size_t>(lag)](i1, i2) +=
                                    d(i1) *
                                    d_ring[static_cast<std::size_t>(i2)][static_cast<std::size_t>(pos)];
                    }
                }
            }
            if (plan.record_psd) {
                for (std::size_t f = 0; f < plan.psd_thetas.size(); ++f) {
                    const double th = plan.psd_thetas[f];
                    const Complex w{std::cos(th * static_cast<double>(block_fill)),
                                    -std::sin(th * static_cast<double>(block_fill))};
                    for (int i = 0; i < m; ++i) psd_acc[f](0, i) += w * d(i);
                }
                ++block_fill;
                if (block_fill == kPsdBlock) {
                    for (std::size_t f = 0; f < plan.psd_thetas.size(); ++f) {
                        for (int i = 0; i < m; ++i)
                            acc.psd_sum(static_cast<Eigen::Index>(f), i) +=
                                std::norm(psd_acc[f](0, i)) / kPsdBlock;
                        psd_acc[f].setZero();
                    }
                    ++acc.psd_blocks;
                    block_fill = 0;
                }
            }
        }

        xp = plan.plant.a * xp + plan.plant.b * (v - ud);
        xk = plan.controller.a * xk + plan.controller.b * y;
    }
    return acc;
}

std::vector<double> psd_sample_angles(int frequencies) {
    std::vector<double> thetas;
    for (int j = 0; j < frequencies; ++j) {
        const double target = M_PI * (j + 0.5) / frequencies;
        const int bin = std::max(1, static_cast<int>(std::lround(target * kPsdBlock / (2.0 * M_PI))));
        thetas.push_back(2.0 * M_PI * bin / kPsdBlock);
    }
    return thetas;
}

}  // namespace

SimReport simulate_loop(const LoopDescription& loop, const std::vector<DelayChannelSpec>& specs,
                        const SimConfig& cfg) {
    loop.validate();
    if (specs.size() != loop.channels.size())
        fail(ErrorKind::dimension, "simulate_loop: one raw spec per channel required");
    if (cfg.trials < 1) fail(ErrorKind::domain, "simulate_loop: trials must be >= 1");

    SimPlan plan;
    plan.plant = loop.plant.ss();
    plan.controller = loop.controller.ss();
    for (const auto& s : specs) {
        s.validate();
        plan.samplers.emplace_back(s);
    }
    plan.noise_std = loop.noise_variance.cwiseSqrt();
    plan.steps = cfg.steps;
    plan.max_lag = cfg.max_lag;
    plan.record_xc = cfg.record_cross_correlation;
    plan.record_psd = cfg.record_psd;
    if (cfg.record_psd) plan.psd_thetas = psd_sample_angles(cfg.psd_frequencies);

    // Nominal internal stability gate; simulation of unstable loops must be
    // requested explicitly.
    StateSpaceModel loop_state = build_complementary_sensitivity(loop).loop_state;
    const bool nominal_stable = loop_state.is_stable();
    if (!nominal_stable && !cfg.allow_unstable_nominal)
        fail(ErrorKind::domain,
             "simulate_loop: controller does not stabilize the nominal loop "
             "(set the unstable override to simulate anyway)");

    if (cfg.burn_in > 0) {
        plan.burn_in = cfg.burn_in;
    } else if (nominal_stable && loop_state.states() > 0) {
        const double rho = spectral_radius(loop_state.a);
        const double tc = rho > 1e-12 ? -1.0 / std::log(std::min(rho, 1.0 - 1e-12)) : 1.0;
        plan.burn_in = std::llround(std::clamp(10.0 * tc, 64.0, cfg.steps / 2.0));
    } else {
        plan.burn_in = std::min<long long>(64, cfg.steps / 2);
    }
    if (plan.burn_in >= cfg.steps)
        fail(ErrorKind::domain, "simulate_loop: steps must exceed the burn-in window");

    const int m = static_cast<int>(specs.size());
    std::vector<TrialAccumulator> results(static_cast<std::size_t>(cfg.trials));

    std::ofstream dump;
    if (!cfg.dump_trajectory_path.empty()) {
        dump.open(cfg.dump_trajectory_path);
        if (!dump) fail(ErrorKind::schema, "simulate_loop: cannot open trajectory dump file");
        dump << "# k";
        for (int i = 0; i < m; ++i) dump << " u" << i + 1;
        for (int i = 0; i < plan.plant.outputs(); ++i) dump << " y" << i + 1;
        dump << " diverged\n";
    }
    // Trial 0 runs first (serially) when dumping so the file is deterministic.
    int first_parallel = 0;
    if (dump.is_open()) {
        results[0] = run_trial(plan, trial_seed(cfg.seed, 0), &dump);
        dump.close();
        first_parallel = 1;
    }

    std::atomic<int> next{first_parallel};
    const int workers =
        std::max(1, std::min<int>({cfg.trials - first_parallel,
                                   static_cast<int>(std::thread::hardware_concurrency()), 8}));
    auto worker = [&] {
        for (;;) {
            const int t = next.fetch_add(1);
            if (t >= cfg.trials) return;
            results[static_cast<std::size_t>(t)] = run_trial(plan, trial_seed(cfg.seed, t), nullptr);
        }
    };
    if (cfg.trials - first_parallel > 0) {
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    // Order-independent reduction over the per-trial accumulators.
    SimReport report;
    report.burn_in_used = plan.burn_in;
    std::vector<Vector> trial_powers;
    for (const auto& r : results) {
        if (r.diverged) {
            report.diverged = true;
            ++report.diverged_trials;
            continue;
        }
        if (r.power_count > 0)
            trial_powers.push_back(r.power_sum / static_cast<double>(r.power_count));
    }
    const int clean = static_cast<int>(trial_powers.size());
    report.empirical_powers = Vector::Constant(m, std::numeric_limits<double>::quiet_NaN());
    report.power_standard_errors = report.empirical_powers;
    if (clean > 0) {
        Vector mean = Vector::Zero(m);
        for (const auto& p : trial_powers) mean += p;
        mean /= clean;
        Vector var = Vector::Zero(m);
        for (const auto& p : trial_powers) var += (p - mean).cwiseProduct(p - mean);
        report.empirical_powers = mean;
        report.power_standard_errors =
            clean > 1 ? Vector((var / (clean - 1) / clean).cwiseSqrt()) : Vector::Zero(m);
    }

    if (cfg.record_cross_correlation && clean > 0) {
        const int lags = 2 * cfg.max_lag + 1;
        std::vector<std::vector<Matrix>> per_trial;  // trial -> lag index -> m x m
        for (const auto& r : results) {
            if (r.diverged || r.xc_count == 0) continue;
            std::vector<Matrix> by_lag(static_cast<std::size_t>(lags), Matrix::Zero(m, m));
            for (int lag = -cfg.max_lag; lag <= cfg.max_lag; ++lag) {
                Matrix c(m, m);
                for (int i1 = 0; i1 < m; ++i1)
                    for (int i2 = 0; i2 < m; ++i2) {
                        const double raw = lag >= 0
                                               ? r.xc[static_cast<std::size_t>(lag)](i1, i2)
                                               : r.xc[static_cast<std::size_t>(-lag)](i2, i1);
                        const double norm = std::sqrt(std::max(r.d_sumsq(i1) * r.d_sumsq(i2), 1e-300));
                        c(i1, i2) = (i1 == i2) ? 0.0 : raw / norm;
                    }
                by_lag[static_cast<std::size_t>(lag + cfg.max_lag)] = c;
            }
            per_trial.push_back(std::move(by_lag));
        }
        const int nt = static_cast<int>(per_trial.size());
        report.cross_corr_by_lag.assign(static_cast<std::size_t>(lags), Matrix::Zero(m, m));
        report.cross_corr_se_by_lag.assign(static_cast<std::size_t>(lags), Matrix::Zero(m, m));
        for (int l = 0; l < lags; ++l) {
            Matrix mean = Matrix::Zero(m, m);
            for (const auto& t : per_trial) mean += t[static_cast<std::size_t>(l)];
            mean /= std::max(1, nt);
            Matrix var = Matrix::Zero(m, m);
            for (const auto& t : per_trial) {
                Matrix dlt = t[static_cast<std::size_t>(l)] - mean;
                var += dlt.cwiseProduct(dlt);
            }
            report.cross_corr_by_lag[static_cast<std::size_t>(l)] = mean;
            if (nt > 1)
                report.cross_corr_se_by_lag[static_cast<std::size_t>(l)] =
                    (var / (nt - 1) / nt).cwiseSqrt();
        }
        report.cross_corr = Matrix::Zero(m, m);
        report.cross_corr_se = Matrix::Zero(m, m);
        for (int i1 = 0; i1 < m; ++i1)
            for (int i2 = 0; i2 < m; ++i2) {
                double best = 0.0, best_se = 0.0;
                for (int l = 0; l < lags; ++l) {
                    const double v = std::abs(report.cross_corr_by_lag[static_cast<std::size_t>(l)](i1, i2));
                    if (v >= best) {
                        best = v;
                        best_se = report.cross_corr_se_by_lag[static_cast<std::size_t>(l)](i1, i2);
                    }
                }
                report.cross_corr(i1, i2) = best;
                report.cross_corr_se(i1, i2) = best_se;
            }
    }

    if (cfg.record_psd && clean > 0) {
        const int nf = static_cast<int>(plan.psd_thetas.size());
        report.psd_freqs = Vector(nf);
        for (int f = 0; f < nf; ++f) report.psd_freqs(f) = plan.psd_thetas[static_cast<std::size_t>(f)];
        std::vector<Matrix> per_trial;
        for (const auto& r : results)
            if (!r.diverged && r.psd_blocks > 0)
                per_trial.push_back(Matrix(r.psd_sum / static_cast<double>(r.psd_blocks)));
        const int nt = static_cast<int>(per_trial.size());
        Matrix mean = Matrix::Zero(nf, m);
        for (const auto& t : per_trial) mean += t;
        mean /= std::max(1, nt);
        Matrix var = Matrix::Zero(nf, m);
        for (const auto& t : per_trial) var += (t - mean).cwiseProduct(t - mean);
        report.empirical_psd = mean;
        report.empirical_psd_se = nt > 1 ? Matrix((var / (nt - 1) / nt).cwiseSqrt())
                                         : Matrix(Matrix::Zero(nf, m));
    }
    return report;
}

Matrix estimate_cross_correlation(const SimReport& report) {
    if (report.diverged)
        fail(ErrorKind::domain, "estimate_cross_correlation: simulation diverged");
    if (report.cross_corr.size() == 0)
        fail(ErrorKind::domain, "estimate_cross_correlation: recording was disabled");
    return report.cross_corr;
}

ChannelEsdEstimate estimate_channel_esd(const DelayChannelSpec& spec, int frequencies,
                                        long long steps, int trials, std::uint64_t seed) {
    spec.validate();
    ChannelSampler sampler(spec);
    const std::vector<double> thetas = psd_sample_angles(frequencies);

    std::vector<Matrix> per_trial;
    for (int t = 0; t < trials; ++t) {
        Rng rng(trial_seed(seed, t));
        const int len = sampler.chi_bar + 1;
        std::vector<double> u_hist(static_cast<std::size_t>(len), 0.0);
        std::vector<int> chi_hist(static_cast<std::size_t>(len), -2);
        std::vector<Complex> acc(thetas.size(), Complex{0, 0});
        Matrix psd_sum = Matrix::Zero(static_cast<Eigen::Index>(thetas.size()), 1);
        long long blocks = 0, fill = 0;
        for (long long k = 0; k < steps; ++k) {
            const int slot = static_cast<int>(k % len);
            u_hist[static_cast<std::size_t>(slot)] = rng.normal();
            chi_hist[static_cast<std::size_t>(slot)] = sampler.draw(rng);
            double received = 0.0, nominal = 0.0;
            for (int j = 0; j <= sampler.chi_bar && j <= k; ++j) {
                const int pos = static_cast<int>((k - j) % len);
                const double uj = u_hist[static_cast<std::size_t>(pos)];
                if (chi_hist[static_cast<std::size_t>(pos)] == j)
                    received += sampler.weights[static_cast<std::size_t>(j)] * uj;
                nominal += sampler.mean[static_cast<std::size_t>(j)] * uj;
            }
            const double d = received - nominal;
            for (std::size_t f = 0; f < thetas.size(); ++f) {
                const double th = thetas[f] * static_cast<double>(fill);
                acc[f] += Complex{std::cos(th), -std::sin(th)} * d;
            }
            ++fill;
            if (fill == kPsdBlock) {
                for (std::size_t f = 0; f < thetas.size(); ++f) {
                    psd_sum(static_cast<Eigen::Index>(f), 0) += std::norm(acc[f]) / kPsdBlock;
                    acc[f] = Complex{0, 0};
                }
                ++blocks;
                fill = 0;
            }
        }
        if (blocks > 0) per_trial.push_back(Matrix(psd_sum / static_cast<double>(blocks)));
    }

    ChannelEsdEstimate est;
    const int nf = static_cast<int>(thetas.size());
    est.freqs = Vector(nf);
    for (int f = 0; f < nf; ++f) est.freqs(f) = thetas[static_cast<std::size_t>(f)];
    const int nt = static_cast<int>(per_trial.size());
    Matrix mean = Matrix::Zero(nf, 1);
    for (const auto& t : per_trial) mean += t;
    mean /= std::max(1, nt);
    Matrix var = Matrix::Zero(nf, 1);
    for (const auto& t : per_trial) var += (t - mean).cwiseProduct(t - mean);
    est.psd = mean.col(0);
    est.se = nt > 1 ? Vector((var / (nt - 1) / nt).cwiseSqrt().col(0)) : Vector(Vector::Zero(nf));
    return est;
}

}  // namespace meansq
