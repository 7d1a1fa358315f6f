#include "meansq/synthesis.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <sstream>

#include "meansq/errors.hpp"
#include "meansq/tolerances.hpp"

namespace meansq {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

StateSpaceModel delay_chain(int tau) {
    Matrix a = Matrix::Zero(tau, tau);
    for (int i = 0; i + 1 < tau; ++i) a(i + 1, i) = 1.0;
    Matrix b = Matrix::Zero(tau, 1);
    Matrix c = Matrix::Zero(1, tau);
    Matrix d = Matrix::Zero(1, 1);
    if (tau == 0) {
        d(0, 0) = 1.0;
    } else {
        b(0, 0) = 1.0;
        c(0, tau - 1) = 1.0;
    }
    return {a, b, c, d};
}

StateSpaceModel diagonal_delays(const std::vector<int>& taus) {
    StateSpaceModel d = delay_chain(taus.front());
    for (std::size_t i = 1; i < taus.size(); ++i) d = block_diag(d, delay_chain(taus[i]));
    return d;
}

// (z - s)/z as a one-state biproper section.
StateSpaceModel zero_factor(double s) {
    Matrix a = Matrix::Zero(1, 1);
    Matrix b = Matrix::Ones(1, 1);
    Matrix c(1, 1);
    c << -s;
    Matrix d = Matrix::Ones(1, 1);
    return {a, b, c, d};
}

TransferMatrix::Grid example_family_grid(const ExampleFamily& f, bool with_delays) {
    const int t1 = with_delays ? f.tau1 : 0;
    const int t2 = with_delays ? f.tau2 : 0;
    LaurentPoly pole = LaurentPoly::from_z({-f.lambda, 1.0});
    RationalFn e11{LaurentPoly::from_z({-f.s1, 1.0}), pole.shifted(t1)};
    RationalFn e12{LaurentPoly::from_z({f.s2, -1.0}), pole.shifted(t2)};
    RationalFn e21 = RationalFn::constant(0.0);
    RationalFn e22{LaurentPoly::from_z({-f.s2, 1.0}), LaurentPoly::constant(1.0).shifted(t2 + 1)};
    return {{e11, e12}, {e21, e22}};
}

}  // namespace

StateSpaceModel family_plant(const PlantFamily& family) {
    if (const auto* mp = std::get_if<GeneralMp>(&family)) {
        if (mp->delays.empty() || static_cast<int>(mp->delays.size()) != mp->ss.inputs())
            fail(ErrorKind::dimension, "general-mp family: one delay per input required");
        for (int t : mp->delays)
            if (t < 1) fail(ErrorKind::domain, "general-mp family: delays must be >= 1");
        return minimal_realization(series(mp->ss, diagonal_delays(mp->delays)));
    }
    if (const auto* nmp = std::get_if<DecoupledNmp>(&family)) {
        if (nmp->zeros.empty() || static_cast<int>(nmp->zeros.size()) != nmp->base.inputs())
            fail(ErrorKind::dimension, "decoupled-nmp family: one zero per input required");
        if (nmp->base.d.cwiseAbs().maxCoeff() > 0.0)
            fail(ErrorKind::structural, "decoupled-nmp family: base must be strictly proper");
        StateSpaceModel factors = zero_factor(nmp->zeros.front());
        for (std::size_t i = 1; i < nmp->zeros.size(); ++i)
            factors = block_diag(factors, zero_factor(nmp->zeros[i]));
        return minimal_realization(series(nmp->base, factors));
    }
    const auto& ex = std::get<ExampleFamily>(family);
    if (std::abs(ex.lambda) <= 1.0)
        fail(ErrorKind::domain, "example family: |lambda| must exceed one");
    if (ex.tau1 < 1 || ex.tau2 < 1)
        fail(ErrorKind::domain, "example family: delays must be >= 1");
    return minimal_realization(TransferMatrix(example_family_grid(ex, true)).ss());
}

int family_inputs(const PlantFamily& family) {
    if (const auto* mp = std::get_if<GeneralMp>(&family)) return mp->ss.inputs();
    if (const auto* nmp = std::get_if<DecoupledNmp>(&family))
        return static_cast<int>(nmp->zeros.size());
    return 2;
}

// ---------------------------------------------------------------------------
// GammaScaling
// ---------------------------------------------------------------------------

GammaScaling GammaScaling::ones(int m) { return {Vector::Ones(m)}; }

void GammaScaling::validate() const {
    if (gammas.size() == 0) fail(ErrorKind::dimension, "gamma scaling is empty");
    if (gammas.minCoeff() <= 0.0) fail(ErrorKind::domain, "gamma entries must be positive");
    if (std::abs(gammas(0) - 1.0) > 1e-12)
        fail(ErrorKind::domain, "gamma scaling must be normalized with the first entry one");
}

Matrix GammaScaling::diagonal() const { return Matrix(gammas.asDiagonal()); }

GammaScaling GammaScaling::normalized() const {
    Vector g = gammas / gammas(0);
    return {g};
}

// ---------------------------------------------------------------------------
// Objective context
// ---------------------------------------------------------------------------

namespace {

enum class MethodKind { delay_mp, nmp_zeros };

struct StabilizabilityContext {
    MethodKind kind = MethodKind::delay_mp;
    int m = 0;
    StateSpaceModel m_in;       // minimal inner factor of the coprime M
    Matrix a_hat;               // anti-stable zero block of the inner factor
    std::vector<Vector> v;      // per-channel weighted direction vectors
    std::vector<Matrix> bd_col; // columns of B_in D_in^{-1}
    std::string collision;      // nonempty: zero collides with a plant pole
};

std::string method_name(MethodKind k) {
    return k == MethodKind::delay_mp ? "delay-mp" : "nmp-zeros";
}

void check_channel_usability(const std::vector<ChannelStatistics>& channels) {
    for (std::size_t i = 0; i < channels.size(); ++i) {
        const auto& ch = channels[i];
        if (ch.is_null()) continue;
        if (!ch.w_invertible) {
            std::ostringstream os;
            os << "channel " << i
               << ": coefficient of frequency variation is not invertible in RH-infinity";
            fail(ErrorKind::structural, os.str());
        }
    }
}

StabilizabilityContext build_context(const PlantFamily& family,
                                     const std::vector<ChannelStatistics>& channels) {
    StabilizabilityContext ctx;
    ctx.m = family_inputs(family);
    if (static_cast<int>(channels.size()) != ctx.m)
        fail(ErrorKind::dimension, "channel count does not match the plant family");
    check_channel_usability(channels);

    std::vector<int> delays;
    std::vector<double> zeros;
    if (const auto* mp = std::get_if<GeneralMp>(&family)) {
        ctx.kind = MethodKind::delay_mp;
        delays = mp->delays;
    } else if (const auto* nmp = std::get_if<DecoupledNmp>(&family)) {
        ctx.kind = MethodKind::nmp_zeros;
        zeros = nmp->zeros;
        for (double s : zeros)
            if (std::abs(s) <= 1.0)
                fail(ErrorKind::domain, "decoupled-nmp family: zeros must lie outside the circle");
    } else {
        const auto& ex = std::get<ExampleFamily>(family);
        if (ex.minimum_phase()) {
            ctx.kind = MethodKind::delay_mp;
            delays = {ex.tau1, ex.tau2};
        } else if (std::abs(ex.s1) > 1.0 && std::abs(ex.s2) > 1.0) {
            if (ex.tau1 != 1 || ex.tau2 != 1)
                fail(ErrorKind::scope,
                     "example family: nonminimum-phase analysis supports unit delays only");
            ctx.kind = MethodKind::nmp_zeros;
            zeros = {ex.s1, ex.s2};
        } else {
            fail(ErrorKind::scope,
                 "example family: zeros must be both inside (delay analysis) or both outside "
                 "(zero analysis) the unit circle");
        }
    }

    StateSpaceModel plant = family_plant(family);
    if (plant.inputs() != plant.outputs())
        fail(ErrorKind::scope, "stabilizability analysis requires a square loop");
    StateSpaceModel loop = minimal_realization(series(plant, nominal_channel_model(channels)));
    CoprimeQuadruple quad = coprime_factorize(loop);
    InnerOuter io = inner_outer_factorize(quad.m);
    ctx.m_in = io.inner;

    const StateSpaceModel& mi = ctx.m_in;
    Eigen::FullPivLU<Matrix> dlu(mi.d);
    dlu.setThreshold(1e-12);
    if (!dlu.isInvertible())
        fail(ErrorKind::singular, "inner factor has a singular feedthrough term");
    Matrix di = dlu.inverse();
    const Eigen::Index nu = mi.a.rows();
    ctx.a_hat = nu > 0 ? Matrix(mi.a - mi.b * di * mi.c) : Matrix(0, 0);
    Matrix bd = mi.b * di;

    std::vector<Complex> ahat_eigs = eigenvalues(ctx.a_hat);
    for (int i = 0; i < ctx.m; ++i) {
        ctx.bd_col.push_back(nu > 0 ? Matrix(bd.col(i)) : Matrix(0, 1));
        if (nu == 0 || channels[static_cast<std::size_t>(i)].is_null()) {
            ctx.v.emplace_back(Vector::Zero(nu));
            continue;
        }
        const auto& ch = channels[static_cast<std::size_t>(i)];
        Matrix w_at = eval_rational_at_matrix(ch.phi, ch.nominal(), ctx.a_hat);
        Matrix weight = Matrix::Identity(nu, nu);
        if (ctx.kind == MethodKind::delay_mp) {
            for (int k = 1; k < delays[static_cast<std::size_t>(i)]; ++k)
                weight = weight * ctx.a_hat;
        } else {
            const double s = zeros[static_cast<std::size_t>(i)];
            double sep = kInf;
            for (const Complex& ev : ahat_eigs) sep = std::min(sep, std::abs(ev - Complex{s, 0.0}));
            if (sep < tolerances().pole_zero_collision) {
                std::ostringstream os;
                os << "zero s_" << i + 1 << " = " << s
                   << " collides with an unstable plant pole; the zero-weighting matrix is "
                      "singular and the loop is unstabilizable";
                ctx.collision = os.str();
                ctx.v.emplace_back(Vector::Zero(nu));
                continue;
            }
            Matrix num = Matrix::Identity(nu, nu) - s * ctx.a_hat;
            Matrix den = ctx.a_hat - s * Matrix::Identity(nu, nu);
            weight = den.fullPivLu().solve(num);  // commuting functions of a_hat
        }
        ctx.v.emplace_back(Vector(weight * w_at * bd.col(i)));
    }
    return ctx;
}

GammaObjective eval_objective(const StabilizabilityContext& ctx, const GammaScaling& gamma) {
    gamma.validate();
    if (gamma.gammas.size() != ctx.m)
        fail(ErrorKind::dimension, "gamma scaling size does not match the channel count");
    GammaObjective out;
    out.q = Vector::Zero(ctx.m);
    if (!ctx.collision.empty()) {
        out.mu = kInf;
        out.diagnosis = ctx.collision;
        return out;
    }
    if (ctx.a_hat.rows() == 0) return out;  // no unstable dynamics: mu = 0

    Matrix x = solve_dare(ctx.m_in.a, ctx.m_in.b, ctx.m_in.c, ctx.m_in.d, gamma.diagonal());
    double mu = 0.0;
    for (int i = 0; i < ctx.m; ++i) {
        const Vector& vi = ctx.v[static_cast<std::size_t>(i)];
        out.q(i) = vi.dot(x * vi);
        mu = std::max(mu, out.q(i) / gamma.gammas(i));
    }
    out.mu = mu;
    return out;
}

// ---------------------------------------------------------------------------
// Derivative-free minimization over log-scalings
// ---------------------------------------------------------------------------

struct Minimizer {
    std::function<double(const Vector&)> f;
    int evals = 0;

    double operator()(const Vector& x) {
        ++evals;
        return f(x);
    }
};

double golden_section(Minimizer& fn, Vector& x, int coord, double lo, double hi, int iters) {
    const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = lo, b = hi;
    double c = b - gr * (b - a);
    double d = a + gr * (b - a);
    auto eval_at = [&](double t) {
        Vector y = x;
        y(coord) = t;
        return fn(y);
    };
    double fc = eval_at(c), fd = eval_at(d);
    for (int it = 0; it < iters && (b - a) > 1e-12; ++it) {
        if (fc < fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - gr * (b - a);
            fc = eval_at(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + gr * (b - a);
            fd = eval_at(d);
        }
    }
    const double best = fc < fd ? c : d;
    x(coord) = best;
    return std::min(fc, fd);
}

struct NelderMeadResult {
    Vector x;
    double fx = kInf;
    bool converged = false;
};

NelderMeadResult nelder_mead(Minimizer& fn, const Vector& start, double step, int max_iter) {
    const int n = static_cast<int>(start.size());
    std::vector<Vector> pts(static_cast<std::size_t>(n) + 1, start);
    std::vector<double> vals(static_cast<std::size_t>(n) + 1);
    for (int i = 1; i <= n; ++i) pts[static_cast<std::size_t>(i)](i - 1) += step;
    for (std::size_t i = 0; i < pts.size(); ++i) vals[i] = fn(pts[i]);

    auto order = [&] {
        std::vector<std::size_t> idx(pts.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
            return vals[a] < vals[b];
        });
        std::vector<Vector> p2;
        std::vector<double> v2;
        for (std::size_t i : idx) {
            p2.push_back(pts[i]);
            v2.push_back(vals[i]);
        }
        pts = std::move(p2);
        vals = std::move(v2);
    };

    NelderMeadResult res;
    for (int it = 0; it < max_iter; ++it) {
        order();
        if (std::abs(vals.back() - vals.front()) <=
            1e-12 * (1.0 + std::abs(vals.front()))) {
            res.converged = true;
            break;
        }
        Vector centroid = Vector::Zero(n);
        for (int i = 0; i < n; ++i) centroid += pts[static_cast<std::size_t>(i)];
        centroid /= n;
        Vector worst = pts.back();
        Vector refl = centroid + (centroid - worst);
        double frefl = fn(refl);
        if (frefl < vals.front()) {
            Vector expand = centroid + 2.0 * (centroid - worst);
            double fexp = fn(expand);
            if (fexp < frefl) {
                pts.back() = expand;
                vals.back() = fexp;
            } else {
                pts.back() = refl;
                vals.back() = frefl;
            }
        } else if (frefl < vals[vals.size() - 2]) {
            pts.back() = refl;
            vals.back() = frefl;
        } else {
            Vector contract = centroid + 0.5 * (worst - centroid);
            double fcon = fn(contract);
            if (fcon < vals.back()) {
                pts.back() = contract;
                vals.back() = fcon;
            } else {
                for (std::size_t i = 1; i < pts.size(); ++i) {
                    pts[i] = pts.front() + 0.5 * (pts[i] - pts.front());
                    vals[i] = fn(pts[i]);
                }
            }
        }
    }
    order();
    res.x = pts.front();
    res.fx = vals.front();
    return res;
}

GammaScaling gamma_from_log(const Vector& xi) {
    Vector g(xi.size() + 1);
    g(0) = 1.0;
    for (int i = 0; i < xi.size(); ++i) g(i + 1) = std::exp(std::clamp(xi(i), -40.0, 40.0));
    return {g};
}

}  // namespace

// ---------------------------------------------------------------------------
// Public stabilizability operations
// ---------------------------------------------------------------------------

GammaObjective gamma_objective(const PlantFamily& family,
                               const std::vector<ChannelStatistics>& channels,
                               const GammaScaling& gamma) {
    StabilizabilityContext ctx = build_context(family, channels);
    return eval_objective(ctx, gamma);
}

StabilizabilityReport optimize_gamma(const PlantFamily& family,
                                     const std::vector<ChannelStatistics>& channels) {
    StabilizabilityContext ctx = build_context(family, channels);
    StabilizabilityReport report;
    report.method = method_name(ctx.kind);

    if (ctx.m == 1 || ctx.a_hat.rows() == 0 || !ctx.collision.empty()) {
        GammaObjective obj = eval_objective(ctx, GammaScaling::ones(ctx.m));
        report.rho_min = obj.mu;
        report.gamma_star = GammaScaling::ones(ctx.m);
        report.per_channel_q = obj.q;
        report.stabilizable = obj.mu < 1.0;
        report.optimizer_trace.push_back({1, obj.mu, "direct"});
        return report;
    }

    Minimizer fn;
    // Solver breakdown at extreme trial scalings counts as an infinite
    // objective rather than aborting the search.
    fn.f = [&](const Vector& xi) {
        try {
            return eval_objective(ctx, gamma_from_log(xi)).mu;
        } catch (const Error&) {
            return kInf;
        }
    };

    const int dim = ctx.m - 1;
    if (dim == 1) {
        // One free scaling: a global coarse scan over log-space followed by a
        // golden-section refinement is both cheaper and more reliable than
        // multistart descent.
        double best_xi = 0.0, best = kInf;
        for (int k = 0; k <= 40; ++k) {
            Vector x(1);
            x << -16.0 + 0.8 * k;
            const double v = fn(x);
            if (v < best) {
                best = v;
                best_xi = x(0);
            }
        }
        report.optimizer_trace.push_back({fn.evals, best, "scan"});
        Vector x(1);
        x << best_xi;
        golden_section(fn, x, 0, best_xi - 1.2, best_xi + 1.2, 90);
        GammaScaling gstar = gamma_from_log(x);
        GammaObjective obj = eval_objective(ctx, gstar);
        if (obj.mu > best) {  // keep the scan point if refinement regressed
            x << best_xi;
            gstar = gamma_from_log(x);
            obj = eval_objective(ctx, gstar);
        }
        report.rho_min = obj.mu;
        report.gamma_star = gstar;
        report.per_channel_q = obj.q;
        report.stabilizable = obj.mu < 1.0;
        report.optimizer_trace.push_back({fn.evals, obj.mu, "golden"});
        return report;
    }

    std::vector<Vector> starts;
    starts.push_back(Vector::Zero(dim));
    starts.push_back(Vector::Constant(dim, 2.0));
    starts.push_back(Vector::Constant(dim, -2.0));
    Vector alt(dim);
    for (int i = 0; i < dim; ++i) alt(i) = (i % 2 == 0) ? 4.0 : -4.0;
    starts.push_back(alt);
    starts.push_back(-alt);
    std::mt19937 gen(9001);
    std::normal_distribution<double> dist(0.0, 3.0);
    while (starts.size() < 8) {
        Vector r(dim);
        for (int i = 0; i < dim; ++i) r(i) = dist(gen);
        starts.push_back(r);
    }

    Vector best_x = starts.front();
    double best_mu = kInf;
    bool converged = false;
    for (std::size_t si = 0; si < starts.size(); ++si) {
        Vector x = starts[si];
        double val = fn(x);
        // coordinate descent with a golden-section line search
        for (int round = 0; round < 4; ++round) {
            for (int coord = 0; coord < dim; ++coord)
                val = golden_section(fn, x, coord, x(coord) - 8.0, x(coord) + 8.0, 60);
        }
        NelderMeadResult nm = nelder_mead(fn, x, 0.25, 300);
        if (nm.fx < val) {
            x = nm.x;
            val = nm.fx;
        }
        if (val < best_mu) {
            best_mu = val;
            best_x = x;
            converged = nm.converged;
        }
        report.optimizer_trace.push_back({fn.evals, best_mu, "start-" + std::to_string(si)});
    }

    GammaScaling gstar = gamma_from_log(best_x);
    GammaObjective obj = eval_objective(ctx, gstar);
    report.rho_min = obj.mu;
    report.gamma_star = gstar;
    report.per_channel_q = obj.q;
    report.stabilizable = obj.mu < 1.0;
    report.optimizer_converged = converged;
    report.optimizer_trace.push_back({fn.evals, obj.mu, "final"});
    return report;
}

bool rho_min_lyapunov_form(const PlantFamily& family,
                           const std::vector<ChannelStatistics>& channels,
                           const GammaScaling& gamma, double mu) {
    StabilizabilityContext ctx = build_context(family, channels);
    gamma.validate();
    if (gamma.gammas.size() != ctx.m)
        fail(ErrorKind::dimension, "gamma scaling size does not match the channel count");
    if (!(mu > 0.0)) return false;
    if (!ctx.collision.empty()) return false;
    const Eigen::Index nu = ctx.a_hat.rows();
    if (nu == 0) return true;

    // X_i = Ahat X_i Ahat' - (BD e_i)(BD e_i)'; trivial (zero) when the
    // channel direction misses the unstable subspace.
    std::vector<Matrix> xs;
    for (int i = 0; i < ctx.m; ++i) {
        Matrix rhs = -ctx.bd_col[static_cast<std::size_t>(i)] *
                     ctx.bd_col[static_cast<std::size_t>(i)].transpose();
        xs.push_back(solve_discrete_lyapunov(ctx.a_hat, rhs, LyapunovForm::forward));
    }
    // The feasibility scalings act reciprocally to the quadratic-form weights.
    Vector gp(ctx.m);
    for (int i = 0; i < ctx.m; ++i) gp(i) = 1.0 / gamma.gammas(i);
    Matrix lhs = Matrix::Zero(nu, nu);
    for (int i = 0; i < ctx.m; ++i) lhs += gp(i) * xs[static_cast<std::size_t>(i)];
    for (int i = 0; i < ctx.m; ++i) {
        const Vector& vi = ctx.v[static_cast<std::size_t>(i)];
        Matrix test = lhs - (gp(i) / mu) * vi * vi.transpose();
        if (!(min_eig_sym(test) > 0.0)) return false;
    }
    return true;
}

std::vector<bool> sufficient_check_diagonal(const std::vector<StateSpaceModel>& diag_inners,
                                            const std::vector<double>& zeros,
                                            const std::vector<ChannelStatistics>& channels) {
    if (diag_inners.size() != zeros.size() || diag_inners.size() != channels.size())
        fail(ErrorKind::dimension, "sufficient check: one inner, zero, and channel per loop input");
    std::vector<bool> flags;
    for (std::size_t i = 0; i < diag_inners.size(); ++i) {
        const StateSpaceModel& mii = diag_inners[i];
        if (mii.inputs() != 1 || mii.outputs() != 1)
            fail(ErrorKind::dimension, "sufficient check: diagonal inners must be scalar");
        const Eigen::Index n = mii.a.rows();
        // Balanced realization required: the compound block must be orthogonal.
        Matrix compound(n + 1, n + 1);
        compound.topLeftCorner(n, n) = mii.a;
        compound.topRightCorner(n, 1) = mii.b;
        compound.bottomLeftCorner(1, n) = mii.c;
        compound(n, n) = mii.d(0, 0);
        if ((compound * compound.transpose() - Matrix::Identity(n + 1, n + 1))
                .cwiseAbs()
                .maxCoeff() > 1e-9)
            fail(ErrorKind::structural,
                 "sufficient check: realization is not balanced; rebuild it with "
                 "blaschke_inner_balanced");
        if (std::abs(zeros[i]) <= 1.0)
            fail(ErrorKind::domain, "sufficient check: zeros must lie outside the unit circle");

        const auto& ch = channels[i];
        if (n == 0 || ch.is_null()) {
            flags.push_back(true);  // no unstable dynamics or vanishing uncertainty
            continue;
        }
        Matrix x = mii.a.transpose().fullPivLu().inverse();  // A^{-T}
        const double s = zeros[i];
        Matrix num = Matrix::Identity(n, n) - s * x;
        Matrix den = x - s * Matrix::Identity(n, n);
        Matrix nbar = den.fullPivLu().solve(num);
        Vector v = nbar * mii.b / mii.d(0, 0);
        Matrix winv = eval_rational_at_matrix(ch.nominal(), ch.phi, x);  // W^{-1}(A^{-T})
        Matrix diff = winv * winv.transpose() - v * v.transpose();
        flags.push_back(is_positive_definite(diff));
    }
    return flags;
}

StateSpaceModel blaschke_inner_balanced(const std::vector<double>& poles) {
    StateSpaceModel g = StateSpaceModel::gain(Matrix::Ones(1, 1));
    for (double lam : poles) {
        if (std::abs(lam) <= 1.0)
            fail(ErrorKind::domain, "blaschke_inner_balanced: |pole| must exceed one");
        const double gpart = std::sqrt(1.0 - 1.0 / (lam * lam));
        Matrix a(1, 1), b(1, 1), c(1, 1), d(1, 1);
        a << 1.0 / lam;
        b << gpart;
        c << gpart;
        d << -1.0 / lam;
        g = series(StateSpaceModel{a, b, c, d}, g);
    }
    const Eigen::Index n = g.a.rows();
    Matrix compound(n + 1, n + 1);
    compound.topLeftCorner(n, n) = g.a;
    compound.topRightCorner(n, 1) = g.b;
    compound.bottomLeftCorner(1, n) = g.c;
    compound(n, n) = g.d(0, 0);
    if ((compound * compound.transpose() - Matrix::Identity(n + 1, n + 1)).cwiseAbs().maxCoeff() >
        1e-10)
        fail(ErrorKind::convergence, "blaschke_inner_balanced: balance identity violated");
    if (inner_identity_defect(g) > 1e-10)
        fail(ErrorKind::convergence, "blaschke_inner_balanced: all-pass identity violated");
    return g;
}

// ---------------------------------------------------------------------------
// Controller synthesis
// ---------------------------------------------------------------------------

namespace {

GeneralMp as_general_mp(const PlantFamily& family) {
    if (const auto* mp = std::get_if<GeneralMp>(&family)) return *mp;
    if (const auto* ex = std::get_if<ExampleFamily>(&family)) {
        if (!ex->minimum_phase())
            fail(ErrorKind::scope,
                 "controller synthesis supports the minimum-phase-with-delays family only");
        GeneralMp mp;
        mp.ss = minimal_realization(TransferMatrix(example_family_grid(*ex, false)).ss());
        mp.delays = {ex->tau1, ex->tau2};
        return mp;
    }
    fail(ErrorKind::scope,
         "controller synthesis supports the minimum-phase-with-delays family only");
}

}  // namespace

TransferMatrix synthesize_controller(const PlantFamily& family,
                                     const std::vector<ChannelStatistics>& channels,
                                     const GammaScaling& gamma) {
    GeneralMp mp = as_general_mp(family);
    const int m = mp.ss.inputs();
    if (mp.ss.outputs() != m)
        fail(ErrorKind::scope, "controller synthesis requires a square plant");
    if (static_cast<int>(channels.size()) != m)
        fail(ErrorKind::dimension, "channel count does not match the plant");
    gamma.validate();
    if (gamma.gammas.size() != m)
        fail(ErrorKind::dimension, "gamma scaling size does not match the channel count");
    check_channel_usability(channels);

    StateSpaceModel plant = family_plant(PlantFamily{mp});
    StateSpaceModel loop = minimal_realization(series(plant, nominal_channel_model(channels)));
    CoprimeQuadruple quad = coprime_factorize(loop);
    InnerOuter io = inner_outer_factorize(quad.m);

    Matrix gmat = gamma.diagonal();
    Matrix gh = spd_sqrt(gmat);
    Matrix ghi = gh.fullPivLu().inverse();
    StateSpaceModel gin = gamma_inner(io.inner, gmat);
    StateSpaceModel ginv = gamma_inner_inverse(gin);
    StateSpaceModel mout_head = gamma_inner_outer_part(io.inner, gmat);

    // N_tilde carries the input delays; strip them to obtain its outer part.
    const StateSpaceModel nt = quad.n_tilde.ss();
    if (nt.d.cwiseAbs().maxCoeff() > 0.0)
        fail(ErrorKind::structural, "synthesis: loop plant must be strictly proper");
    const Eigen::Index nl = nt.a.rows();
    Matrix bout(nl, m), dout(m, m);
    const double markov_scale =
        1.0 + nt.c.cwiseAbs().maxCoeff() * nt.b.cwiseAbs().maxCoeff();
    for (int i = 0; i < m; ++i) {
        const int tau = mp.delays[static_cast<std::size_t>(i)];
        Matrix apow = Matrix::Identity(nl, nl);
        for (int k = 0; k + 1 < tau; ++k) {
            Matrix markov = nt.c * apow * nt.b.col(i);
            if (markov.cwiseAbs().maxCoeff() > 1e-8 * markov_scale)
                fail(ErrorKind::scope,
                     "declared input delays are inconsistent with the plant family");
            apow = apow * nt.a;
        }
        dout.col(i) = nt.c * apow * nt.b.col(i);
        bout.col(i) = nt.a * apow * nt.b.col(i);
    }
    StateSpaceModel n_out{nt.a, bout, nt.c, dout};
    Eigen::FullPivLU<Matrix> dlu(dout);
    dlu.setThreshold(1e-12);
    if (!dlu.isInvertible())
        fail(ErrorKind::structural, "synthesis: delay-free numerator is not biproper");
    StateSpaceModel n_out_inv = inverse(n_out);
    if (!n_out_inv.is_stable())
        fail(ErrorKind::structural,
             "synthesis: the delay-free numerator is not invertible in RH-infinity "
             "(plant not minimum phase)");

    // Diagonal W and its right inverse (zero column on exact channels).
    StateSpaceModel w_diag = TransferMatrix::scalar(channels[0].w_rational()).ss();
    StateSpaceModel w_dag =
        channels[0].is_null()
            ? StateSpaceModel::gain(Matrix::Zero(1, 1))
            : TransferMatrix::scalar(RationalFn::from_zinv_ratio(channels[0].nominal(),
                                                                 channels[0].phi))
                  .ss();
    for (int i = 1; i < m; ++i) {
        w_diag = block_diag(w_diag, TransferMatrix::scalar(channels[static_cast<std::size_t>(i)]
                                                               .w_rational())
                                        .ss());
        w_dag = block_diag(
            w_dag, channels[static_cast<std::size_t>(i)].is_null()
                       ? StateSpaceModel::gain(Matrix::Zero(1, 1))
                       : TransferMatrix::scalar(
                             RationalFn::from_zinv_ratio(
                                 channels[static_cast<std::size_t>(i)].nominal(),
                                 channels[static_cast<std::size_t>(i)].phi))
                             .ss());
    }

    // L = stable part of M_gin^{-1} (Gamma^{1/2} U N_out Gamma^{-1/2}) W.
    StateSpaceModel chain = minimal_realization(
        series(left_multiply(gh, quad.u.ss()), series(n_out, left_multiply(ghi, w_diag))));
    StateSpaceModel lbar = stable_projection_of_product(ginv, chain);

    StateSpaceModel m_gout = series(mout_head, right_multiply(io.outer.ss(), ghi));
    StateSpaceModel n_gout = left_multiply(gh, right_multiply(n_out, ghi));

    StateSpaceModel q_gamma = scale(
        series(inverse(m_gout), series(lbar, series(w_dag, inverse(n_gout)))), -1.0);
    StateSpaceModel q = minimal_realization(right_multiply(left_multiply(ghi, q_gamma), gh));
    if (!q.is_stable())
        fail(ErrorKind::convergence, "synthesis produced an unstable Youla parameter");

    StateSpaceModel knum = add(quad.u.ss(), series(quad.m.ss(), q));
    StateSpaceModel kden = subtract(quad.v.ss(), series(quad.n.ss(), q));
    StateSpaceModel k = minimal_realization(series(knum, inverse(kden)));

    // The controller must internally stabilize the nominal loop.
    LoopDescription check;
    check.plant = TransferMatrix(plant);
    check.controller = TransferMatrix(k);
    check.channels = channels;
    check.noise_variance = Vector::Ones(m);
    if (!build_complementary_sensitivity(check).loop_state.is_stable())
        fail(ErrorKind::convergence, "synthesized controller failed the internal stability check");
    return TransferMatrix(k);
}

// ---------------------------------------------------------------------------
// Closed forms for the example family
// ---------------------------------------------------------------------------

namespace {
double zero_ratio(double lambda, double s) { return (lambda - s) / (1.0 - s * lambda); }
}  // namespace

double example_closed_form_margin_linear(const ExampleClosedFormInput& in) {
    const double r0 = (1.0 - in.p0) / in.p0;
    const double r1 = (1.0 - in.p1) / in.p1;
    const double n1 = zero_ratio(in.lambda, in.s1);
    const double n2 = zero_ratio(in.lambda, in.s2);
    const double mix = (in.lambda - in.alpha / r0) / (in.lambda - in.alpha);
    return n1 * r0 * mix * mix + n2 * r1 - (in.lambda * in.lambda - 1.0);
}

double example_closed_form_margin_squared(const ExampleClosedFormInput& in) {
    const double r0 = (1.0 - in.p0) / in.p0;
    const double r1 = (1.0 - in.p1) / in.p1;
    const double n1 = zero_ratio(in.lambda, in.s1);
    const double n2 = zero_ratio(in.lambda, in.s2);
    const double mix = (in.lambda + in.alpha / r0) / (in.lambda - in.alpha);
    return n1 * n1 * r0 * mix * mix + n2 * n2 * r1 - (in.lambda * in.lambda - 1.0);
}

double single_pole_rho_min(double lambda, const std::vector<double>& channel_weights_sq) {
    (void)lambda;
    double acc = 0.0;
    for (double c2 : channel_weights_sq) {
        if (c2 <= 0.0) return 0.0;  // an exact channel removes the constraint
        acc += 1.0 / c2;
    }
    return acc > 0.0 ? 1.0 / acc : kInf;
}

}  // namespace meansq
