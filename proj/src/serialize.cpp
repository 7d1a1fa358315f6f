#include "meansq/serialize.hpp"

#include <algorithm>
#include <cmath>

#include "meansq/errors.hpp"

namespace meansq {

namespace {

double number_at(const Json& j, const std::string& where) {
    if (!j.is_number()) fail(ErrorKind::schema, where + ": expected a number");
    return j.get<double>();
}

}  // namespace

Json to_json(const Matrix& m) {
    Json rows = Json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        Json row = Json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

Json to_json(const Vector& v) {
    Json arr = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
    return arr;
}

Matrix matrix_from_json(const Json& j, const std::string& where) {
    if (!j.is_array() || j.empty() || !j.front().is_array())
        fail(ErrorKind::schema, where + ": expected an array of row arrays");
    const std::size_t cols = j.front().size();
    Matrix m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(cols));
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_array() || j[i].size() != cols)
            fail(ErrorKind::schema, where + ": ragged matrix rows");
        for (std::size_t c = 0; c < cols; ++c)
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) =
                number_at(j[i][c], where);
    }
    return m;
}

Vector vector_from_json(const Json& j, const std::string& where) {
    if (!j.is_array()) fail(ErrorKind::schema, where + ": expected an array");
    Vector v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i)
        v(static_cast<Eigen::Index>(i)) = number_at(j[i], where);
    return v;
}

Json to_json(const LaurentPoly& p) {
    Json j;
    j["lo"] = p.lo();
    j["coeffs"] = p.coeffs();
    return j;
}

LaurentPoly laurent_from_json(const Json& j, const std::string& where) {
    reject_unknown_keys(j, {"lo", "coeffs"}, where);
    if (!j.contains("lo") || !j.contains("coeffs"))
        fail(ErrorKind::schema, where + ": polynomial needs 'lo' and 'coeffs'");
    std::vector<double> c;
    for (const auto& x : j.at("coeffs")) c.push_back(number_at(x, where));
    return LaurentPoly(j.at("lo").get<int>(), std::move(c));
}

Json to_json(const RationalFn& f) {
    Json j;
    j["num"] = to_json(f.num);
    j["den"] = to_json(f.den);
    return j;
}

Json to_json(const StateSpaceModel& ss) {
    Json j;
    j["a"] = to_json(ss.a);
    j["b"] = to_json(ss.b);
    j["c"] = to_json(ss.c);
    j["d"] = to_json(ss.d);
    return j;
}

StateSpaceModel state_space_from_json(const Json& j, const std::string& where) {
    for (const char* key : {"a", "b", "c", "d"})
        if (!j.contains(key)) fail(ErrorKind::schema, where + ": state space needs '" + key + "'");
    // The D block fixes the input/output counts; A may be an empty array for
    // a static gain.
    Matrix d = matrix_from_json(j.at("d"), where + ".d");
    auto block = [&](const char* key, Eigen::Index rows, Eigen::Index cols) {
        const Json& val = j.at(key);
        if (val.is_array() && val.empty()) return Matrix(rows, cols);
        Matrix m = matrix_from_json(val, where + "." + key);
        return m;
    };
    Matrix a = j.at("a").is_array() && j.at("a").empty() ? Matrix(0, 0)
                                                         : matrix_from_json(j.at("a"), where + ".a");
    Matrix b = block("b", a.rows(), d.cols());
    Matrix c = block("c", d.rows(), a.rows());
    if (b.rows() != a.rows() || b.cols() != d.cols() || c.rows() != d.rows() || c.cols() != a.rows())
        fail(ErrorKind::schema, where + ": state-space blocks are not conformable");
    return {a, b, c, d};
}

Json to_json(const ChannelStatistics& st) {
    Json j;
    j["mu"] = to_json(st.mu);
    j["r"] = to_json(st.r);
    j["esd"] = to_json(st.esd);
    j["phi"] = to_json(st.phi);
    j["w"] = to_json(st.w_rational());
    j["phi_boundary_root"] = st.phi_boundary_root;
    j["w_invertible"] = st.w_invertible;
    return j;
}

Json to_json(const StabilityReport& report) {
    Json j;
    j["report"] = "stability";
    j["nominal_stable"] = report.nominal_stable;
    j["ms_stable"] = report.ms_stable;
    if (report.nominal_stable) {
        j["rho"] = report.rho;
        j["t_hat_w"] = to_json(report.t_hat_w);
        j["g_hat"] = to_json(report.g_hat);
    } else {
        j["rho"] = nullptr;
        j["t_hat_w"] = nullptr;
        j["g_hat"] = nullptr;
    }
    j["powers"] = report.powers ? to_json(*report.powers) : Json(nullptr);
    return j;
}

Json to_json(const StabilizabilityReport& report) {
    Json j;
    j["report"] = "stabilizability";
    j["method"] = report.method;
    j["rho_min"] = report.rho_min;
    j["stabilizable"] = report.stabilizable;
    j["gamma_star"] = to_json(report.gamma_star.gammas);
    j["per_channel_q"] = to_json(report.per_channel_q);
    j["optimizer_converged"] = report.optimizer_converged;
    Json trace = Json::array();
    for (const auto& pt : report.optimizer_trace)
        trace.push_back({{"evaluations", pt.evaluations}, {"mu", pt.mu}, {"stage", pt.stage}});
    j["optimizer_trace"] = std::move(trace);
    return j;
}

Json to_json(const SimReport& report) {
    Json j;
    j["report"] = "simulation";
    j["empirical_powers"] = to_json(report.empirical_powers);
    j["power_standard_errors"] = to_json(report.power_standard_errors);
    j["diverged"] = report.diverged;
    j["diverged_trials"] = report.diverged_trials;
    j["burn_in_used"] = report.burn_in_used;
    if (report.cross_corr.size() > 0) {
        j["cross_correlation"] = to_json(report.cross_corr);
        j["cross_correlation_se"] = to_json(report.cross_corr_se);
    }
    if (report.empirical_psd.size() > 0) {
        j["psd"] = {{"frequencies", to_json(report.psd_freqs)},
                    {"estimates", to_json(report.empirical_psd)},
                    {"se", to_json(report.empirical_psd_se)}};
    }
    return j;
}

void reject_unknown_keys(const Json& j, const std::vector<std::string>& allowed,
                         const std::string& where) {
    if (!j.is_object()) fail(ErrorKind::schema, where + ": expected an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
            fail(ErrorKind::schema, where + ": unknown key '" + it.key() + "'");
    }
}

}  // namespace meansq
