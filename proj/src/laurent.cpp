#include "meansq/laurent.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

namespace meansq {

namespace {
constexpr double kTrimEps = 0.0;  // exact zeros only; callers decide rounding
}

LaurentPoly::LaurentPoly(int lo, std::vector<double> coeffs) : lo_(lo), c_(std::move(coeffs)) {
    trim();
}

LaurentPoly LaurentPoly::constant(double c) { return LaurentPoly(0, {c}); }

LaurentPoly LaurentPoly::from_zinv(const std::vector<double>& c) {
    std::vector<double> rev(c.rbegin(), c.rend());
    return LaurentPoly(-(static_cast<int>(c.size()) - 1), std::move(rev));
}

LaurentPoly LaurentPoly::from_z(const std::vector<double>& c) { return LaurentPoly(0, c); }

void LaurentPoly::trim() {
    std::size_t beg = 0;
    while (beg < c_.size() && std::abs(c_[beg]) <= kTrimEps) ++beg;
    std::size_t end = c_.size();
    while (end > beg && std::abs(c_[end - 1]) <= kTrimEps) --end;
    if (beg == end) {
        lo_ = 0;
        c_.clear();
        return;
    }
    lo_ += static_cast<int>(beg);
    c_ = std::vector<double>(c_.begin() + static_cast<long>(beg), c_.begin() + static_cast<long>(end));
}

double LaurentPoly::coeff(int power) const {
    if (c_.empty() || power < lo_ || power > hi()) return 0.0;
    return c_[static_cast<std::size_t>(power - lo_)];
}

LaurentPoly LaurentPoly::adjoint() const {
    if (is_zero()) return {};
    std::vector<double> rev(c_.rbegin(), c_.rend());
    return LaurentPoly(-hi(), std::move(rev));
}

LaurentPoly LaurentPoly::shifted(int k) const {
    if (is_zero()) return {};
    return LaurentPoly(lo_ + k, c_);
}

std::complex<double> LaurentPoly::eval(std::complex<double> z) const {
    if (is_zero()) return {0.0, 0.0};
    // Horner over the ascending coefficients, then the z^{lo} prefactor.
    std::complex<double> acc{0.0, 0.0};
    for (auto it = c_.rbegin(); it != c_.rend(); ++it) acc = acc * z + *it;
    return acc * std::pow(z, lo_);
}

double LaurentPoly::max_abs_coeff() const {
    double m = 0.0;
    for (double v : c_) m = std::max(m, std::abs(v));
    return m;
}

LaurentPoly operator+(const LaurentPoly& a, const LaurentPoly& b) {
    if (a.is_zero()) return b;
    if (b.is_zero()) return a;
    int lo = std::min(a.lo(), b.lo());
    int hi = std::max(a.hi(), b.hi());
    std::vector<double> c(static_cast<std::size_t>(hi - lo + 1), 0.0);
    for (int p = lo; p <= hi; ++p) c[static_cast<std::size_t>(p - lo)] = a.coeff(p) + b.coeff(p);
    return LaurentPoly(lo, std::move(c));
}

LaurentPoly operator-(const LaurentPoly& a, const LaurentPoly& b) { return a + (-1.0) * b; }

LaurentPoly operator*(const LaurentPoly& a, const LaurentPoly& b) {
    if (a.is_zero() || b.is_zero()) return {};
    std::vector<double> c(static_cast<std::size_t>(a.size() + b.size() - 1), 0.0);
    for (int i = 0; i < a.size(); ++i)
        for (int j = 0; j < b.size(); ++j)
            c[static_cast<std::size_t>(i + j)] += a.coeffs()[static_cast<std::size_t>(i)] *
                                                  b.coeffs()[static_cast<std::size_t>(j)];
    return LaurentPoly(a.lo() + b.lo(), std::move(c));
}

LaurentPoly operator*(double s, const LaurentPoly& p) {
    if (s == 0.0 || p.is_zero()) return {};
    std::vector<double> c = p.coeffs();
    for (double& v : c) v *= s;
    return LaurentPoly(p.lo(), std::move(c));
}

double coeff_distance(const LaurentPoly& a, const LaurentPoly& b) {
    return (a - b).max_abs_coeff();
}

}  // namespace meansq
