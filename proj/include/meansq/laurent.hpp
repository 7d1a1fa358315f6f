#pragma once

#include <complex>
#include <vector>

namespace meansq {

// Finite two-sided real coefficient sequence in powers of z.
// Coefficients run over powers lo .. lo+size-1; the stored ends are nonzero
// except for the zero polynomial (lo = 0, empty coefficient list).
class LaurentPoly {
public:
    LaurentPoly() = default;
    LaurentPoly(int lo, std::vector<double> coeffs);

    static LaurentPoly constant(double c);
    // c[j] multiplies z^{-j}; the usual container for FIR channel data.
    static LaurentPoly from_zinv(const std::vector<double>& c);
    // c[j] multiplies z^{+j}; plain polynomial in z.
    static LaurentPoly from_z(const std::vector<double>& c);

    [[nodiscard]] bool is_zero() const { return c_.empty(); }
    [[nodiscard]] int lo() const { return lo_; }
    [[nodiscard]] int hi() const { return lo_ + static_cast<int>(c_.size()) - 1; }
    [[nodiscard]] int size() const { return static_cast<int>(c_.size()); }
    [[nodiscard]] double coeff(int power) const;
    [[nodiscard]] const std::vector<double>& coeffs() const { return c_; }

    // Coefficient of z^{-j}.
    [[nodiscard]] double zinv_coeff(int j) const { return coeff(-j); }

    // p~(z) = p(z^{-1}); for scalars the adjoint is coefficient reversal.
    [[nodiscard]] LaurentPoly adjoint() const;
    // Multiplication by z^k.
    [[nodiscard]] LaurentPoly shifted(int k) const;

    [[nodiscard]] std::complex<double> eval(std::complex<double> z) const;
    [[nodiscard]] double max_abs_coeff() const;

    friend LaurentPoly operator+(const LaurentPoly& a, const LaurentPoly& b);
    friend LaurentPoly operator-(const LaurentPoly& a, const LaurentPoly& b);
    friend LaurentPoly operator*(const LaurentPoly& a, const LaurentPoly& b);
    friend LaurentPoly operator*(double s, const LaurentPoly& p);

private:
    void trim();

    int lo_ = 0;
    std::vector<double> c_;
};

// Max |a-b| over all coefficients.
double coeff_distance(const LaurentPoly& a, const LaurentPoly& b);

}  // namespace meansq
