#pragma once

#include <complex>
#include <string>

#include <gmpxx.h>

namespace twistlab {

using Rational = mpq_class;

// Exact complex rational re + i*im.
struct CRational {
    Rational re;
    Rational im;

    CRational() : re(0), im(0) {}
    CRational(long v) : re(v), im(0) {}
    CRational(const Rational& r) : re(r), im(0) {}
    CRational(Rational r, Rational i) : re(std::move(r)), im(std::move(i)) {}

    static CRational i() { return {Rational(0), Rational(1)}; }

    bool is_zero() const { return sgn(re) == 0 && sgn(im) == 0; }
    CRational conj() const { return {re, -im}; }
    Rational norm2() const { return re * re + im * im; }

    CRational& operator+=(const CRational& o) {
        re += o.re;
        im += o.im;
        return *this;
    }
    CRational& operator-=(const CRational& o) {
        re -= o.re;
        im -= o.im;
        return *this;
    }
    CRational& operator*=(const CRational& o);
    CRational& operator/=(const CRational& o);

    std::complex<double> to_complex() const { return {re.get_d(), im.get_d()}; }
    std::string str() const;
};

CRational operator+(CRational a, const CRational& b);
CRational operator-(CRational a, const CRational& b);
CRational operator-(const CRational& a);
CRational operator*(const CRational& a, const CRational& b);
CRational operator/(CRational a, const CRational& b);
bool operator==(const CRational& a, const CRational& b);
inline bool operator!=(const CRational& a, const CRational& b) { return !(a == b); }

// Rational literal helper: q(1, 2) == 1/2.
Rational q(long num, long den = 1);

// Closest rational with denominator at most max_den (continued fractions).
Rational rationalize(double x, long max_den = 1000000);

// "num/den" for both parts, written as "re:im".
std::string format_rational(const Rational& r);
Rational parse_rational(const std::string& s);
CRational parse_crational(const std::string& s);

}  // namespace twistlab
