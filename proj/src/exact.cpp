#include "twistlab/exact.hpp"

#include <cmath>
#include <stdexcept>

namespace twistlab {

CRational& CRational::operator*=(const CRational& o) {
    Rational r = re * o.re - im * o.im;
    Rational i = re * o.im + im * o.re;
    re = std::move(r);
    im = std::move(i);
    return *this;
}

CRational& CRational::operator/=(const CRational& o) {
    Rational d = o.norm2();
    if (sgn(d) == 0) throw std::domain_error("division by zero");
    Rational r = (re * o.re + im * o.im) / d;
    Rational i = (im * o.re - re * o.im) / d;
    re = std::move(r);
    im = std::move(i);
    return *this;
}

CRational operator+(CRational a, const CRational& b) { return a += b; }
CRational operator-(CRational a, const CRational& b) { return a -= b; }
CRational operator-(const CRational& a) { return {-a.re, -a.im}; }
CRational operator*(const CRational& a, const CRational& b) {
    CRational r = a;
    r *= b;
    return r;
}
CRational operator/(CRational a, const CRational& b) { return a /= b; }

bool operator==(const CRational& a, const CRational& b) {
    return a.re == b.re && a.im == b.im;
}

Rational q(long num, long den) {
    Rational r(num, den);
    r.canonicalize();
    return r;
}

Rational rationalize(double x, long max_den) {
    if (!std::isfinite(x)) throw std::domain_error("rationalize: non-finite value");
    // Stern-Brocot style continued-fraction convergents.
    long sign = x < 0 ? -1 : 1;
    double v = std::fabs(x);
    mpz_class h0 = 0, h1 = 1, k0 = 1, k1 = 0;
    double rem = v;
    for (int iter = 0; iter < 64; ++iter) {
        double a = std::floor(rem);
        mpz_class ai = static_cast<long>(a);
        mpz_class h2 = ai * h1 + h0;
        mpz_class k2 = ai * k1 + k0;
        if (k2 > max_den) break;
        h0 = h1;
        h1 = h2;
        k0 = k1;
        k1 = k2;
        double frac = rem - a;
        if (frac < 1e-15) break;
        rem = 1.0 / frac;
    }
    Rational r(h1 * sign, k1);
    r.canonicalize();
    return r;
}

std::string format_rational(const Rational& r) {
    return r.get_num().get_str() + "/" + r.get_den().get_str();
}

std::string CRational::str() const { return format_rational(re) + ":" + format_rational(im); }

Rational parse_rational(const std::string& s) {
    Rational r;
    if (r.set_str(s, 10) != 0) throw std::invalid_argument("bad rational: " + s);
    if (r.get_den() == 0) throw std::invalid_argument("zero denominator: " + s);
    r.canonicalize();
    return r;
}

CRational parse_crational(const std::string& s) {
    auto colon = s.find(':');
    if (colon == std::string::npos) return CRational(parse_rational(s));
    return {parse_rational(s.substr(0, colon)), parse_rational(s.substr(colon + 1))};
}

}  // namespace twistlab
