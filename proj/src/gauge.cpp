#include "twistlab/gauge.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace twistlab {

double Ramp::value(double t) const {
    if (shape == Constant || t_ramp <= 0.0) return 1.0;
    double u = std::clamp(t / t_ramp, 0.0, 1.0);
    if (shape == C1) return u * u * (3.0 - 2.0 * u);
    return u * u * u * (10.0 + u * (-15.0 + 6.0 * u));
}

double Ramp::rate(double t) const {
    if (shape == Constant || t_ramp <= 0.0 || t < 0.0 || t > t_ramp) return 0.0;
    double u = t / t_ramp;
    if (shape == C1) return 6.0 * u * (1.0 - u) / t_ramp;
    return 30.0 * u * u * (1.0 - u) * (1.0 - u) / t_ramp;
}

GaugeConfig GaugeConfig::zero(int dim) {
    GaugeConfig g;
    g.dim = dim;
    g.a_u1.assign(dim, PhasePoly{});
    g.a_su2.assign(dim, {});
    return g;
}

bool GaugeConfig::is_zero() const {
    for (int mu = 0; mu < dim; ++mu) {
        if (!a_u1[mu].is_zero()) return false;
        for (const auto& a : a_su2[mu])
            if (!a.is_zero()) return false;
    }
    return true;
}

bool GaugeConfig::is_constant() const {
    for (int mu = 0; mu < dim; ++mu) {
        if (a_u1[mu].depends_on_x()) return false;
        for (const auto& a : a_su2[mu])
            if (a.depends_on_x()) return false;
    }
    return true;
}

void GaugeConfig::validate() const {
    if (static_cast<int>(a_u1.size()) != dim || static_cast<int>(a_su2.size()) != dim)
        throw std::invalid_argument("gauge potential count does not match dimension");
    auto check = [](const PhasePoly& p) {
        if (p.depends_on_p()) throw std::invalid_argument("gauge potential depends on momentum");
        for (const auto& [mi, m] : p.terms())
            if (!m.is_scalar()) throw std::invalid_argument("gauge potential must be scalar-valued");
    };
    for (int mu = 0; mu < dim; ++mu) {
        check(a_u1[mu]);
        for (const auto& a : a_su2[mu]) check(a);
    }
}

PhasePoly GaugeConfig::spin(int a) const {
    return PhasePoly::constant(SpinMatrix::pauli(a, CRational(hbar / 2)));
}

PhasePoly GaugeConfig::hat_potential(int mu) const {
    PhasePoly r;
    for (int a = 0; a < 3; ++a) r += sym_mul(a_su2[mu][a], spin(a));
    r -= a_u1[mu] * CRational(Rational(e / q));
    return r;
}

PhasePoly GaugeConfig::kinetic_shift(int mu) const {
    PhasePoly r;
    for (int a = 0; a < 3; ++a) r -= sym_mul(a_su2[mu][a], spin(a)) * CRational(q);
    r += a_u1[mu] * CRational(e);
    return r;
}

namespace {

int levi(int a, int b, int c) {
    if (a == b || b == c || a == c) return 0;
    return ((a + 1) % 3 == b) ? 1 : -1;  // (0,1,2) and cyclic -> +1
}

}  // namespace

FieldStrength field_strength(const GaugeConfig& g) {
    g.validate();
    FieldStrength F;
    F.dim = g.dim;
    F.f.assign(g.dim, std::vector<PhasePoly>(g.dim));
    for (int mu = 0; mu < g.dim; ++mu) {
        for (int nu = 0; nu < g.dim; ++nu) {
            if (mu == nu) continue;
            PhasePoly v = g.hat_potential(nu).derive(Coord::x(mu)) - g.hat_potential(mu).derive(Coord::x(nu));
            for (int a = 0; a < 3; ++a)
                for (int b = 0; b < 3; ++b)
                    for (int c = 0; c < 3; ++c) {
                        int s = levi(a, b, c);
                        if (!s) continue;
                        PhasePoly t = sym_mul(g.spin(a), sym_mul(g.a_su2[mu][b], g.a_su2[nu][c]));
                        v += t * CRational(g.q * s);
                    }
            F.f[mu][nu] = v;
        }
    }
    return F;
}

namespace {

PhaseSeries shift_momenta(const PhaseSeries& f, const GaugeConfig& g, int sign) {
    g.validate();
    if (g.dim != f.dim()) throw std::invalid_argument("gauge/series dimension mismatch");
    std::vector<PhasePoly> shift(g.dim);
    for (int mu = 0; mu < g.dim; ++mu) shift[mu] = g.kinetic_shift(mu) * CRational(sign);
    PhaseSeries out = f;
    PhaseSeries cur = f;
    for (int k = 1;; ++k) {
        PhaseSeries next(f.dim(), f.order());
        for (int j = 0; j <= f.order(); ++j) {
            for (int mu = 0; mu < g.dim; ++mu) {
                if (shift[mu].is_zero()) continue;
                next.coeff(j) += sym_mul(shift[mu], cur.coeff(j).derive(Coord::p(mu)));
            }
            next.coeff(j) *= CRational(q(1, k));
        }
        if (next.is_zero()) break;
        out += next;
        cur = std::move(next);
        if (k > 255) throw std::logic_error("momentum shift failed to terminate");
    }
    return out;
}

}  // namespace

PhaseSeries minimal_substitution(const PhaseSeries& f, const GaugeConfig& g) {
    return shift_momenta(f, g, +1);
}

PhaseSeries inverse_minimal_substitution(const PhaseSeries& f, const GaugeConfig& g) {
    return shift_momenta(f, g, -1);
}

GaugeConfig rashba_dresselhaus_gauge(const Rational& alpha, const Rational& beta, const Rational& m,
                                     const Rational& e, const Rational& q, const Rational& hbar) {
    if (sgn(q) == 0 || sgn(hbar) == 0) throw std::invalid_argument("q and hbar must be nonzero");
    GaugeConfig g = GaugeConfig::zero(3);
    g.e = e;
    g.q = q;
    g.m = m;
    g.hbar = hbar;
    auto k = [&](const Rational& v) { return PhasePoly::constant(SpinMatrix::identity(CRational(v))); };
    const Rational s = 2 * m / (hbar * q);
    // a_su2[mu][a]: mu = 1 (x), 2 (y); a = 0 (x), 1 (y)
    g.a_su2[1][0] = k(-s * beta);
    g.a_su2[1][1] = k(-s * alpha);
    g.a_su2[2][0] = k(s * alpha);
    g.a_su2[2][1] = k(s * beta);
    if (sgn(alpha) != 0 || sgn(beta) != 0) g.a_u1[0] = k(rashba_dresselhaus_a0(alpha, beta, m, e));
    return g;
}

Rational rashba_dresselhaus_a0(const Rational& alpha, const Rational& beta, const Rational& m,
                               const Rational& e) {
    if (sgn(e) == 0) throw std::invalid_argument("e must be nonzero");
    Rational r = m * (alpha * alpha + beta * beta) / e;
    r.canonicalize();
    return r;
}

PhaseSeries rashba_dresselhaus_hamiltonian(const Rational& alpha, const Rational& beta,
                                           const Rational& m, int order) {
    PhasePoly h;
    auto pm = [](int x, int y) {
        MultiIndex mi;
        mi.p(1) = static_cast<std::uint8_t>(x);
        mi.p(2) = static_cast<std::uint8_t>(y);
        return mi;
    };
    h.add_term(pm(2, 0), SpinMatrix::identity(CRational(Rational(1 / (2 * m)))));
    h.add_term(pm(0, 2), SpinMatrix::identity(CRational(Rational(1 / (2 * m)))));
    SpinMatrix px, py;
    px.c[1] = CRational(beta);
    px.c[2] = CRational(alpha);
    py.c[1] = CRational(Rational(-alpha));
    py.c[2] = CRational(Rational(-beta));
    h.add_term(pm(1, 0), px);
    h.add_term(pm(0, 1), py);
    return {3, order, h};
}

bool is_helix_degenerate(double alpha, double beta, double tol) {
    return std::fabs(alpha * alpha - beta * beta) <= tol * std::max(1.0, alpha * alpha + beta * beta);
}

bool is_helix_degenerate(const Rational& alpha, const Rational& beta) {
    return alpha * alpha == beta * beta;
}

}  // namespace twistlab
