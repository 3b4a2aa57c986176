#include "twistlab/noether.hpp"

#include <sstream>
#include <stdexcept>

#include "twistlab/hopf.hpp"

namespace twistlab {

namespace {

Rational factorial(int n) {
    Rational r(1);
    for (int i = 2; i <= n; ++i) r *= i;
    return r;
}

Rational binomial(int n, int k) {
    Rational r(1);
    for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
}

PhasePoly scalar(const CRational& v) { return PhasePoly::constant(SpinMatrix::identity(v)); }

PhasePoly pauli_poly(int r) {
    SpinMatrix m;
    m.c[r] = CRational(1);
    return PhasePoly::constant(m);
}

PhasePoly derive_multi(PhasePoly f, const MultiIndex& mi) {
    for (int mu = 0; mu < kMaxDim; ++mu) {
        for (int k = 0; k < mi.x(mu) && !f.is_zero(); ++k) f = f.derive(Coord::x(mu));
        for (int k = 0; k < mi.p(mu) && !f.is_zero(); ++k) f = f.derive(Coord::p(mu));
    }
    return f;
}

int levi(int a, int b, int c) {
    if (a == b || b == c || a == c) return 0;
    return ((a + 1) % 3 == b) ? 1 : -1;
}

}  // namespace

// ---- jets ----

JetSpace::JetSpace(int dim, int fields) : dim_(dim), nf_(fields) {
    if (dim < 1 || dim > kMaxDim || fields < 1) throw std::invalid_argument("bad jet space");
    size_ = dim + fields + fields * dim + fields * dim * (dim + 1) / 2;
}

int JetSpace::x(int mu) const {
    if (mu < 0 || mu >= dim_) throw std::out_of_range("jet coordinate");
    return mu;
}

int JetSpace::phi(int r) const {
    if (r < 0 || r >= nf_) throw std::out_of_range("jet field");
    return dim_ + r;
}

int JetSpace::d(int r, int mu) const {
    phi(r);
    x(mu);
    return dim_ + nf_ + r * dim_ + mu;
}

int JetSpace::dd(int r, int mu, int nu) const {
    phi(r);
    x(mu);
    x(nu);
    if (mu > nu) std::swap(mu, nu);
    const int tri = mu * dim_ - mu * (mu - 1) / 2 + (nu - mu);
    return dim_ + nf_ + nf_ * dim_ + r * (dim_ * (dim_ + 1) / 2) + tri;
}

JetPoly JetPoly::constant(const JetSpace& s, const CRational& v) {
    JetPoly p(s);
    p.add(Exps(s.size(), 0), v);
    return p;
}

JetPoly JetPoly::var(const JetSpace& s, int v, const CRational& c) {
    JetPoly p(s);
    Exps e(s.size(), 0);
    e.at(v) = 1;
    p.add(e, c);
    return p;
}

void JetPoly::add(const Exps& e, const CRational& v) {
    if (n_ == 0) n_ = static_cast<int>(e.size());
    if (static_cast<int>(e.size()) != n_) throw std::invalid_argument("jet space mismatch");
    if (v.is_zero()) return;
    auto it = t_.find(e);
    if (it == t_.end()) {
        t_.emplace(e, v);
        return;
    }
    it->second += v;
    if (it->second.is_zero()) t_.erase(it);
}

JetPoly& JetPoly::operator+=(const JetPoly& o) {
    for (const auto& [e, v] : o.t_) add(e, v);
    return *this;
}

JetPoly& JetPoly::operator-=(const JetPoly& o) {
    for (const auto& [e, v] : o.t_) add(e, -v);
    return *this;
}

JetPoly& JetPoly::operator*=(const CRational& s) {
    JetPoly out;
    out.n_ = n_;
    for (const auto& [e, v] : t_) out.add(e, v * s);
    *this = std::move(out);
    return *this;
}

JetPoly JetPoly::derive(int v) const {
    JetPoly out;
    out.n_ = n_;
    for (const auto& [e0, c] : t_) {
        if (e0.at(v) == 0) continue;
        Exps e = e0;
        const int k = e[v]--;
        out.add(e, c * CRational(k));
    }
    return out;
}

bool JetPoly::depends_on(int v) const {
    for (const auto& [e, c] : t_)
        if (e.at(v)) return true;
    return false;
}

std::string JetPoly::str(const JetSpace& s) const {
    if (t_.empty()) return "0";
    auto name = [&](int v) {
        for (int mu = 0; mu < s.dim(); ++mu)
            if (v == s.x(mu)) return "x" + std::to_string(mu);
        for (int r = 0; r < s.fields(); ++r) {
            if (v == s.phi(r)) return "f" + std::to_string(r);
            for (int mu = 0; mu < s.dim(); ++mu) {
                if (v == s.d(r, mu)) return "f" + std::to_string(r) + "_" + std::to_string(mu);
                for (int nu = mu; nu < s.dim(); ++nu)
                    if (v == s.dd(r, mu, nu))
                        return "f" + std::to_string(r) + "_" + std::to_string(mu) + std::to_string(nu);
            }
        }
        return std::string("?");
    };
    std::ostringstream os;
    bool first = true;
    for (const auto& [e, c] : t_) {
        os << (first ? "" : " + ") << "(" << c.str() << ")";
        first = false;
        for (int v = 0; v < n_; ++v)
            if (e[v]) os << "*" << name(v) << (e[v] > 1 ? "^" + std::to_string(e[v]) : "");
    }
    return os.str();
}

JetPoly operator+(JetPoly a, const JetPoly& b) { return a += b; }
JetPoly operator-(JetPoly a, const JetPoly& b) { return a -= b; }
JetPoly operator*(JetPoly a, const CRational& s) { return a *= s; }

JetPoly operator*(const JetPoly& a, const JetPoly& b) {
    JetPoly out;
    for (const auto& [ea, va] : a.terms())
        for (const auto& [eb, vb] : b.terms()) {
            JetPoly::Exps e(ea.size());
            for (size_t i = 0; i < e.size(); ++i) e[i] = static_cast<std::uint8_t>(ea[i] + eb.at(i));
            out.add(e, va * vb);
        }
    return out;
}

bool operator==(const JetPoly& a, const JetPoly& b) { return a.terms() == b.terms(); }

JetPoly total_derivative(const JetSpace& s, const JetPoly& f, int mu) {
    for (int r = 0; r < s.fields(); ++r)
        for (int a = 0; a < s.dim(); ++a)
            for (int b = a; b < s.dim(); ++b)
                if (f.depends_on(s.dd(r, a, b))) throw std::invalid_argument("total derivative of a second jet");
    JetPoly out = f.derive(s.x(mu));
    for (int r = 0; r < s.fields(); ++r) {
        out += JetPoly::var(s, s.d(r, mu)) * f.derive(s.phi(r));
        for (int nu = 0; nu < s.dim(); ++nu) out += JetPoly::var(s, s.dd(r, mu, nu)) * f.derive(s.d(r, nu));
    }
    return out;
}

ClassicalCurrent classical_noether_current(const FieldLagrangian& L, const FieldSymmetry& t) {
    const JetSpace& s = L.space;
    const int D = s.dim();
    if (static_cast<int>(t.dx.size()) != D || static_cast<int>(t.dphi.size()) != s.fields())
        throw std::invalid_argument("symmetry does not match the jet space");
    for (int mu = 0; mu < D; ++mu)
        if (L.density.depends_on(s.x(mu))) throw std::invalid_argument("Lagrangian depends explicitly on x");
    for (int v = s.d(s.fields() - 1, D - 1) + 1; v < s.size(); ++v)
        if (L.density.depends_on(v)) throw std::invalid_argument("Lagrangian depends on second jets");
    for (const auto& dx : t.dx)
        for (int v = D; v < s.size(); ++v)
            if (dx.depends_on(v)) throw std::invalid_argument("delta x must depend on x only");
    JetPoly div(s);
    for (int mu = 0; mu < D; ++mu) div += t.dx[mu].derive(s.x(mu));
    if (!div.is_zero()) throw std::invalid_argument("transform has d_mu delta x^mu != 0");

    ClassicalCurrent out;
    std::vector<JetPoly> lie(s.fields());
    for (int r = 0; r < s.fields(); ++r) {
        lie[r] = t.dphi[r];
        for (int nu = 0; nu < D; ++nu) lie[r] -= JetPoly::var(s, s.d(r, nu)) * t.dx[nu];
    }
    out.j.assign(D, JetPoly(s));
    for (int mu = 0; mu < D; ++mu) {
        out.j[mu] = L.density * t.dx[mu];
        for (int r = 0; r < s.fields(); ++r) out.j[mu] += L.density.derive(s.d(r, mu)) * lie[r];
    }
    out.divergence = JetPoly(s);
    for (int mu = 0; mu < D; ++mu) out.divergence += total_derivative(s, out.j[mu], mu);
    out.eom_part = JetPoly(s);
    for (int r = 0; r < s.fields(); ++r) {
        JetPoly e = L.density.derive(s.phi(r));
        for (int mu = 0; mu < D; ++mu) e -= total_derivative(s, L.density.derive(s.d(r, mu)), mu);
        out.eom_part -= e * lie[r];
        out.euler_lagrange.push_back(std::move(e));
    }
    out.remainder = out.divergence - out.eom_part;
    return out;
}

// ---- G expressions ----

bool operator<(const GMonomial& a, const GMonomial& b) {
    if (a.with_theta != b.with_theta) return b.with_theta;
    if (!(a.theta == b.theta)) return a.theta < b.theta;
    if (!(a.g == b.g)) return a.g < b.g;
    return a.r < b.r;
}

GExpr GExpr::sandwich(const PhasePoly& left, const MultiIndex& g, const PhasePoly& right,
                      const std::optional<MultiIndex>& theta) {
    GExpr out;
    for (int r = 0; r < 4; ++r)
        out.add({theta.has_value(), theta.value_or(MultiIndex{}), g, static_cast<std::uint8_t>(r)},
                mat_mul(mat_mul(left, pauli_poly(r)), right));
    return out;
}

GExpr GExpr::component(int r, const MultiIndex& g, const PhasePoly& c, const std::optional<MultiIndex>& theta) {
    if (r < 0 || r > 3) throw std::out_of_range("Pauli component");
    GExpr out;
    out.add({theta.has_value(), theta.value_or(MultiIndex{}), g, static_cast<std::uint8_t>(r)}, c);
    return out;
}

bool GExpr::has_theta() const {
    for (const auto& [m, c] : t_)
        if (m.with_theta) return true;
    return false;
}

void GExpr::add(const GMonomial& m, const PhasePoly& c) {
    if (c.is_zero()) return;
    auto it = t_.find(m);
    if (it == t_.end()) {
        t_.emplace(m, c);
        return;
    }
    it->second += c;
    if (it->second.is_zero()) t_.erase(it);
}

GExpr& GExpr::operator+=(const GExpr& o) {
    for (const auto& [m, c] : o.t_) add(m, c);
    return *this;
}

GExpr& GExpr::operator-=(const GExpr& o) {
    for (const auto& [m, c] : o.t_) add(m, c * CRational(-1));
    return *this;
}

GExpr& GExpr::operator*=(const CRational& s) {
    GExpr out;
    for (const auto& [m, c] : t_) out.add(m, c * s);
    *this = std::move(out);
    return *this;
}

GExpr GExpr::derive(Coord c, bool include_g) const {
    if (c.kind == Coord::S) throw std::invalid_argument("G expressions have no spin coordinates");
    GExpr out;
    for (const auto& [m, v] : t_) {
        out.add(m, v.derive(c));
        if (c.kind == Coord::X) {
            GMonomial n = m;
            ++n.theta.x(c.index);
            if (m.with_theta) out.add(n, v);
        }
        if (include_g) {
            GMonomial n = m;
            if (c.kind == Coord::X)
                ++n.g.x(c.index);
            else
                ++n.g.p(c.index);
            out.add(n, v);
        }
    }
    return out;
}

GExpr GExpr::trace() const {
    GExpr out;
    for (const auto& [m, v] : t_) out.add(m, v.component(0) * CRational(2));
    return out;
}

PhasePoly GExpr::evaluate(const PhasePoly& theta, const PhasePoly& g) const {
    if (theta.depends_on_p()) throw std::invalid_argument("theta depends on X only");
    PhasePoly out;
    for (const auto& [m, v] : t_) {
        PhasePoly th = m.with_theta ? derive_multi(theta, m.theta) : scalar(CRational(1));
        PhasePoly gr = derive_multi(g.component(m.r), m.g);
        out += mat_mul(v, mat_mul(th, gr));
    }
    return out;
}

std::string GExpr::str() const {
    std::ostringstream os;
    for (const auto& [m, v] : t_) {
        os << "G" << int(m.r) << " d[";
        for (int mu = 0; mu < kMaxDim; ++mu) os << (mu ? "," : "") << int(m.g.x(mu));
        os << "|";
        for (int mu = 0; mu < kMaxDim; ++mu) os << (mu ? "," : "") << int(m.g.p(mu));
        os << "] theta" << (m.with_theta ? "[" : "(absent)[");
        for (int mu = 0; mu < kMaxDim; ++mu) os << (mu ? "," : "") << int(m.theta.x(mu));
        os << "] terms=" << v.terms().size() << "\n";
    }
    return os.str();
}

GExpr operator+(GExpr a, const GExpr& b) { return a += b; }
GExpr operator-(GExpr a, const GExpr& b) { return a -= b; }
GExpr operator*(GExpr a, const CRational& s) { return a *= s; }
bool operator==(const GExpr& a, const GExpr& b) { return a.terms() == b.terms(); }

bool GSeries::is_zero() const {
    for (const auto& e : c)
        if (!e.is_zero()) return false;
    return true;
}

GSeries GSeries::trace() const {
    GSeries out(order);
    for (int k = 0; k <= order; ++k) out.c[k] = c[k].trace();
    return out;
}

PhaseSeries GSeries::evaluate(int dim, const PhasePoly& theta, const PhasePoly& g) const {
    PhaseSeries out(dim, order);
    for (int k = 0; k <= order; ++k) out.coeff(k) = c[k].evaluate(theta, g);
    return out;
}

GExpr integrated_normal_form(const GExpr& e) {
    GExpr out;
    for (const auto& [m, v] : e.terms()) {
        GMonomial base = m;
        base.g = MultiIndex{};
        GExpr cur;
        cur.add(base, v);
        int sign = 1;
        for (int mu = 0; mu < kMaxDim; ++mu) {
            for (int k = 0; k < m.g.x(mu); ++k) {
                cur = cur.derive(Coord::x(mu), false);
                sign = -sign;
            }
            for (int k = 0; k < m.g.p(mu); ++k) {
                cur = cur.derive(Coord::p(mu), false);
                sign = -sign;
            }
        }
        out += cur * CRational(sign);
    }
    return out;
}

GSeries integrated_normal_form(const GSeries& s) {
    GSeries out(s.order);
    for (int k = 0; k <= s.order; ++k) out.c[k] = integrated_normal_form(s.c[k]);
    return out;
}

// ---- twisted variation ----

namespace {

// Multi-indices over X^0..X^{dim-1} (or p) of total degree exactly n.
void enumerate(int dim, int n, bool momentum, int mu, MultiIndex cur, std::vector<MultiIndex>& out) {
    if (mu == dim - 1) {
        (momentum ? cur.p(mu) : cur.x(mu)) = static_cast<std::uint8_t>(n);
        out.push_back(cur);
        return;
    }
    for (int k = 0; k <= n; ++k) {
        (momentum ? cur.p(mu) : cur.x(mu)) = static_cast<std::uint8_t>(k);
        enumerate(dim, n - k, momentum, mu + 1, cur, out);
    }
}

std::vector<MultiIndex> indices(int dim, int n, bool momentum) {
    std::vector<MultiIndex> out;
    enumerate(dim, n, momentum, 0, MultiIndex{}, out);
    return out;
}

std::vector<MultiIndex> sub_indices(const MultiIndex& g) {
    std::vector<MultiIndex> out{MultiIndex{}};
    for (int mu = 0; mu < kMaxDim; ++mu) {
        std::vector<MultiIndex> next;
        for (const auto& d : out)
            for (int k = 0; k <= g.x(mu); ++k) {
                MultiIndex e = d;
                e.x(mu) = static_cast<std::uint8_t>(k);
                next.push_back(e);
            }
        out = std::move(next);
    }
    return out;
}

// X exponents moved to the matching p slots.
MultiIndex to_p(const MultiIndex& g) {
    MultiIndex out;
    for (int mu = 0; mu < kMaxDim; ++mu) out.p(mu) = g.x(mu);
    return out;
}

MultiIndex minus(const MultiIndex& a, const MultiIndex& b) {
    MultiIndex out;
    for (size_t i = 0; i < a.e.size(); ++i) out.e[i] = static_cast<std::uint8_t>(a.e[i] - b.e[i]);
    return out;
}

Rational multi_factorial(const MultiIndex& g) {
    Rational r(1);
    for (auto v : g.e) r *= factorial(v);
    return r;
}

Rational multi_binomial(const MultiIndex& g, const MultiIndex& d) {
    Rational r(1);
    for (size_t i = 0; i < g.e.size(); ++i) r *= binomial(g.e[i], d.e[i]);
    return r;
}

// Slot order of eta and G in the l1 l2 component of Delta_{l1 eta}(l2 G),
// with its sign: +1 for eta (x) G, -1 for G (x) eta.
struct SlotOrders {
    std::vector<std::pair<bool, int>> v;  // (eta first, sign)
    SlotOrders& operator+=(const SlotOrders& o) {
        v.insert(v.end(), o.v.begin(), o.v.end());
        return *this;
    }
};

std::vector<std::pair<bool, int>> variation_slot_orders() {
    using Gr = Grassmann<int>;
    std::function<SlotOrders(const int&, const int&, int)> op = [](const int& a, const int&, int sign) {
        return SlotOrders{{{a == 0, sign}}};
    };
    auto eta = Gr::with(1, 0), g = Gr::with(2, 1);
    auto first = grassmann_product(eta, g, op);
    auto second = grassmann_product(g, eta, op);
    SlotOrders out = *first.integrate_l3();
    out += *second.integrate_l3();
    return out.v;
}

TwistedVariation variation_impl(const LagrangianSymbol& L, int a, const GaugeConfig& gauge, int N) {
    if (a < 0 || a > 2) throw std::out_of_range("spin axis");
    if (N < 0) throw std::invalid_argument("negative order");
    gauge.validate();
    const int dim = L.l.dim();
    if (gauge.dim != dim) throw std::invalid_argument("gauge/Lagrangian dimension mismatch");
    if (!gauge.is_constant()) throw std::invalid_argument("twisted variation needs an X-independent gauge");

    const PhasePoly eta = gauge.spin(a);
    const PhasePoly one = scalar(CRational(1));
    const auto orders = variation_slot_orders();
    TwistedVariation out{dim, a, GSeries(N)};

    for (int l = 0; l <= std::min(N, L.l.order()); ++l) {
        if (L.l.coeff(l).is_zero()) continue;
        for (int na = 0; l + na <= N; ++na)
            for (int nb = 0; l + na + nb <= N; ++nb)
                for (const auto& al : indices(dim, na, false))
                    for (const auto& be : indices(dim, nb, true)) {
                        // F_0 term: d_X^al d_p^be L (x) d_p^al d_X^be G
                        PhasePoly lp = derive_multi(L.l.coeff(l), al + be);
                        if (lp.is_zero()) continue;
                        MultiIndex gidx;
                        for (int mu = 0; mu < dim; ++mu) {
                            gidx.p(mu) = al.x(mu);
                            gidx.x(mu) = be.p(mu);
                        }
                        const Rational f0 = (nb % 2 ? Rational(-1) : Rational(1)) /
                                            (multi_factorial(al) * multi_factorial(be));
                        const int k0 = l + na + nb;
                        for (int ng = 0; k0 + ng <= N; ++ng)
                            for (const auto& ga : indices(dim, ng, false)) {
                                // Conjugated theta^: (1/2) sum nu^k/gamma! d^gamma theta times
                                // (d_p3 - d_p1)^gamma on slot 2, (-d_p1 - d_p2)^gamma on slot 3.
                                const Rational base = f0 / (2 * multi_factorial(ga));
                                const Rational sg = ng % 2 ? Rational(-1) : Rational(1);
                                GExpr acc;
                                for (const auto& [eta_first, sign] : orders) {
                                    const Rational s0 = base * sign;
                                    if (eta_first) {
                                        for (const auto& de : sub_indices(ga)) {
                                            const int rest = ng - de.degree();
                                            PhasePoly lpp = derive_multi(lp, to_p(minus(ga, de)));
                                            if (lpp.is_zero()) continue;
                                            Rational c = s0 * multi_binomial(ga, de) * (rest % 2 ? -1 : 1);
                                            acc += GExpr::sandwich(mat_mul(lpp, eta), gidx + to_p(de), one, ga) *
                                                   CRational(c);
                                        }
                                        PhasePoly lpp = derive_multi(lp, to_p(ga));
                                        if (!lpp.is_zero())
                                            acc += GExpr::sandwich(mat_mul(lpp, eta), gidx, one, ga) *
                                                   CRational(s0 * sg);
                                    } else {
                                        PhasePoly lpp = derive_multi(lp, to_p(ga));
                                        if (!lpp.is_zero())
                                            acc += GExpr::sandwich(lpp, gidx, eta, ga) * CRational(s0 * sg);
                                        for (const auto& de : sub_indices(ga)) {
                                            PhasePoly l3 = derive_multi(lp, to_p(minus(ga, de)));
                                            if (l3.is_zero()) continue;
                                            acc += GExpr::sandwich(l3, gidx + to_p(de), eta, ga) *
                                                   CRational(s0 * sg * multi_binomial(ga, de));
                                        }
                                    }
                                }
                                out.density.c[k0 + ng] += acc;
                            }
                    }
    }
    return out;
}

}  // namespace

LagrangianSymbol LagrangianSymbol::free(int dim, const Rational& m, int order) {
    if (sgn(m) == 0) throw std::invalid_argument("mass must be nonzero");
    PhaseSeries l = PhaseSeries::p(dim, order, 0);
    for (int i = 1; i < dim; ++i) l -= mat_mul(PhaseSeries::p(dim, order, i), PhaseSeries::p(dim, order, i)) *
                                      CRational(Rational(1) / (2 * m));
    return {l};
}

TwistedVariation twisted_variation(const LagrangianSymbol& L, int a, const GaugeConfig& gauge, int order) {
    if (order > 3) throw std::invalid_argument("twisted variation is truncated at order 3");
    return variation_impl(L, a, gauge, order);
}

GSeries constant_theta_variation(const TwistedVariation& v) {
    GSeries t = v.density.trace();
    GSeries out(t.order);
    for (int k = 0; k <= t.order; ++k)
        for (const auto& [m, c] : t.c[k].terms()) {
            if (m.with_theta && !(m.theta == MultiIndex{})) continue;
            GMonomial n = m;
            n.with_theta = false;
            out.c[k].add(n, c);
        }
    return integrated_normal_form(out);
}

CurrentSeries extract_current(const TwistedVariation& v, int order, Homotopy h) {
    if (order < 0 || v.density.order < order + 1)
        throw std::invalid_argument("variation must be computed one order beyond the current");
    const GSeries t = v.density.trace();
    CurrentSeries out{v.dim, order, std::vector<GSeries>(v.dim, GSeries(order)), GSeries(order + 1)};
    for (int k = 0; k <= order + 1; ++k)
        for (const auto& [m, c] : t.c[k].terms()) {
            if (!m.with_theta) throw std::logic_error("variation term without theta");
            GMonomial bare = m;
            bare.with_theta = false;
            bare.theta = MultiIndex{};
            if (m.theta == MultiIndex{}) {
                out.remainder.c[k].add(bare, c);
                continue;
            }
            if (k == 0) throw std::logic_error("theta derivative at order 0");
            int mu = -1;
            for (int i = 0; i < v.dim; ++i)
                if (m.theta.x(i) && (mu < 0 || h == Homotopy::LastIndex)) mu = i;
            MultiIndex rest = m.theta;
            --rest.x(mu);
            GExpr e;
            e.add(bare, c);
            for (int i = 0; i < v.dim; ++i)
                for (int n = 0; n < rest.x(i); ++n) e = e.derive(Coord::x(i));
            // int c d^gamma theta ... = (-1)^|rest| int d_mu theta d^rest(...), and
            // delta S = -nu int d_mu theta j^mu.
            out.j[mu].c[k - 1] += e * CRational(rest.degree() % 2 ? 1 : -1);
        }
    return out;
}

CurrentSeries twisted_current(const LagrangianSymbol& L, int a, const GaugeConfig& gauge, int order, Homotopy h) {
    if (order > 2) throw std::invalid_argument("twisted current is truncated at order 2");
    return extract_current(variation_impl(L, a, gauge, order + 1), order, h);
}

GSeries variation_from_current(const CurrentSeries& j, const PhasePoly& theta) {
    GSeries out(j.order + 1);
    for (int mu = 0; mu < j.dim; ++mu) {
        PhasePoly dth = theta.derive(Coord::x(mu));
        for (int k = 0; k <= j.order; ++k)
            for (const auto& [m, c] : j.j[mu].c[k].terms()) out.c[k + 1].add(m, mat_mul(c, dth) * CRational(-1));
    }
    for (int k = 0; k <= j.order + 1 && k <= j.remainder.order; ++k)
        for (const auto& [m, c] : j.remainder.c[k].terms()) out.c[k].add(m, mat_mul(c, theta));
    return out;
}

GSeries variation_at_theta(const TwistedVariation& v, const PhasePoly& theta, int order) {
    if (order > v.density.order) throw std::invalid_argument("order beyond the computed variation");
    const GSeries t = v.density.trace();
    GSeries out(order);
    for (int k = 0; k <= order; ++k)
        for (const auto& [m, c] : t.c[k].terms()) {
            GMonomial bare = m;
            bare.with_theta = false;
            bare.theta = MultiIndex{};
            out.c[k].add(bare, m.with_theta ? mat_mul(c, derive_multi(theta, m.theta)) : c);
        }
    return out;
}

GSeries divergence(const CurrentSeries& j) {
    GSeries out(j.order);
    for (int mu = 0; mu < j.dim; ++mu)
        for (int k = 0; k <= j.order; ++k) out.c[k] += j.j[mu].c[k].derive(Coord::x(mu));
    return out;
}

// ---- on-shell reduction ----

namespace {

struct FreeEom {
    int dim = 0;
    CRational c0;                           // dL/dp_0
    PhasePoly rest;                         // L - c0 p_0
    std::vector<PhasePoly> lp;              // dL/dp_i, i >= 1
    std::vector<std::vector<CRational>> lpp;  // d^2 L / dp_i dp_j
};

FreeEom analyse(const LagrangianSymbol& L) {
    const PhaseSeries& l = L.l;
    for (int k = 1; k <= l.order(); ++k)
        if (!l.coeff(k).is_zero()) throw std::invalid_argument("EOM reduction needs an order-0 Lagrangian symbol");
    FreeEom e;
    e.dim = l.dim();
    for (const auto& [mi, m] : l.coeff(0).terms()) {
        if (!m.is_scalar()) throw std::invalid_argument("EOM reduction needs a spin-independent symbol");
        int pdeg = 0;
        for (int mu = 0; mu < kMaxDim; ++mu) {
            if (mi.x(mu)) throw std::invalid_argument("EOM reduction needs an X-independent symbol");
            pdeg += mi.p(mu);
        }
        if (pdeg > 2) throw std::invalid_argument("EOM reduction needs a symbol at most quadratic in p");
        if (mi.p(0) == 0) {
            e.rest.add_term(mi, m);
            continue;
        }
        if (mi.p(0) != 1 || pdeg != 1) throw std::invalid_argument("p_0 must enter linearly and alone");
        e.c0 = m.c[0];
    }
    if (e.c0.is_zero()) throw std::invalid_argument("symbol does not contain p_0");
    e.lp.resize(e.dim);
    e.lpp.assign(e.dim, std::vector<CRational>(e.dim));
    for (int i = 1; i < e.dim; ++i) {
        e.lp[i] = e.rest.derive(Coord::p(i));
        for (int j = 1; j < e.dim; ++j) {
            PhasePoly d = e.lp[i].derive(Coord::p(j));
            if (!d.is_zero()) e.lpp[i][j] = d.terms().begin()->second.c[0];
        }
    }
    return e;
}

MultiIndex p_part(const MultiIndex& g) {
    MultiIndex out;
    for (int mu = 0; mu < kMaxDim; ++mu) out.p(mu) = g.p(mu);
    return out;
}

std::vector<MultiIndex> sub_indices_p(const MultiIndex& g) {
    std::vector<MultiIndex> out{MultiIndex{}};
    for (int mu = 0; mu < kMaxDim; ++mu) {
        std::vector<MultiIndex> next;
        for (const auto& d : out)
            for (int k = 0; k <= g.p(mu); ++k) {
                MultiIndex e = d;
                e.p(mu) = static_cast<std::uint8_t>(k);
                next.push_back(e);
            }
        out = std::move(next);
    }
    return out;
}

// c * d^beta (f G_r) by the Leibniz rule, f a polynomial in p only.
void add_leibniz(GExpr& out, const GMonomial& m, const MultiIndex& beta, const PhasePoly& c, const PhasePoly& f,
                 const CRational& s, const MultiIndex& extra = {}) {
    for (const auto& ka : sub_indices_p(beta)) {
        PhasePoly df = derive_multi(f, ka);
        if (df.is_zero()) continue;
        GMonomial n = m;
        n.g = minus(beta, ka) + extra;
        out.add(n, mat_mul(c, df) * (s * CRational(multi_binomial(p_part(beta), ka))));
    }
}

}  // namespace

GSeries reduce_on_shell(const GSeries& s, const LagrangianSymbol& L) {
    const FreeEom e = analyse(L);
    const CRational inv = CRational(-1) / e.c0;
    GSeries out = s;
    for (int k = 0; k <= out.order; ++k) {
        for (bool changed = true; changed;) {
            changed = false;
            GExpr next;
            for (const auto& [m, c] : out.c[k].terms()) {
                if (m.with_theta) throw std::invalid_argument("on-shell reduction of a theta-dependent expression");
                if (m.g.x(0) > 0) {
                    // d_T G = -(1/c0) sum_i dL/dp_i d_i G
                    changed = true;
                    MultiIndex beta = m.g;
                    --beta.x(0);
                    for (int i = 1; i < e.dim; ++i) {
                        MultiIndex xi;
                        xi.x(i) = 1;
                        add_leibniz(next, m, beta, c, e.lp[i], inv, xi);
                    }
                    continue;
                }
                PhasePoly plain, with_p0;
                for (const auto& [mi, v] : c.terms()) {
                    if (mi.p(0) == 0) {
                        plain.add_term(mi, v);
                        continue;
                    }
                    MultiIndex lower = mi;
                    --lower.p(0);
                    with_p0.add_term(lower, v);
                }
                next.add(m, plain);
                if (with_p0.is_zero()) continue;
                // p_0 d^b G = d^b(p_0 G) - b_{p0} d^{b - e_p0} G and
                // c0 p_0 G = -(L - c0 p_0) G - (nu^2/2) L_{p_i p_j} d_i d_j G
                changed = true;
                if (m.g.p(0) > 0) {
                    GMonomial n = m;
                    --n.g.p(0);
                    next.add(n, with_p0 * CRational(-int(m.g.p(0))));
                }
                add_leibniz(next, m, m.g, with_p0, e.rest, inv);
                if (k + 2 <= out.order)
                    for (int i = 1; i < e.dim; ++i)
                        for (int j = 1; j < e.dim; ++j) {
                            if (e.lpp[i][j].is_zero()) continue;
                            GMonomial n = m;
                            ++n.g.x(i);
                            ++n.g.x(j);
                            out.c[k + 2].add(n, with_p0 * (inv * e.lpp[i][j] * CRational(q(1, 2))));
                        }
            }
            out.c[k] = std::move(next);
        }
    }
    // p-integration by parts
    for (int k = 0; k <= out.order; ++k) {
        GExpr next;
        for (const auto& [m, c] : out.c[k].terms()) {
            MultiIndex bp = p_part(m.g);
            GMonomial n = m;
            n.g = minus(m.g, bp);
            next.add(n, derive_multi(c, bp) * CRational(bp.degree() % 2 ? -1 : 1));
        }
        out.c[k] = std::move(next);
    }
    return out;
}

GExpr spin_density(int a, const Rational& hbar) {
    if (a < 0 || a > 2) throw std::out_of_range("spin axis");
    return GExpr::sandwich(PhasePoly::constant(SpinMatrix::pauli(a, CRational(hbar / 2))), MultiIndex{},
                           scalar(CRational(1)))
        .trace();
}

CurrentSeries to_canonical(const CurrentSeries& j, const GaugeConfig& gauge) {
    gauge.validate();
    if (gauge.dim != j.dim) throw std::invalid_argument("gauge/current dimension mismatch");
    if (!gauge.is_constant()) throw std::invalid_argument("canonical rewrite needs an X-independent gauge");
    std::vector<std::array<std::array<CRational, 4>, 4>> shift(j.dim);  // [nu][s][r]
    for (int nu = 0; nu < j.dim; ++nu) {
        PhasePoly M = gauge.kinetic_shift(nu);
        for (int s = 0; s < 4; ++s) {
            PhasePoly prod = sym_mul(M, pauli_poly(s));
            for (const auto& [mi, v] : prod.terms())
                for (int r = 0; r < 4; ++r) shift[nu][s][r] += v.c[r];
        }
    }
    CurrentSeries out = j;
    for (int mu = 0; mu < j.dim; ++mu)
        for (int k = 0; k <= j.order; ++k)
            for (const auto& [m, c] : j.j[mu].c[k].terms())
                for (int nu = 0; nu < j.dim; ++nu)
                    for (int s = 0; s < 4; ++s) {
                        const CRational& w = shift[nu][s][m.r];
                        if (w.is_zero()) continue;
                        GMonomial n = m;
                        n.r = static_cast<std::uint8_t>(s);
                        ++n.g.p(nu);
                        out.j[mu].c[k].add(n, c * (-w));
                    }
    return out;
}

std::string to_text(const CurrentSeries& j) {
    std::ostringstream os;
    for (int mu = 0; mu < j.dim; ++mu) {
        std::map<std::pair<int, MultiIndex>, PhaseSeries> groups;
        for (int k = 0; k <= j.order; ++k)
            for (const auto& [m, c] : j.j[mu].c[k].terms()) {
                auto key = std::make_pair(int(m.r), m.g);
                auto it = groups.find(key);
                if (it == groups.end()) it = groups.emplace(key, PhaseSeries(j.dim, j.order)).first;
                it->second.coeff(k) += c;
            }
        for (const auto& [key, series] : groups) {
            os << "# j^" << mu << " G" << key.first << " d[";
            for (int i = 0; i < j.dim; ++i) os << (i ? "," : "") << int(key.second.x(i));
            os << "|";
            for (int i = 0; i < j.dim; ++i) os << (i ? "," : "") << int(key.second.p(i));
            os << "]\n" << to_text(series);
        }
    }
    return os.str();
}

// ---- covariant continuity ----

NumericGauge NumericGauge::from(const GaugeConfig& g) {
    g.validate();
    if (!g.is_constant()) throw std::invalid_argument("numeric gauge needs constant potentials");
    NumericGauge out;
    out.q = g.q.get_d();
    std::vector<double> origin(2 * g.dim, 0.0);
    for (int mu = 0; mu < std::min(g.dim, 3); ++mu)
        for (int a = 0; a < 3; ++a) out.a[mu][a] = eval(g.a_su2[mu][a], origin)[0].real();
    return out;
}

namespace {

void check_grid(const SpinCurrentGrid& J) {
    const size_t n = static_cast<size_t>(J.nx) * J.ny;
    if (J.nx < 5 || J.ny < 5) throw std::invalid_argument("grid needs at least 5 points per axis");
    for (int a = 0; a < 3; ++a)
        if (J.rho[a].size() != n || J.jx[a].size() != n || J.jy[a].size() != n || J.drho_dt[a].size() != n)
            throw std::invalid_argument("spin current arrays do not match the grid");
}

double diff4(const std::vector<double>& f, int nx, int ny, int ix, int iy, bool along_x, double h) {
    auto at = [&](int dx, int dy) {
        const int x = ((ix + dx) % nx + nx) % nx, y = ((iy + dy) % ny + ny) % ny;
        return f[static_cast<size_t>(y) * nx + x];
    };
    const int ux = along_x ? 1 : 0, uy = along_x ? 0 : 1;
    return (-at(2 * ux, 2 * uy) + 8 * at(ux, uy) - 8 * at(-ux, -uy) + at(-2 * ux, -2 * uy)) / (12 * h);
}

}  // namespace

std::array<std::vector<double>, 3> ordinary_continuity_residual(const SpinCurrentGrid& J) {
    check_grid(J);
    std::array<std::vector<double>, 3> out;
    for (int a = 0; a < 3; ++a) {
        out[a].resize(J.rho[a].size());
        for (int iy = 0; iy < J.ny; ++iy)
            for (int ix = 0; ix < J.nx; ++ix) {
                const size_t i = static_cast<size_t>(iy) * J.nx + ix;
                out[a][i] = J.drho_dt[a][i] + diff4(J.jx[a], J.nx, J.ny, ix, iy, true, J.dx) +
                            diff4(J.jy[a], J.nx, J.ny, ix, iy, false, J.dy);
            }
    }
    return out;
}

std::array<std::vector<double>, 3> covariant_continuity_residual(const SpinCurrentGrid& J, const NumericGauge& g) {
    auto out = ordinary_continuity_residual(J);
    for (int a = 0; a < 3; ++a)
        for (size_t i = 0; i < out[a].size(); ++i)
            for (int b = 0; b < 3; ++b)
                for (int c = 0; c < 3; ++c) {
                    const int e = levi(a, b, c);
                    if (!e) continue;
                    out[a][i] += g.q * e *
                                 (g.a[0][b] * J.rho[c][i] + g.a[1][b] * J.jx[c][i] + g.a[2][b] * J.jy[c][i]);
                }
    return out;
}

}  // namespace twistlab
