#include "twistlab/star.hpp"

#include <algorithm>
#include <stdexcept>
#include <tuple>

namespace twistlab {

bool operator<(const TensorKey& x, const TensorKey& y) {
    return std::tie(x.a.e, x.b.e, x.c.e, x.i, x.j, x.k) < std::tie(y.a.e, y.b.e, y.c.e, y.i, y.j, y.k);
}

TensorSeries::TensorSeries(int dim, int order) : dim_(dim), order_(order), c_(order + 1) {
    if (order < 0) throw std::invalid_argument("negative truncation order");
}

TensorSeries TensorSeries::pair(const PhaseSeries& f, const PhaseSeries& g, int order) {
    if (f.dim() != g.dim()) throw std::invalid_argument("incompatible phase-space dimensions");
    int n = std::min({order, f.order(), g.order()});
    TensorSeries t(f.dim(), n);
    for (int i = 0; i <= n; ++i)
        for (int j = 0; i + j <= n; ++j)
            for (const auto& [ma, sa] : f.coeff(i).terms())
                for (const auto& [mb, sb] : g.coeff(j).terms())
                    for (int pi = 0; pi < 4; ++pi) {
                        if (sa.c[pi].is_zero()) continue;
                        for (int pj = 0; pj < 4; ++pj) {
                            if (sb.c[pj].is_zero()) continue;
                            TensorKey key;
                            key.a = ma;
                            key.b = mb;
                            key.i = static_cast<std::uint8_t>(pi);
                            key.j = static_cast<std::uint8_t>(pj);
                            t.add(i + j, key, sa.c[pi] * sb.c[pj]);
                        }
                    }
    return t;
}

bool TensorSeries::is_zero() const {
    for (const auto& s : c_)
        if (!s.empty()) return false;
    return true;
}

size_t TensorSeries::size() const {
    size_t n = 0;
    for (const auto& s : c_) n += s.size();
    return n;
}

void TensorSeries::add(int nu, const TensorKey& key, const CRational& v) {
    if (v.is_zero()) return;
    auto& s = c_.at(nu);
    auto it = s.find(key);
    if (it == s.end()) {
        s.emplace(key, v);
        return;
    }
    it->second += v;
    if (it->second.is_zero()) s.erase(it);
}

TensorSeries& TensorSeries::operator+=(const TensorSeries& o) {
    if (o.dim_ != dim_) throw std::invalid_argument("incompatible tensor dimensions");
    int n = std::min(order_, o.order_);
    c_.resize(n + 1);
    order_ = n;
    for (int k = 0; k <= n; ++k)
        for (const auto& [key, v] : o.c_[k]) add(k, key, v);
    return *this;
}

TensorSeries& TensorSeries::operator-=(const TensorSeries& o) {
    if (o.dim_ != dim_) throw std::invalid_argument("incompatible tensor dimensions");
    int n = std::min(order_, o.order_);
    c_.resize(n + 1);
    order_ = n;
    for (int k = 0; k <= n; ++k)
        for (const auto& [key, v] : o.c_[k]) add(k, key, -v);
    return *this;
}

bool TensorSeries::operator==(const TensorSeries& o) const {
    return dim_ == o.dim_ && order_ == o.order_ && c_ == o.c_;
}

namespace {

// Differentiates X^mono sigma_pauli along a word; returns false when the result vanishes.
bool derive_word(const std::vector<Coord>& word, MultiIndex& mono, std::uint8_t& pauli, Rational& factor) {
    for (const auto& c : word) {
        if (c.kind == Coord::S) {
            if (pauli != c.index + 1) return false;
            pauli = 0;
            continue;
        }
        std::uint8_t& e = c.kind == Coord::X ? mono.x(c.index) : mono.p(c.index);
        if (e == 0) return false;
        factor *= e;
        e -= 1;
    }
    return true;
}

}  // namespace

TensorSeries apply_generator(const Generator& gen, const TensorSeries& t, int sign) {
    TensorSeries out(t.dim(), t.order());
    for (const auto& term : gen) {
        if (term.nu_power < 0) throw std::invalid_argument("negative nu power in generator");
        for (int n = 0; n + term.nu_power <= t.order(); ++n) {
            for (const auto& [key, v] : t.coeff(n)) {
                TensorKey nk = key;
                Rational factor(sign);
                if (!derive_word(term.left, nk.a, nk.i, factor)) continue;
                if (!derive_word(term.right, nk.b, nk.j, factor)) continue;
                CRational base = v * term.prefactor * CRational(factor);
                SpinMatrix slot = key.k == 0 ? SpinMatrix::identity() : SpinMatrix::pauli(key.k - 1);
                for (const auto& [cm, cmat] : term.coefficient.terms()) {
                    SpinMatrix prod = mat_mul(cmat, slot);
                    TensorKey ck = nk;
                    ck.c = key.c + cm;
                    for (int k = 0; k < 4; ++k) {
                        if (prod.c[k].is_zero()) continue;
                        ck.k = static_cast<std::uint8_t>(k);
                        out.add(n + term.nu_power, ck, base * prod.c[k]);
                    }
                }
            }
        }
    }
    return out;
}

TensorSeries apply_exp(const Generator& gen, const TensorSeries& t, int sign) {
    TensorSeries out = t;
    TensorSeries cur = t;
    for (int k = 1;; ++k) {
        cur = apply_generator(gen, cur, sign);
        if (cur.is_zero()) break;
        const CRational inv(q(1, k));
        for (int n = 0; n <= cur.order(); ++n)
            for (auto& [key, v] : cur.coeff(n)) v *= inv;
        out += cur;
        if (k > 512) throw std::logic_error("exponential series failed to terminate");
    }
    return out;
}

TensorSeries TwistElement::apply(const TensorSeries& t) const {
    TensorSeries cur = t;
    for (auto it = factors_.rbegin(); it != factors_.rend(); ++it) cur = apply_exp(it->gen, cur, it->sign);
    return cur;
}

TwistElement TwistElement::inverse() const {
    std::vector<Factor> f(factors_.rbegin(), factors_.rend());
    for (auto& x : f) x.sign = -x.sign;
    return TwistElement(std::move(f));
}

TwistElement TwistElement::negated() const {
    std::vector<Factor> f = factors_;
    for (auto& x : f) x.sign = -x.sign;
    return TwistElement(std::move(f));
}

TwistElement TwistElement::compose(const TwistElement& other) const {
    std::vector<Factor> f = factors_;
    f.insert(f.end(), other.factors_.begin(), other.factors_.end());
    return TwistElement(std::move(f));
}

PhaseSeries contract(const TensorSeries& t, InnerProduct inner) {
    PhaseSeries out(t.dim(), t.order());
    auto basis = [](int k) { return k == 0 ? SpinMatrix::identity() : SpinMatrix::pauli(k - 1); };
    for (int n = 0; n <= t.order(); ++n) {
        for (const auto& [key, v] : t.coeff(n)) {
            SpinMatrix l = basis(key.i), r = basis(key.j);
            SpinMatrix lr = inner == InnerProduct::Matrix ? mat_mul(l, r) : sym_mul(l, r);
            SpinMatrix m = key.k == 0 ? lr : sym_mul(basis(key.k), lr);
            out.coeff(n).add_term(key.a + key.b + key.c, m * v);
        }
    }
    return out;
}

Generator moyal_generator(int dim) {
    Generator g;
    for (int mu = 0; mu < dim; ++mu) {
        g.push_back({{Coord::x(mu)}, {Coord::p(mu)}});
        BiDiffTerm t{{Coord::p(mu)}, {Coord::x(mu)}};
        t.prefactor = CRational(-1);
        g.push_back(t);
    }
    return g;
}

namespace {

int levi(int a, int b, int c) {
    if (a == b || b == c || a == c) return 0;
    return ((a + 1) % 3 == b) ? 1 : -1;
}

}  // namespace

Generator spin_momentum_generator(const GaugeConfig& g) {
    g.validate();
    Generator gen;
    // s^a d_{s^c} = sigma^a d_{sigma^c}: hbar drops out.
    for (int mu = 0; mu < g.dim; ++mu)
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b)
                for (int c = 0; c < 3; ++c) {
                    int e = levi(a, b, c);
                    if (!e || g.a_su2[mu][b].is_zero()) continue;
                    PhasePoly coef = sym_mul(g.a_su2[mu][b], PhasePoly::constant(SpinMatrix::pauli(a)));
                    coef *= CRational(Rational(g.q * e));
                    BiDiffTerm t1{{Coord::p(mu)}, {Coord::s(c)}, coef * CRational(-1)};
                    BiDiffTerm t2{{Coord::s(c)}, {Coord::p(mu)}, coef};
                    gen.push_back(t1);
                    gen.push_back(t2);
                }
    return gen;
}

Generator field_strength_generator(const GaugeConfig& g) {
    FieldStrength F = field_strength(g);
    Generator gen;
    for (int mu = 0; mu < g.dim; ++mu)
        for (int nu = 0; nu < g.dim; ++nu) {
            if (mu == nu || F(mu, nu).is_zero()) continue;
            gen.push_back({{Coord::p(mu)}, {Coord::p(nu)}, F(mu, nu) * CRational(g.q)});
        }
    return gen;
}

TwistElement moyal_twist(int dim) { return TwistElement({{moyal_generator(dim), 1}}); }

TwistElement gauge_twist(const GaugeConfig& g) {
    return TwistElement({{moyal_generator(g.dim), 1},
                         {spin_momentum_generator(g), 1},
                         {field_strength_generator(g), 1}});
}

TwistElement twist_0_to_A(const GaugeConfig& g) {
    return gauge_twist(g).compose(moyal_twist(g.dim).inverse());
}

PhaseSeries moyal_star(const PhaseSeries& f, const PhaseSeries& g, int order) {
    auto t = TensorSeries::pair(f, g, order);
    return contract(apply_exp(moyal_generator(f.dim()), t), InnerProduct::Symmetric);
}

PhaseSeries spin_star(const PhaseSeries& f, const PhaseSeries& g, int order) {
    auto t = TensorSeries::pair(f, g, order);
    return contract(apply_exp(moyal_generator(f.dim()), t), InnerProduct::Matrix);
}

PhaseSeries gauge_star(const PhaseSeries& f, const PhaseSeries& g, const GaugeConfig& gauge, int order) {
    if (gauge.dim != f.dim()) throw std::invalid_argument("gauge/series dimension mismatch");
    auto t = TensorSeries::pair(f, g, order);
    return contract(gauge_twist(gauge).apply(t), InnerProduct::Matrix);
}

PhaseSeries star(const PhaseSeries& f, const PhaseSeries& g, const StarConfig& cfg) {
    switch (cfg.kind) {
        case StarConfig::Moyal: return moyal_star(f, g, cfg.order);
        case StarConfig::Spin: return spin_star(f, g, cfg.order);
        case StarConfig::Gauge:
            if (!cfg.gauge) throw std::invalid_argument("gauge star needs a gauge configuration");
            return gauge_star(f, g, *cfg.gauge, cfg.order);
    }
    throw std::logic_error("unknown star kind");
}

PhaseSeries star_commutator(const PhaseSeries& f, const PhaseSeries& g, const StarConfig& cfg) {
    return star(f, g, cfg) - star(g, f, cfg);
}

PhasePoly gauge_poisson_bracket(const PhasePoly& f, const PhasePoly& g, const GaugeConfig& gauge) {
    gauge.validate();
    const int D = gauge.dim;
    PhasePoly out;
    for (int mu = 0; mu < D; ++mu) {
        out += sym_mul(f.derive(Coord::x(mu)), g.derive(Coord::p(mu)));
        out -= sym_mul(f.derive(Coord::p(mu)), g.derive(Coord::x(mu)));
    }
    FieldStrength F = field_strength(gauge);
    for (int mu = 0; mu < D; ++mu)
        for (int nu = 0; nu < D; ++nu)
            if (mu != nu)
                out += sym_mul(F(mu, nu) * CRational(gauge.q),
                               sym_mul(f.derive(Coord::p(mu)), g.derive(Coord::p(nu))));
    // True spin derivative: d f / d s^c = (2/hbar) f_c.
    const CRational ds(Rational(2 / gauge.hbar));
    for (int mu = 0; mu < D; ++mu)
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b)
                for (int c = 0; c < 3; ++c) {
                    int e = levi(a, b, c);
                    if (!e) continue;
                    PhasePoly w = sym_mul(gauge.spin(a), gauge.a_su2[mu][b]) * CRational(Rational(gauge.q * e));
                    if (w.is_zero()) continue;
                    PhasePoly dsf = f.derive(Coord::s(c)) * ds, dsg = g.derive(Coord::s(c)) * ds;
                    out -= sym_mul(w, sym_mul(f.derive(Coord::p(mu)), dsg));
                    out += sym_mul(w, sym_mul(dsf, g.derive(Coord::p(mu))));
                }
    return out;
}

PhasePoly spin_poisson_bracket(const PhasePoly& f, const PhasePoly& g, const Rational& hbar) {
    const CRational ds(Rational(2 / hbar));
    PhasePoly out;
    for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b)
            for (int c = 0; c < 3; ++c) {
                int e = levi(a, b, c);
                if (!e) continue;
                PhasePoly sc = PhasePoly::constant(SpinMatrix::pauli(c, CRational(hbar / 2)));
                out += sym_mul(sc, sym_mul(f.derive(Coord::s(a)) * ds, g.derive(Coord::s(b)) * ds)) *
                       CRational(e);
            }
    return out;
}

}  // namespace twistlab
