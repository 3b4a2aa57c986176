#include "twistlab/hopf.hpp"

#include <stdexcept>

namespace twistlab {

namespace {

void check_index(CoBasis b, int n) {
    if (n < 0) throw std::invalid_argument("negative basis index");
    if (b == CoBasis::D && n > 1) throw std::invalid_argument("D has basis {1, d} only");
}

Rational binomial(int n, int k) {
    Rational r(1);
    for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
}

Rational factorial(int n) {
    Rational r(1);
    for (int i = 2; i <= n; ++i) r *= i;
    return r;
}

void same_basis(CoBasis a, CoBasis b) {
    if (a != b) throw std::invalid_argument("mixed coalgebra bases");
}

}  // namespace

CoalgebraElement CoalgebraElement::basis(CoBasis b, int n, const Rational& c) {
    CoalgebraElement x(b);
    x.add(n, c);
    return x;
}

void CoalgebraElement::add(int n, const Rational& v) {
    check_index(basis_, n);
    if (v == 0) return;
    auto it = c_.find(n);
    if (it == c_.end()) {
        c_.emplace(n, v);
        return;
    }
    it->second += v;
    if (it->second == 0) c_.erase(it);
}

CoalgebraElement operator+(CoalgebraElement a, const CoalgebraElement& b) {
    same_basis(a.kind(), b.kind());
    for (const auto& [n, v] : b.terms()) a.add(n, v);
    return a;
}

CoalgebraElement operator*(CoalgebraElement a, const Rational& s) {
    CoalgebraElement out(a.kind());
    for (const auto& [n, v] : a.terms()) out.add(n, v * s);
    return out;
}

void TensorWord::add(const std::vector<int>& idx, const Rational& v) {
    if (static_cast<int>(idx.size()) != arity_) throw std::invalid_argument("tensor arity mismatch");
    for (int n : idx) check_index(basis_, n);
    if (v == 0) return;
    auto it = c_.find(idx);
    if (it == c_.end()) {
        c_.emplace(idx, v);
        return;
    }
    it->second += v;
    if (it->second == 0) c_.erase(it);
}

TensorWord operator-(const TensorWord& a, const TensorWord& b) {
    same_basis(a.kind(), b.kind());
    if (a.arity() != b.arity()) throw std::invalid_argument("tensor arity mismatch");
    TensorWord out = a;
    for (const auto& [idx, v] : b.terms()) out.add(idx, -v);
    return out;
}

TensorWord coproduct(const CoalgebraElement& x) {
    TensorWord w(x.kind(), 2);
    for (const auto& [n, v] : x.terms())
        for (int i = 0; i <= n; ++i) w.add({i, n - i}, v);
    return w;
}

Rational counit(const CoalgebraElement& x) {
    auto it = x.terms().find(0);
    return it == x.terms().end() ? Rational(0) : it->second;
}

CoalgebraElement antipode(const CoalgebraElement& x) {
    CoalgebraElement out(x.kind());
    for (const auto& [n, v] : x.terms()) out.add(n, n % 2 ? Rational(-v) : v);
    return out;
}

CoalgebraElement product(const CoalgebraElement& a, const CoalgebraElement& b) {
    same_basis(a.kind(), b.kind());
    CoalgebraElement out(a.kind());
    for (const auto& [i, u] : a.terms())
        for (const auto& [j, v] : b.terms()) {
            if (a.kind() == CoBasis::D && i + j > 1) throw std::domain_error("d d is not an element of D");
            out.add(i + j, binomial(i + j, i) * u * v);
        }
    return out;
}

CoalgebraElement unit(CoBasis b, const Rational& v) { return CoalgebraElement::basis(b, 0, v); }

TensorWord as_word(const CoalgebraElement& x) {
    TensorWord w(x.kind(), 1);
    for (const auto& [n, v] : x.terms()) w.add({n}, v);
    return w;
}

TensorWord apply_coproduct_at(const TensorWord& w, int slot) {
    if (slot < 0 || slot >= w.arity()) throw std::out_of_range("tensor slot");
    TensorWord out(w.kind(), w.arity() + 1);
    for (const auto& [idx, v] : w.terms())
        for (int i = 0; i <= idx[slot]; ++i) {
            std::vector<int> nidx(idx.begin(), idx.begin() + slot);
            nidx.push_back(i);
            nidx.push_back(idx[slot] - i);
            nidx.insert(nidx.end(), idx.begin() + slot + 1, idx.end());
            out.add(nidx, v);
        }
    return out;
}

TensorWord apply_counit_at(const TensorWord& w, int slot) {
    if (slot < 0 || slot >= w.arity()) throw std::out_of_range("tensor slot");
    TensorWord out(w.kind(), w.arity() - 1);
    for (const auto& [idx, v] : w.terms()) {
        if (idx[slot] != 0) continue;
        std::vector<int> nidx = idx;
        nidx.erase(nidx.begin() + slot);
        out.add(nidx, v);
    }
    return out;
}

TensorWord apply_antipode_at(const TensorWord& w, int slot) {
    if (slot < 0 || slot >= w.arity()) throw std::out_of_range("tensor slot");
    TensorWord out(w.kind(), w.arity());
    for (const auto& [idx, v] : w.terms()) out.add(idx, idx[slot] % 2 ? Rational(-v) : v);
    return out;
}

CoalgebraElement multiply(const TensorWord& w) {
    if (w.arity() != 2) throw std::invalid_argument("multiply needs a 2-tensor");
    CoalgebraElement out(w.kind());
    for (const auto& [idx, v] : w.terms())
        out = out + product(CoalgebraElement::basis(w.kind(), idx[0], v), CoalgebraElement::basis(w.kind(), idx[1]));
    return out;
}

TensorWord coassociativity_residual(const CoalgebraElement& x) {
    auto d = coproduct(x);
    return apply_coproduct_at(d, 0) - apply_coproduct_at(d, 1);
}

std::array<CoalgebraElement, 2> counit_residual(const CoalgebraElement& x) {
    auto d = coproduct(x);
    std::array<CoalgebraElement, 2> out{CoalgebraElement(x.kind()), CoalgebraElement(x.kind())};
    for (int s = 0; s < 2; ++s) {
        auto w = apply_counit_at(d, s);
        CoalgebraElement y(x.kind());
        for (const auto& [idx, v] : w.terms()) y.add(idx[0], v);
        out[s] = y + x * Rational(-1);
    }
    return out;
}

std::array<CoalgebraElement, 2> antipode_residual(const CoalgebraElement& x) {
    auto d = coproduct(x);
    auto eps_unit = unit(x.kind(), counit(x));
    return {multiply(apply_antipode_at(d, 1)) + eps_unit * Rational(-1),
            multiply(apply_antipode_at(d, 0)) + eps_unit * Rational(-1)};
}

PhasePoly apply_operator(const CoalgebraElement& x, Coord c, const PhasePoly& f) {
    PhasePoly out;
    for (const auto& [n, v] : x.terms()) {
        PhasePoly d = f;
        for (int k = 0; k < n && !d.is_zero(); ++k) d = d.derive(c);
        out += d * CRational(v / factorial(n));
    }
    return out;
}

PhasePoly apply_operator(const TensorWord& w, Coord c, const PhasePoly& f, const PhasePoly& g) {
    if (w.arity() != 2) throw std::invalid_argument("apply_operator needs a 2-tensor");
    PhasePoly out;
    for (const auto& [idx, v] : w.terms()) {
        auto df = apply_operator(CoalgebraElement::basis(w.kind(), idx[0]), c, f);
        auto dg = apply_operator(CoalgebraElement::basis(w.kind(), idx[1]), c, g);
        out += sym_mul(df, dg) * CRational(v);
    }
    return out;
}

// ---- twisted coproduct ----

TensorSeries multiply_leg(const TensorSeries& t, int leg, const SpinMatrix& m) {
    if (leg != 0 && leg != 1) throw std::out_of_range("tensor leg");
    TensorSeries out(t.dim(), t.order());
    for (int k = 0; k <= t.order(); ++k)
        for (const auto& [key, v] : t.coeff(k)) {
            const int idx = leg == 0 ? key.i : key.j;
            SpinMatrix basis;
            basis.c[idx] = v;
            SpinMatrix prod = mat_mul(m, basis);
            for (int r = 0; r < 4; ++r) {
                if (prod.c[r].is_zero()) continue;
                TensorKey nk = key;
                (leg == 0 ? nk.i : nk.j) = static_cast<std::uint8_t>(r);
                out.add(k, nk, prod.c[r]);
            }
        }
    return out;
}

TensorSeries variation_pair(const SpinMatrix& eta, const PhaseSeries& g, int order) {
    using G = Grassmann<PhaseSeries>;
    const PhaseSeries e = PhaseSeries::constant(g.dim(), g.order(), eta);
    auto tensor = std::function<TensorSeries(const PhaseSeries&, const PhaseSeries&, int)>(
        [order](const PhaseSeries& a, const PhaseSeries& b, int sign) {
            auto t = TensorSeries::pair(a, b, order);
            if (sign > 0) return t;
            TensorSeries z(t.dim(), t.order());
            z -= t;
            return z;
        });
    auto first = grassmann_product(G::with(1, e), G::with(2, g), tensor);
    auto second = grassmann_product(G::with(2, g), G::with(1, e), tensor);
    TensorSeries out = *first.integrate_l3();
    out += *second.integrate_l3();
    return out;
}

TwistedCoproduct::TwistedCoproduct(int a, const Rational& lambda, const GaugeConfig& gauge)
    : eta_(SpinMatrix::pauli(a, CRational(lambda * gauge.hbar / 2))),
      f0_(moyal_twist(gauge.dim)),
      fa_inv_(gauge_twist(gauge).inverse()) {
    if (a < 0 || a > 2) throw std::out_of_range("spin component");
}

TensorSeries TwistedCoproduct::untwisted(const TensorSeries& t) const {
    TensorSeries out = multiply_leg(t, 0, eta_);
    out += multiply_leg(t, 1, eta_);
    return out;
}

TensorSeries TwistedCoproduct::apply(const TensorSeries& t) const { return fa_inv_.apply(untwisted(f0_.apply(t))); }

TensorSeries TwistedCoproduct::apply(const PhaseSeries& f, const PhaseSeries& g, int order) const {
    return apply(TensorSeries::pair(f, g, order));
}

}  // namespace twistlab
