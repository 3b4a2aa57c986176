#pragma once

#include <array>
#include <functional>
#include <map>
#include <optional>
#include <vector>

#include "twistlab/star.hpp"

namespace twistlab {

// Divided powers d_n = (1/n!) d^n with d_i d_j = C(i+j, i) d_{i+j}, or the
// two-element coalgebra D = {1, d} (indices 0 and 1).
enum class CoBasis { Divided, D };

class CoalgebraElement {
public:
    explicit CoalgebraElement(CoBasis b = CoBasis::Divided) : basis_(b) {}
    static CoalgebraElement basis(CoBasis b, int n, const Rational& c = Rational(1));

    CoBasis kind() const { return basis_; }
    const std::map<int, Rational>& terms() const { return c_; }
    void add(int n, const Rational& v);
    bool is_zero() const { return c_.empty(); }
    bool operator==(const CoalgebraElement&) const = default;

private:
    CoBasis basis_;
    std::map<int, Rational> c_;
};

CoalgebraElement operator+(CoalgebraElement a, const CoalgebraElement& b);
CoalgebraElement operator*(CoalgebraElement a, const Rational& s);

// Sum of k-fold tensors of basis elements.
class TensorWord {
public:
    TensorWord(CoBasis b, int arity) : basis_(b), arity_(arity) {}
    CoBasis kind() const { return basis_; }
    int arity() const { return arity_; }
    const std::map<std::vector<int>, Rational>& terms() const { return c_; }
    void add(const std::vector<int>& idx, const Rational& v);
    bool is_zero() const { return c_.empty(); }
    bool operator==(const TensorWord&) const = default;

private:
    CoBasis basis_;
    int arity_;
    std::map<std::vector<int>, Rational> c_;
};

TensorWord operator-(const TensorWord& a, const TensorWord& b);

TensorWord coproduct(const CoalgebraElement& x);
Rational counit(const CoalgebraElement& x);
CoalgebraElement antipode(const CoalgebraElement& x);
// Algebra product; throws when the result leaves D.
CoalgebraElement product(const CoalgebraElement& a, const CoalgebraElement& b);
CoalgebraElement unit(CoBasis b, const Rational& v = Rational(1));

// Linear maps applied to one slot of a tensor word.
TensorWord apply_coproduct_at(const TensorWord& w, int slot);      // arity + 1
TensorWord apply_counit_at(const TensorWord& w, int slot);         // arity - 1
TensorWord apply_antipode_at(const TensorWord& w, int slot);
CoalgebraElement multiply(const TensorWord& w);                     // arity 2 -> 1

TensorWord as_word(const CoalgebraElement& x);

// (Delta (x) id) Delta x - (id (x) Delta) Delta x
TensorWord coassociativity_residual(const CoalgebraElement& x);
// (eps (x) id) Delta x - x and (id (x) eps) Delta x - x
std::array<CoalgebraElement, 2> counit_residual(const CoalgebraElement& x);
// mu (id (x) S) Delta x - eps(x) 1 and mu (S (x) id) Delta x - eps(x) 1
std::array<CoalgebraElement, 2> antipode_residual(const CoalgebraElement& x);

// Realizations as differential operators in one coordinate.
PhasePoly apply_operator(const CoalgebraElement& x, Coord c, const PhasePoly& f);
// mu o w (f (x) g) with the symmetrized product.
PhasePoly apply_operator(const TensorWord& w, Coord c, const PhasePoly& f, const PhasePoly& g);

// Elements a0 + a1 l1 + a2 l2 + a3 l1 l2 over odd generators l1, l2; absent
// components are zero.
template <class T>
struct Grassmann {
    std::array<std::optional<T>, 4> c;  // 1, l1, l2, l3 = l1 l2

    static Grassmann with(int slot, const T& v) {
        Grassmann g;
        g.c[slot] = v;
        return g;
    }
    // Berezin integral over l3: the l1 l2 component.
    const std::optional<T>& integrate_l3() const { return c[3]; }
};

// Product of Grassmann-weighted factors. op(a, b, sign) combines the
// coefficients and applies the sign from reordering (l2 l1 = -l1 l2);
// l1^2 = l2^2 = 0.
template <class A, class B, class C>
Grassmann<C> grassmann_product(const Grassmann<A>& x, const Grassmann<B>& y,
                               const std::function<C(const A&, const B&, int)>& op) {
    Grassmann<C> out;
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
            if (!x.c[i] || !y.c[j] || (i & j)) continue;
            int sign = ((i & 2) && (j & 1)) ? -1 : 1;
            C v = op(*x.c[i], *y.c[j], sign);
            auto& slot = out.c[i | j];
            if (slot)
                *slot += v;
            else
                slot = std::move(v);
        }
    return out;
}

// Left multiplication of one leg (0 or 1) of every tensor term by a constant matrix.
TensorSeries multiply_leg(const TensorSeries& t, int leg, const SpinMatrix& m);

// Delta_{l1 eta}(l2 g) = (l1 eta) (x) (l2 g) + (l2 g) (x) (l1 eta), integrated
// over l3: eta (x) g - g (x) eta.
TensorSeries variation_pair(const SpinMatrix& eta, const PhaseSeries& g, int order);

// Delta^t = F_A^{-1} o Delta(eta) o F_0 on pairs, where Delta(eta) = eta (x) 1 + 1 (x) eta
// acts by left multiplication with eta = lambda s^a.
class TwistedCoproduct {
public:
    TwistedCoproduct(int a, const Rational& lambda, const GaugeConfig& gauge);
    const SpinMatrix& eta() const { return eta_; }
    TensorSeries apply(const TensorSeries& t) const;
    TensorSeries apply(const PhaseSeries& f, const PhaseSeries& g, int order) const;
    // Plain Delta(eta) without twists.
    TensorSeries untwisted(const TensorSeries& t) const;

private:
    SpinMatrix eta_;
    TwistElement f0_;
    TwistElement fa_inv_;
};

}  // namespace twistlab
