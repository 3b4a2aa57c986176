#pragma once

#include <map>
#include <vector>

#include "twistlab/gauge.hpp"
#include "twistlab/phase_space.hpp"

namespace twistlab {

// coefficient * prefactor * (d_left f) (x) (d_right g), raising the nu power.
// The coefficient multiplies the coefficient slot of a tensor (see TensorKey)
// from the left and is not differentiated by later generators.
struct BiDiffTerm {
    std::vector<Coord> left;
    std::vector<Coord> right;
    PhasePoly coefficient = PhasePoly::constant(SpinMatrix::identity());
    CRational prefactor{1};
    int nu_power = 1;
};

using Generator = std::vector<BiDiffTerm>;

// Basis element X^c sigma_k (slot) * [X^a sigma_i] (x) [X^b sigma_j].
// Pauli indices run 0..3 with 0 the identity.
struct TensorKey {
    MultiIndex a, b, c;
    std::uint8_t i = 0, j = 0, k = 0;
    bool operator==(const TensorKey&) const = default;
};
bool operator<(const TensorKey& x, const TensorKey& y);

class TensorSeries {
public:
    using Sum = std::map<TensorKey, CRational>;

    TensorSeries(int dim, int order);
    static TensorSeries pair(const PhaseSeries& f, const PhaseSeries& g, int order);

    int dim() const { return dim_; }
    int order() const { return order_; }
    const Sum& coeff(int k) const { return c_.at(k); }
    Sum& coeff(int k) { return c_.at(k); }
    bool is_zero() const;
    size_t size() const;

    void add(int nu, const TensorKey& key, const CRational& v);
    TensorSeries& operator+=(const TensorSeries& o);
    TensorSeries& operator-=(const TensorSeries& o);
    bool operator==(const TensorSeries& o) const;

private:
    int dim_;
    int order_;
    std::vector<Sum> c_;
};

// Applies sign * generator once (nu powers raised per term).
TensorSeries apply_generator(const Generator& gen, const TensorSeries& t, int sign = 1);
// exp(sign * generator), truncated at the tensor's order.
TensorSeries apply_exp(const Generator& gen, const TensorSeries& t, int sign = 1);

// Ordered product of exponentials; factors[0] is leftmost and acts last.
class TwistElement {
public:
    struct Factor {
        Generator gen;
        int sign = 1;
    };

    TwistElement() = default;
    explicit TwistElement(std::vector<Factor> factors) : factors_(std::move(factors)) {}

    const std::vector<Factor>& factors() const { return factors_; }
    TensorSeries apply(const TensorSeries& t) const;
    // Reverse order and negate exponents.
    TwistElement inverse() const;
    // Negate exponents keeping the order.
    TwistElement negated() const;
    // (*this) o other: other acts first.
    TwistElement compose(const TwistElement& other) const;

private:
    std::vector<Factor> factors_;
};

enum class InnerProduct { Symmetric, Matrix };

// Sum over basis elements of sym(slot, inner(left, right)).
PhaseSeries contract(const TensorSeries& t, InnerProduct inner);

// sum_mu (d_X^mu (x) d_p_mu - d_p_mu (x) d_X^mu)
Generator moyal_generator(int dim);
// Pieces of the gauge twist (momentum derivatives are kinetic momenta).
Generator spin_momentum_generator(const GaugeConfig& g);  // eps s^a A^b_mu d_p/d_s mixing
Generator field_strength_generator(const GaugeConfig& g);  // q F_{mu nu} d_p (x) d_p

TwistElement moyal_twist(int dim);
// exp{Xp} o exp{spin/A} o exp{F}
TwistElement gauge_twist(const GaugeConfig& g);
// F_A o F_0^{-1}
TwistElement twist_0_to_A(const GaugeConfig& g);

PhaseSeries moyal_star(const PhaseSeries& f, const PhaseSeries& g, int order);
PhaseSeries spin_star(const PhaseSeries& f, const PhaseSeries& g, int order);
PhaseSeries gauge_star(const PhaseSeries& f, const PhaseSeries& g, const GaugeConfig& gauge, int order);

struct StarConfig {
    enum Kind { Moyal, Spin, Gauge };
    Kind kind = Moyal;
    int order = 2;
    const GaugeConfig* gauge = nullptr;
};

PhaseSeries star(const PhaseSeries& f, const PhaseSeries& g, const StarConfig& cfg);
PhaseSeries star_commutator(const PhaseSeries& f, const PhaseSeries& g, const StarConfig& cfg);

// Direct first-order bracket in kinetic variables (X, p^, s), true s-derivatives:
//   {f,g} = d_X f d_p g - d_p f d_X g + q F_{mu nu} d_p^mu f d_p^nu g
//           - q eps^{abc} s^a A^b_mu d_p^mu f d_s^c g + q eps^{abc} s^a A^b_mu d_s^c f d_p^mu g
// Coefficients are symmetrized onto sym(d f, d g). The spin-spin block is
// returned separately.
PhasePoly gauge_poisson_bracket(const PhasePoly& f, const PhasePoly& g, const GaugeConfig& gauge);
PhasePoly spin_poisson_bracket(const PhasePoly& f, const PhasePoly& g, const Rational& hbar);

}  // namespace twistlab
