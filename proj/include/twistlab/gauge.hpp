#pragma once

#include <array>
#include <vector>

#include "twistlab/phase_space.hpp"

namespace twistlab {

// Time profile lambda(t) of the spin-orbit strength; lambda runs 0 -> 1 over t_ramp.
struct Ramp {
    enum Shape { Constant, C1, C2 };
    Shape shape = Constant;
    double t_ramp = 0.0;
    double value(double t) const;
    double rate(double t) const;
};

// U(1) x SU(2) background. Index mu = 0 is time, mu = 1, 2 are x, y.
// Potentials are scalar-valued polynomials in X; the spin structure comes
// from s^a = (hbar/2) sigma^a. Light speed is 1, so q = |e|/m.
struct GaugeConfig {
    int dim = 3;
    Rational e{1}, q{1}, m{1}, hbar{1};
    std::vector<PhasePoly> a_u1;                 // A_mu
    std::vector<std::array<PhasePoly, 3>> a_su2;  // A^a_mu as a_su2[mu][a]
    Ramp ramp;

    static GaugeConfig zero(int dim = 3);
    bool is_zero() const;
    bool is_constant() const;
    // Throws if a potential depends on p or is not scalar-valued.
    void validate() const;

    PhasePoly spin(int a) const;  // (hbar/2) sigma^a
    // A^a_mu s^a - (e/q) A_mu
    PhasePoly hat_potential(int mu) const;
    // p^_mu - p_mu = -q A^a_mu s^a + e A_mu
    PhasePoly kinetic_shift(int mu) const;
};

struct FieldStrength {
    int dim = 0;
    std::vector<std::vector<PhasePoly>> f;  // f[mu][nu]
    const PhasePoly& operator()(int mu, int nu) const { return f.at(mu).at(nu); }
};

// F_{mu nu} = d_mu A^_nu - d_nu A^_mu + q eps^{abc} s^a A^b_mu A^c_nu.
FieldStrength field_strength(const GaugeConfig& g);

// Substitutes p_mu -> p^_mu as exp(M.d_p) with M_mu = kinetic_shift(mu),
// each application symmetrized. Exact for polynomial input; the inverse
// uses -M and undoes it exactly.
PhaseSeries minimal_substitution(const PhaseSeries& f, const GaugeConfig& g);
PhaseSeries inverse_minimal_substitution(const PhaseSeries& f, const GaugeConfig& g);

GaugeConfig rashba_dresselhaus_gauge(const Rational& alpha, const Rational& beta, const Rational& m,
                                     const Rational& e, const Rational& q, const Rational& hbar);
// U(1) time component m (alpha^2 + beta^2)/e of the Rashba-Dresselhaus gauge.
Rational rashba_dresselhaus_a0(const Rational& alpha, const Rational& beta, const Rational& m,
                               const Rational& e);

// H = p^2/2m + alpha (p_x sy - p_y sx) + beta (p_x sx - p_y sy) at V = 0, D = 3.
PhaseSeries rashba_dresselhaus_hamiltonian(const Rational& alpha, const Rational& beta,
                                           const Rational& m, int order);

bool is_helix_degenerate(double alpha, double beta, double tol = 1e-12);
bool is_helix_degenerate(const Rational& alpha, const Rational& beta);

}  // namespace twistlab
