#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "twistlab/gauge.hpp"
#include "twistlab/star.hpp"

namespace twistlab {

// ---- classical jet-space currents ----

// Jet variables for nf real or complex field components in D dimensions:
// x^mu, phi_r, phi_{r,mu} and phi_{r,mu nu} (mu <= nu).
class JetSpace {
public:
    JetSpace(int dim, int fields);
    int dim() const { return dim_; }
    int fields() const { return nf_; }
    int size() const { return size_; }

    int x(int mu) const;
    int phi(int r) const;
    int d(int r, int mu) const;
    int dd(int r, int mu, int nu) const;

private:
    int dim_, nf_, size_;
};

class JetPoly {
public:
    using Exps = std::vector<std::uint8_t>;

    JetPoly() = default;
    explicit JetPoly(const JetSpace& s) : n_(s.size()) {}
    static JetPoly constant(const JetSpace& s, const CRational& v);
    static JetPoly var(const JetSpace& s, int v, const CRational& c = CRational(1));

    int nvars() const { return n_; }
    const std::map<Exps, CRational>& terms() const { return t_; }
    bool is_zero() const { return t_.empty(); }
    void add(const Exps& e, const CRational& v);

    JetPoly& operator+=(const JetPoly& o);
    JetPoly& operator-=(const JetPoly& o);
    JetPoly& operator*=(const CRational& s);
    JetPoly derive(int v) const;
    bool depends_on(int v) const;
    std::string str(const JetSpace& s) const;

private:
    int n_ = 0;
    std::map<Exps, CRational> t_;
};

JetPoly operator+(JetPoly a, const JetPoly& b);
JetPoly operator-(JetPoly a, const JetPoly& b);
JetPoly operator*(const JetPoly& a, const JetPoly& b);
JetPoly operator*(JetPoly a, const CRational& s);
bool operator==(const JetPoly& a, const JetPoly& b);

// D_mu = d/dx^mu + phi_{r,mu} d/dphi_r + phi_{r,mu nu} d/dphi_{r,nu}.
// Throws if the input already contains second jets.
JetPoly total_derivative(const JetSpace& s, const JetPoly& f, int mu);

// L(phi, d phi) with no explicit x dependence.
struct FieldLagrangian {
    JetSpace space;
    JetPoly density;
};

// delta x^mu (polynomial in x) and delta phi_r (polynomial in x, phi, d phi).
struct FieldSymmetry {
    std::vector<JetPoly> dx;
    std::vector<JetPoly> dphi;
};

struct ClassicalCurrent {
    std::vector<JetPoly> j;            // j^mu
    JetPoly divergence;                // D_mu j^mu
    JetPoly eom_part;                  // -E_r delta^L phi_r
    JetPoly remainder;                 // divergence - eom_part
    std::vector<JetPoly> euler_lagrange;  // E_r
};

// j^mu = L delta x^mu + dL/d(phi_{r,mu}) delta^L phi_r with
// delta^L phi = delta phi - phi_{,nu} delta x^nu. Refuses transforms with
// d_mu delta x^mu != 0 and Lagrangians with explicit x or second jets.
ClassicalCurrent classical_noether_current(const FieldLagrangian& L, const FieldSymmetry& t);

// ---- opaque Wigner function ----

// Monomial d^theta(theta) * d^g(G_r) with theta(X) and G = sum_r G_r sigma_r
// opaque; the theta factor is absent unless with_theta. theta carries X
// exponents only.
struct GMonomial {
    bool with_theta = false;
    MultiIndex theta;
    MultiIndex g;
    std::uint8_t r = 0;
    bool operator==(const GMonomial&) const = default;
};
bool operator<(const GMonomial& a, const GMonomial& b);

// Sums of coefficient * monomial; linear in G and in theta (when present).
// Coefficients are matrix-valued before the trace and scalar after.
class GExpr {
public:
    using Terms = std::map<GMonomial, PhasePoly>;

    GExpr() = default;
    // left * d^g G * right, expanded into Pauli components of G.
    static GExpr sandwich(const PhasePoly& left, const MultiIndex& g, const PhasePoly& right,
                          const std::optional<MultiIndex>& theta = std::nullopt);
    // c * d^g G_r
    static GExpr component(int r, const MultiIndex& g, const PhasePoly& c,
                           const std::optional<MultiIndex>& theta = std::nullopt);

    const Terms& terms() const { return t_; }
    bool is_zero() const { return t_.empty(); }
    bool has_theta() const;
    void add(const GMonomial& m, const PhasePoly& c);

    GExpr& operator+=(const GExpr& o);
    GExpr& operator-=(const GExpr& o);
    GExpr& operator*=(const CRational& s);
    // Product rule over coefficient, theta and (when include_g) G.
    GExpr derive(Coord c, bool include_g = true) const;
    // tr over spin: coefficient -> 2 * identity component * G_r-weight.
    GExpr trace() const;
    // Substitutes concrete polynomials for theta (scalar, X only) and G.
    PhasePoly evaluate(const PhasePoly& theta, const PhasePoly& g) const;
    std::string str() const;

private:
    Terms t_;
};

GExpr operator+(GExpr a, const GExpr& b);
GExpr operator-(GExpr a, const GExpr& b);
GExpr operator*(GExpr a, const CRational& s);
bool operator==(const GExpr& a, const GExpr& b);

// nu^k coefficients, k = 0..order.
struct GSeries {
    int order = 0;
    std::vector<GExpr> c;

    explicit GSeries(int n = 0) : order(n), c(n + 1) {}
    bool is_zero() const;
    GSeries trace() const;
    PhaseSeries evaluate(int dim, const PhasePoly& theta, const PhasePoly& g) const;
    bool operator==(const GSeries& o) const = default;
};

// Normal form under integration over X and p: every derivative moved off G
// (and theta) onto the coefficient. Equal normal forms <=> equal integrals.
GExpr integrated_normal_form(const GExpr& e);
GSeries integrated_normal_form(const GSeries& s);

// ---- twisted variation and current ----

struct LagrangianSymbol {
    PhaseSeries l;

    // p_0 - sum_i p_i^2 / 2m in kinetic momenta.
    static LagrangianSymbol free(int dim, const Rational& m, int order = 0);
};

// Density of delta^t_{s^a} L = mu^ o F^_A o theta^ o Delta^t (L^ (x) G) with
// theta^ = (theta (x) 1 + 1 (x) theta) / 2 on the two variation slots.
// For X-independent gauges F^_A theta^ F^_A^{-1} = F^_0 theta^ F^_0^{-1}, so
// only the Moyal part acts on theta.
struct TwistedVariation {
    int dim = 0;
    int spin_axis = 0;
    GSeries density;  // before trace, theta opaque
};

// Throws for N > 3 (a current at order N needs the variation at N + 1) or a
// gauge that depends on X.
TwistedVariation twisted_variation(const LagrangianSymbol& L, int a, const GaugeConfig& gauge, int order);

// The traced variation with theta = 1; zero means the variation integrates
// to zero for constant theta.
GSeries constant_theta_variation(const TwistedVariation& v);

// j^mu normalized so that delta^t S = -nu int d_mu theta j^mu + int theta R,
// i.e. j^mu = -(1/nu) delta^t S / delta(d_mu theta). Coefficients are traced
// and p-integration is implied. R collects undifferentiated-theta terms and
// vanishes for a symmetry.
struct CurrentSeries {
    int dim = 0;
    int order = 0;
    std::vector<GSeries> j;  // j[mu]
    GSeries remainder;
};

enum class Homotopy { FirstIndex, LastIndex };

CurrentSeries extract_current(const TwistedVariation& v, int order, Homotopy h = Homotopy::FirstIndex);
CurrentSeries twisted_current(const LagrangianSymbol& L, int a, const GaugeConfig& gauge, int order,
                              Homotopy h = Homotopy::FirstIndex);

// -nu int d_mu theta j^mu for a concrete theta, as a traced G-expression
// (shifted by one nu order); compare against the variation evaluated at theta.
GSeries variation_from_current(const CurrentSeries& j, const PhasePoly& theta);
GSeries variation_at_theta(const TwistedVariation& v, const PhasePoly& theta, int order);

// d_mu j^mu as a traced expression.
GSeries divergence(const CurrentSeries& j);

// Reduction modulo the free equations of motion L^ *_0 G = 0 = G *_0 L^ and
// p-integration by parts. L^ must be scalar, X-independent, at most quadratic
// in p and linear in p_0 with a constant coefficient:
//   sum_mu dL/dp_mu d_mu G = 0,
//   L G + (nu^2/2) d_p^mu d_p^nu L d_mu d_nu G = 0.
GSeries reduce_on_shell(const GSeries& s, const LagrangianSymbol& L);

// tr(s^a G) as a traced expression.
GExpr spin_density(int a, const Rational& hbar);

// Rewrites a kinetic-momentum current in canonical momenta to first order in
// the potentials: G_kin = G - sym(M_mu, d_p^mu G) with M = kinetic_shift.
CurrentSeries to_canonical(const CurrentSeries& j, const GaugeConfig& gauge);

std::string to_text(const CurrentSeries& j);

// ---- covariant continuity on grids ----

// Spin density and currents J^a_mu on a periodic nx x ny grid, row-major
// (index iy * nx + ix). drho_dt supplies d_t J^a_0.
struct SpinCurrentGrid {
    int nx = 0, ny = 0;
    double dx = 1, dy = 1;
    std::array<std::vector<double>, 3> rho, jx, jy, drho_dt;
};

// Numeric SU(2) potentials A^a_mu (mu = 0, 1, 2) and coupling q.
struct NumericGauge {
    double q = 1;
    std::array<std::array<double, 3>, 3> a{};  // a[mu][a]

    static NumericGauge from(const GaugeConfig& g);
};

// D_0 J^a_0 + D_i J^a_i with D_mu J^a = d_mu J^a + q eps^{abc} A^b_mu J^c,
// fourth-order periodic differences in space.
std::array<std::vector<double>, 3> covariant_continuity_residual(const SpinCurrentGrid& J, const NumericGauge& g);
// Same without the gauge insertions.
std::array<std::vector<double>, 3> ordinary_continuity_residual(const SpinCurrentGrid& J);

}  // namespace twistlab
