#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <complex>
#include <fftw3.h>

#include "twistlab/star.hpp"

using namespace twistlab;

namespace {

CRational c(long re, long im = 0) { return {Rational(re), Rational(im)}; }
PhaseSeries one(int order) { return PhaseSeries::constant(3, order, SpinMatrix::identity()); }

PhaseSeries nu_power(int k, const SpinMatrix& m, int order) {
    PhaseSeries s(3, order);
    s.coeff(k) = PhasePoly::constant(m);
    return s;
}

PhaseSeries rnd(std::mt19937_64& rng, int order, bool spin = true) {
    RandomPolySpec spec;
    spec.spin = spin;
    return {3, order, random_poly(rng, spec)};
}

GaugeConfig rd_gauge() { return rashba_dresselhaus_gauge(q(3, 10), q(1, 10), 1, 1, 1, 1); }

}  // namespace

TEST_CASE("canonical commutator [X^mu, p_nu] = i hbar delta") {
    StarConfig cfg{StarConfig::Moyal, 3};
    for (int mu = 0; mu < 3; ++mu)
        for (int nu = 0; nu < 3; ++nu) {
            auto comm = star_commutator(PhaseSeries::x(3, 3, mu), PhaseSeries::p(3, 3, nu), cfg);
            // 2 nu = i hbar
            auto expect = mu == nu ? nu_power(1, SpinMatrix::identity(c(2)), 3) : PhaseSeries(3, 3);
            CHECK(comm == expect);
        }
    CHECK(star_commutator(PhaseSeries::x(3, 3, 1), PhaseSeries::x(3, 3, 1), cfg).is_zero());
}

TEST_CASE("moyal unit and X^2 p^2 commutator") {
    std::mt19937_64 rng(1);
    auto f = rnd(rng, 3, false);
    CHECK(moyal_star(f, one(3), 3) == f);
    CHECK(moyal_star(one(3), f, 3) == f);

    MultiIndex x2, p2, xp;
    x2.x(1) = 2;
    p2.p(1) = 2;
    xp.x(1) = 1;
    xp.p(1) = 1;
    PhaseSeries X2(3, 3, PhasePoly::monomial(x2, SpinMatrix::identity()));
    PhaseSeries P2(3, 3, PhasePoly::monomial(p2, SpinMatrix::identity()));
    auto comm = star_commutator(X2, P2, {StarConfig::Moyal, 3});
    // 4 i hbar X p = 8 nu X p
    PhaseSeries expect(3, 3);
    expect.coeff(1) = PhasePoly::monomial(xp, SpinMatrix::identity(c(8)));
    CHECK(comm == expect);
}

TEST_CASE("associativity of moyal and spin star products") {
    std::mt19937_64 rng(2);
    for (int t = 0; t < 4; ++t) {
        auto f = rnd(rng, 3, false), g = rnd(rng, 3, false), h = rnd(rng, 3, false);
        CHECK(moyal_star(moyal_star(f, g, 3), h, 3) == moyal_star(f, moyal_star(g, h, 3), 3));
        auto a = rnd(rng, 3), b = rnd(rng, 3), d = rnd(rng, 3);
        CHECK(spin_star(spin_star(a, b, 3), d, 3) == spin_star(a, spin_star(b, d, 3), 3));
    }
}

TEST_CASE("order-0 consistency") {
    std::mt19937_64 rng(3);
    auto G = rd_gauge();
    for (int t = 0; t < 5; ++t) {
        auto f = rnd(rng, 2), g = rnd(rng, 2);
        CHECK(moyal_star(f, g, 2).coeff(0) == sym_mul(f, g).coeff(0));
        // Spin-carrying products keep the full matrix product at nu^0; its
        // symmetric part is the symmetrized product.
        for (auto st : {StarConfig::Spin, StarConfig::Gauge}) {
            StarConfig cfg{st, 2, &G};
            auto s = (star(f, g, cfg) + star(g, f, cfg)) * CRational(q(1, 2));
            CHECK(s.coeff(0) == sym_mul(f, g).coeff(0));
            CHECK(star(f, g, cfg).coeff(0) == mat_mul(f, g).coeff(0));
        }
    }
}

TEST_CASE("spin star examples") {
    const Rational hbar(1);
    auto s = [&](int a) { return PhaseSeries::constant(3, 2, SpinMatrix::pauli(a, CRational(hbar / 2))); };
    StarConfig cfg{StarConfig::Spin, 2};
    // [s^x, s^y] = i hbar s^z
    CHECK(star_commutator(s(0), s(1), cfg) == PhaseSeries::constant(3, 2, SpinMatrix::pauli(2, CRational(Rational(0), q(1, 2)))));
    CHECK(star_commutator(PhaseSeries::x(3, 2, 1), s(2), cfg).is_zero());
    CHECK(spin_star(s(0), s(0), 2) == PhaseSeries::constant(3, 2, SpinMatrix::identity(CRational(q(1, 4)))));
}

TEST_CASE("zero gauge reduces gauge star to spin star") {
    std::mt19937_64 rng(4);
    auto Z = GaugeConfig::zero(3);
    for (int t = 0; t < 20; ++t) {
        auto f = rnd(rng, 2), g = rnd(rng, 2);
        CHECK(gauge_star(f, g, Z, 2) == spin_star(f, g, 2));
    }
}

TEST_CASE("gauge star rejects momentum-dependent potentials") {
    auto G = GaugeConfig::zero(3);
    MultiIndex mi;
    mi.p(1) = 1;
    G.a_su2[1][0] = PhasePoly::monomial(mi, SpinMatrix::identity());
    CHECK_THROWS_AS(gauge_star(one(1), one(1), G, 1), std::invalid_argument);
}

TEST_CASE("kinetic momentum commutator gives the field strength") {
    auto G = rd_gauge();
    FieldStrength F = field_strength(G);
    StarConfig cfg{StarConfig::Gauge, 2, &G};
    auto comm = star_commutator(PhaseSeries::p(3, 2, 1), PhaseSeries::p(3, 2, 2), cfg);
    // i hbar q F_xy = 2 nu q F_xy
    PhaseSeries expect(3, 2);
    expect.coeff(1) = F(1, 2) * CRational(2 * G.q);
    CHECK(comm == expect);
    // Same value from the canonical spin star acting on the substituted momenta.
    auto px = minimal_substitution(PhaseSeries::p(3, 2, 1), G);
    auto py = minimal_substitution(PhaseSeries::p(3, 2, 2), G);
    auto canon = star_commutator(px, py, {StarConfig::Spin, 2});
    CHECK(collapse(canon, G.hbar) == collapse(comm, G.hbar));
    // Only the z Pauli component survives and it is nonzero for alpha != beta.
    CHECK(!F(1, 2).is_zero());
    for (const auto& [mi, m] : F(1, 2).terms()) {
        CHECK(m.c[0].is_zero());
        CHECK(m.c[1].is_zero());
        CHECK(m.c[2].is_zero());
    }
}

TEST_CASE("first-order antisymmetrized gauge star is the gauge Poisson bracket") {
    std::mt19937_64 rng(5);
    auto G = rd_gauge();
    for (int t = 0; t < 10; ++t) {
        auto f = rnd(rng, 1), g = rnd(rng, 1);
        auto comm = gauge_star(f, g, G, 1) - gauge_star(g, f, G, 1);
        CHECK(comm.coeff(1) * CRational(q(1, 2)) == gauge_poisson_bracket(f.coeff(0), g.coeff(0), G));
        // The spin block sits in the nu^0 matrix commutator: i hbar {f,g}_ss.
        CHECK(comm.coeff(0) ==
              spin_poisson_bracket(f.coeff(0), g.coeff(0), G.hbar) * CRational(Rational(0), G.hbar));
    }
}

TEST_CASE("twist map F0->A") {
    std::mt19937_64 rng(6);
    auto G = rd_gauge();
    auto Z = GaugeConfig::zero(3);
    auto F0 = moyal_twist(3);
    auto M = twist_0_to_A(G);
    for (int t = 0; t < 20; ++t) {
        auto f = rnd(rng, 2), g = rnd(rng, 2);
        auto pair = TensorSeries::pair(f, g, 2);
        CHECK(twist_0_to_A(Z).apply(pair) == pair);
        CHECK(contract(M.apply(F0.apply(pair)), InnerProduct::Matrix) == gauge_star(f, g, G, 2));
        CHECK(M.inverse().apply(M.apply(pair)) == pair);
    }
}

TEST_CASE("star commutator antisymmetry") {
    std::mt19937_64 rng(7);
    auto G = rd_gauge();
    for (auto st : {StarConfig::Moyal, StarConfig::Spin, StarConfig::Gauge}) {
        StarConfig cfg{st, 2, &G};
        auto f = rnd(rng, 2, st != StarConfig::Moyal), g = rnd(rng, 2, st != StarConfig::Moyal);
        CHECK(star_commutator(f, g, cfg) == star_commutator(g, f, cfg) * c(-1));
    }
}

// Weyl quantization on a periodic grid: the operator of f *_M g must equal
// the operator product of f and g (convolution of kernels).
namespace {

struct Grid1D {
    int n;
    double len;
    std::vector<double> x, k;
    Grid1D(int n_, double len_) : n(n_), len(len_), x(n_), k(n_) {
        for (int j = 0; j < n; ++j) {
            x[j] = -len / 2 + len * j / n;
            int m = j <= n / 2 ? j : j - n;
            k[j] = 2 * M_PI * m / len;
        }
    }
    // p psi with p = -i hbar d/dx, hbar = 1
    std::vector<std::complex<double>> p(const std::vector<std::complex<double>>& psi) const {
        std::vector<std::complex<double>> out(n);
        auto* buf = reinterpret_cast<fftw_complex*>(out.data());
        fftw_plan fw = fftw_plan_dft_1d(n, buf, buf, FFTW_FORWARD, FFTW_ESTIMATE);
        fftw_plan bw = fftw_plan_dft_1d(n, buf, buf, FFTW_BACKWARD, FFTW_ESTIMATE);
        out = psi;
        fftw_execute(fw);
        for (int j = 0; j < n; ++j) out[j] *= k[j] / double(n);
        fftw_execute(bw);
        fftw_destroy_plan(fw);
        fftw_destroy_plan(bw);
        return out;
    }
    std::vector<std::complex<double>> xmul(const std::vector<std::complex<double>>& psi, int a) const {
        auto out = psi;
        for (int j = 0; j < n; ++j) out[j] *= std::pow(x[j], a);
        return out;
    }
};

// Weyl(x^a p^b) = 2^-a sum_k C(a,k) x^k p^b x^(a-k)
std::vector<std::complex<double>> weyl_apply(const PhasePoly& f, const Grid1D& grid,
                                             const std::vector<std::complex<double>>& psi) {
    std::vector<std::complex<double>> out(grid.n);
    for (const auto& [mi, m] : f.terms()) {
        int a = mi.x(0), b = mi.p(0);
        std::complex<double> coef = m.c[0].to_complex() / std::pow(2.0, a);
        for (int k = 0; k <= a; ++k) {
            auto v = grid.xmul(psi, a - k);
            for (int r = 0; r < b; ++r) v = grid.p(v);
            v = grid.xmul(v, k);
            double binom = std::tgamma(a + 1) / (std::tgamma(k + 1) * std::tgamma(a - k + 1));
            for (int j = 0; j < grid.n; ++j) out[j] += coef * binom * v[j];
        }
    }
    return out;
}

}  // namespace

TEST_CASE("Weyl correspondence: operator of f*g equals operator product") {
    Grid1D grid(256, 40.0);
    std::vector<std::complex<double>> psi(grid.n);
    for (int j = 0; j < grid.n; ++j) psi[j] = std::exp(-grid.x[j] * grid.x[j] / 2.0) * std::exp(std::complex<double>(0, 0.7 * grid.x[j]));
    std::mt19937_64 rng(8);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int t = 0; t < 6; ++t) {
        PhasePoly pf, pg;
        for (int a = 0; a <= 2; ++a)
            for (int b = 0; a + b <= 3; ++b) {
                MultiIndex mi;
                mi.x(0) = static_cast<std::uint8_t>(a);
                mi.p(0) = static_cast<std::uint8_t>(b);
                pf.add_term(mi, SpinMatrix::identity(CRational(rationalize(gauss(rng), 64))));
                pg.add_term(mi, SpinMatrix::identity(CRational(rationalize(gauss(rng), 64))));
            }
        PhaseSeries f(1, 6, pf), g(1, 6, pg);
        PhasePoly fg = collapse(moyal_star(f, g, 6), Rational(1));
        auto lhs = weyl_apply(fg, grid, psi);
        auto rhs = weyl_apply(pf, grid, weyl_apply(pg, grid, psi));
        double num = 0, den = 0;
        for (int j = 0; j < grid.n; ++j) {
            num += std::norm(lhs[j] - rhs[j]);
            den += std::norm(rhs[j]);
        }
        CHECK(std::sqrt(num / den) < 1e-8);
    }
}
