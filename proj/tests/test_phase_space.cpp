#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "twistlab/phase_space.hpp"

using namespace twistlab;

namespace {

CRational c(long re, long im = 0) { return {Rational(re), Rational(im)}; }

// Plain 2x2 complex-rational matrix product, independent of the Pauli code.
std::array<CRational, 4> matmul2(const std::array<CRational, 4>& a, const std::array<CRational, 4>& b) {
    return {a[0] * b[0] + a[1] * b[2], a[0] * b[1] + a[1] * b[3],
            a[2] * b[0] + a[3] * b[2], a[2] * b[1] + a[3] * b[3]};
}

PhaseSeries series(const PhasePoly& p, int order = 2) { return {3, order, p}; }

MultiIndex mono(std::initializer_list<int> xs, std::initializer_list<int> ps) {
    MultiIndex mi;
    int k = 0;
    for (int v : xs) mi.x(k++) = static_cast<std::uint8_t>(v);
    k = 0;
    for (int v : ps) mi.p(k++) = static_cast<std::uint8_t>(v);
    return mi;
}

}  // namespace

TEST_CASE("pauli_decompose examples") {
    auto id = pauli_decompose(SpinMatrix::identity());
    CHECK(id.scalar == c(1));
    CHECK(id.vec[0].is_zero());

    auto sx = pauli_decompose(SpinMatrix::from_entries({c(0), c(1), c(1), c(0)}));
    CHECK(sx.scalar.is_zero());
    CHECK(sx.vec[0] == c(1));
    CHECK(sx.vec[1].is_zero());

    auto m = pauli_decompose(SpinMatrix::from_entries({c(2), c(1, -1), c(1, 1), c(0)}));
    CHECK(m.scalar == c(1));
    CHECK(m.vec[0] == c(1));
    CHECK(m.vec[1] == c(1));
    CHECK(m.vec[2] == c(1));
}

TEST_CASE("compose/decompose round trip on random matrices") {
    std::mt19937_64 rng(11);
    std::uniform_int_distribution<int> v(-9, 9), d(1, 7);
    for (int t = 0; t < 100; ++t) {
        std::array<CRational, 4> ent;
        for (auto& e : ent) {
            Rational re(v(rng), d(rng)), im(v(rng), d(rng));
            re.canonicalize();
            im.canonicalize();
            e = {re, im};
        }
        auto m = SpinMatrix::from_entries(ent);
        CHECK(m.entries() == ent);
        CHECK(SpinMatrix::from_entries(m.entries()) == m);
    }
}

TEST_CASE("matrix product agrees with explicit 2x2 multiplication") {
    std::mt19937_64 rng(5);
    RandomPolySpec spec;
    spec.complex_coeffs = true;
    for (int t = 0; t < 50; ++t) {
        auto a = random_poly(rng, spec).terms().begin()->second;
        auto b = random_poly(rng, spec).terms().begin()->second;
        CHECK(mat_mul(a, b).entries() == matmul2(a.entries(), b.entries()));
        auto ab = matmul2(a.entries(), b.entries());
        auto ba = matmul2(b.entries(), a.entries());
        std::array<CRational, 4> half;
        for (int k = 0; k < 4; ++k) half[k] = (ab[k] + ba[k]) * CRational(q(1, 2));
        CHECK(sym_mul(a, b).entries() == half);
    }
}

TEST_CASE("sym_mul examples") {
    auto X = PhaseSeries::x(3, 1, 1);
    auto P = PhaseSeries::p(3, 1, 1);
    auto xp = sym_mul(X, P);
    CHECK(xp.coeff(0).terms().size() == 1);
    CHECK(xp.coeff(0).terms().begin()->first == mono({0, 1, 0}, {0, 1, 0}));

    auto sx = PhaseSeries::pauli(3, 1, 0), sy = PhaseSeries::pauli(3, 1, 1);
    CHECK(sym_mul(sx, sy).is_zero());
    CHECK(sym_mul(sx, sx) == PhaseSeries::constant(3, 1, SpinMatrix::identity()));
}

TEST_CASE("mat_mul examples") {
    auto sx = PhaseSeries::pauli(3, 1, 0), sy = PhaseSeries::pauli(3, 1, 1);
    auto isz = PhaseSeries::constant(3, 1, SpinMatrix::pauli(2, CRational::i()));
    CHECK(mat_mul(sx, sy) == isz);
    CHECK(mat_mul(sx, sy) - mat_mul(sy, sx) == isz * c(2));
    std::mt19937_64 rng(3);
    auto f = series(random_poly(rng, {}));
    CHECK(mat_mul(PhaseSeries::constant(3, 2, SpinMatrix::identity()), f) == f);
}

TEST_CASE("sym_mul is commutative; associative on scalar-valued symbols") {
    std::mt19937_64 rng(7);
    RandomPolySpec spin;
    RandomPolySpec scalar;
    scalar.spin = false;
    for (int t = 0; t < 20; ++t) {
        auto f = series(random_poly(rng, spin)), g = series(random_poly(rng, spin));
        CHECK(sym_mul(f, g) == sym_mul(g, f));
        auto a = series(random_poly(rng, scalar)), b = series(random_poly(rng, scalar));
        auto h = series(random_poly(rng, spin));
        CHECK(sym_mul(sym_mul(a, b), h) == sym_mul(a, sym_mul(b, h)));
    }
}

TEST_CASE("sym_mul is not associative on Pauli-valued symbols") {
    // The symmetrized product is a Jordan product; this pins the counterexample.
    auto sx = PhaseSeries::pauli(3, 0, 0), sy = PhaseSeries::pauli(3, 0, 1);
    CHECK(sym_mul(sym_mul(sx, sx), sy) == sy);
    CHECK(sym_mul(sx, sym_mul(sx, sy)).is_zero());
}

TEST_CASE("mat_mul associative and distributive") {
    std::mt19937_64 rng(9);
    RandomPolySpec spec;
    spec.complex_coeffs = true;
    for (int t = 0; t < 20; ++t) {
        auto f = series(random_poly(rng, spec)), g = series(random_poly(rng, spec)),
             h = series(random_poly(rng, spec));
        CHECK(mat_mul(mat_mul(f, g), h) == mat_mul(f, mat_mul(g, h)));
        CHECK(mat_mul(f, g + h) == mat_mul(f, g) + mat_mul(f, h));
    }
}

TEST_CASE("derive") {
    MultiIndex x2p;
    x2p.x(1) = 2;
    x2p.p(1) = 1;
    auto f = series(PhasePoly::monomial(x2p, SpinMatrix::identity()));
    MultiIndex xp;
    xp.x(1) = 1;
    xp.p(1) = 1;
    CHECK(derive(f, Coord::x(1)) == series(PhasePoly::monomial(xp, SpinMatrix::identity(c(2)))));
    CHECK(derive(PhaseSeries::x(3, 2, 1), Coord::p(1)).is_zero());

    SpinMatrix m;
    m.c[0] = c(3);
    m.c[3] = c(5, 1);
    auto g = series(PhasePoly::constant(m));
    CHECK(derive(g, Coord::s(2)) == series(PhasePoly::constant(SpinMatrix::identity(c(5, 1)))));
    CHECK(derive(g, Coord::s(0)).is_zero());
}

TEST_CASE("Leibniz rule for X and p derivatives") {
    std::mt19937_64 rng(13);
    for (int t = 0; t < 20; ++t) {
        auto f = series(random_poly(rng, {})), g = series(random_poly(rng, {}));
        for (auto w : {Coord::x(0), Coord::x(2), Coord::p(1)}) {
            CHECK(derive(sym_mul(f, g), w) == sym_mul(derive(f, w), g) + sym_mul(f, derive(g, w)));
            CHECK(derive(mat_mul(f, g), w) == mat_mul(derive(f, w), g) + mat_mul(f, derive(g, w)));
        }
        CHECK(sym_mul(f, g).coeff(0).degree() <= f.coeff(0).degree() + g.coeff(0).degree());
    }
}

TEST_CASE("eval") {
    MultiIndex x2;
    x2.x(0) = 2;
    auto f = PhaseSeries(1, 1, PhasePoly::monomial(x2, SpinMatrix::identity()));
    auto v = eval(f, {2.0, 0.0}, 1.0);
    CHECK(v[0].real() == doctest::Approx(4.0));
    CHECK(v[3].real() == doctest::Approx(4.0));
    CHECK(std::abs(v[1]) == 0.0);

    PhaseSeries nu(1, 1);
    nu.coeff(1) = PhasePoly::constant(SpinMatrix::identity());
    auto w = eval(nu, {0.0, 0.0}, 2.0);
    CHECK(w[0].real() == doctest::Approx(0.0));
    CHECK(w[0].imag() == doctest::Approx(1.0));
}

TEST_CASE("eval matches Horner re-evaluation") {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> u(-1.5, 1.5);
    RandomPolySpec spec;
    spec.dim = 1;
    spec.spin = false;
    spec.max_degree = 4;
    for (int t = 0; t < 20; ++t) {
        auto p = random_poly(rng, spec);
        double x = u(rng);
        // Dense coefficient table in X^0 then Horner; p-degree folded in at p = 0.
        std::vector<double> a(5, 0.0);
        for (const auto& [mi, m] : p.terms())
            if (mi.p(0) == 0) a[mi.x(0)] += m.c[0].re.get_d();
        double h = 0.0;
        for (int k = 4; k >= 0; --k) h = h * x + a[k];
        CHECK(eval(p, {x, 0.0})[0].real() == doctest::Approx(h).epsilon(1e-12));
    }
}

TEST_CASE("text serialization round trip") {
    std::mt19937_64 rng(17);
    RandomPolySpec spec;
    spec.complex_coeffs = true;
    PhaseSeries f(3, 2);
    for (int k = 0; k <= 2; ++k) f.coeff(k) = random_poly(rng, spec);
    auto text = to_text(f);
    CHECK(from_text(text) == f);
    CHECK(to_text(from_text(text)) == text);
}

TEST_CASE("series truncation takes the minimum order") {
    PhaseSeries a(3, 3), b(3, 1);
    CHECK((a + b).order() == 1);
    CHECK(sym_mul(a, b).order() == 1);
}

TEST_CASE("collapse sums the series at numeric hbar") {
    PhaseSeries f(3, 2);
    f.coeff(0) = PhasePoly::constant(SpinMatrix::identity(c(1)));
    f.coeff(2) = PhasePoly::constant(SpinMatrix::identity(c(4)));
    // 1 + 4 (i hbar/2)^2 at hbar = 1 -> 0
    CHECK(collapse(f, Rational(1)).is_zero());
}
