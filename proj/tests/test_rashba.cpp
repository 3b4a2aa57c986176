#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numbers>
#include <sstream>

#include "twistlab/rashba.hpp"

using namespace twistlab;

namespace {

constexpr double pi = std::numbers::pi;

double l2_distance(const SpinorGrid& x, const SpinorGrid& y) {
    double s = 0;
    for (std::size_t i = 0; i < x.c.size(); ++i) s += std::norm(x.c[i] - y.c[i]);
    return std::sqrt(s * x.a * x.a);
}

// alpha with sqrt(2) m alpha P / hbar = 2 pi k, so the helix dressing is periodic.
double commensurate_alpha(double P, int k) { return 2 * pi * k / (std::numbers::sqrt2 * P); }

// Superposition of two H_k eigenstates (upper SO branch), unnormalized.
SpinorGrid two_eigenstates(int n, double a, const RDParams& p) {
    SpinorGrid g(n, a);
    const double P = n * a;
    const std::array<std::array<int, 2>, 2> modes{{{1, 0}, {0, 2}}};
    const std::array<cplx, 2> amp{cplx(1), cplx(0.5, 0.3)};
    for (int w = 0; w < 2; ++w) {
        const double kx = 2 * pi * modes[w][0] / P, ky = 2 * pi * modes[w][1] / P;
        const double bx = p.beta * kx - p.alpha * ky, by = p.alpha * kx - p.beta * ky;
        const double phi = std::atan2(by, bx);
        const std::array<cplx, 2> chi{cplx(1 / std::numbers::sqrt2), std::polar(1 / std::numbers::sqrt2, phi)};
        for (int iy = 0; iy < n; ++iy)
            for (int ix = 0; ix < n; ++ix) {
                const cplx ph = std::polar(1.0, kx * ix * a + ky * iy * a);
                for (int r = 0; r < 2; ++r) g.at(r, ix, iy) += amp[w] * ph * chi[r];
            }
    }
    g.normalize();
    return g;
}

double max_abs(const std::array<std::vector<double>, 3>& f) {
    double m = 0;
    for (const auto& v : f)
        for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

}  // namespace

TEST_CASE("grid basics") {
    CHECK(wave_number(0, 8, 1) == 0);
    CHECK(wave_number(1, 8, 2) == doctest::Approx(2 * pi / 16));
    CHECK(wave_number(4, 8, 1) == doctest::Approx(-pi));
    CHECK(wave_number(7, 8, 1) == doctest::Approx(-2 * pi / 8));
    auto g = SpinorGrid::gaussian_packet(64, 0.5, 4, {1, cplx(0, 1)});
    CHECK(g.norm() == doctest::Approx(1).epsilon(1e-14));
    auto s = spin_polarization(g);
    CHECK(s[1] == doctest::Approx(1).epsilon(1e-12));
    CHECK_THROWS_AS(SpinorGrid(7, 1), std::invalid_argument);
    CHECK_THROWS_AS(SpinorGrid(16, 0), std::invalid_argument);
}

TEST_CASE("free dispersion keeps the spin") {
    RDParams p;
    RDSimulator sim(64, 1, p, {});
    auto psi = SpinorGrid::gaussian_packet(64, 1, 6, {1, 0}, 0.3, -0.2);
    EvolveOptions o;
    o.record_every = 50;
    auto tr = sim.evolve(psi, 500, o);
    for (std::size_t i = 0; i < tr.size(); ++i) {
        CHECK(std::abs(tr.s[2][i] - 1) < 1e-12);
        CHECK(std::abs(tr.norm[i] - 1) < 1e-12);
    }
    // the packet moves with group velocity hbar k / m (tails wrap slightly)
    double mx = 0;
    for (int iy = 0; iy < 64; ++iy)
        for (int ix = 0; ix < 64; ++ix) mx += psi.coord(ix) * std::norm(psi.at(0, ix, iy));
    CHECK(mx == doctest::Approx(0.3 * 500 * p.dt).epsilon(1e-3));
}

TEST_CASE("Rashba precession matches the two-level closed form") {
    RDParams p;
    p.alpha = 0.3;
    p.dt = 0.04;
    const int n = 64, mx = 3;
    RDSimulator sim(n, 1, p, {});
    auto psi = SpinorGrid::plane_wave(n, 1, mx, 0, {1, 0});
    const double k = 2 * pi * mx / n, w = 2 * p.alpha * k / p.hbar;
    const double period = 2 * pi / w;
    double err = 0;
    const long steps = static_cast<long>(3 * period / p.dt);
    for (long s = 1; s <= steps; ++s) {
        sim.step(psi, (s - 1) * p.dt);
        const double t = s * p.dt;
        const auto sp = spin_polarization(psi);
        // field along +y: (sx, sz) rotate as (sin wt, cos wt)
        err = std::max({err, std::abs(sp[0] - std::sin(w * t)), std::abs(sp[2] - std::cos(w * t)), std::abs(sp[1])});
    }
    CHECK(err < 1e-8);
}

TEST_CASE("unitarity over 1e4 steps") {
    RDParams p;
    p.alpha = 0.3;
    p.beta = 0.1;
    PotentialSpec v;
    v.kind = PotentialSpec::Disorder;
    v.seed = 3;
    RDSimulator sim(64, 1, p, v.realize(64, 1, p.m));
    auto psi = SpinorGrid::gaussian_packet(64, 1, 6, {1, 0});
    EvolveOptions o;
    o.record_every = 1000;
    auto tr = sim.evolve(psi, 10000, o);
    for (double x : tr.norm) CHECK(std::abs(x - 1) < 1e-10);
    // energy is conserved up to the splitting error
    for (double e : tr.energy) CHECK(e == doctest::Approx(tr.energy.front()).epsilon(1e-3));
}

TEST_CASE("Strang splitting is second order") {
    RDParams p;
    p.alpha = 0.3;
    p.beta = 0.1;
    p.ramp.shape = Ramp::C2;
    p.ramp.t_ramp = 1.5;
    PotentialSpec v;
    v.kind = PotentialSpec::Harmonic;
    v.omega = 0.15;
    const int n = 64;
    const auto V = v.realize(n, 1, p.m);
    const double T = 2.0;
    auto run = [&](double dt) {
        RDParams q = p;
        q.dt = dt;
        RDSimulator sim(n, 1, q, V);
        auto psi = SpinorGrid::gaussian_packet(n, 1, 5, {1, 0}, 0.4, 0.1);
        const long steps = std::lround(T / dt);
        for (long s = 0; s < steps; ++s) sim.step(psi, s * dt);
        return psi;
    };
    const auto ref = run(0.0025);
    std::vector<double> dts{0.04, 0.02, 0.01}, errs;
    for (double dt : dts) errs.push_back(l2_distance(run(dt), ref));
    for (std::size_t i = 1; i < errs.size(); ++i) {
        const double slope = std::log(errs[i - 1] / errs[i]) / std::log(2.0);
        CHECK(slope == doctest::Approx(2.0).epsilon(0.1));
    }
}

TEST_CASE("stability guard") {
    RDParams p;
    p.alpha = 0.3;
    p.beta = 0.1;
    p.dt = 0.05;
    CHECK(max_kinetic_energy(p, 128, 1) > 10);
    try {
        check_stability(p, 128, 1);
        FAIL("expected refusal");
    } catch (const StabilityError& e) {
        CHECK(e.suggested_dt > 0);
        CHECK(e.suggested_dt < 0.05);
        p.dt = e.suggested_dt;
        CHECK_NOTHROW(check_stability(p, 128, 1));
    }
    p.dt = 0.05;
    CHECK_THROWS_AS(RDSimulator(128, 1, p, {}), StabilityError);
    p.dt = -1;
    CHECK_THROWS_AS(check_stability(p, 16, 1), std::invalid_argument);
}

TEST_CASE("potentials") {
    PotentialSpec v;
    v.kind = PotentialSpec::Disorder;
    v.W = 0.2;
    v.xi = 2;
    v.seed = 11;
    const auto V = v.realize(64, 1, 1);
    const auto st = field_stats(V);
    CHECK(std::abs(st.mean) < 1e-14);
    CHECK(st.variance == doctest::Approx(0.04).epsilon(1e-12));
    CHECK(v.realize(64, 1, 1) == V);
    v.seed = 12;
    CHECK(v.realize(64, 1, 1) != V);
    // correlated: neighbours are closer than independent samples would be
    double nn = 0;
    for (int i = 0; i + 1 < 64; ++i) nn += V[i] * V[i + 1];
    CHECK(nn / 63 > 0.5 * st.variance);

    PotentialSpec h;
    h.kind = PotentialSpec::Harmonic;
    h.omega = 0.5;
    const auto H = h.realize(16, 1, 2);
    CHECK(H[8 * 16 + 8] == 0);
    CHECK(H[8 * 16 + 10] == doctest::Approx(0.5 * 2 * 0.25 * 4));
    CHECK(PotentialSpec{}.realize(16, 1, 1) == std::vector<double>(256, 0.0));
}

TEST_CASE("twist choices") {
    for (const auto& c : TwistChoice::all()) CHECK(TwistChoice::parse(c.label()).label() == c.label());
    CHECK(TwistChoice::all().size() == 7);
    CHECK(TwistChoice::parse("wilson-dressing").variant == TwistVariant::Wilson);
    CHECK(TwistChoice::parse("full-sinh:verbatim").label() == "full-sinh");
    CHECK_THROWS_AS(TwistChoice::parse("full-cos"), std::invalid_argument);
    CHECK_THROWS_AS(TwistChoice::parse("full-sin:weird"), std::invalid_argument);
    CHECK_THROWS_AS(TwistChoice::parse("wilson:standard"), std::invalid_argument);
}

TEST_CASE("zero twist is the conventional spin") {
    RDParams p;
    p.alpha = 0.3;
    p.beta = 0.1;
    auto psi = SpinorGrid::gaussian_packet(32, 1, 4, {cplx(0.6), cplx(0, 0.8)}, 0.2, 0);
    const auto s = spin_polarization(psi);
    for (const auto& v : TwistChoice::all()) {
        const auto st = twisted_spin(psi, p, 0.0, v);
        for (int a = 0; a < 3; ++a) CHECK(st[a] == p.hbar / 2 * s[a]);
    }
    // Zero coupling is the identity at any lambda.
    RDParams off;
    for (const auto& v : TwistChoice::all()) {
        const auto st = twisted_spin(psi, off, 1.0, v);
        for (int a = 0; a < 3; ++a) CHECK(st[a] == off.hbar / 2 * s[a]);
    }
}

TEST_CASE("lambda -> 0: wilson is continuous, the full twist is not") {
    RDParams p;
    p.alpha = 0.3;
    p.beta = 0.1;
    auto psi = SpinorGrid::gaussian_packet(32, 1, 4, {1, 0});
    const double lam = 1e-8;
    auto w = twisted_spin(psi, p, lam, TwistChoice::parse("wilson"));
    CHECK(w[2] == doctest::Approx(0.5).epsilon(1e-6));
    // c ~ 1 / lambda^2 keeps the full twist O(1) away from the identity.
    auto f = twisted_spin(psi, p, lam, TwistChoice::parse("full-sin"));
    CHECK(std::abs(f[2] - 0.5) > 1e-2);
}

TEST_CASE("full Upsilon refuses the helix point") {
    RDParams p;
    p.alpha = p.beta = 0.2;
    auto psi = SpinorGrid::gaussian_packet(32, 1, 4, {1, 0});
    CHECK_THROWS_AS(twisted_spin(psi, p, 1, TwistChoice::parse("full-sin")), std::domain_error);
    CHECK_THROWS_AS(twisted_spin(psi, p, 1, TwistChoice::parse("full-sinh:standard")), std::domain_error);
    p.beta = -0.2;
    CHECK_THROWS_AS(twisted_spin(psi, p, 1, TwistChoice::parse("full-sin")), std::domain_error);
    CHECK_NOTHROW(twisted_spin(psi, p, 1, TwistChoice::parse("wilson")));
}

TEST_CASE("Upsilon reduces to the gauge rotation on slowly varying states") {
    // For k << m (alpha + beta) only E and W survive, both unitary for
    // Hermitian sigma_+-.
    RDParams p;
    p.alpha = 0.3;
    p.beta = 0.1;
    auto psi = SpinorGrid::gaussian_packet(128, 1, 16, {1, 0});
    for (const char* v : {"full-sin", "full-sinh", "full-sin:swapped"}) {
        const auto u = apply_upsilon(psi, p, 1, TwistChoice::parse(v));
        CHECK(u.norm() == doctest::Approx(1).epsilon(1e-3));
    }
}

TEST_CASE("Wilson-dressed spin is conserved at the helix point") {
    const int n = 64;
    RDParams p;
    p.alpha = p.beta = commensurate_alpha(n, 2);
    EnsembleSpec e;
    e.n = n;
    e.width = 6;
    e.dressed_start = true;
    e.potential.kind = PotentialSpec::Disorder;
    e.seeds = {5};
    p.n_steps = 2000;
    EvolveOptions o;
    o.record_every = 250;
    o.twists = {TwistChoice::parse("wilson")};
    const auto tr = run_ensemble(e, p, o).front();
    const auto s = summarize(tr);
    CHECK(s.variants[0].st0 == doctest::Approx(1).epsilon(1e-9));
    CHECK(s.variants[0].drift < 1e-5);
    CHECK(s.decay_fraction > 0.1);  // while the bare spin relaxes
}

TEST_CASE("ensembles are deterministic") {
    RDParams p;
    p.alpha = 0.3;
    p.beta = 0.1;
    p.n_steps = 200;
    EnsembleSpec e;
    e.n = 32;
    e.width = 4;
    e.potential.kind = PotentialSpec::Disorder;
    e.seeds = {1, 2, 3};
    EvolveOptions o;
    o.record_every = 50;
    o.twists = {TwistChoice::parse("full-sin"), TwistChoice::parse("wilson")};
    auto csv = [&](int threads) {
        e.threads = threads;
        std::ostringstream os;
        average(run_ensemble(e, p, o)).write_csv(os);
        return os.str();
    };
    const auto a = csv(1);
    CHECK(a == csv(1));
    CHECK(a == csv(3));
    auto members = run_ensemble(e, p, o);
    CHECK(members[0].s[2] != members[1].s[2]);
}

TEST_CASE("trace CSV round trip and summary") {
    RDParams p;
    p.alpha = 0.3;
    p.beta = 0.1;
    RDSimulator sim(32, 1, p, {});
    auto psi = SpinorGrid::gaussian_packet(32, 1, 4, {1, 0});
    EvolveOptions o;
    o.record_every = 20;
    o.twists = {TwistChoice::parse("full-sinh:swapped"), TwistChoice::parse("wilson")};
    const auto tr = sim.evolve(psi, 100, o);
    CHECK(tr.size() == 6);
    std::ostringstream os;
    tr.write_csv(os);
    std::istringstream is("# provenance\n" + os.str());
    const auto back = read_trace_csv(is);
    CHECK(back.variants == tr.variants);
    CHECK(back.size() == tr.size());
    std::ostringstream os2;
    back.write_csv(os2);
    CHECK(os2.str() == os.str());

    std::istringstream bad("t,norm,sx,sy,sz,st_x,st_y,st_z,energy,variant\n0,1,0,0,1,0,0,x,0,none\n");
    CHECK_THROWS_WITH_AS(read_trace_csv(bad), "line 2: bad number 'x'", std::invalid_argument);
    std::istringstream nohead("0,1\n");
    CHECK_THROWS_AS(read_trace_csv(nohead), std::invalid_argument);

    ObservableTrace syn;
    syn.variants = {"v"};
    syn.st.resize(1);
    for (int i = 0; i <= 4; ++i) {
        syn.t.push_back(i);
        syn.norm.push_back(1);
        syn.energy.push_back(0);
        syn.s[0].push_back(0);
        syn.s[1].push_back(0);
        syn.s[2].push_back(1.0 - 0.2 * i);
        syn.st[0][0].push_back(0);
        syn.st[0][1].push_back(0);
        syn.st[0][2].push_back(i == 2 ? 0.45 : 0.5);
    }
    const auto s = summarize(syn);
    CHECK(s.decay == doctest::Approx(0.8));
    CHECK(s.decay_fraction == doctest::Approx(0.8));
    CHECK(s.tau_e == doctest::Approx((1 - 1 / std::numbers::e) / 0.2));
    CHECK(s.best().drift == doctest::Approx(0.05));
    CHECK(s.best().relative_drift == doctest::Approx(0.1));
    CHECK(s.best().drift_over_decay == doctest::Approx(0.0625));
}

TEST_CASE("spin currents obey covariant, not ordinary, continuity") {
    RDParams p;
    p.alpha = 0.3;
    p.beta = 0.1;
    p.dt = 0.005;
    const double P = 32;
    auto residuals = [&](int n) {
        const double a = P / n;
        RDSimulator sim(n, a, p, {});
        const auto psi = two_eigenstates(n, a, p);
        const auto J = spin_current_fields(sim, psi, 1.0);
        const auto g = rd_numeric_gauge(p, 1.0);
        return std::pair{max_abs(covariant_continuity_residual(J, g)), max_abs(ordinary_continuity_residual(J))};
    };
    const auto [c32, o32] = residuals(32);
    const auto [c64, o64] = residuals(64);
    CHECK(c64 < c32 / 8);  // fourth-order differences
    // densities are ~1 / P^2
    CHECK(c64 * P * P < 1e-3);
    CHECK(o64 * P * P > 1e-2);
    CHECK(o64 > 100 * c64);

    // zero coupling: the conventional current with plain derivatives
    RDParams free;
    RDSimulator sim(16, 1, free, {});
    auto psi = SpinorGrid::plane_wave(16, 1, 2, 0, {1, 0});
    const auto J = spin_current_fields(sim, psi, 1.0);
    const double k = 2 * pi * 2 / 16, rho = 1.0 / 256;
    for (std::size_t i = 0; i < 256; ++i) {
        CHECK(J.rho[2][i] == doctest::Approx(rho));
        CHECK(J.jx[2][i] == doctest::Approx(k * rho));
        CHECK(std::abs(J.jy[2][i]) < 1e-15);
        CHECK(std::abs(J.drho_dt[2][i]) < 1e-15);
    }
}

TEST_CASE("ramp experiment input checks") {
    RDParams p;
    p.alpha = 0.3;
    p.beta = 0.1;
    p.ramp.shape = Ramp::C1;
    EnsembleSpec e;
    e.n = 16;
    e.width = 2;
    e.seeds = {1};
    const auto v = TwistChoice::parse("wilson");
    CHECK_THROWS_AS(adiabatic_ramp_experiment(e, p, {1, 2, 10}, v), std::invalid_argument);
    CHECK_THROWS_AS(adiabatic_ramp_experiment(e, p, {1, 2, 4, 8}, v), std::invalid_argument);
    p.ramp.shape = Ramp::Constant;
    CHECK_THROWS_AS(adiabatic_ramp_experiment(e, p, {1, 2, 4, 10}, v), std::invalid_argument);
    p.ramp.shape = Ramp::C1;
    const auto r = adiabatic_ramp_experiment(e, p, {0.4, 0.8, 1.6, 4}, v);
    CHECK(r.points.size() == 4);
    CHECK(r.points.front().t_ramp == 0.4);
    CHECK(std::isfinite(r.exponent));
    CHECK(to_csv(r).rfind("t_ramp,delta_st,variant\n", 0) == 0);
}
