#pragma once

#include <array>
#include <complex>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "twistlab/gauge.hpp"
#include "twistlab/noether.hpp"

namespace twistlab {

using cplx = std::complex<double>;

// Two-component spinor on a periodic n x n grid with spacing a. Storage is
// component-major: c[r * n * n + iy * n + ix]. Coordinates are centred,
// x_i = (i - n/2) a.
struct SpinorGrid {
    int n = 0;
    double a = 1;
    std::vector<cplx> c;

    SpinorGrid() = default;
    SpinorGrid(int n, double a);

    std::size_t cells() const { return static_cast<std::size_t>(n) * n; }
    double coord(int i) const { return (i - n / 2) * a; }
    cplx& at(int r, int ix, int iy) { return c[r * cells() + static_cast<std::size_t>(iy) * n + ix]; }
    cplx at(int r, int ix, int iy) const { return c[r * cells() + static_cast<std::size_t>(iy) * n + ix]; }

    // sum |psi|^2 a^2
    double norm() const;
    void normalize();

    // |psi|^2 has standard deviation `width` along each axis; mean momentum
    // (kx, ky) in units of 1/length.
    static SpinorGrid gaussian_packet(int n, double a, double width, std::array<cplx, 2> spin, double kx = 0,
                                      double ky = 0);
    // k = 2 pi (mx, my) / (n a)
    static SpinorGrid plane_wave(int n, double a, int mx, int my, std::array<cplx, 2> spin);
};

// Lattice wave number of FFT index j.
double wave_number(int j, int n, double a);

struct RDParams {
    double m = 1, hbar = 1;
    double alpha = 0, beta = 0;
    Ramp ramp;  // lambda(t) multiplies alpha and beta
    double dt = 0.04;
    long n_steps = 10000;
};

struct PotentialSpec {
    enum Kind { None, Disorder, Harmonic };
    Kind kind = None;
    double W = 0.2, xi = 2;
    std::uint64_t seed = 1;
    double omega = 0;

    // Disorder: white noise filtered by exp(-k^2 xi^2 / 4), then shifted and
    // scaled to mean 0 and variance W^2 exactly. Harmonic: m omega^2 r^2 / 2.
    std::vector<double> realize(int n, double a, double m) const;
};

struct FieldStats {
    double mean = 0, variance = 0;
};
FieldStats field_stats(const std::vector<double>& v);

class StabilityError : public std::invalid_argument {
public:
    StabilityError(const std::string& what, double suggested) : std::invalid_argument(what), suggested_dt(suggested) {}
    double suggested_dt;
};

// max_k |eigenvalue of H_k| for lambda = max |lambda(t)| (always 1 here).
double max_kinetic_energy(const RDParams& p, int n, double a);
// Throws StabilityError unless dt max|H_k| / hbar < 0.5.
void check_stability(const RDParams& p, int n, double a);

// ---- twisted spin ----

enum class TwistVariant { FullSin, FullSinh, Wilson };
// sigma_+- := sigma_x +- sigma_y (verbatim), sigma_x +- i sigma_y (standard),
// sigma_x -+ sigma_y (swapped).
enum class SigmaConvention { Verbatim, Standard, Swapped };

struct TwistChoice {
    TwistVariant variant = TwistVariant::FullSin;
    SigmaConvention convention = SigmaConvention::Verbatim;

    std::string label() const;
    // "full-sin", "full-sinh", "wilson", optionally suffixed ":standard" or ":swapped".
    static TwistChoice parse(const std::string& s);
    // Every full variant in every convention plus wilson.
    static std::vector<TwistChoice> all();
};

// Upsilon psi for lambda-scaled couplings. lambda = 0 or alpha = beta = 0 is the identity.
// Otherwise full variants throw std::domain_error at alpha^2 = beta^2.
SpinorGrid apply_upsilon(const SpinorGrid& psi, const RDParams& p, double lambda, TwistChoice v);

// <sigma^a> = sum psi^+ sigma^a psi a^2
std::array<double, 3> spin_polarization(const SpinorGrid& psi);
// (hbar/2) <Upsilon^+ sigma^a Upsilon>
std::array<double, 3> twisted_spin(const SpinorGrid& psi, const RDParams& p, double lambda, TwistChoice v);

// ---- evolution ----

struct ObservableTrace {
    std::vector<std::string> variants;
    std::vector<double> t, norm, energy;
    std::array<std::vector<double>, 3> s;      // <sigma^a>
    std::vector<std::array<std::vector<double>, 3>> st;  // per variant, <Upsilon^+ sigma^a Upsilon>

    std::size_t size() const { return t.size(); }
    // Columns t,norm,sx,sy,sz,st_x,st_y,st_z,energy,variant; one row per
    // (time, variant), or a single row with variant "none" if there are none.
    void write_csv(std::ostream& os) const;
};

// Inverse of write_csv; comment lines starting with '#' are skipped.
ObservableTrace read_trace_csv(std::istream& is);

struct VariantSummary {
    std::string variant;
    double st0 = 0;             // |S^t(0)|
    double drift = 0;           // max_t |S^t(t) - S^t(0)|
    double relative_drift = 0;  // drift / st0
    double drift_over_decay = 0;
};

struct TraceSummary {
    double sz0 = 0, sz_end = 0;
    double decay = 0;           // sz0 - sz_end
    double decay_fraction = 0;  // decay / |sz0|
    double tau_e = 0;           // first time sz <= sz0 / e (interpolated), 0 if never
    double norm_drift = 0;      // max_t |norm - 1|
    std::vector<VariantSummary> variants;

    // Smallest drift_over_decay; throws if there are no variants.
    const VariantSummary& best() const;
};

TraceSummary summarize(const ObservableTrace& tr);
std::string to_csv(const TraceSummary& s);

struct EvolveOptions {
    int record_every = 100;
    std::vector<TwistChoice> twists;
};

class Fft2;

class RDSimulator {
public:
    // Checks stability; V must have n*n entries (or be empty for V = 0).
    RDSimulator(int n, double a, RDParams p, std::vector<double> V);
    ~RDSimulator();
    RDSimulator(const RDSimulator&) = delete;
    RDSimulator& operator=(const RDSimulator&) = delete;

    const RDParams& params() const { return p_; }
    // One Strang step from time t: half momentum step, position phase, half
    // momentum step. lambda is sampled at the midpoint of each half step.
    void step(SpinorGrid& psi, double t) const;
    // Runs n_steps from t0, recording every record_every steps and at the end.
    ObservableTrace evolve(SpinorGrid& psi, long n_steps, const EvolveOptions& o, double t0 = 0) const;

    double energy(const SpinorGrid& psi, double lambda) const;
    // d_t psi = -(i / hbar) H psi, evaluated spectrally
    SpinorGrid time_derivative(const SpinorGrid& psi, double lambda) const;

private:
    const std::vector<std::array<cplx, 4>>& propagator(double lambda, double tau) const;
    void kinetic(std::vector<cplx>& hat, double lambda, double tau) const;
    void potential_phase(std::vector<cplx>& c) const;

    int n_;
    double a_;
    RDParams p_;
    std::vector<double> V_;
    std::vector<cplx> vphase_;
    std::unique_ptr<Fft2> fft_;
    // Last momentum propagator; a simulator is not shared between threads.
    mutable struct {
        double lambda = 0, tau = 0;
        std::vector<std::array<cplx, 4>> u;
    } cache_;
};

// Mean over members of an ensemble, in member order.
ObservableTrace average(const std::vector<ObservableTrace>& traces);

struct EnsembleSpec {
    int n = 128;
    double a = 1;
    double width = 8;
    std::array<cplx, 2> spin{cplx(1), cplx(0)};
    double kx = 0, ky = 0;
    // Start from U chi instead of chi, with U the inverse Wilson dressing at
    // lambda(0), so the dressed spin starts along `spin`.
    bool dressed_start = false;
    PotentialSpec potential;
    std::vector<std::uint64_t> seeds;
    int threads = 1;
};

// One run per seed (the seed replaces potential.seed); members are
// independent, so results do not depend on the thread count.
std::vector<ObservableTrace> run_ensemble(const EnsembleSpec& e, const RDParams& p, const EvolveOptions& o);

// ---- adiabatic ramp ----

struct RampPoint {
    double t_ramp = 0;
    double delta_st = 0;  // ensemble mean of |S^t(end) - S^t(start)|
};

struct RampReport {
    std::string variant;
    std::vector<RampPoint> points;
    double exponent = 0;  // slope of log delta vs log(1 / t_ramp)
    double exponent_stderr = 0;
    bool monotone = true;  // delta decreases with t_ramp
    double constant_floor = 0;  // same run length with lambda = 1 throughout
};

// Ramps lambda from 0 to 1 with the given shape over each duration and
// compares S^t(lambda = 1) at the end with S^t(lambda = 0) = spin at t = 0.
// Needs >= 4 durations spanning >= one decade.
RampReport adiabatic_ramp_experiment(const EnsembleSpec& e, RDParams p, const std::vector<double>& t_ramps,
                                     TwistChoice v);

std::string to_csv(const RampReport& r);

// ---- spin currents ----

// J^a_0 = psi^+ sigma^a psi, J^a_i = (hbar / 2mi)[psi^+ sigma^a D_i psi - h.c.]
// with D_i = d_i - i a_i / hbar and a_i the lambda-scaled RD potential
// matrices; d_t J^a_0 from the Schrodinger equation. Derivatives are spectral.
SpinCurrentGrid spin_current_fields(const RDSimulator& sim, const SpinorGrid& psi, double lambda);
NumericGauge rd_numeric_gauge(const RDParams& p, double lambda);

}  // namespace twistlab
