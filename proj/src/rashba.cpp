#include "twistlab/rashba.hpp"

#include <fftw3.h>

#include <algorithm>
#include <atomic>
#include <exception>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <mutex>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>
#include <thread>

namespace twistlab {

namespace {

using Mat = std::array<cplx, 4>;  // row-major 2x2
constexpr cplx I(0, 1);

Mat pauli(int a) {
    switch (a) {
        case 0: return {0, 1, 1, 0};
        case 1: return {0, -I, I, 0};
        case 2: return {1, 0, 0, -1};
        default: return {1, 0, 0, 1};
    }
}

Mat operator*(const Mat& x, const Mat& y) {
    return {x[0] * y[0] + x[1] * y[2], x[0] * y[1] + x[1] * y[3], x[2] * y[0] + x[3] * y[2],
            x[2] * y[1] + x[3] * y[3]};
}
Mat operator+(const Mat& x, const Mat& y) { return {x[0] + y[0], x[1] + y[1], x[2] + y[2], x[3] + y[3]}; }
Mat operator*(cplx s, const Mat& x) { return {s * x[0], s * x[1], s * x[2], s * x[3]}; }

Mat expm(const Mat& M) {
    const cplx m0 = (M[0] + M[3]) / 2.0, mz = (M[0] - M[3]) / 2.0;
    const cplx mx = (M[1] + M[2]) / 2.0, my = (M[2] - M[1]) / (2.0 * I);
    const cplx s = std::sqrt(mx * mx + my * my + mz * mz);
    const cplx sh = std::abs(s) < 1e-8 ? 1.0 + s * s / 6.0 : std::sinh(s) / s;
    const cplx ch = std::cosh(s), e = std::exp(m0);
    return {e * (ch + sh * mz), e * sh * (mx - I * my), e * sh * (mx + I * my), e * (ch - sh * mz)};
}

Mat cosh_m(const Mat& M) { return cplx(0.5) * (expm(M) + expm(cplx(-1) * M)); }
Mat sinh_m(const Mat& M) { return cplx(0.5) * (expm(M) + cplx(-1) * expm(cplx(-1) * M)); }

void apply(const Mat& M, cplx& u, cplx& d) {
    const cplx nu = M[0] * u + M[1] * d;
    d = M[2] * u + M[3] * d;
    u = nu;
}

// sigma_+ and sigma_- for a convention.
std::array<Mat, 2> sigma_pm(SigmaConvention c) {
    const Mat sx = pauli(0), sy = pauli(1);
    switch (c) {
        case SigmaConvention::Verbatim: return {sx + sy, sx + cplx(-1) * sy};
        case SigmaConvention::Standard: return {sx + I * sy, sx + (-I) * sy};
        case SigmaConvention::Swapped: return {sx + cplx(-1) * sy, sx + sy};
    }
    return {};
}

// RD potential matrices a_x, a_y with H_so = -(p . a) / m.
std::array<Mat, 2> rd_potential(const RDParams& p, double lambda) {
    const double al = lambda * p.alpha, be = lambda * p.beta;
    return {cplx(-p.m) * (cplx(al) * pauli(1) + cplx(be) * pauli(0)),
            cplx(p.m) * (cplx(al) * pauli(0) + cplx(be) * pauli(1))};
}

}  // namespace

// ---- FFT ----

// Planning is serialized; execution on separate arrays is thread-safe.
// FFTW_ESTIMATE keeps the chosen algorithm, and hence the bits, fixed.
class Fft2 {
public:
    Fft2(int n, int howmany) : n_(n), howmany_(howmany) {
        std::lock_guard lock(planner());
        std::vector<cplx> buf(static_cast<std::size_t>(n) * n * howmany);
        auto* p = reinterpret_cast<fftw_complex*>(buf.data());
        const int dims[2] = {n, n};
        const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
        fwd_ = fftw_plan_many_dft(2, dims, howmany, p, nullptr, 1, n * n, p, nullptr, 1, n * n, FFTW_FORWARD, flags);
        bwd_ = fftw_plan_many_dft(2, dims, howmany, p, nullptr, 1, n * n, p, nullptr, 1, n * n, FFTW_BACKWARD, flags);
        if (!fwd_ || !bwd_) throw std::runtime_error("FFTW planning failed");
    }
    ~Fft2() {
        std::lock_guard lock(planner());
        fftw_destroy_plan(fwd_);
        fftw_destroy_plan(bwd_);
    }
    Fft2(const Fft2&) = delete;
    Fft2& operator=(const Fft2&) = delete;

    void forward(std::vector<cplx>& v) const { run(fwd_, v, 1.0); }
    // Normalized inverse.
    void backward(std::vector<cplx>& v) const { run(bwd_, v, 1.0 / (static_cast<double>(n_) * n_)); }

private:
    static std::mutex& planner() {
        static std::mutex m;
        return m;
    }

    void run(fftw_plan plan, std::vector<cplx>& v, double scale) const {
        if (v.size() != static_cast<std::size_t>(n_) * n_ * howmany_) throw std::invalid_argument("FFT size mismatch");
        auto* p = reinterpret_cast<fftw_complex*>(v.data());
        fftw_execute_dft(plan, p, p);
        if (scale != 1.0)
            for (auto& x : v) x *= scale;
    }

    int n_, howmany_;
    fftw_plan fwd_, bwd_;
};

double wave_number(int j, int n, double a) {
    const int m = j < n / 2 ? j : j - n;
    return 2 * std::numbers::pi * m / (n * a);
}

// ---- grid ----

SpinorGrid::SpinorGrid(int n_, double a_) : n(n_), a(a_) {
    if (n < 8 || n % 2) throw std::invalid_argument("grid size must be even and >= 8");
    if (!(a > 0)) throw std::invalid_argument("lattice spacing must be positive");
    c.assign(2 * cells(), cplx(0));
}

double SpinorGrid::norm() const {
    double s = 0;
    for (const auto& z : c) s += std::norm(z);
    return s * a * a;
}

void SpinorGrid::normalize() {
    const double nn = norm();
    if (!(nn > 0)) throw std::domain_error("cannot normalize a zero spinor");
    const double f = 1 / std::sqrt(nn);
    for (auto& z : c) z *= f;
}

SpinorGrid SpinorGrid::gaussian_packet(int n, double a, double width, std::array<cplx, 2> spin, double kx,
                                       double ky) {
    if (!(width > 0)) throw std::invalid_argument("packet width must be positive");
    SpinorGrid g(n, a);
    for (int iy = 0; iy < n; ++iy)
        for (int ix = 0; ix < n; ++ix) {
            const double x = g.coord(ix), y = g.coord(iy);
            const cplx env = std::exp(-(x * x + y * y) / (4 * width * width) + I * (kx * x + ky * y));
            for (int r = 0; r < 2; ++r) g.at(r, ix, iy) = env * spin[r];
        }
    g.normalize();
    return g;
}

SpinorGrid SpinorGrid::plane_wave(int n, double a, int mx, int my, std::array<cplx, 2> spin) {
    SpinorGrid g(n, a);
    const double kx = 2 * std::numbers::pi * mx / (n * a), ky = 2 * std::numbers::pi * my / (n * a);
    for (int iy = 0; iy < n; ++iy)
        for (int ix = 0; ix < n; ++ix) {
            const cplx ph = std::exp(I * (kx * ix * a + ky * iy * a));
            for (int r = 0; r < 2; ++r) g.at(r, ix, iy) = ph * spin[r];
        }
    g.normalize();
    return g;
}

// ---- potential ----

std::vector<double> PotentialSpec::realize(int n, double a, double m) const {
    const std::size_t N = static_cast<std::size_t>(n) * n;
    std::vector<double> V(N, 0.0);
    if (kind == None) return V;
    if (kind == Harmonic) {
        for (int iy = 0; iy < n; ++iy)
            for (int ix = 0; ix < n; ++ix) {
                const double x = (ix - n / 2) * a, y = (iy - n / 2) * a;
                V[static_cast<std::size_t>(iy) * n + ix] = 0.5 * m * omega * omega * (x * x + y * y);
            }
        return V;
    }
    if (!(W >= 0) || !(xi > 0)) throw std::invalid_argument("disorder needs W >= 0 and xi > 0");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss;
    std::vector<cplx> f(N);
    for (auto& z : f) z = gauss(rng);
    Fft2 fft(n, 1);
    fft.forward(f);
    for (int iy = 0; iy < n; ++iy)
        for (int ix = 0; ix < n; ++ix) {
            const double kx = wave_number(ix, n, a), ky = wave_number(iy, n, a);
            f[static_cast<std::size_t>(iy) * n + ix] *= std::exp(-(kx * kx + ky * ky) * xi * xi / 4);
        }
    fft.backward(f);
    for (std::size_t i = 0; i < N; ++i) V[i] = f[i].real();
    auto st = field_stats(V);
    if (!(st.variance > 0)) return std::vector<double>(N, 0.0);
    const double scale = W / std::sqrt(st.variance);
    for (auto& v : V) v = (v - st.mean) * scale;
    st = field_stats(V);
    if (std::abs(st.mean) > 1e-12 * std::max(W, 1.0) || std::abs(st.variance - W * W) > 1e-10 * std::max(W * W, 1.0))
        throw std::logic_error("disorder normalization failed");
    return V;
}

FieldStats field_stats(const std::vector<double>& v) {
    FieldStats s;
    if (v.empty()) return s;
    for (double x : v) s.mean += x;
    s.mean /= static_cast<double>(v.size());
    for (double x : v) s.variance += (x - s.mean) * (x - s.mean);
    s.variance /= static_cast<double>(v.size());
    return s;
}

// ---- stability ----

double max_kinetic_energy(const RDParams& p, int n, double a) {
    double mx = 0;
    for (int iy = 0; iy < n; ++iy)
        for (int ix = 0; ix < n; ++ix) {
            const double kx = wave_number(ix, n, a), ky = wave_number(iy, n, a);
            const double eps = p.hbar * p.hbar * (kx * kx + ky * ky) / (2 * p.m);
            const double bx = p.hbar * (p.beta * kx - p.alpha * ky), by = p.hbar * (p.alpha * kx - p.beta * ky);
            mx = std::max(mx, std::abs(eps) + std::hypot(bx, by));
        }
    return mx;
}

void check_stability(const RDParams& p, int n, double a) {
    if (!(p.m > 0) || !(p.hbar > 0)) throw std::invalid_argument("m and hbar must be positive");
    if (!(p.dt > 0)) throw std::invalid_argument("dt must be positive");
    const double h = max_kinetic_energy(p, n, a);
    const double r = p.dt * h / p.hbar;
    if (r < 0.5) return;
    const double suggested = std::floor(0.45 * p.hbar / h * 1e4) / 1e4;
    std::ostringstream os;
    os << "unstable time step: dt*max|H_k|/hbar = " << r << " >= 0.5; use dt <= " << suggested;
    throw StabilityError(os.str(), suggested);
}

// ---- twisted spin ----

std::string TwistChoice::label() const {
    std::string s = variant == TwistVariant::FullSin    ? "full-sin"
                    : variant == TwistVariant::FullSinh ? "full-sinh"
                                                        : "wilson";
    if (variant == TwistVariant::Wilson) return s;
    if (convention == SigmaConvention::Standard) s += ":standard";
    if (convention == SigmaConvention::Swapped) s += ":swapped";
    return s;
}

TwistChoice TwistChoice::parse(const std::string& s) {
    TwistChoice c;
    const auto colon = s.find(':');
    const std::string v = s.substr(0, colon), conv = colon == std::string::npos ? "" : s.substr(colon + 1);
    if (v == "full-sin") c.variant = TwistVariant::FullSin;
    else if (v == "full-sinh") c.variant = TwistVariant::FullSinh;
    else if (v == "wilson" || v == "wilson-dressing") c.variant = TwistVariant::Wilson;
    else throw std::invalid_argument("unknown twist variant '" + s + "'");
    if (conv.empty() || conv == "verbatim") c.convention = SigmaConvention::Verbatim;
    else if (conv == "standard") c.convention = SigmaConvention::Standard;
    else if (conv == "swapped") c.convention = SigmaConvention::Swapped;
    else throw std::invalid_argument("unknown sigma convention '" + conv + "'");
    if (c.variant == TwistVariant::Wilson && !conv.empty()) throw std::invalid_argument("wilson takes no convention");
    return c;
}

std::vector<TwistChoice> TwistChoice::all() {
    std::vector<TwistChoice> out;
    for (auto v : {TwistVariant::FullSin, TwistVariant::FullSinh})
        for (auto c : {SigmaConvention::Verbatim, SigmaConvention::Standard, SigmaConvention::Swapped})
            out.push_back({v, c});
    out.push_back({TwistVariant::Wilson, SigmaConvention::Verbatim});
    return out;
}

namespace {

SpinorGrid wilson_dressing(const SpinorGrid& psi, const RDParams& p, double lambda) {
    // U^+ = exp(-i (x a_x + y a_y) / hbar), straight path from the grid centre.
    const auto A = rd_potential(p, lambda);
    SpinorGrid out = psi;
    const std::size_t N = psi.cells();
    for (int iy = 0; iy < psi.n; ++iy)
        for (int ix = 0; ix < psi.n; ++ix) {
            const double x = psi.coord(ix), y = psi.coord(iy);
            const Mat U = expm(cplx(0, -1 / p.hbar) * (cplx(x) * A[0] + cplx(y) * A[1]));
            const std::size_t i = static_cast<std::size_t>(iy) * psi.n + ix;
            apply(U, out.c[i], out.c[N + i]);
        }
    return out;
}

// 1/2 W(x) [E (A + B) + E A + sigma_z E C + S psi] with
// A = cosh(xi K) psi, B = sinh(xi K) sigma_z psi, C = sinh(xi K) psi
// as momentum multipliers, xi = (hbar^2 c / 2)(k_y - k_x).
SpinorGrid full_upsilon(const SpinorGrid& psi, const RDParams& p, double lambda, TwistChoice v) {
    const double al = lambda * p.alpha, be = lambda * p.beta;
    const double d2 = al * al - be * be;
    if (std::abs(d2) <= 1e-12 * (al * al + be * be) || (al == 0 && be == 0))
        throw std::domain_error("full Upsilon is singular at alpha^2 = beta^2; use the wilson variant");
    const auto [sp, sm] = sigma_pm(v.convention);
    const double m = p.m, hb = p.hbar;
    const double c = 1 / (2 * m * m * d2);
    const Mat K = cplx(0, -0.5 * m * (al - be) / hb) * sp;
    const Mat Wg = cplx(0, 0.5 * m * (al + be) / hb) * sm;
    const Mat sz = pauli(2);
    const int n = psi.n;
    const std::size_t N = psi.cells();

    Fft2 fft(n, 2);
    std::vector<cplx> hat = psi.c;
    fft.forward(hat);
    std::vector<cplx> A(2 * N), B(2 * N), C(2 * N), S(2 * N);
    for (int iy = 0; iy < n; ++iy)
        for (int ix = 0; ix < n; ++ix) {
            const std::size_t i = static_cast<std::size_t>(iy) * n + ix;
            const double kx = wave_number(ix, n, psi.a), ky = wave_number(iy, n, psi.a);
            const cplx xi = hb * hb * c / 2 * (ky - kx);
            const Mat ch = cosh_m(xi * K), sh = sinh_m(xi * K), shz = sh * sz;
            const double u = hb * (kx - ky) / (8 * std::numbers::sqrt2 * m * (al + be));
            const double s = v.variant == TwistVariant::FullSin ? 2 * std::sin(u) * std::sin(u)
                                                                : -2 * std::sinh(u) * std::sinh(u);
            for (auto [dst, M] : {std::pair{&A, ch}, std::pair{&B, shz}, std::pair{&C, sh}}) {
                cplx up = hat[i], dn = hat[N + i];
                apply(M, up, dn);
                (*dst)[i] = up;
                (*dst)[N + i] = dn;
            }
            S[i] = s * hat[i];
            S[N + i] = s * hat[N + i];
        }
    for (auto* f : {&A, &B, &C, &S}) fft.backward(*f);

    SpinorGrid out = psi;
    for (int iy = 0; iy < n; ++iy)
        for (int ix = 0; ix < n; ++ix) {
            const double x = psi.coord(ix), y = psi.coord(iy);
            const Mat E = expm(cplx(x - y) * K), Wx = expm(cplx(x + y) * Wg);
            const std::size_t i = static_cast<std::size_t>(iy) * n + ix;
            cplx t1u = A[i] + B[i], t1d = A[N + i] + B[N + i];
            apply(E, t1u, t1d);
            cplx au = A[i], ad = A[N + i];
            apply(E, au, ad);
            cplx cu = C[i], cd = C[N + i];
            apply(sz * E, cu, cd);
            cplx u = 0.5 * (t1u + au + cu + S[i]), d = 0.5 * (t1d + ad + cd + S[N + i]);
            apply(Wx, u, d);
            out.c[i] = u;
            out.c[N + i] = d;
        }
    return out;
}

std::array<double, 3> polarization(const SpinorGrid& psi) {
    const std::size_t N = psi.cells();
    std::array<double, 3> s{};
    for (std::size_t i = 0; i < N; ++i) {
        const cplx u = psi.c[i], d = psi.c[N + i];
        const cplx ud = std::conj(u) * d;
        s[0] += 2 * ud.real();
        s[1] += 2 * ud.imag();
        s[2] += std::norm(u) - std::norm(d);
    }
    for (auto& x : s) x *= psi.a * psi.a;
    return s;
}

}  // namespace

SpinorGrid apply_upsilon(const SpinorGrid& psi, const RDParams& p, double lambda, TwistChoice v) {
    if (lambda == 0 || (p.alpha == 0 && p.beta == 0)) return psi;
    if (v.variant == TwistVariant::Wilson) return wilson_dressing(psi, p, lambda);
    return full_upsilon(psi, p, lambda, v);
}

std::array<double, 3> spin_polarization(const SpinorGrid& psi) { return polarization(psi); }

std::array<double, 3> twisted_spin(const SpinorGrid& psi, const RDParams& p, double lambda, TwistChoice v) {
    auto s = polarization(apply_upsilon(psi, p, lambda, v));
    for (auto& x : s) x *= p.hbar / 2;
    return s;
}

// ---- simulator ----

RDSimulator::RDSimulator(int n, double a, RDParams p, std::vector<double> V)
    : n_(n), a_(a), p_(p), V_(std::move(V)) {
    if (n < 8 || n % 2) throw std::invalid_argument("grid size must be even and >= 8");
    if (V_.empty()) V_.assign(static_cast<std::size_t>(n) * n, 0.0);
    if (V_.size() != static_cast<std::size_t>(n) * n) throw std::invalid_argument("potential size mismatch");
    check_stability(p_, n, a);
    fft_ = std::make_unique<Fft2>(n, 2);
    vphase_.resize(V_.size());
    for (std::size_t i = 0; i < V_.size(); ++i) vphase_[i] = std::exp(cplx(0, -V_[i] * p_.dt / p_.hbar));
}

RDSimulator::~RDSimulator() = default;

const std::vector<std::array<cplx, 4>>& RDSimulator::propagator(double lambda, double tau) const {
    if (cache_.lambda == lambda && cache_.tau == tau && !cache_.u.empty()) return cache_.u;
    const std::size_t N = static_cast<std::size_t>(n_) * n_;
    const double hb = p_.hbar;
    cache_.u.resize(N);
    for (int iy = 0; iy < n_; ++iy) {
        const double ky = wave_number(iy, n_, a_);
        for (int ix = 0; ix < n_; ++ix) {
            const double kx = wave_number(ix, n_, a_);
            const double eps = hb * hb * (kx * kx + ky * ky) / (2 * p_.m);
            const double bx = lambda * hb * (p_.beta * kx - p_.alpha * ky);
            const double by = lambda * hb * (p_.alpha * kx - p_.beta * ky);
            const double b = std::hypot(bx, by);
            const double ph = b * tau / hb;
            const double sn = b > 0 ? std::sin(ph) / b : 0;
            const cplx g = std::exp(cplx(0, -eps * tau / hb));
            // g [cos - i sin (b . sigma) / |b|]
            cache_.u[static_cast<std::size_t>(iy) * n_ + ix] = {g * std::cos(ph), g * cplx(0, -sn) * cplx(bx, -by),
                                                               g * cplx(0, -sn) * cplx(bx, by), g * std::cos(ph)};
        }
    }
    cache_.lambda = lambda;
    cache_.tau = tau;
    return cache_.u;
}

void RDSimulator::kinetic(std::vector<cplx>& hat, double lambda, double tau) const {
    const auto& U = propagator(lambda, tau);
    const std::size_t N = U.size();
    for (std::size_t i = 0; i < N; ++i) apply(U[i], hat[i], hat[N + i]);
}

void RDSimulator::potential_phase(std::vector<cplx>& c) const {
    const std::size_t N = vphase_.size();
    for (std::size_t i = 0; i < N; ++i) {
        c[i] *= vphase_[i];
        c[N + i] *= vphase_[i];
    }
}

void RDSimulator::step(SpinorGrid& psi, double t) const {
    if (psi.n != n_ || psi.a != a_) throw std::invalid_argument("grid does not match the simulator");
    const double dt = p_.dt;
    fft_->forward(psi.c);
    kinetic(psi.c, p_.ramp.value(t + dt / 4), dt / 2);
    fft_->backward(psi.c);
    potential_phase(psi.c);
    fft_->forward(psi.c);
    kinetic(psi.c, p_.ramp.value(t + 3 * dt / 4), dt / 2);
    fft_->backward(psi.c);
}

double RDSimulator::energy(const SpinorGrid& psi, double lambda) const {
    const auto h = time_derivative(psi, lambda);
    // <psi| H psi> = <psi| i hbar d_t psi>
    cplx e = 0;
    for (std::size_t i = 0; i < psi.c.size(); ++i) e += std::conj(psi.c[i]) * cplx(0, p_.hbar) * h.c[i];
    return e.real() * a_ * a_;
}

SpinorGrid RDSimulator::time_derivative(const SpinorGrid& psi, double lambda) const {
    if (psi.n != n_ || psi.a != a_) throw std::invalid_argument("grid does not match the simulator");
    const std::size_t N = psi.cells();
    const double hb = p_.hbar;
    std::vector<cplx> hat = psi.c;
    fft_->forward(hat);
    for (int iy = 0; iy < n_; ++iy)
        for (int ix = 0; ix < n_; ++ix) {
            const double kx = wave_number(ix, n_, a_), ky = wave_number(iy, n_, a_);
            const double eps = hb * hb * (kx * kx + ky * ky) / (2 * p_.m);
            const double bx = lambda * hb * (p_.beta * kx - p_.alpha * ky);
            const double by = lambda * hb * (p_.alpha * kx - p_.beta * ky);
            const Mat H = {eps, cplx(bx, -by), cplx(bx, by), eps};
            const std::size_t i = static_cast<std::size_t>(iy) * n_ + ix;
            apply(H, hat[i], hat[N + i]);
        }
    fft_->backward(hat);
    SpinorGrid out = psi;
    for (std::size_t i = 0; i < N; ++i) {
        out.c[i] = cplx(0, -1 / hb) * (hat[i] + V_[i] * psi.c[i]);
        out.c[N + i] = cplx(0, -1 / hb) * (hat[N + i] + V_[i] * psi.c[N + i]);
    }
    return out;
}

ObservableTrace RDSimulator::evolve(SpinorGrid& psi, long n_steps, const EvolveOptions& o, double t0) const {
    if (n_steps < 0) throw std::invalid_argument("negative step count");
    if (o.record_every < 1) throw std::invalid_argument("record_every must be >= 1");
    ObservableTrace tr;
    for (const auto& v : o.twists) tr.variants.push_back(v.label());
    tr.st.resize(o.twists.size());
    auto record = [&](double t) {
        const double lam = p_.ramp.value(t);
        tr.t.push_back(t);
        tr.norm.push_back(psi.norm());
        tr.energy.push_back(energy(psi, lam));
        const auto s = polarization(psi);
        for (int a = 0; a < 3; ++a) tr.s[a].push_back(s[a]);
        for (std::size_t k = 0; k < o.twists.size(); ++k) {
            const auto st = polarization(apply_upsilon(psi, p_, lam, o.twists[k]));
            for (int a = 0; a < 3; ++a) tr.st[k][a].push_back(st[a]);
        }
    };
    if (psi.n != n_ || psi.a != a_) throw std::invalid_argument("grid does not match the simulator");
    record(t0);
    // Same sequence as repeated step() without the FFT round trip between
    // consecutive half momentum steps.
    const double dt = p_.dt;
    fft_->forward(psi.c);
    for (long k = 1; k <= n_steps; ++k) {
        const double t = t0 + (k - 1) * dt;
        kinetic(psi.c, p_.ramp.value(t + dt / 4), dt / 2);
        fft_->backward(psi.c);
        potential_phase(psi.c);
        fft_->forward(psi.c);
        kinetic(psi.c, p_.ramp.value(t + 3 * dt / 4), dt / 2);
        if (k % o.record_every == 0 || k == n_steps) {
            fft_->backward(psi.c);
            record(t0 + k * dt);
            if (k < n_steps) fft_->forward(psi.c);
        }
    }
    if (n_steps == 0) fft_->backward(psi.c);
    return tr;
}

void ObservableTrace::write_csv(std::ostream& os) const {
    os << "t,norm,sx,sy,sz,st_x,st_y,st_z,energy,variant\n";
    os << std::setprecision(12);
    for (std::size_t i = 0; i < size(); ++i) {
        auto row = [&](const std::array<double, 3>& st, const std::string& v) {
            os << t[i] << ',' << norm[i] << ',' << s[0][i] << ',' << s[1][i] << ',' << s[2][i] << ',' << st[0] << ','
               << st[1] << ',' << st[2] << ',' << energy[i] << ',' << v << '\n';
        };
        if (variants.empty()) row({s[0][i], s[1][i], s[2][i]}, "none");
        for (std::size_t k = 0; k < variants.size(); ++k) row({st[k][0][i], st[k][1][i], st[k][2][i]}, variants[k]);
    }
}

ObservableTrace average(const std::vector<ObservableTrace>& traces) {
    if (traces.empty()) throw std::invalid_argument("empty ensemble");
    ObservableTrace out = traces.front();
    for (std::size_t m = 1; m < traces.size(); ++m) {
        const auto& x = traces[m];
        if (x.size() != out.size() || x.variants != out.variants) throw std::invalid_argument("incompatible traces");
        for (std::size_t i = 0; i < out.size(); ++i) {
            out.norm[i] += x.norm[i];
            out.energy[i] += x.energy[i];
            for (int a = 0; a < 3; ++a) {
                out.s[a][i] += x.s[a][i];
                for (std::size_t k = 0; k < out.st.size(); ++k) out.st[k][a][i] += x.st[k][a][i];
            }
        }
    }
    const double f = 1.0 / static_cast<double>(traces.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out.norm[i] *= f;
        out.energy[i] *= f;
        for (int a = 0; a < 3; ++a) {
            out.s[a][i] *= f;
            for (auto& st : out.st) st[a][i] *= f;
        }
    }
    return out;
}

namespace {

// Runs f(i) for i in [0, count) on up to `threads` workers.
template <class F>
void parallel_for(std::size_t count, int threads, F f) {
    const std::size_t w = std::clamp<std::size_t>(threads < 1 ? 1 : threads, 1, std::max<std::size_t>(count, 1));
    if (w == 1) {
        for (std::size_t i = 0; i < count; ++i) f(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(w);
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < w; ++t)
        pool.emplace_back([&, t] {
            try {
                for (std::size_t i; (i = next++) < count;) f(i);
            } catch (...) {
                errors[t] = std::current_exception();
            }
        });
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

SpinorGrid initial_state(const EnsembleSpec& e, const RDParams& p) {
    auto chi = SpinorGrid::gaussian_packet(e.n, e.a, e.width, e.spin, e.kx, e.ky);
    if (!e.dressed_start) return chi;
    return wilson_dressing(chi, p, -p.ramp.value(0));
}

std::vector<double> potential_for(const EnsembleSpec& e, std::uint64_t seed, double m) {
    PotentialSpec ps = e.potential;
    ps.seed = seed;
    return ps.realize(e.n, e.a, m);
}

double distance(const std::array<double, 3>& x, const std::array<double, 3>& y) {
    return std::sqrt((x[0] - y[0]) * (x[0] - y[0]) + (x[1] - y[1]) * (x[1] - y[1]) + (x[2] - y[2]) * (x[2] - y[2]));
}

}  // namespace

std::vector<ObservableTrace> run_ensemble(const EnsembleSpec& e, const RDParams& p, const EvolveOptions& o) {
    if (e.seeds.empty()) throw std::invalid_argument("ensemble needs at least one seed");
    check_stability(p, e.n, e.a);
    std::vector<ObservableTrace> out(e.seeds.size());
    parallel_for(e.seeds.size(), e.threads, [&](std::size_t i) {
        RDSimulator sim(e.n, e.a, p, potential_for(e, e.seeds[i], p.m));
        auto psi = initial_state(e, p);
        out[i] = sim.evolve(psi, p.n_steps, o);
    });
    return out;
}

// ---- adiabatic ramp ----

RampReport adiabatic_ramp_experiment(const EnsembleSpec& e, RDParams p, const std::vector<double>& t_ramps,
                                     TwistChoice v) {
    if (t_ramps.size() < 4) throw std::invalid_argument("ramp sweep needs at least 4 durations");
    if (e.seeds.empty()) throw std::invalid_argument("ramp sweep needs at least one seed");
    std::vector<double> ts = t_ramps;
    std::sort(ts.begin(), ts.end());
    if (!(ts.front() > 0) || ts.back() < 10 * ts.front())
        throw std::invalid_argument("ramp durations must be positive and span at least one decade");
    if (p.ramp.shape == Ramp::Constant) throw std::invalid_argument("ramp experiment needs a C1 or C2 shape");
    check_stability(p, e.n, e.a);

    RampReport rep;
    rep.variant = v.label();
    auto run = [&](const RDParams& q, double duration, double lam0, double lam1) {
        std::vector<double> d(e.seeds.size());
        parallel_for(e.seeds.size(), e.threads, [&](std::size_t i) {
            const long steps = std::max<long>(1, static_cast<long>(std::ceil(duration / q.dt - 1e-9)));
            RDParams r = q;
            r.dt = duration / steps;
            RDSimulator sim(e.n, e.a, r, potential_for(e, e.seeds[i], r.m));
            auto psi = initial_state(e, r);
            const auto before = twisted_spin(psi, r, lam0, v);
            for (long k = 0; k < steps; ++k) sim.step(psi, k * r.dt);
            d[i] = distance(twisted_spin(psi, r, lam1, v), before);
        });
        double s = 0;
        for (double x : d) s += x;
        return s / static_cast<double>(d.size());
    };
    for (double T : ts) {
        RDParams q = p;
        q.ramp.t_ramp = T;
        rep.points.push_back({T, run(q, T, 0.0, 1.0)});
    }
    RDParams c = p;
    c.ramp = Ramp{};
    rep.constant_floor = run(c, ts.back(), 1.0, 1.0);

    for (std::size_t i = 1; i < rep.points.size(); ++i)
        if (!(rep.points[i].delta_st < rep.points[i - 1].delta_st)) rep.monotone = false;
    // least squares of log delta against log(1 / T)
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n = static_cast<double>(rep.points.size());
    std::vector<double> xs, ys;
    for (const auto& pt : rep.points) {
        xs.push_back(-std::log(pt.t_ramp));
        ys.push_back(std::log(std::max(pt.delta_st, 1e-300)));
    }
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sx += xs[i];
        sy += ys[i];
        sxx += xs[i] * xs[i];
        sxy += xs[i] * ys[i];
    }
    const double vxx = sxx - sx * sx / n;
    rep.exponent = (sxy - sx * sy / n) / vxx;
    const double icpt = (sy - rep.exponent * sx) / n;
    double ssr = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double r = ys[i] - icpt - rep.exponent * xs[i];
        ssr += r * r;
    }
    rep.exponent_stderr = n > 2 ? std::sqrt(ssr / (n - 2) / vxx) : 0;
    return rep;
}

std::string to_csv(const RampReport& r) {
    std::ostringstream os;
    os << std::setprecision(12);
    os << "t_ramp,delta_st,variant\n";
    for (const auto& pt : r.points) os << pt.t_ramp << ',' << pt.delta_st << ',' << r.variant << '\n';
    os << "# exponent=" << r.exponent << " stderr=" << r.exponent_stderr << " monotone=" << (r.monotone ? 1 : 0)
       << " constant_floor=" << r.constant_floor << '\n';
    return os.str();
}

// ---- spin currents ----

NumericGauge rd_numeric_gauge(const RDParams& p, double lambda) {
    // a_i = (q hbar / 2) A^b_i sigma^b with q = 1
    NumericGauge g;
    g.q = 1;
    const double s = 2 * p.m / p.hbar * lambda;
    g.a[1][0] = -s * p.beta;
    g.a[1][1] = -s * p.alpha;
    g.a[2][0] = s * p.alpha;
    g.a[2][1] = s * p.beta;
    return g;
}

SpinCurrentGrid spin_current_fields(const RDSimulator& sim, const SpinorGrid& psi, double lambda) {
    const RDParams& p = sim.params();
    const int n = psi.n;
    const std::size_t N = psi.cells();
    Fft2 fft(n, 2);
    std::vector<cplx> dx = psi.c, dy;
    fft.forward(dx);
    dy = dx;
    for (int iy = 0; iy < n; ++iy)
        for (int ix = 0; ix < n; ++ix) {
            const std::size_t i = static_cast<std::size_t>(iy) * n + ix;
            const cplx ikx(0, wave_number(ix, n, psi.a)), iky(0, wave_number(iy, n, psi.a));
            for (std::size_t r : {std::size_t{0}, N}) {
                dx[r + i] *= ikx;
                dy[r + i] *= iky;
            }
        }
    fft.backward(dx);
    fft.backward(dy);
    const auto dt = sim.time_derivative(psi, lambda);
    const auto A = rd_potential(p, lambda);

    SpinCurrentGrid J;
    J.nx = J.ny = n;
    J.dx = J.dy = psi.a;
    for (int a = 0; a < 3; ++a) J.rho[a] = J.jx[a] = J.jy[a] = J.drho_dt[a] = std::vector<double>(N);
    for (std::size_t i = 0; i < N; ++i) {
        const cplx u = psi.c[i], d = psi.c[N + i];
        std::array<cplx, 2> D[2] = {{dx[i], dx[N + i]}, {dy[i], dy[N + i]}};
        for (int k = 0; k < 2; ++k) {
            cplx au = u, ad = d;
            apply(A[k], au, ad);
            D[k][0] -= cplx(0, 1 / p.hbar) * au;
            D[k][1] -= cplx(0, 1 / p.hbar) * ad;
        }
        for (int a = 0; a < 3; ++a) {
            const Mat s = pauli(a);
            auto bil = [&](cplx x0, cplx x1) {
                // psi^+ sigma^a x
                return std::conj(u) * (s[0] * x0 + s[1] * x1) + std::conj(d) * (s[2] * x0 + s[3] * x1);
            };
            J.rho[a][i] = bil(u, d).real();
            J.drho_dt[a][i] = 2 * bil(dt.c[i], dt.c[N + i]).real();
            J.jx[a][i] = p.hbar / p.m * bil(D[0][0], D[0][1]).imag();
            J.jy[a][i] = p.hbar / p.m * bil(D[1][0], D[1][1]).imag();
        }
    }
    return J;
}

}  // namespace twistlab

namespace twistlab {

ObservableTrace read_trace_csv(std::istream& is) {
    ObservableTrace tr;
    std::string line;
    bool header = false;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        if (!header) {
            if (line != "t,norm,sx,sy,sz,st_x,st_y,st_z,energy,variant")
                throw std::invalid_argument("line " + std::to_string(lineno) + ": unexpected trace header");
            header = true;
            continue;
        }
        std::vector<std::string> f;
        std::stringstream ss(line);
        for (std::string x; std::getline(ss, x, ',');) f.push_back(x);
        if (f.size() != 10) throw std::invalid_argument("line " + std::to_string(lineno) + ": expected 10 fields");
        double v[9];
        for (int i = 0; i < 9; ++i) {
            std::size_t used = 0;
            try {
                v[i] = std::stod(f[i], &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used != f[i].size())
                throw std::invalid_argument("line " + std::to_string(lineno) + ": bad number '" + f[i] + "'");
        }
        const std::string& name = f[9];
        const bool new_time = tr.t.empty() || v[0] != tr.t.back();
        if (new_time) {
            if (!tr.t.empty() && v[0] < tr.t.back())
                throw std::invalid_argument("line " + std::to_string(lineno) + ": time goes backwards");
            tr.t.push_back(v[0]);
            tr.norm.push_back(v[1]);
            tr.energy.push_back(v[8]);
            for (int a = 0; a < 3; ++a) tr.s[a].push_back(v[2 + a]);
        }
        if (name == "none") continue;
        auto it = std::find(tr.variants.begin(), tr.variants.end(), name);
        if (it == tr.variants.end()) {
            if (tr.t.size() != 1) throw std::invalid_argument("line " + std::to_string(lineno) + ": variant set changes");
            tr.variants.push_back(name);
            tr.st.emplace_back();
            it = tr.variants.end() - 1;
        }
        auto& st = tr.st[static_cast<std::size_t>(it - tr.variants.begin())];
        for (int a = 0; a < 3; ++a) st[a].push_back(v[5 + a]);
    }
    if (!header) throw std::invalid_argument("trace has no header");
    for (const auto& st : tr.st)
        if (st[0].size() != tr.size()) throw std::invalid_argument("trace rows are incomplete");
    return tr;
}

const VariantSummary& TraceSummary::best() const {
    if (variants.empty()) throw std::logic_error("no twisted-spin variants");
    return *std::min_element(variants.begin(), variants.end(), [](const auto& x, const auto& y) {
        return x.drift_over_decay < y.drift_over_decay;
    });
}

TraceSummary summarize(const ObservableTrace& tr) {
    if (tr.size() < 2) throw std::invalid_argument("trace needs at least two samples");
    TraceSummary s;
    const auto& sz = tr.s[2];
    s.sz0 = sz.front();
    s.sz_end = sz.back();
    s.decay = s.sz0 - s.sz_end;
    s.decay_fraction = s.sz0 != 0 ? s.decay / std::abs(s.sz0) : 0;
    const double target = s.sz0 / std::numbers::e;
    for (std::size_t i = 1; i < tr.size() && s.tau_e == 0; ++i)
        if (sz[i] <= target) {
            const double f = (sz[i - 1] - target) / (sz[i - 1] - sz[i]);
            s.tau_e = tr.t[i - 1] + f * (tr.t[i] - tr.t[i - 1]);
        }
    for (double x : tr.norm) s.norm_drift = std::max(s.norm_drift, std::abs(x - 1));
    for (std::size_t k = 0; k < tr.variants.size(); ++k) {
        VariantSummary v;
        v.variant = tr.variants[k];
        const auto& st = tr.st[k];
        std::array<double, 3> x0{st[0][0], st[1][0], st[2][0]};
        v.st0 = std::hypot(x0[0], x0[1], x0[2]);
        for (std::size_t i = 0; i < tr.size(); ++i)
            v.drift = std::max(v.drift, std::hypot(st[0][i] - x0[0], st[1][i] - x0[1], st[2][i] - x0[2]));
        v.relative_drift = v.st0 > 0 ? v.drift / v.st0 : std::numeric_limits<double>::infinity();
        v.drift_over_decay = s.decay > 0 ? v.drift / s.decay : std::numeric_limits<double>::infinity();
        s.variants.push_back(v);
    }
    return s;
}

std::string to_csv(const TraceSummary& s) {
    std::ostringstream os;
    os << std::setprecision(12);
    os << "variant,sz0,sz_end,decay_fraction,tau_e,norm_drift,st0,drift,relative_drift,drift_over_decay\n";
    auto common = [&] {
        os << s.sz0 << ',' << s.sz_end << ',' << s.decay_fraction << ',' << s.tau_e << ',' << s.norm_drift << ',';
    };
    if (s.variants.empty()) {
        os << "none,";
        common();
        os << ",,,\n";
    }
    for (const auto& v : s.variants) {
        os << v.variant << ',';
        common();
        os << v.st0 << ',' << v.drift << ',' << v.relative_drift << ',' << v.drift_over_decay << '\n';
    }
    return os.str();
}

}  // namespace twistlab
