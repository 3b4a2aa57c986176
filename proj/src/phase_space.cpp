#include "twistlab/phase_space.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace twistlab {

// ---------------------------------------------------------------- MultiIndex

int MultiIndex::degree() const {
    int d = 0;
    for (auto v : e) d += v;
    return d;
}

MultiIndex MultiIndex::operator+(const MultiIndex& o) const {
    MultiIndex r;
    for (size_t k = 0; k < e.size(); ++k) {
        int v = e[k] + o.e[k];
        if (v > 255) throw std::overflow_error("monomial exponent overflow");
        r.e[k] = static_cast<std::uint8_t>(v);
    }
    return r;
}

bool operator<(const MultiIndex& a, const MultiIndex& b) {
    int da = a.degree(), db = b.degree();
    if (da != db) return da < db;
    return a.e > b.e;  // X^1 before X^0-only terms of the same degree
}

bool operator==(const MultiIndex& a, const MultiIndex& b) { return a.e == b.e; }

// ---------------------------------------------------------------- SpinMatrix

SpinMatrix SpinMatrix::identity(const CRational& v) {
    SpinMatrix m;
    m.c[0] = v;
    return m;
}

SpinMatrix SpinMatrix::pauli(int a, const CRational& v) {
    if (a < 0 || a > 2) throw std::out_of_range("pauli index");
    SpinMatrix m;
    m.c[a + 1] = v;
    return m;
}

SpinMatrix SpinMatrix::from_entries(const std::array<CRational, 4>& m) {
    const CRational half(q(1, 2));
    SpinMatrix r;
    r.c[0] = (m[0] + m[3]) * half;
    r.c[3] = (m[0] - m[3]) * half;
    r.c[1] = (m[1] + m[2]) * half;
    r.c[2] = (m[1] - m[2]) * half * CRational::i();
    return r;
}

std::array<CRational, 4> SpinMatrix::entries() const {
    const CRational i = CRational::i();
    return {c[0] + c[3], c[1] - i * c[2], c[1] + i * c[2], c[0] - c[3]};
}

bool SpinMatrix::is_zero() const {
    return c[0].is_zero() && c[1].is_zero() && c[2].is_zero() && c[3].is_zero();
}

SpinMatrix& SpinMatrix::operator+=(const SpinMatrix& o) {
    for (int k = 0; k < 4; ++k) c[k] += o.c[k];
    return *this;
}
SpinMatrix& SpinMatrix::operator-=(const SpinMatrix& o) {
    for (int k = 0; k < 4; ++k) c[k] -= o.c[k];
    return *this;
}
SpinMatrix& SpinMatrix::operator*=(const CRational& s) {
    for (auto& v : c) v *= s;
    return *this;
}

SpinMatrix operator+(SpinMatrix a, const SpinMatrix& b) { return a += b; }
SpinMatrix operator-(SpinMatrix a, const SpinMatrix& b) { return a -= b; }
SpinMatrix operator*(SpinMatrix a, const CRational& s) { return a *= s; }
bool operator==(const SpinMatrix& a, const SpinMatrix& b) { return a.c == b.c; }

namespace {

// Jordan part: a0 b0 + a.b on I, a0 b + b0 a on sigma.
SpinMatrix jordan(const SpinMatrix& a, const SpinMatrix& b) {
    SpinMatrix r;
    r.c[0] = a.c[0] * b.c[0] + a.c[1] * b.c[1] + a.c[2] * b.c[2] + a.c[3] * b.c[3];
    for (int k = 1; k < 4; ++k) r.c[k] = a.c[0] * b.c[k] + b.c[0] * a.c[k];
    return r;
}

}  // namespace

SpinMatrix sym_mul(const SpinMatrix& a, const SpinMatrix& b) { return jordan(a, b); }

SpinMatrix mat_mul(const SpinMatrix& a, const SpinMatrix& b) {
    SpinMatrix r = jordan(a, b);
    if (a.is_scalar() || b.is_scalar()) return r;
    const CRational i = CRational::i();
    // i (a x b) . sigma
    r.c[1] += i * (a.c[2] * b.c[3] - a.c[3] * b.c[2]);
    r.c[2] += i * (a.c[3] * b.c[1] - a.c[1] * b.c[3]);
    r.c[3] += i * (a.c[1] * b.c[2] - a.c[2] * b.c[1]);
    return r;
}

PauliParts pauli_decompose(const SpinMatrix& m) { return {m.c[0], {m.c[1], m.c[2], m.c[3]}}; }

// ---------------------------------------------------------------- PhasePoly

PhasePoly PhasePoly::constant(const SpinMatrix& m) { return monomial(MultiIndex{}, m); }

PhasePoly PhasePoly::monomial(const MultiIndex& mi, const SpinMatrix& m) {
    PhasePoly p;
    p.add_term(mi, m);
    return p;
}

int PhasePoly::degree() const {
    int d = -1;
    for (const auto& [mi, m] : terms_) d = std::max(d, mi.degree());
    return d;
}

bool PhasePoly::depends_on_p() const {
    for (const auto& [mi, m] : terms_)
        for (int mu = 0; mu < kMaxDim; ++mu)
            if (mi.p(mu)) return true;
    return false;
}

bool PhasePoly::depends_on_x() const {
    for (const auto& [mi, m] : terms_)
        for (int mu = 0; mu < kMaxDim; ++mu)
            if (mi.x(mu)) return true;
    return false;
}

void PhasePoly::add_term(const MultiIndex& mi, const SpinMatrix& m) {
    if (m.is_zero()) return;
    auto it = terms_.find(mi);
    if (it == terms_.end()) {
        terms_.emplace(mi, m);
        return;
    }
    it->second += m;
    if (it->second.is_zero()) terms_.erase(it);
}

PhasePoly& PhasePoly::operator+=(const PhasePoly& o) {
    for (const auto& [mi, m] : o.terms_) add_term(mi, m);
    return *this;
}

PhasePoly& PhasePoly::operator-=(const PhasePoly& o) {
    for (const auto& [mi, m] : o.terms_) add_term(mi, m * CRational(-1));
    return *this;
}

PhasePoly& PhasePoly::operator*=(const CRational& s) {
    if (s.is_zero()) {
        terms_.clear();
        return *this;
    }
    for (auto& [mi, m] : terms_) m *= s;
    return *this;
}

PhasePoly PhasePoly::derive(Coord c) const {
    PhasePoly r;
    if (c.kind == Coord::S) {
        if (c.index < 0 || c.index > 2) throw std::out_of_range("spin index");
        for (const auto& [mi, m] : terms_) r.add_term(mi, SpinMatrix::identity(m.c[c.index + 1]));
        return r;
    }
    if (c.index < 0 || c.index >= kMaxDim) throw std::out_of_range("coordinate index");
    int slot = c.kind == Coord::X ? c.index : kMaxDim + c.index;
    for (const auto& [mi, m] : terms_) {
        if (mi.e[slot] == 0) continue;
        MultiIndex d = mi;
        d.e[slot] -= 1;
        r.add_term(d, m * CRational(static_cast<long>(mi.e[slot])));
    }
    return r;
}

PhasePoly PhasePoly::component(int a) const {
    PhasePoly r;
    for (const auto& [mi, m] : terms_) r.add_term(mi, SpinMatrix::identity(m.c.at(a)));
    return r;
}

PhasePoly operator+(PhasePoly a, const PhasePoly& b) { return a += b; }
PhasePoly operator-(PhasePoly a, const PhasePoly& b) { return a -= b; }
PhasePoly operator*(PhasePoly a, const CRational& s) { return a *= s; }
bool operator==(const PhasePoly& a, const PhasePoly& b) { return a.terms() == b.terms(); }

namespace {

template <class Mul>
PhasePoly poly_product(const PhasePoly& a, const PhasePoly& b, Mul mul) {
    PhasePoly r;
    for (const auto& [ma, ca] : a.terms())
        for (const auto& [mb, cb] : b.terms()) r.add_term(ma + mb, mul(ca, cb));
    return r;
}

}  // namespace

PhasePoly sym_mul(const PhasePoly& a, const PhasePoly& b) {
    return poly_product(a, b, [](const SpinMatrix& x, const SpinMatrix& y) { return sym_mul(x, y); });
}

PhasePoly mat_mul(const PhasePoly& a, const PhasePoly& b) {
    return poly_product(a, b, [](const SpinMatrix& x, const SpinMatrix& y) { return mat_mul(x, y); });
}

// ---------------------------------------------------------------- PhaseSeries

PhaseSeries::PhaseSeries(int dim, int order) : dim_(dim), order_(order), c_(order + 1) {
    if (dim < 1 || dim > kMaxDim) throw std::invalid_argument("dimension out of range");
    if (order < 0) throw std::invalid_argument("negative truncation order");
}

PhaseSeries::PhaseSeries(int dim, int order, const PhasePoly& c0) : PhaseSeries(dim, order) {
    c_[0] = c0;
}

PhaseSeries PhaseSeries::constant(int dim, int order, const SpinMatrix& m) {
    return {dim, order, PhasePoly::constant(m)};
}

PhaseSeries PhaseSeries::x(int dim, int order, int mu) {
    MultiIndex mi;
    mi.x(mu) = 1;
    return {dim, order, PhasePoly::monomial(mi, SpinMatrix::identity())};
}

PhaseSeries PhaseSeries::p(int dim, int order, int mu) {
    MultiIndex mi;
    mi.p(mu) = 1;
    return {dim, order, PhasePoly::monomial(mi, SpinMatrix::identity())};
}

PhaseSeries PhaseSeries::pauli(int dim, int order, int a) {
    return constant(dim, order, SpinMatrix::pauli(a));
}

bool PhaseSeries::is_zero() const {
    return std::all_of(c_.begin(), c_.end(), [](const PhasePoly& p) { return p.is_zero(); });
}

PhaseSeries PhaseSeries::truncated(int order) const {
    if (order > order_) throw std::invalid_argument("cannot extend a truncated series");
    PhaseSeries r(dim_, order);
    for (int k = 0; k <= order; ++k) r.c_[k] = c_[k];
    return r;
}

PhaseSeries PhaseSeries::shifted(int k) const {
    PhaseSeries r(dim_, order_);
    for (int j = 0; j + k <= order_; ++j) r.c_[j + k] = c_[j];
    return r;
}

namespace {

void check_dims(const PhaseSeries& a, const PhaseSeries& b) {
    if (a.dim() != b.dim()) throw std::invalid_argument("incompatible phase-space dimensions");
}

}  // namespace

PhaseSeries& PhaseSeries::operator+=(const PhaseSeries& o) {
    check_dims(*this, o);
    if (o.order_ < order_) *this = truncated(o.order_);
    for (int k = 0; k <= order_; ++k) c_[k] += o.c_[k];
    return *this;
}

PhaseSeries& PhaseSeries::operator-=(const PhaseSeries& o) {
    check_dims(*this, o);
    if (o.order_ < order_) *this = truncated(o.order_);
    for (int k = 0; k <= order_; ++k) c_[k] -= o.c_[k];
    return *this;
}

PhaseSeries& PhaseSeries::operator*=(const CRational& s) {
    for (auto& p : c_) p *= s;
    return *this;
}

PhaseSeries operator+(PhaseSeries a, const PhaseSeries& b) { return a += b; }
PhaseSeries operator-(PhaseSeries a, const PhaseSeries& b) { return a -= b; }
PhaseSeries operator*(PhaseSeries a, const CRational& s) { return a *= s; }

bool operator==(const PhaseSeries& a, const PhaseSeries& b) {
    if (a.dim() != b.dim() || a.order() != b.order()) return false;
    for (int k = 0; k <= a.order(); ++k)
        if (!(a.coeff(k) == b.coeff(k))) return false;
    return true;
}

namespace {

template <class Mul>
PhaseSeries series_product(const PhaseSeries& f, const PhaseSeries& g, Mul mul) {
    check_dims(f, g);
    int n = std::min(f.order(), g.order());
    PhaseSeries r(f.dim(), n);
    for (int i = 0; i <= n; ++i) {
        if (f.coeff(i).is_zero()) continue;
        for (int j = 0; i + j <= n; ++j) r.coeff(i + j) += mul(f.coeff(i), g.coeff(j));
    }
    return r;
}

}  // namespace

PhaseSeries sym_mul(const PhaseSeries& f, const PhaseSeries& g) {
    return series_product(f, g, [](const PhasePoly& a, const PhasePoly& b) { return sym_mul(a, b); });
}

PhaseSeries mat_mul(const PhaseSeries& f, const PhaseSeries& g) {
    return series_product(f, g, [](const PhasePoly& a, const PhasePoly& b) { return mat_mul(a, b); });
}

PhaseSeries derive(const PhaseSeries& f, Coord which) {
    if (which.kind != Coord::S && which.index >= f.dim())
        throw std::out_of_range("derivative index exceeds dimension");
    PhaseSeries r(f.dim(), f.order());
    for (int k = 0; k <= f.order(); ++k) r.coeff(k) = f.coeff(k).derive(which);
    return r;
}

PhasePoly collapse(const PhaseSeries& f, const Rational& hbar) {
    const CRational nu(Rational(0), hbar / 2);
    CRational w(1);
    PhasePoly r;
    for (int k = 0; k <= f.order(); ++k) {
        r += f.coeff(k) * w;
        w *= nu;
    }
    return r;
}

// ---------------------------------------------------------------- evaluation

NumMatrix eval(const PhasePoly& f, const std::vector<double>& point) {
    if (point.size() % 2 != 0) throw std::invalid_argument("point must hold X and p values");
    int dim = static_cast<int>(point.size() / 2);
    NumMatrix out{};
    for (const auto& [mi, m] : f.terms()) {
        double w = 1.0;
        for (int mu = 0; mu < kMaxDim; ++mu) {
            if ((mi.x(mu) || mi.p(mu)) && mu >= dim)
                throw std::invalid_argument("point dimension does not match polynomial");
            for (int k = 0; k < mi.x(mu); ++k) w *= point[mu];
            for (int k = 0; k < mi.p(mu); ++k) w *= point[dim + mu];
        }
        auto ent = m.entries();
        for (int k = 0; k < 4; ++k) out[k] += w * ent[k].to_complex();
    }
    return out;
}

NumMatrix eval(const PhaseSeries& f, const std::vector<double>& point, double hbar) {
    if (static_cast<int>(point.size()) != 2 * f.dim())
        throw std::invalid_argument("point dimension does not match series");
    const std::complex<double> nu(0.0, hbar / 2.0);
    std::complex<double> w = 1.0;
    NumMatrix out{};
    for (int k = 0; k <= f.order(); ++k) {
        NumMatrix c = eval(f.coeff(k), point);
        for (int j = 0; j < 4; ++j) out[j] += w * c[j];
        w *= nu;
    }
    return out;
}

// ---------------------------------------------------------------- text format

std::string to_text(const PhaseSeries& f) {
    std::ostringstream os;
    os << "# phase-series dim=" << f.dim() << " order=" << f.order() << "\n";
    for (int k = 0; k <= f.order(); ++k) {
        for (const auto& [mi, m] : f.coeff(k).terms()) {
            os << k << ' ';
            for (int mu = 0; mu < f.dim(); ++mu) os << (mu ? "," : "") << int(mi.x(mu));
            os << '|';
            for (int mu = 0; mu < f.dim(); ++mu) os << (mu ? "," : "") << int(mi.p(mu));
            for (const auto& v : m.c) os << ' ' << v.str();
            os << "\n";
        }
    }
    return os.str();
}

namespace {

std::vector<int> parse_ints(const std::string& s) {
    std::vector<int> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(std::stoi(tok));
    return out;
}

}  // namespace

PhaseSeries from_text(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    if (!std::getline(is, line)) throw std::invalid_argument("empty phase-series text");
    int dim = 0, order = -1;
    if (std::sscanf(line.c_str(), "# phase-series dim=%d order=%d", &dim, &order) != 2)
        throw std::invalid_argument("missing phase-series header");
    PhaseSeries f(dim, order);
    int lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        int k;
        std::string idx;
        std::array<std::string, 4> comps;
        if (!(ls >> k >> idx >> comps[0] >> comps[1] >> comps[2] >> comps[3]))
            throw std::invalid_argument("malformed monomial on line " + std::to_string(lineno));
        auto bar = idx.find('|');
        if (bar == std::string::npos || k < 0 || k > order)
            throw std::invalid_argument("bad index on line " + std::to_string(lineno));
        auto xs = parse_ints(idx.substr(0, bar));
        auto ps = parse_ints(idx.substr(bar + 1));
        if (static_cast<int>(xs.size()) != dim || static_cast<int>(ps.size()) != dim)
            throw std::invalid_argument("index length mismatch on line " + std::to_string(lineno));
        MultiIndex mi;
        for (int mu = 0; mu < dim; ++mu) {
            mi.x(mu) = static_cast<std::uint8_t>(xs[mu]);
            mi.p(mu) = static_cast<std::uint8_t>(ps[mu]);
        }
        SpinMatrix m;
        for (int j = 0; j < 4; ++j) m.c[j] = parse_crational(comps[j]);
        f.coeff(k).add_term(mi, m);
    }
    return f;
}

// ---------------------------------------------------------------- random input

PhasePoly random_poly(std::mt19937_64& rng, const RandomPolySpec& spec) {
    std::uniform_int_distribution<int> deg(0, spec.max_degree);
    std::uniform_int_distribution<int> slot(0, 2 * spec.dim - 1);
    std::uniform_int_distribution<int> val(-spec.coeff_range, spec.coeff_range);
    std::uniform_int_distribution<int> den(1, 3);
    auto draw = [&]() {
        Rational re(val(rng), den(rng));
        re.canonicalize();
        if (!spec.complex_coeffs) return CRational(re);
        Rational im(val(rng), den(rng));
        im.canonicalize();
        return CRational(re, im);
    };
    PhasePoly p;
    for (int t = 0; t < spec.n_terms; ++t) {
        MultiIndex mi;
        int d = deg(rng);
        for (int k = 0; k < d; ++k) {
            int s = slot(rng);
            if (s < spec.dim) mi.x(s) += 1;
            else mi.p(s - spec.dim) += 1;
        }
        SpinMatrix m;
        m.c[0] = draw();
        if (spec.spin)
            for (int a = 1; a < 4; ++a) m.c[a] = draw();
        p.add_term(mi, m);
    }
    return p;
}

}  // namespace twistlab
