#pragma once

#include <array>
#include <complex>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "twistlab/exact.hpp"

namespace twistlab {

constexpr int kMaxDim = 4;

// Exponents of X^0..X^{D-1} in slots [0, kMaxDim) and of p_0..p_{D-1} in
// slots [kMaxDim, 2*kMaxDim). Unused slots stay zero.
struct MultiIndex {
    std::array<std::uint8_t, 2 * kMaxDim> e{};

    std::uint8_t& x(int mu) { return e[mu]; }
    std::uint8_t& p(int mu) { return e[kMaxDim + mu]; }
    std::uint8_t x(int mu) const { return e[mu]; }
    std::uint8_t p(int mu) const { return e[kMaxDim + mu]; }
    int degree() const;
    MultiIndex operator+(const MultiIndex& o) const;
};

// Graded lexicographic order.
bool operator<(const MultiIndex& a, const MultiIndex& b);
bool operator==(const MultiIndex& a, const MultiIndex& b);

// f = c[0] I + c[1] sx + c[2] sy + c[3] sz.
struct SpinMatrix {
    std::array<CRational, 4> c;

    static SpinMatrix identity(const CRational& v = CRational(1));
    static SpinMatrix pauli(int a, const CRational& v = CRational(1));  // a = 0,1,2 -> x,y,z
    // Row-major entries m00, m01, m10, m11.
    static SpinMatrix from_entries(const std::array<CRational, 4>& m);
    std::array<CRational, 4> entries() const;

    bool is_zero() const;
    bool is_scalar() const { return c[1].is_zero() && c[2].is_zero() && c[3].is_zero(); }
    SpinMatrix& operator+=(const SpinMatrix& o);
    SpinMatrix& operator-=(const SpinMatrix& o);
    SpinMatrix& operator*=(const CRational& s);
};

SpinMatrix operator+(SpinMatrix a, const SpinMatrix& b);
SpinMatrix operator-(SpinMatrix a, const SpinMatrix& b);
SpinMatrix operator*(SpinMatrix a, const CRational& s);
bool operator==(const SpinMatrix& a, const SpinMatrix& b);
SpinMatrix mat_mul(const SpinMatrix& a, const SpinMatrix& b);
// (ab + ba)/2
SpinMatrix sym_mul(const SpinMatrix& a, const SpinMatrix& b);

struct PauliParts {
    CRational scalar;
    std::array<CRational, 3> vec;
};
PauliParts pauli_decompose(const SpinMatrix& m);

struct Coord {
    enum Kind : std::uint8_t { X, P, S };
    Kind kind;
    int index;
    static Coord x(int mu) { return {X, mu}; }
    static Coord p(int mu) { return {P, mu}; }
    static Coord s(int a) { return {S, a}; }
    bool operator==(const Coord&) const = default;
};

class PhasePoly {
public:
    using Terms = std::map<MultiIndex, SpinMatrix>;

    PhasePoly() = default;
    static PhasePoly constant(const SpinMatrix& m);
    static PhasePoly monomial(const MultiIndex& mi, const SpinMatrix& m);

    const Terms& terms() const { return terms_; }
    bool is_zero() const { return terms_.empty(); }
    int degree() const;
    bool depends_on_p() const;
    bool depends_on_x() const;

    void add_term(const MultiIndex& mi, const SpinMatrix& m);

    PhasePoly& operator+=(const PhasePoly& o);
    PhasePoly& operator-=(const PhasePoly& o);
    PhasePoly& operator*=(const CRational& s);

    PhasePoly derive(Coord c) const;
    // Pauli component a = 0..3 as a scalar polynomial.
    PhasePoly component(int a) const;

private:
    Terms terms_;
};

PhasePoly operator+(PhasePoly a, const PhasePoly& b);
PhasePoly operator-(PhasePoly a, const PhasePoly& b);
PhasePoly operator*(PhasePoly a, const CRational& s);
bool operator==(const PhasePoly& a, const PhasePoly& b);
PhasePoly sym_mul(const PhasePoly& a, const PhasePoly& b);
PhasePoly mat_mul(const PhasePoly& a, const PhasePoly& b);

// Truncated series sum_k nu^k c_k with nu = i*hbar/2.
class PhaseSeries {
public:
    PhaseSeries() = default;
    PhaseSeries(int dim, int order);
    PhaseSeries(int dim, int order, const PhasePoly& c0);

    static PhaseSeries constant(int dim, int order, const SpinMatrix& m);
    static PhaseSeries x(int dim, int order, int mu);
    static PhaseSeries p(int dim, int order, int mu);
    static PhaseSeries pauli(int dim, int order, int a);

    int dim() const { return dim_; }
    int order() const { return order_; }
    const PhasePoly& coeff(int k) const { return c_.at(k); }
    PhasePoly& coeff(int k) { return c_.at(k); }
    bool is_zero() const;

    PhaseSeries truncated(int order) const;
    // Multiply by nu^k, dropping terms beyond the order.
    PhaseSeries shifted(int k) const;

    PhaseSeries& operator+=(const PhaseSeries& o);
    PhaseSeries& operator-=(const PhaseSeries& o);
    PhaseSeries& operator*=(const CRational& s);

private:
    int dim_ = 3;
    int order_ = 0;
    std::vector<PhasePoly> c_;
};

PhaseSeries operator+(PhaseSeries a, const PhaseSeries& b);
PhaseSeries operator-(PhaseSeries a, const PhaseSeries& b);
PhaseSeries operator*(PhaseSeries a, const CRational& s);
bool operator==(const PhaseSeries& a, const PhaseSeries& b);

PhaseSeries sym_mul(const PhaseSeries& f, const PhaseSeries& g);
PhaseSeries mat_mul(const PhaseSeries& f, const PhaseSeries& g);
PhaseSeries derive(const PhaseSeries& f, Coord which);

// Sum of the series at a numeric hbar, exactly: sum_k (i hbar/2)^k c_k.
PhasePoly collapse(const PhaseSeries& f, const Rational& hbar);

using NumMatrix = std::array<std::complex<double>, 4>;  // row-major

// point = (X^0..X^{D-1}, p_0..p_{D-1}).
NumMatrix eval(const PhasePoly& f, const std::vector<double>& point);
NumMatrix eval(const PhaseSeries& f, const std::vector<double>& point, double hbar);

std::string to_text(const PhaseSeries& f);
PhaseSeries from_text(const std::string& text);

struct RandomPolySpec {
    int dim = 3;
    int max_degree = 3;
    int n_terms = 4;
    int coeff_range = 3;  // integer parts drawn from [-range, range]
    bool spin = true;     // allow Pauli components
    bool complex_coeffs = false;
};
PhasePoly random_poly(std::mt19937_64& rng, const RandomPolySpec& spec);

}  // namespace twistlab
