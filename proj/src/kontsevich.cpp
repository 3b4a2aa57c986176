#include "twistlab/kontsevich.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <cstdlib>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace twistlab {

// ---- graphs ----

bool KGraph::is_null() const {
    for (int k = 0; k < n; ++k)
        if (edges[2 * k].target == edges[2 * k + 1].target) return true;
    return false;
}

bool KGraph::admissible() const {
    if (n < 1 || static_cast<int>(edges.size()) != 2 * n) return false;
    for (int e = 0; e < 2 * n; ++e) {
        const auto& ed = edges[e];
        if (ed.source != e / 2 + 1) return false;
        if (ed.target == ed.source) return false;
        if (ed.target != kL && ed.target != kR && (ed.target < 1 || ed.target > n)) return false;
    }
    return true;
}

namespace {

std::string target_name(int t) {
    if (t == kL) return "L";
    if (t == kR) return "R";
    return std::to_string(t);
}

std::string edge_string(const std::vector<KEdge>& edges) {
    std::string s;
    for (size_t i = 0; i < edges.size(); ++i) {
        if (i) s += ',';
        s += '(' + std::to_string(edges[i].source) + ',' + target_name(edges[i].target) + ')';
    }
    return s;
}

}  // namespace

std::string KGraph::str() const { return edge_string(edges); }

std::vector<KGraph> enumerate_graphs(int n) {
    if (n < 1) throw std::invalid_argument("graph order must be at least 1");
    if (n > kMaxGraphOrder)
        throw std::invalid_argument("graph order " + std::to_string(n) + " exceeds the cap of " +
                                    std::to_string(kMaxGraphOrder));
    std::vector<KGraph> out;
    // Targets per vertex in the order L, R, 1..n (minus the vertex itself).
    std::vector<std::vector<int>> targets(n);
    for (int k = 1; k <= n; ++k) {
        targets[k - 1] = {kL, kR};
        for (int v = 1; v <= n; ++v)
            if (v != k) targets[k - 1].push_back(v);
    }
    const int per = n + 1;
    long total = 1;
    for (int i = 0; i < 2 * n; ++i) total *= per;
    for (long code = 0; code < total; ++code) {
        KGraph g;
        g.n = n;
        long c = code;
        std::vector<int> digits(2 * n);
        for (int i = 2 * n - 1; i >= 0; --i) {
            digits[i] = static_cast<int>(c % per);
            c /= per;
        }
        for (int e = 0; e < 2 * n; ++e) g.edges.push_back({e / 2 + 1, targets[e / 2][digits[e]]});
        out.push_back(std::move(g));
    }
    return out;
}

namespace {

KGraph relabel(const KGraph& g, const std::vector<int>& perm) {
    // perm[old-1] = new label
    KGraph h;
    h.n = g.n;
    h.edges.resize(g.edges.size());
    for (int k = 1; k <= g.n; ++k) {
        int nk = perm[k - 1];
        for (int s = 0; s < 2; ++s) {
            KEdge e = g.edges[2 * (k - 1) + s];
            e.source = nk;
            if (e.target >= 1) e.target = perm[e.target - 1];
            h.edges[2 * (nk - 1) + s] = e;
        }
    }
    return h;
}

KGraph swap_edges(const KGraph& g, unsigned mask) {
    KGraph h = g;
    for (int k = 0; k < g.n; ++k)
        if (mask & (1u << k)) std::swap(h.edges[2 * k].target, h.edges[2 * k + 1].target);
    return h;
}

}  // namespace

std::string canonical_form(const KGraph& g) {
    std::vector<int> perm(g.n);
    std::iota(perm.begin(), perm.end(), 1);
    std::string best;
    do {
        std::string s = relabel(g, perm).str();
        if (best.empty() || s < best) best = s;
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

KGraph parse_graph(const std::string& text) {
    KGraph g;
    size_t i = 0;
    auto fail = [&] { throw std::invalid_argument("bad graph string: " + text); };
    while (i < text.size()) {
        if (text[i] == ',' || text[i] == ' ') {
            ++i;
            continue;
        }
        if (text[i] != '(') fail();
        size_t close = text.find(')', i);
        if (close == std::string::npos) fail();
        std::string body = text.substr(i + 1, close - i - 1);
        size_t comma = body.find(',');
        if (comma == std::string::npos) fail();
        KEdge e{};
        try {
            e.source = std::stoi(body.substr(0, comma));
        } catch (const std::exception&) {
            fail();
        }
        std::string t = body.substr(comma + 1);
        if (t == "L")
            e.target = kL;
        else if (t == "R")
            e.target = kR;
        else {
            try {
                e.target = std::stoi(t);
            } catch (const std::exception&) {
                fail();
            }
        }
        g.edges.push_back(e);
        i = close + 1;
    }
    g.n = static_cast<int>(g.edges.size()) / 2;
    if (!g.admissible()) fail();
    return g;
}

// ---- Poisson structures ----

Coord PoissonStructure::coord(int i) const {
    if (i < dim) return Coord::x(i);
    if (i < 2 * dim) return Coord::p(i - dim);
    return Coord::s(i - 2 * dim);
}

bool PoissonStructure::is_antisymmetric() const {
    for (int i = 0; i < size(); ++i)
        for (int j = 0; j < size(); ++j)
            if (!(alpha[i][j] + alpha[j][i]).is_zero()) return false;
    return true;
}

bool PoissonStructure::satisfies_jacobi() const {
    const int N = size();
    for (int i = 0; i < N; ++i)
        for (int j = i + 1; j < N; ++j)
            for (int k = j + 1; k < N; ++k) {
                PhasePoly r;
                const int idx[3][3] = {{i, j, k}, {j, k, i}, {k, i, j}};
                for (const auto& c : idx)
                    for (int m = 0; m < N; ++m) {
                        if (alpha[m][c[2]].is_zero()) continue;
                        PhasePoly d = alpha[c[0]][c[1]].derive(coord(m));
                        if (!d.is_zero()) r += sym_mul(d, alpha[m][c[2]]);
                    }
                if (!r.is_zero()) return false;
            }
    return true;
}

PoissonStructure zero_poisson(int dim) {
    PoissonStructure p;
    p.dim = dim;
    p.alpha.assign(p.size(), std::vector<PhasePoly>(p.size()));
    return p;
}

PoissonStructure canonical_poisson(int dim) {
    auto p = zero_poisson(dim);
    p.tag = PoissonStructure::Canonical;
    for (int mu = 0; mu < dim; ++mu) {
        p.alpha[mu][dim + mu] = PhasePoly::constant(SpinMatrix::identity());
        p.alpha[dim + mu][mu] = PhasePoly::constant(SpinMatrix::identity(CRational(-1)));
    }
    return p;
}

PoissonStructure PoissonSplit::total() const {
    PoissonStructure t = alpha0;
    t.tag = PoissonStructure::General;
    for (int i = 0; i < t.size(); ++i)
        for (int j = 0; j < t.size(); ++j) t.alpha[i][j] += alphaA.alpha[i][j] + alphaF.alpha[i][j];
    return t;
}

namespace {

int levi(int a, int b, int c) {
    if (a == b || b == c || a == c) return 0;
    return ((a + 1) % 3 == b) ? 1 : -1;
}

}  // namespace

PoissonSplit gauge_poisson(const GaugeConfig& g) {
    g.validate();
    const int D = g.dim;
    PoissonSplit s;
    s.alpha0 = canonical_poisson(D);
    s.alphaA = zero_poisson(D);
    s.alphaA.tag = PoissonStructure::Gauge;
    s.alphaF = zero_poisson(D);
    s.alphaF.tag = PoissonStructure::Field;

    auto F = field_strength(g);
    for (int mu = 0; mu < D; ++mu)
        for (int nu = 0; nu < D; ++nu) s.alphaF.alpha[D + mu][D + nu] = F(mu, nu) * CRational(g.q);

    for (int mu = 0; mu < D; ++mu)
        for (int c = 0; c < 3; ++c) {
            PhasePoly v;
            for (int a = 0; a < 3; ++a)
                for (int b = 0; b < 3; ++b) {
                    int e = levi(a, b, c);
                    if (!e || g.a_su2[mu][b].is_zero()) continue;
                    v += sym_mul(g.a_su2[mu][b], PhasePoly::constant(SpinMatrix::pauli(a))) *
                         CRational(-g.q * e);
                }
            s.alphaA.alpha[D + mu][2 * D + c] = v;
            s.alphaA.alpha[2 * D + c][D + mu] = v * CRational(-1);
        }
    for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b)
            for (int c = 0; c < 3; ++c)
                if (int e = levi(a, b, c))
                    s.alphaA.alpha[2 * D + a][2 * D + b] =
                        PhasePoly::constant(SpinMatrix::pauli(c, CRational(Rational(2 * e) / g.hbar)));
    return s;
}

// ---- bidifferential operators ----

namespace {

struct PairList {
    std::vector<std::pair<int, int>> ij;
};

PairList nonzero_pairs(const PoissonStructure& a) {
    PairList l;
    for (int i = 0; i < a.size(); ++i)
        for (int j = 0; j < a.size(); ++j)
            if (!a.alpha[i][j].is_zero()) l.ij.emplace_back(i, j);
    return l;
}

bool fits_dim(const PhasePoly& f, int dim) {
    for (const auto& [mi, m] : f.terms())
        for (int mu = dim; mu < kMaxDim; ++mu)
            if (mi.x(mu) || mi.p(mu)) return false;
    return true;
}

PhasePoly derive_word(PhasePoly f, const std::vector<int>& word, const PoissonStructure& a) {
    for (int i : word) {
        if (f.is_zero()) break;
        f = f.derive(a.coord(i));
    }
    return f;
}

}  // namespace

PhasePoly apply_graph(const KGraph& graph, const std::vector<const PoissonStructure*>& per_vertex,
                      const PhasePoly& f, const PhasePoly& g) {
    if (!graph.admissible()) throw std::invalid_argument("graph is not admissible: " + graph.str());
    if (static_cast<int>(per_vertex.size()) != graph.n)
        throw std::invalid_argument("one Poisson structure per aerial vertex required");
    const PoissonStructure& ref = *per_vertex[0];
    for (auto* p : per_vertex)
        if (p->dim != ref.dim || static_cast<int>(p->alpha.size()) != p->size())
            throw std::invalid_argument("Poisson structure dimension mismatch");
    if (!fits_dim(f, ref.dim) || !fits_dim(g, ref.dim))
        throw std::invalid_argument("argument uses coordinates beyond the structure's dimension");

    const int n = graph.n;
    std::vector<PairList> pairs;
    for (auto* p : per_vertex) pairs.push_back(nonzero_pairs(*p));

    PhasePoly out;
    std::vector<int> choice(n, 0);
    std::vector<int> index(2 * n);
    for (;;) {
        bool empty = false;
        for (int k = 0; k < n; ++k) {
            if (pairs[k].ij.empty()) {
                empty = true;
                break;
            }
            index[2 * k] = pairs[k].ij[choice[k]].first;
            index[2 * k + 1] = pairs[k].ij[choice[k]].second;
        }
        if (empty) break;

        std::vector<int> wl, wr;
        std::vector<std::vector<int>> wv(n);
        for (int e = 0; e < 2 * n; ++e) {
            int t = graph.edges[e].target;
            if (t == kL)
                wl.push_back(index[e]);
            else if (t == kR)
                wr.push_back(index[e]);
            else
                wv[t - 1].push_back(index[e]);
        }
        PhasePoly term;
        bool zero = false;
        PhasePoly df = derive_word(f, wl, ref);
        PhasePoly dg = df.is_zero() ? PhasePoly{} : derive_word(g, wr, ref);
        if (df.is_zero() || dg.is_zero()) zero = true;
        for (int k = 0; k < n && !zero; ++k) {
            PhasePoly a = derive_word(per_vertex[k]->alpha[index[2 * k]][index[2 * k + 1]], wv[k], ref);
            if (a.is_zero()) {
                zero = true;
                break;
            }
            term = k == 0 ? a : sym_mul(term, a);
        }
        if (!zero) out += sym_mul(sym_mul(term, df), dg);

        int k = n - 1;
        while (k >= 0 && ++choice[k] == static_cast<int>(pairs[k].ij.size())) choice[k--] = 0;
        if (k < 0) break;
    }
    return out;
}

PhasePoly apply_graph(const KGraph& graph, const PoissonStructure& alpha, const PhasePoly& f, const PhasePoly& g) {
    std::vector<const PoissonStructure*> pv(graph.n, &alpha);
    return apply_graph(graph, pv, f, g);
}

// ---- weights ----

int default_workers() {
    unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("TWISTLAB_THREADS")) {
        int v = std::atoi(env);
        if (v > 0) return static_cast<int>(std::min<unsigned>(hw, static_cast<unsigned>(v)));
    }
    return static_cast<int>(hw);
}

namespace {

using cd = std::complex<double>;
constexpr double kPi = 3.14159265358979323846;
constexpr double kRMin = 1e-10;
constexpr double kRMax = 1.0;
// Orientation of each upper-half-plane factor; fixed so that (1,L),(1,R) gets +1/2.
constexpr double kOrientation = -1.0;

double uniform(std::mt19937_64& rng) { return (rng() >> 11) * 0x1.0p-53; }

// Gradient of phi(p, q) = (1/2i)[Log(q-p) + Log(qb-p) - Log(q-pb) - Log(qb-pb)]
// as d/dx, d/dy for the source point p and the target point q.
struct Grad {
    double px, py, qx, qy;
};

Grad angle_gradient(cd p, cd q) {
    const cd half_i_inv(0.0, -0.5);  // 1/(2i)
    cd dp = half_i_inv * (-1.0 / (q - p) - 1.0 / (std::conj(q) - p));
    cd dq = half_i_inv * (1.0 / (q - p) - 1.0 / (q - std::conj(p)));
    return {2 * dp.real(), -2 * dp.imag(), 2 * dq.real(), -2 * dq.imag()};
}

struct Proposal {
    // Component weights: disk, near R (0), near L (1), near earlier points.
    static constexpr double kFirst[3] = {0.5, 0.25, 0.25};
    static constexpr double kLater[4] = {0.4, 0.2, 0.2, 0.2};
    const double log_ratio = std::log(kRMax / kRMin);

    double disk_density(cd p) const { return 4.0 / (kPi * std::pow(std::abs(p + cd(0, 1)), 4)); }
    double half_density(cd p, double c) const {
        double r = std::abs(p - c);
        if (r < kRMin || r > kRMax) return 0.0;
        return 1.0 / (kPi * r * r * log_ratio);
    }
    double full_density(cd p, cd c) const {
        double r = std::abs(p - c);
        if (r < kRMin || r > kRMax) return 0.0;
        return 1.0 / (2 * kPi * r * r * log_ratio);
    }
    double radius(std::mt19937_64& rng) const { return kRMin * std::exp(uniform(rng) * log_ratio); }

    // Draws point k given points[0..k), returns its conditional density.
    double draw(std::mt19937_64& rng, std::vector<cd>& pts, int k) const {
        const double* w = k == 0 ? kFirst : kLater;
        double u = uniform(rng);
        cd p;
        if (u < w[0]) {
            double rr = std::sqrt(uniform(rng)), th = 2 * kPi * uniform(rng);
            cd z = std::polar(rr, th);
            p = cd(0, 1) * (1.0 + z) / (1.0 - z);
        } else if (u < w[0] + w[1]) {
            p = std::polar(radius(rng), kPi * uniform(rng));
        } else if (u < w[0] + w[1] + w[2]) {
            p = 1.0 + std::polar(radius(rng), kPi * uniform(rng));
        } else {
            int j = std::min(k - 1, static_cast<int>(uniform(rng) * k));
            p = pts[j] + std::polar(radius(rng), 2 * kPi * uniform(rng));
        }
        pts[k] = p;
        double rho = w[0] * disk_density(p) + w[1] * half_density(p, 0.0) + w[2] * half_density(p, 1.0);
        if (k > 0)
            for (int j = 0; j < k; ++j) rho += w[3] / k * full_density(p, pts[j]);
        return rho;
    }
};

double integrand(const KGraph& g, const std::vector<cd>& pts) {
    const int n = g.n;
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, 2 * kMaxGraphOrder, 2 * kMaxGraphOrder> J(2 * n, 2 * n);
    J.setZero();
    for (int e = 0; e < 2 * n; ++e) {
        const auto& ed = g.edges[e];
        cd p = pts[ed.source - 1];
        cd q = ed.target == kL ? cd(1, 0) : ed.target == kR ? cd(0, 0) : pts[ed.target - 1];
        Grad gr = angle_gradient(p, q);
        int s = ed.source - 1;
        J(e, 2 * s) += gr.px;
        J(e, 2 * s + 1) += gr.py;
        if (ed.target >= 1) {
            int t = ed.target - 1;
            J(e, 2 * t) += gr.qx;
            J(e, 2 * t + 1) += gr.qy;
        }
    }
    return J.determinant();
}

struct ChunkSum {
    double sum = 0, sumsq = 0;
    std::uint64_t count = 0;
};

ChunkSum run_chunk(const KGraph& g, std::uint64_t seed, int chunk, std::uint64_t count) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(chunk), 0x6b6f6e74u};
    std::mt19937_64 rng(seq);
    Proposal prop;
    std::vector<cd> pts(g.n);
    double orient = std::pow(kOrientation, g.n);
    ChunkSum cs;
    cs.count = count;
    for (std::uint64_t s = 0; s < count; ++s) {
        double rho = 1.0;
        bool inside = true;
        for (int k = 0; k < g.n; ++k) {
            rho *= prop.draw(rng, pts, k);
            if (pts[k].imag() <= 0) inside = false;
        }
        double v = 0.0;
        if (inside) {
            bool distinct = true;
            for (int a = 0; a < g.n && distinct; ++a)
                for (int b = a + 1; b < g.n; ++b)
                    if (pts[a] == pts[b]) distinct = false;
            if (distinct) v = orient * integrand(g, pts) / rho;
        }
        cs.sum += v;
        cs.sumsq += v * v;
    }
    return cs;
}

double factorial(int n) { return n <= 1 ? 1.0 : n * factorial(n - 1); }

}  // namespace

GraphWeight weight(const KGraph& graph, const MCConfig& cfg) {
    if (!graph.admissible()) throw std::invalid_argument("graph is not admissible: " + graph.str());
    if (graph.n > kMaxGraphOrder) throw std::invalid_argument("graph order exceeds the cap");
    GraphWeight w;
    if (graph.is_null()) {
        w.method = GraphWeight::Null;
        return w;
    }
    const int chunks = std::max(1, cfg.chunks);
    const std::uint64_t N = std::max<std::uint64_t>(cfg.samples, 2);
    std::vector<ChunkSum> parts(chunks);
    int workers = cfg.workers > 0 ? cfg.workers : default_workers();
    workers = std::max(1, std::min(workers, chunks));
    std::vector<std::thread> pool;
    for (int t = 0; t < workers; ++t)
        pool.emplace_back([&, t] {
            for (int c = t; c < chunks; c += workers) {
                std::uint64_t cnt = N / chunks + (static_cast<std::uint64_t>(c) < N % chunks ? 1 : 0);
                parts[c] = run_chunk(graph, cfg.seed, c, cnt);
            }
        });
    for (auto& th : pool) th.join();

    double sum = 0, sumsq = 0;
    for (const auto& p : parts) {
        sum += p.sum;
        sumsq += p.sumsq;
    }
    const double norm = 1.0 / (factorial(graph.n) * std::pow(2 * kPi, 2 * graph.n));
    double mean = sum / N;
    double var = std::max(0.0, sumsq / N - mean * mean);
    w.value = mean * norm;
    w.stderr_ = std::sqrt(var / (N - 1)) * norm;
    w.samples = N;
    w.method = GraphWeight::MC;
    w.flagged = !(w.stderr_ <= cfg.max_stderr) || !std::isfinite(w.value);
    return w;
}

std::optional<Rational> exact_weight(const KGraph& graph) {
    if (graph.is_null()) return Rational(0);
    Rational w(1);
    for (int k = 0; k < graph.n; ++k) {
        int a = graph.edges[2 * k].target, b = graph.edges[2 * k + 1].target;
        if (a == kL && b == kR)
            w *= Rational(1, 2);
        else if (a == kR && b == kL)
            w *= Rational(-1, 2);
        else
            return std::nullopt;
    }
    Rational f(1);
    for (int k = 2; k <= graph.n; ++k) f *= k;
    return Rational(w / f);
}

namespace {

// Labeled graphs producing the same operator as g, each with the sign of its
// operator relative to g's.
std::vector<std::pair<KGraph, int>> orbit_of(const KGraph& g) {
    std::vector<std::pair<KGraph, int>> out;
    std::set<std::string> seen;
    std::vector<int> perm(g.n);
    std::iota(perm.begin(), perm.end(), 1);
    do {
        KGraph r = relabel(g, perm);
        for (unsigned mask = 0; mask < (1u << g.n); ++mask) {
            KGraph v = swap_edges(r, mask);
            if (seen.insert(v.str()).second) out.emplace_back(v, (std::popcount(mask) % 2) ? -1 : 1);
        }
    } while (std::next_permutation(perm.begin(), perm.end()));
    return out;
}

}  // namespace

double diagram_weight(const KGraph& graph, const MCConfig& cfg, double* stderr_out) {
    // Every orbit member has the same weight times its operator sign (relabeling
    // permutes the integration points, an edge swap flips the form), so the
    // orbit sum is |orbit| * w(graph).
    auto orb = orbit_of(graph);
    auto w = weight(graph, cfg);
    if (stderr_out) *stderr_out = orb.size() * w.stderr_;
    return orb.size() * w.value;
}

std::vector<std::pair<KGraph, int>> graph_orbit(const KGraph& g) { return orbit_of(g); }

WeightTable WeightTable::exact_only() { return WeightTable{}; }

void WeightTable::set_orbit(const KGraph& rep, const Rational& w, double se) {
    if (!stderr_.count(rep.str())) reps_.push_back(rep);
    stderr_[rep.str()] = se;
    for (const auto& [v, sign] : orbit_of(rep)) table_[v.str()] = sign > 0 ? w : Rational(-w);
}

double WeightTable::stderr_of(const KGraph& rep) const {
    auto it = stderr_.find(rep.str());
    return it == stderr_.end() ? 0.0 : it->second;
}

WeightTable WeightTable::monte_carlo(int max_n, const MCConfig& cfg) {
    WeightTable t;
    for (int n = 1; n <= max_n; ++n)
        for (const auto& g : enumerate_graphs(n)) {
            if (g.is_null() || exact_weight(g) || t.table_.count(g.str())) continue;
            auto w = weight(g, cfg);
            t.flagged_ = t.flagged_ || w.flagged;
            t.set_orbit(g, rationalize(w.value, 1000000), w.stderr_);
        }
    return t;
}

std::optional<CRational> WeightTable::get(const KGraph& g) const {
    if (auto e = exact_weight(g)) return CRational(*e);
    auto it = table_.find(g.str());
    if (it == table_.end()) return std::nullopt;
    return CRational(it->second);
}

KStarResult kontsevich_star(const PoissonStructure& alpha, const PhaseSeries& f, const PhaseSeries& g, int order,
                            const WeightTable& weights) {
    if (order < 0) throw std::invalid_argument("negative order");
    if (order > kMaxGraphOrder) throw std::invalid_argument("kontsevich_star order exceeds the graph cap");
    if (f.dim() != alpha.dim || g.dim() != alpha.dim) throw std::invalid_argument("dimension mismatch");
    const int N = std::min({order, f.order(), g.order()});
    KStarResult res;
    res.value = PhaseSeries(alpha.dim, N);
    res.flagged = weights.flagged();
    std::vector<std::vector<KGraph>> graphs(N + 1);
    for (int n = 1; n <= N; ++n)
        for (auto& gr : enumerate_graphs(n))
            if (!gr.is_null()) graphs[n].push_back(std::move(gr));

    for (int i = 0; i <= N; ++i)
        for (int j = 0; i + j <= N; ++j) {
            const PhasePoly& a = f.coeff(i);
            const PhasePoly& b = g.coeff(j);
            if (a.is_zero() || b.is_zero()) continue;
            res.value.coeff(i + j) += sym_mul(a, b);
            for (int n = 1; i + j + n <= N; ++n)
                for (const auto& gr : graphs[n]) {
                    PhasePoly B = apply_graph(gr, alpha, a, b);
                    if (B.is_zero()) continue;
                    auto w = weights.get(gr);
                    if (!w) {
                        res.missing_weight = true;
                        continue;
                    }
                    res.value.coeff(i + j + n) += B * *w;
                }
        }
    return res;
}

// ---- factorization rules ----

bool rule_a1(const KGraph& g, const std::vector<Block>& blocks) {
    for (int k = 0; k < g.n; ++k) {
        if (blocks[k] != Block::F) continue;
        int a = g.edges[2 * k].target, b = g.edges[2 * k + 1].target;
        if (!((a == kL && b == kR) || (a == kR && b == kL))) return false;
    }
    return true;
}

bool rule_a2(const KGraph& g, const std::vector<Block>& blocks) {
    for (int k = 0; k < g.n; ++k) {
        if (blocks[k] == Block::A) continue;
        int a = g.edges[2 * k].target, b = g.edges[2 * k + 1].target;
        if (a >= 1 && b >= 1) return false;
    }
    return true;
}

bool rule_a3(const KGraph& g, const std::vector<Block>& blocks) {
    std::vector<int> in(g.n, 0);
    for (const auto& e : g.edges)
        if (e.target >= 1) ++in[e.target - 1];
    for (int k = 0; k < g.n; ++k)
        if (blocks[k] == Block::A && in[k] > 1) return false;
    return true;
}

FactorizationReport factorization_check(const PoissonSplit& split, const std::vector<PhasePoly>& probes, int max_n,
                                        const MCConfig& cfg) {
    FactorizationReport rep;
    const PoissonStructure* by_block[3] = {&split.alpha0, &split.alphaA, &split.alphaF};
    std::map<std::string, GraphWeight> cache;
    for (int n = 1; n <= max_n; ++n) {
        const auto graphs = enumerate_graphs(n);
        int assignments = 1;
        for (int k = 0; k < n; ++k) assignments *= 3;
        for (const auto& g : graphs) {
            if (g.is_null()) continue;
            for (int code = 0; code < assignments; ++code) {
                FactorizationRow row;
                row.graph = g;
                std::vector<const PoissonStructure*> pv;
                for (int k = 0, c = code; k < n; ++k, c /= 3) {
                    row.blocks.push_back(static_cast<Block>(c % 3));
                    pv.push_back(by_block[c % 3]);
                }
                row.rules_ok = rule_a1(g, row.blocks) && rule_a2(g, row.blocks) && rule_a3(g, row.blocks);
                row.b_zero = true;
                for (size_t i = 0; i < probes.size() && row.b_zero; ++i)
                    for (size_t j = 0; j < probes.size() && row.b_zero; ++j)
                        if (!apply_graph(g, pv, probes[i], probes[j]).is_zero()) row.b_zero = false;
                if (!row.b_zero) {
                    if (row.rules_ok)
                        ++rep.kept_and_nonzero;
                    else
                        ++rep.pruned_but_nonzero;
                    if (cfg.samples > 0) {
                        auto it = cache.find(g.str());
                        if (it == cache.end()) it = cache.emplace(g.str(), weight(g, cfg)).first;
                        row.weight_checked = true;
                        row.weight = it->second.value;
                        row.stderr_ = it->second.stderr_;
                        row.factorized = std::pow(0.5, n) / factorial(n);
                        // Signs depend on edge order; compare magnitudes.
                        if (std::abs(std::abs(row.weight) - row.factorized) > 3 * row.stderr_) ++rep.weight_mismatches;
                    }
                }
                rep.rows.push_back(std::move(row));
            }
        }
    }
    return rep;
}

}  // namespace twistlab
