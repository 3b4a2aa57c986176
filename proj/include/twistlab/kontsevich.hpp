#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "twistlab/gauge.hpp"
#include "twistlab/phase_space.hpp"

namespace twistlab {

constexpr int kMaxGraphOrder = 3;

// Edge targets: aerial vertices 1..n, ground vertices L and R.
constexpr int kL = -1;
constexpr int kR = -2;

struct KEdge {
    int source;  // 1..n
    int target;  // 1..n, kL or kR
    bool operator==(const KEdge&) const = default;
};

// Edges 2k-2 and 2k-1 leave vertex k, in that order.
struct KGraph {
    int n = 0;
    std::vector<KEdge> edges;

    bool is_null() const;  // some vertex sends both edges to the same target
    bool admissible() const;
    std::string str() const;  // "(1,L),(1,R)"
    bool operator==(const KGraph&) const = default;
};

std::vector<KGraph> enumerate_graphs(int n);
// Minimum edge string over relabelings of the aerial vertices.
std::string canonical_form(const KGraph& g);
KGraph parse_graph(const std::string& s);

// Coordinates z = (X^0..X^{D-1}, p_0..p_{D-1}, sigma^x, sigma^y, sigma^z).
// Spin coordinates are Pauli components, matching derive(f, s^a).
struct PoissonStructure {
    enum Tag { Canonical, Gauge, Field, General };
    int dim = 3;
    Tag tag = General;
    std::vector<std::vector<PhasePoly>> alpha;  // (2D+3)^2

    int size() const { return 2 * dim + 3; }
    Coord coord(int i) const;
    bool is_antisymmetric() const;
    // Largest Jacobi residual term count; zero means the identity holds exactly.
    bool satisfies_jacobi() const;
};

PoissonStructure zero_poisson(int dim);
PoissonStructure canonical_poisson(int dim);  // alpha_0 block only
// alpha = alpha_0 + alpha_A + alpha_F for a gauge, in sigma coordinates:
// alpha_0 is the X-p block, alpha_A holds p-sigma (-q eps sigma^a A^b) and
// sigma-sigma ((2/hbar) eps sigma^c), alpha_F = q F in the p-p block.
struct PoissonSplit {
    PoissonStructure alpha0, alphaA, alphaF;
    PoissonStructure total() const;
};
PoissonSplit gauge_poisson(const GaugeConfig& g);

// B_{Gamma,alpha}(f, g), products symmetrized left to right.
PhasePoly apply_graph(const KGraph& graph, const PoissonStructure& alpha, const PhasePoly& f, const PhasePoly& g);
// Same, with vertex k carrying its own structure per_vertex[k-1].
PhasePoly apply_graph(const KGraph& graph, const std::vector<const PoissonStructure*>& per_vertex,
                      const PhasePoly& f, const PhasePoly& g);

struct MCConfig {
    std::uint64_t samples = 1000000;
    std::uint64_t seed = 7;
    int workers = 0;    // 0: TWISTLAB_THREADS or hardware concurrency
    int chunks = 64;    // fixed partition of the sample index space
    double max_stderr = 0.01;
};

struct GraphWeight {
    enum Method { MC, Exact, Null };
    double value = 0.0;
    double stderr_ = 0.0;
    std::uint64_t samples = 0;
    Method method = MC;
    bool flagged = false;  // stderr above threshold
};

GraphWeight weight(const KGraph& graph, const MCConfig& cfg);
// Weights of graphs whose vertices all point at {L, R}: prod(+-1/2)/n!.
std::optional<Rational> exact_weight(const KGraph& graph);
// Sum over the ordered variants of a graph (edge swaps at each vertex) of
// weight times the sign relating each variant's operator to the given one.
double diagram_weight(const KGraph& graph, const MCConfig& cfg, double* stderr_out = nullptr);

// Labeled graphs with the same operator as g up to sign: vertex relabelings
// and edge swaps, each paired with the sign of its operator relative to g's.
std::vector<std::pair<KGraph, int>> graph_orbit(const KGraph& g);

class WeightTable {
public:
    // Exact weights for factorizable graphs; everything else must be supplied.
    static WeightTable exact_only();
    // One MC run per orbit, rationalized (denominator <= 10^6) and spread with signs.
    static WeightTable monte_carlo(int max_n, const MCConfig& cfg);
    std::optional<CRational> get(const KGraph& g) const;
    bool flagged() const { return flagged_; }
    // Sets w on rep and sign-adjusted copies on the rest of its orbit.
    void set_orbit(const KGraph& rep, const Rational& w, double stderr_ = 0.0);
    const std::vector<KGraph>& representatives() const { return reps_; }
    double stderr_of(const KGraph& rep) const;

private:
    std::map<std::string, Rational> table_;
    std::map<std::string, double> stderr_;
    std::vector<KGraph> reps_;
    bool flagged_ = false;
};

struct KStarResult {
    PhaseSeries value;
    bool missing_weight = false;  // a graph with nonzero B had no weight
    bool flagged = false;
};

// f g + sum_n nu^n sum_Gamma w_Gamma B_Gamma(f, g)
KStarResult kontsevich_star(const PoissonStructure& alpha, const PhaseSeries& f, const PhaseSeries& g, int order,
                            const WeightTable& weights);

enum class Block { Zero, A, F };

// Structural rules for a graph whose vertices carry the given blocks.
bool rule_a1(const KGraph& g, const std::vector<Block>& blocks);
bool rule_a2(const KGraph& g, const std::vector<Block>& blocks);
bool rule_a3(const KGraph& g, const std::vector<Block>& blocks);

struct FactorizationRow {
    KGraph graph;
    std::vector<Block> blocks;
    bool rules_ok = false;
    bool b_zero = false;       // B vanished on every probe pair
    bool weight_checked = false;
    double weight = 0.0;       // MC estimate of w_Gamma
    double stderr_ = 0.0;
    double factorized = 0.0;   // +-(1/2)^n / n! as the factorization predicts
};

struct FactorizationReport {
    std::vector<FactorizationRow> rows;
    int pruned_but_nonzero = 0;     // rules say zero, B is not
    int kept_and_nonzero = 0;
    int weight_mismatches = 0;      // |w - factorized| > 3 stderr, among nonzero rows
};

// Checks rules A1-A3 against symbolic B on probe pairs for all n <= max_n
// graphs and block assignments; MC weights are compared for surviving graphs
// when cfg.samples > 0.
FactorizationReport factorization_check(const PoissonSplit& split, const std::vector<PhasePoly>& probes, int max_n,
                                        const MCConfig& cfg);

int default_workers();

}  // namespace twistlab
