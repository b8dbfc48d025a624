#pragma once

// Graph preprocessing: structural filters, log-likelihood (G^2) association
// scores, degree centrality, min-max normalized combined scores, budgeted
// pruning with a keep-list, and date-based train/test slicing.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "kgr/date.hpp"
#include "kgr/exec.hpp"
#include "kgr/graph.hpp"

namespace kgr {

struct FilterConfig {
    std::set<std::string> predicate_whitelist;
    std::set<std::string> excluded_semantic_groups;
    std::set<std::string> generic_concepts;
    bool drop_self_loops = true;
    std::set<std::string> keep_concepts;
    std::optional<double> confidence_threshold;

    // Defaults: the fifteen repurposing predicates, the six excluded semantic
    // groups, and the seven COVID-19 concepts as keep-list.
    static FilterConfig defaults();
    // key = value file; list values are comma separated. Keys: predicates,
    // excluded_groups, generic_concepts_file, keep_concepts_file,
    // keep_concepts, drop_self_loops, confidence_threshold.
    static FilterConfig load(const std::string& path);

    // Throws UsageError on an out-of-range threshold.
    void validate() const;
    bool is_keep(const std::string& concept_id) const { return keep_concepts.count(concept_id) > 0; }
    // Keep wins over generic.
    bool is_generic(const std::string& concept_id) const {
        return generic_concepts.count(concept_id) > 0 && !is_keep(concept_id);
    }
};

// One concept id per line; blank lines and '#' comments ignored.
std::set<std::string> load_id_list(const std::string& path);

// Triples touching a keep concept bypass every rule.
KnowledgeGraph apply_structural_filters(const KnowledgeGraph& graph, const FilterConfig& config);

bool touches_keep(const KnowledgeGraph& graph, const Triple& t, const FilterConfig& config);

enum class ExpectationModel {
    // m_ijk = n_i.. * n_.j. * n_..k / T^2 (mutual independence of the three terms)
    kIndependence,
    // m_ijk = n_.jk * n_i.k * n_ij. / T^2 (pairwise-marginal form)
    kPairwiseMarginals,
};

// Sparse observed table n_ijk over (head, predicate, tail) with its one- and
// two-dimensional marginals. Cell weights are triple support counts.
class ContingencyStats {
public:
    static ContingencyStats from_graph(const KnowledgeGraph& graph);
    // Cells given explicitly; duplicates accumulate.
    static ContingencyStats from_cells(
        const std::vector<std::pair<std::array<std::uint32_t, 3>, double>>& cells);

    double total() const { return total_; }
    double observed(std::uint32_t i, std::uint32_t j, std::uint32_t k) const;
    double head_marginal(std::uint32_t i) const { return lookup(n_i_, i); }
    double predicate_marginal(std::uint32_t j) const { return lookup(n_j_, j); }
    double tail_marginal(std::uint32_t k) const { return lookup(n_k_, k); }
    double head_predicate(std::uint32_t i, std::uint32_t j) const { return lookup(n_ij_, key(i, j)); }
    double head_tail(std::uint32_t i, std::uint32_t k) const { return lookup(n_ik_, key(i, k)); }
    double predicate_tail(std::uint32_t j, std::uint32_t k) const { return lookup(n_jk_, key(j, k)); }

    double expected(std::uint32_t i, std::uint32_t j, std::uint32_t k, ExpectationModel model) const;

    struct Cell {
        std::uint32_t i, j, k;
        double n;
    };
    const std::vector<Cell>& cells() const { return cells_; }

private:
    static std::uint64_t key(std::uint32_t a, std::uint32_t b) {
        return (static_cast<std::uint64_t>(a) << 32) | b;
    }
    template <class Map, class Key>
    static double lookup(const Map& m, const Key& k) {
        auto it = m.find(k);
        return it == m.end() ? 0.0 : it->second;
    }
    void add(std::uint32_t i, std::uint32_t j, std::uint32_t k, double n);

    std::vector<Cell> cells_;
    std::map<std::array<std::uint32_t, 3>, std::size_t> cell_index_;
    std::unordered_map<std::uint32_t, double> n_i_, n_j_, n_k_;
    std::unordered_map<std::uint64_t, double> n_ij_, n_ik_, n_jk_;
    double total_ = 0.0;
};

// G^2 = 2 * sum over non-empty cells of n * log(n / m) for the whole table.
// Throws NumericError when T = 0.
double g2_table(const ContingencyStats& stats,
                ExpectationModel model = ExpectationModel::kIndependence);

// Per-triple G^2: the table collapsed to 2x2x2 around (i, j, k), i.e.
// {head = i, head != i} x {pred = j, pred != j} x {tail = k, tail != k}.
// Throws NumericError when T = 0 or a marginal of the queried cell is zero.
double g2_score(const ContingencyStats& stats, std::uint32_t i, std::uint32_t j, std::uint32_t k,
                ExpectationModel model = ExpectationModel::kIndependence);

// The eight collapsed cell counts, index bit 2 = head match, bit 1 = predicate
// match, bit 0 = tail match.
std::array<double, 8> collapse_2x2x2(const ContingencyStats& stats, std::uint32_t i,
                                     std::uint32_t j, std::uint32_t k);

struct InformativenessScore {
    double g2 = 0.0;
    double k_in = 0.0;   // tail in-degree
    double k_out = 0.0;  // head out-degree
    double k_in_norm = 0.0;
    double k_out_norm = 0.0;
    double g2_norm = 0.0;
    double combined = 0.0;
};

struct InformativenessResult {
    std::vector<InformativenessScore> scores;  // parallel to graph.triples()
    std::vector<std::string> warnings;
};

// Lower combined score = more specific relation. Throws DataError on an
// empty graph.
InformativenessResult informativeness(const KnowledgeGraph& graph,
                                      ExecPolicy policy = ExecPolicy::kSerial,
                                      ExpectationModel model = ExpectationModel::kIndependence);

// Score dump: head, predicate, tail, g2, k_in_norm, k_out_norm, g2_norm, combined.
void write_scores(std::ostream& out, const KnowledgeGraph& graph,
                  const std::vector<InformativenessScore>& scores);
std::vector<double> read_combined_scores(const std::string& path, const KnowledgeGraph& graph);

// Keeps every keep-touching triple plus the lowest-scoring remainder up to
// `budget` triples. Ties break by (score, head id, predicate id, tail id).
// Throws UsageError when the budget is smaller than the keep set.
KnowledgeGraph prune_by_score(const KnowledgeGraph& graph, const std::vector<double>& scores,
                              std::size_t budget, const std::set<std::string>& keep);

enum class UndatedPolicy { kExclude, kTrain };

struct TrainTestSplit {
    Date cutoff;
    KnowledgeGraph train;
    std::vector<TripleRecord> test;
    std::size_t excluded_undated = 0;
};

// Triples dated on or before the cutoff train; later ones test. Merged
// provenance keeps the earliest date, so a triple asserted on both sides
// trains. Throws DataError when either side is empty.
TrainTestSplit time_slice(const KnowledgeGraph& graph, const Date& cutoff,
                          UndatedPolicy undated = UndatedPolicy::kExclude);

}  // namespace kgr
