#pragma once

// Filtered ranking protocol, MR / MRR / Hits@k, candidate prediction for
// partial triples, ground-truth hit curves, and rank-difference reports.

#include <array>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "kgr/exec.hpp"
#include "kgr/graph.hpp"
#include "kgr/model.hpp"

namespace kgr {

// Known-true triples in a model's index space, sorted two ways so that the
// completions of (h, r, ?) and (?, r, t) are contiguous ranges.
class KnownTriples {
public:
    KnownTriples() = default;
    explicit KnownTriples(std::vector<IndexedTriple> triples);

    // Everything mappable into the model vocabulary; the rest is ignored.
    static KnownTriples from(const ModelState& state, const KnowledgeGraph& graph,
                             std::span<const TripleRecord> extra = {});
    static KnownTriples from(const ModelState& state, std::span<const TripleRecord> records);

    bool contains(const IndexedTriple& t) const;
    // Known tails of (h, r, ?) and heads of (?, r, t), ascending.
    std::vector<EntityIndex> tails(EntityIndex h, RelationIndex r) const;
    std::vector<EntityIndex> heads(RelationIndex r, EntityIndex t) const;
    std::size_t size() const { return by_head_.size(); }

private:
    std::vector<IndexedTriple> by_head_;  // sorted (h, r, t)
    std::vector<IndexedTriple> by_tail_;  // sorted by (t, r, h)
};

enum class Side { kHead, kTail };
enum class TieMode { kOptimistic, kPessimistic, kMean };

std::optional<TieMode> parse_tie_mode(std::string_view text);
std::string_view to_string(TieMode mode);

struct RankResult {
    double optimistic = 1;   // 1 + #{strictly higher}
    double pessimistic = 1;  // 1 + #{higher or equal}
    double mean = 1;         // 1 + #{higher} + #{equal} / 2
    double get(TieMode mode) const;
};

// Rank of the true triple among its filtered corruptions on one side.
RankResult filtered_rank(const ModelState& state, const IndexedTriple& triple,
                         const KnownTriples& known, Side side,
                         ExecPolicy policy = ExecPolicy::kSerial);
// Same, without removing known corruptions.
RankResult raw_rank(const ModelState& state, const IndexedTriple& triple, Side side,
                    ExecPolicy policy = ExecPolicy::kSerial);

struct RankMetrics {
    double mr = 0;
    double mrr = 0;
    std::map<int, double> hits;  // k in {1, 3, 10}; fractions in [0, 1]
    std::size_t n_test = 0;
    std::size_t skipped_unseen = 0;
    TieMode tie_mode = TieMode::kOptimistic;
};

inline constexpr std::array<int, 3> kHitsAt = {1, 3, 10};

// Aggregates per-side ranks: MR and MRR average over both sides (2|T|).
RankMetrics metrics_from_ranks(std::span<const double> head_ranks,
                               std::span<const double> tail_ranks);

// Test triples with unseen entities/relations are skipped and counted.
// `cap` > 0 evaluates only the first `cap` mappable test triples.
// Throws DataError when every test triple is skipped.
RankMetrics evaluate(const ModelState& state, std::span<const TripleRecord> test,
                     const KnownTriples& known, TieMode tie_mode = TieMode::kOptimistic,
                     ExecPolicy policy = ExecPolicy::kSerial, std::size_t cap = 0);

void write_metrics_tsv(std::ostream& out, const RankMetrics& m);
void write_metrics_table(std::ostream& out, const RankMetrics& m);

struct PartialTriple {
    std::optional<std::string> head;
    std::string relation;
    std::optional<std::string> tail;
};

// An entity passes when it has any listed semantic type (if any are listed)
// and any listed semantic group (if any are listed).
struct CandidateConstraint {
    std::set<std::string> semantic_types;
    std::set<std::string> semantic_groups;
    bool empty() const { return semantic_types.empty() && semantic_groups.empty(); }
    bool admits(const Concept& c) const;
};

struct Candidate {
    std::string entity_id;
    std::string name;
    double score = 0;
    std::size_t rank = 0;
    bool known = false;
};

struct CandidateList {
    PartialTriple query;
    std::vector<Candidate> candidates;
    CandidateConstraint constraint;
    bool novel_only = false;
};

// Scores every admissible entity for the open slot and returns the top k,
// ties broken by entity id. `metadata` supplies names and semantic types.
// Throws UsageError for k = 0 or a malformed query, DataError for unknown
// ids or a constraint that admits no entity.
CandidateList predict_candidates(const ModelState& state, const KnowledgeGraph* metadata,
                                 const PartialTriple& query, std::size_t k,
                                 const CandidateConstraint& constraint, const KnownTriples& known,
                                 bool novel_only, ExecPolicy policy = ExecPolicy::kSerial);

void write_candidates(std::ostream& out, const CandidateList& list);
CandidateList read_candidates(const std::string& path);

struct GroundTruthClusters {
    std::vector<std::set<std::string>> clusters;
    std::string source;

    // One cluster per line, members separated by '|'.
    static GroundTruthClusters load(const std::string& path);
    // Cluster index of a concept, if any.
    std::optional<std::size_t> cluster_of(const std::string& id) const;
};

struct HitPoint {
    std::size_t k = 0;
    std::size_t matched_clusters = 0;
    double precision = 0;  // matched_clusters / k
    double recall = 0;     // matched_clusters / |clusters|
};

struct GroundTruthHits {
    std::vector<HitPoint> curve;  // k = 1 .. |candidates|
    std::vector<std::size_t> matched;  // cluster indices in first-hit order
};

// A cluster counts once, at the first candidate matching any of its members.
GroundTruthHits ground_truth_hits(const CandidateList& candidates,
                                  const GroundTruthClusters& truth);

struct RankDiffReport {
    struct Item {
        std::string entity_id;
        std::size_t rank_a = 0;
        std::size_t rank_b = 0;
        std::size_t abs_diff = 0;
    };
    std::vector<Item> items;  // entities present in both lists, list A order
    double median = 0;
    double mean = 0;
    double stdev = 0;  // sample standard deviation
    // (max absolute difference, count within it)
    std::vector<std::pair<std::size_t, std::size_t>> within;
};

inline constexpr std::array<std::size_t, 7> kRankDiffThresholds = {0, 1, 3, 10, 100, 500, 1000};

// Throws DataError when the lists share no entity.
RankDiffReport rank_diff_report(const CandidateList& a, const CandidateList& b);
void write_rank_diff(std::ostream& out, const RankDiffReport& report);

}  // namespace kgr
