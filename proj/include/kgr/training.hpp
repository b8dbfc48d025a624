#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "kgr/error.hpp"
#include "kgr/graph.hpp"
#include "kgr/model.hpp"
#include "kgr/rank.hpp"

namespace kgr {

struct CorruptionSet {
    IndexedTriple positive;
    std::vector<IndexedTriple> negatives;
    std::size_t head_corruptions = 0;  // the rest replaced the tail
};

struct SamplingStats {
    std::size_t accepted_after_cap = 0;  // negatives accepted unfiltered after 100 attempts
};

// For each positive: n corruptions, side chosen uniformly, entity uniform;
// known-true triples (and the positive itself) are rejected and resampled,
// up to 100 attempts per negative.
std::vector<CorruptionSet> sample_negatives(const KnownTriples& known, std::size_t entity_count,
                                            std::span<const IndexedTriple> batch, std::size_t n,
                                            std::mt19937_64& rng, SamplingStats* stats = nullptr);

// Row-sparse gradient; rows appear in first-touched order.
class SparseGrad {
public:
    SparseGrad(std::size_t entity_width, std::size_t relation_width)
        : entity_width_(entity_width), relation_width_(relation_width) {}

    double* entity(EntityIndex e);
    double* relation(RelationIndex r);
    const std::vector<EntityIndex>& entity_rows() const { return entity_rows_; }
    const std::vector<RelationIndex>& relation_rows() const { return relation_rows_; }
    std::span<const double> entity_grad(std::size_t slot) const;
    std::span<const double> relation_grad(std::size_t slot) const;
    bool all_zero() const;

private:
    std::size_t entity_width_, relation_width_;
    std::vector<EntityIndex> entity_rows_;
    std::vector<RelationIndex> relation_rows_;
    std::vector<double> entity_values_, relation_values_;
    std::unordered_map<EntityIndex, std::size_t> entity_slot_;
    std::unordered_map<RelationIndex, std::size_t> relation_slot_;
};

struct LossResult {
    double loss = 0;
    SparseGrad grad;
};

// Softmax of scores / temperature.
std::vector<double> adversarial_weights(std::span<const double> negative_scores,
                                        double temperature);

// margin:     mean over (pos, neg) pairs of max(0, margin - s(pos) + s(neg))
// logsigmoid: mean over positives of
//             -log sig(margin + s(pos)) - sum_i w_i log sig(-s(neg_i) - margin)
//             with w = softmax(s(neg) / temperature) held constant when
//             adversarial sampling is on, else w_i = 1/n.
// Both add regularization * ||row||^2 for every distinct touched row
// (RotatE phases excluded). Throws NumericError naming the triple on a
// non-finite loss.
LossResult loss_and_grad(const ModelState& state, std::span<const CorruptionSet> batch,
                         LossMode mode);

// Loss only, with optional externally fixed adversarial weights (one vector
// per corruption set). Used by gradient checks.
double loss_value(const ModelState& state, std::span<const CorruptionSet> batch, LossMode mode,
                  const std::vector<std::vector<double>>* fixed_weights = nullptr);

struct TrainingLogEntry {
    std::uint64_t epoch = 0;
    double loss = 0;
    std::optional<double> valid_mrr;
};

struct TrainResult {
    ModelState state;
    std::vector<TrainingLogEntry> log;
    std::uint64_t best_epoch = 0;
    std::optional<double> best_valid_mrr;
};

class TrainingDiverged : public NumericError {
public:
    TrainingDiverged(const std::string& what, ModelState last_good)
        : NumericError(what), last_good_(std::move(last_good)) {}
    const ModelState& last_good() const { return last_good_; }

private:
    ModelState last_good_;
};

// Minibatch SGD over shuffled epochs. With a validation set, filtered MRR is
// computed every eval_every epochs and the best state returned; otherwise the
// final state. max_epochs = 0 returns the initialized state.
TrainResult train(const KnowledgeGraph& graph, std::span<const TripleRecord> valid,
                  const ModelConfig& config);
// Continues from an existing state (same vocabulary as the graph) for
// state.config.max_epochs further epochs.
TrainResult train_from(ModelState state, const KnowledgeGraph& graph,
                       std::span<const TripleRecord> valid);

void write_training_log(std::ostream& out, const std::vector<TrainingLogEntry>& log);

// Seeded carve of `fraction` of the triples into a validation list.
std::pair<KnowledgeGraph, std::vector<TripleRecord>> carve_validation(const KnowledgeGraph& graph,
                                                                      double fraction,
                                                                      std::uint64_t seed);

struct GridAxes {
    std::vector<ModelKind> models;
    std::vector<double> learning_rates;
    std::vector<std::size_t> dims;
    std::vector<double> regularizations;
    std::vector<bool> adversarial;
    std::vector<double> margins;
    std::vector<Norm> norms;

    // eta {0.001, 0.01, 0.1}, k {50, 100, 250, 400}, lambda {2e-6, 2e-8},
    // adversarial {true, false}, margin {1, 5, 10, 20}; norm {L1, L2} for
    // TransE, L1 otherwise.
    static GridAxes full_lattice(ModelKind model);
    // Every combination, in nested axis order (models outermost, norms innermost).
    std::vector<ModelConfig> expand(const ModelConfig& base) const;
};

struct GridCell {
    ModelConfig config;
    std::optional<double> valid_mrr;
    std::string error;
};

struct GridResult {
    ModelConfig best;
    double best_mrr = 0;
    std::vector<GridCell> cells;
};

// Lexicographic order used for tie-breaking equal validation MRR.
bool config_less(const ModelConfig& a, const ModelConfig& b);

// Trains and validates every cell; a failing cell is recorded and skipped.
// Throws UsageError for an empty lattice, NumericError when every cell fails.
GridResult grid_search(const KnowledgeGraph& graph, std::span<const TripleRecord> valid,
                       const std::vector<ModelConfig>& lattice);

void write_grid_table(std::ostream& out, const GridResult& result);

}  // namespace kgr
