#pragma once

// Embedding models. All scores are oriented higher = more plausible:
//   TransE    -||h + r - t||_{1 or 2}
//   RotatE    -sum_i |h_i * e^{i theta_i} - t_i|
//   DistMult  sum_i h_i r_i t_i
//   ComplEx   Re(sum_i h_i r_i conj(t_i))
//
// Row layouts: complex rows hold k real parts followed by k imaginary parts;
// RotatE relation rows hold k phase angles.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "kgr/exec.hpp"
#include "kgr/graph.hpp"

namespace kgr {

enum class ModelKind : std::uint32_t { kTransE = 0, kRotatE = 1, kDistMult = 2, kComplEx = 3 };
enum class Norm : std::uint32_t { kL1 = 1, kL2 = 2 };
enum class LossMode : std::uint32_t { kMargin = 0, kLogSigmoid = 1 };

std::string_view to_string(ModelKind kind);
std::string_view to_string(Norm norm);
std::string_view to_string(LossMode mode);
// Case-insensitive; nullopt when unrecognized.
std::optional<ModelKind> parse_model_kind(std::string_view text);
std::optional<Norm> parse_norm(std::string_view text);
std::optional<LossMode> parse_loss_mode(std::string_view text);

struct ModelConfig {
    ModelKind model = ModelKind::kTransE;
    std::size_t dim = 100;
    Norm norm = Norm::kL1;
    double margin = 1.0;
    double learning_rate = 0.01;
    double regularization = 0.0;
    std::size_t negatives_per_positive = 5;
    bool adversarial_sampling = false;
    double adversarial_temperature = 1.0;
    LossMode loss = LossMode::kMargin;
    std::size_t batch_size = 128;
    std::size_t max_epochs = 1000;
    std::uint64_t seed = 42;
    std::size_t eval_every = 50;
    std::size_t patience = 5;       // evaluations without improvement; 0 disables
    std::size_t valid_cap = 500;    // validation subsample size; 0 = all

    // Throws UsageError naming the offending field.
    void validate() const;
    bool operator==(const ModelConfig&) const = default;
};

class Vocabulary {
public:
    Vocabulary() = default;
    explicit Vocabulary(std::vector<std::string> ids);

    std::size_t size() const { return ids_.size(); }
    const std::string& id(std::uint32_t index) const { return ids_.at(index); }
    const std::vector<std::string>& ids() const { return ids_; }
    std::optional<std::uint32_t> find(std::string_view id) const;
    bool operator==(const Vocabulary& other) const { return ids_ == other.ids_; }

private:
    std::vector<std::string> ids_;
    std::unordered_map<std::string, std::uint32_t> lookup_;
};

struct IndexedTriple {
    EntityIndex head = 0;
    RelationIndex relation = 0;
    EntityIndex tail = 0;
    auto operator<=>(const IndexedTriple&) const = default;
};

struct ModelState {
    ModelConfig config;
    Vocabulary entities;
    Vocabulary relations;
    std::vector<double> entity_emb;    // |E| x entity_width(), row-major
    std::vector<double> relation_emb;  // |R| x relation_width(), row-major
    std::uint64_t epoch = 0;
    std::string rng_state;

    std::size_t entity_width() const;
    std::size_t relation_width() const;
    std::span<const double> entity(EntityIndex e) const;
    std::span<const double> relation(RelationIndex r) const;
    std::span<double> entity(EntityIndex e);
    std::span<double> relation(RelationIndex r);

    // Maps a record into model indices; nullopt when any part is unseen.
    std::optional<IndexedTriple> index(const TripleRecord& record) const;
    bool all_finite() const;
};

// Row widths for a given model and dimension.
std::size_t entity_width(ModelKind kind, std::size_t dim);
std::size_t relation_width(ModelKind kind, std::size_t dim);

// Entries uniform in [-6/sqrt(k), 6/sqrt(k)]; RotatE phases uniform in [-pi, pi).
// Throws UsageError for k = 0 or empty vocabularies.
ModelState init_model(const ModelConfig& config, std::vector<std::string> entity_ids,
                      std::vector<std::string> relation_ids);
ModelState init_model(const ModelConfig& config, const KnowledgeGraph& graph);

// Throws std::out_of_range for bad indices.
double score(const ModelState& state, EntityIndex h, RelationIndex r, EntityIndex t);

// Raw kernels over explicit rows.
double score_rows(ModelKind kind, Norm norm, std::size_t dim, const double* h, const double* r,
                  const double* t);
// Accumulates scale * d(score)/d(row) into gh, gr, gt. Subgradient 0 at kinks.
void score_grad_rows(ModelKind kind, Norm norm, std::size_t dim, const double* h,
                     const double* r, const double* t, double scale, double* gh, double* gr,
                     double* gt);

// Scores (h, r, e) for every entity e (tails) or (e, r, t) (heads).
void score_all_tails(const ModelState& state, EntityIndex h, RelationIndex r,
                     std::span<double> out, ExecPolicy policy = ExecPolicy::kSerial);
void score_all_heads(const ModelState& state, RelationIndex r, EntityIndex t,
                     std::span<double> out, ExecPolicy policy = ExecPolicy::kSerial);

// Projects TransE entity rows onto the unit L2 sphere.
void renormalize_entity(ModelState& state, EntityIndex e);

}  // namespace kgr
