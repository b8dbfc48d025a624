#include "kgr/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <tuple>

namespace kgr {

// ---------------------------------------------------------------------------
// Negative sampling

std::vector<CorruptionSet> sample_negatives(const KnownTriples& known, std::size_t entity_count,
                                            std::span<const IndexedTriple> batch, std::size_t n,
                                            std::mt19937_64& rng, SamplingStats* stats) {
    constexpr int kMaxAttempts = 100;
    if (n == 0) throw UsageError("negatives per positive must be >= 1");
    if (entity_count == 0) throw UsageError("cannot corrupt over an empty vocabulary");
    std::uniform_int_distribution<EntityIndex> pick(0, static_cast<EntityIndex>(entity_count - 1));
    std::bernoulli_distribution corrupt_head(0.5);

    std::vector<CorruptionSet> out;
    out.reserve(batch.size());
    for (const auto& pos : batch) {
        CorruptionSet set;
        set.positive = pos;
        set.negatives.reserve(n);
        for (std::size_t i = 0; i < n; ++i) {
            IndexedTriple cand = pos;
            bool head_side = false;
            bool accepted = false;
            for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
                cand = pos;
                head_side = corrupt_head(rng);
                (head_side ? cand.head : cand.tail) = pick(rng);
                if (cand != pos && !known.contains(cand)) {
                    accepted = true;
                    break;
                }
            }
            if (!accepted && stats) ++stats->accepted_after_cap;
            if (head_side) ++set.head_corruptions;
            set.negatives.push_back(cand);
        }
        out.push_back(std::move(set));
    }
    return out;
}

// ---------------------------------------------------------------------------
// SparseGrad

double* SparseGrad::entity(EntityIndex e) {
    auto [it, inserted] = entity_slot_.try_emplace(e, entity_rows_.size());
    if (inserted) {
        entity_rows_.push_back(e);
        entity_values_.resize(entity_values_.size() + entity_width_, 0.0);
    }
    return entity_values_.data() + it->second * entity_width_;
}

double* SparseGrad::relation(RelationIndex r) {
    auto [it, inserted] = relation_slot_.try_emplace(r, relation_rows_.size());
    if (inserted) {
        relation_rows_.push_back(r);
        relation_values_.resize(relation_values_.size() + relation_width_, 0.0);
    }
    return relation_values_.data() + it->second * relation_width_;
}

std::span<const double> SparseGrad::entity_grad(std::size_t slot) const {
    return std::span(entity_values_).subspan(slot * entity_width_, entity_width_);
}

std::span<const double> SparseGrad::relation_grad(std::size_t slot) const {
    return std::span(relation_values_).subspan(slot * relation_width_, relation_width_);
}

bool SparseGrad::all_zero() const {
    auto zero = [](double v) { return v == 0.0; };
    return std::all_of(entity_values_.begin(), entity_values_.end(), zero) &&
           std::all_of(relation_values_.begin(), relation_values_.end(), zero);
}

// ---------------------------------------------------------------------------
// Losses

namespace {

double log_sigmoid(double x) {
    // log(1 / (1 + e^-x)) = -softplus(-x), evaluated stably.
    return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

double sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

std::string describe(const ModelState& s, const IndexedTriple& t) {
    return "(" + s.entities.id(t.head) + ", " + s.relations.id(t.relation) + ", " +
           s.entities.id(t.tail) + ")";
}

void check_finite(double v, const ModelState& s, const IndexedTriple& t) {
    if (!std::isfinite(v)) throw NumericError("non-finite loss at triple " + describe(s, t));
}

// Shared by loss_and_grad and loss_value; grad may be null.
double compute_loss(const ModelState& state, std::span<const CorruptionSet> batch, LossMode mode,
                    const std::vector<std::vector<double>>* fixed_weights, SparseGrad* grad) {
    if (batch.empty()) throw UsageError("loss needs a non-empty batch");
    const auto& cfg = state.config;
    const double gamma = cfg.margin;

    auto psi = [&](const IndexedTriple& t) { return score(state, t.head, t.relation, t.tail); };
    auto backprop = [&](const IndexedTriple& t, double dloss_dscore) {
        if (!grad || dloss_dscore == 0.0) return;
        // Insert both rows first: a later insert may reallocate the buffer.
        grad->entity(t.head);
        grad->entity(t.tail);
        score_grad_rows(cfg.model, cfg.norm, cfg.dim, state.entity(t.head).data(),
                        state.relation(t.relation).data(), state.entity(t.tail).data(),
                        dloss_dscore, grad->entity(t.head), grad->relation(t.relation),
                        grad->entity(t.tail));
    };

    double loss = 0.0;
    if (mode == LossMode::kMargin) {
        std::size_t pairs = 0;
        for (const auto& set : batch) pairs += set.negatives.size();
        if (pairs == 0) throw UsageError("margin loss needs at least one negative");
        const double inv = 1.0 / static_cast<double>(pairs);
        for (const auto& set : batch) {
            const double sp = psi(set.positive);
            check_finite(sp, state, set.positive);
            for (const auto& neg : set.negatives) {
                const double sn = psi(neg);
                check_finite(sn, state, neg);
                const double v = gamma - sp + sn;
                if (v > 0) {
                    loss += v * inv;
                    backprop(set.positive, -inv);
                    backprop(neg, inv);
                }
            }
        }
    } else {
        const double inv = 1.0 / static_cast<double>(batch.size());
        for (std::size_t b = 0; b < batch.size(); ++b) {
            const auto& set = batch[b];
            const double sp = psi(set.positive);
            check_finite(sp, state, set.positive);
            loss += -log_sigmoid(gamma + sp) * inv;
            backprop(set.positive, -sigmoid(-(gamma + sp)) * inv);

            std::vector<double> sn(set.negatives.size());
            for (std::size_t i = 0; i < sn.size(); ++i) {
                sn[i] = psi(set.negatives[i]);
                check_finite(sn[i], state, set.negatives[i]);
            }
            std::vector<double> w;
            if (fixed_weights) {
                w = fixed_weights->at(b);
            } else if (cfg.adversarial_sampling) {
                w = adversarial_weights(sn, cfg.adversarial_temperature);
            } else {
                w.assign(sn.size(), sn.empty() ? 0.0 : 1.0 / static_cast<double>(sn.size()));
            }
            for (std::size_t i = 0; i < sn.size(); ++i) {
                loss += -w[i] * log_sigmoid(-sn[i] - gamma) * inv;
                backprop(set.negatives[i], w[i] * sigmoid(sn[i] + gamma) * inv);
            }
        }
    }

    if (cfg.regularization > 0) {
        std::vector<EntityIndex> ents;
        std::vector<RelationIndex> rels;
        for (const auto& set : batch) {
            auto note = [&](const IndexedTriple& t) {
                ents.push_back(t.head);
                ents.push_back(t.tail);
                rels.push_back(t.relation);
            };
            note(set.positive);
            for (const auto& n : set.negatives) note(n);
        }
        std::sort(ents.begin(), ents.end());
        ents.erase(std::unique(ents.begin(), ents.end()), ents.end());
        std::sort(rels.begin(), rels.end());
        rels.erase(std::unique(rels.begin(), rels.end()), rels.end());
        const double lambda = cfg.regularization;
        auto penalize = [&](std::span<const double> row, double* g) {
            for (std::size_t i = 0; i < row.size(); ++i) {
                loss += lambda * row[i] * row[i];
                if (g) g[i] += 2.0 * lambda * row[i];
            }
        };
        for (auto e : ents) penalize(state.entity(e), grad ? grad->entity(e) : nullptr);
        if (cfg.model != ModelKind::kRotatE)
            for (auto r : rels) penalize(state.relation(r), grad ? grad->relation(r) : nullptr);
    }
    if (!std::isfinite(loss)) throw NumericError("non-finite loss in batch starting at " +
                                                 describe(state, batch.front().positive));
    return loss;
}

}  // namespace

std::vector<double> adversarial_weights(std::span<const double> negative_scores,
                                        double temperature) {
    std::vector<double> w(negative_scores.size());
    if (w.empty()) return w;
    double top = -std::numeric_limits<double>::infinity();
    for (double s : negative_scores) top = std::max(top, s / temperature);
    double z = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        w[i] = std::exp(negative_scores[i] / temperature - top);
        z += w[i];
    }
    for (auto& v : w) v /= z;
    return w;
}

LossResult loss_and_grad(const ModelState& state, std::span<const CorruptionSet> batch,
                         LossMode mode) {
    LossResult result{0.0, SparseGrad(state.entity_width(), state.relation_width())};
    result.loss = compute_loss(state, batch, mode, nullptr, &result.grad);
    return result;
}

double loss_value(const ModelState& state, std::span<const CorruptionSet> batch, LossMode mode,
                  const std::vector<std::vector<double>>* fixed_weights) {
    return compute_loss(state, batch, mode, fixed_weights, nullptr);
}

// ---------------------------------------------------------------------------
// Training loop

namespace {

std::vector<IndexedTriple> positives_of(const ModelState& state, const KnowledgeGraph& graph) {
    std::vector<IndexedTriple> out;
    out.reserve(graph.triple_count());
    for (TripleIndex i = 0; i < graph.triple_count(); ++i) {
        auto idx = state.index(graph.record(i));
        if (!idx) throw DataError("training triple outside the model vocabulary");
        out.push_back(*idx);
    }
    return out;
}

void apply_update(ModelState& state, const SparseGrad& grad, double lr) {
    const auto& erows = grad.entity_rows();
    for (std::size_t slot = 0; slot < erows.size(); ++slot) {
        auto row = state.entity(erows[slot]);
        auto g = grad.entity_grad(slot);
        for (std::size_t i = 0; i < row.size(); ++i) row[i] -= lr * g[i];
    }
    const auto& rrows = grad.relation_rows();
    for (std::size_t slot = 0; slot < rrows.size(); ++slot) {
        auto row = state.relation(rrows[slot]);
        auto g = grad.relation_grad(slot);
        for (std::size_t i = 0; i < row.size(); ++i) row[i] -= lr * g[i];
    }
    if (state.config.model == ModelKind::kTransE)
        for (auto e : erows) renormalize_entity(state, e);
}

}  // namespace

TrainResult train(const KnowledgeGraph& graph, std::span<const TripleRecord> valid,
                  const ModelConfig& config) {
    if (graph.empty()) throw DataError("training graph is empty");
    return train_from(init_model(config, graph), graph, valid);
}

TrainResult train_from(ModelState state, const KnowledgeGraph& graph,
                       std::span<const TripleRecord> valid) {
    const ModelConfig cfg = state.config;
    cfg.validate();
    TrainResult result;
    if (cfg.max_epochs == 0) {
        result.state = std::move(state);
        return result;
    }
    if (graph.empty()) throw DataError("training graph is empty");

    std::mt19937_64 rng(cfg.seed);
    if (!state.rng_state.empty()) {
        std::istringstream in(state.rng_state);
        in >> rng;
    }
    const auto positives = positives_of(state, graph);
    const KnownTriples known = KnownTriples::from(state, graph);
    const KnownTriples known_valid = KnownTriples::from(state, graph, valid);
    const std::size_t n_entities = state.entities.size();

    std::vector<std::size_t> order(positives.size());
    std::vector<IndexedTriple> batch;
    ModelState last_good = state;
    std::optional<ModelState> best;
    std::size_t stale = 0;

    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            batch.clear();
            for (std::size_t i = start; i < end; ++i) batch.push_back(positives[order[i]]);
            auto sets = sample_negatives(known, n_entities, batch, cfg.negatives_per_positive, rng);
            std::optional<LossResult> lr;
            try {
                lr.emplace(loss_and_grad(state, sets, cfg.loss));
            } catch (const NumericError& e) {
                throw TrainingDiverged(std::string("training diverged at epoch ") +
                                           std::to_string(epoch) + ": " + e.what(),
                                       std::move(last_good));
            }
            epoch_loss += lr->loss * static_cast<double>(end - start);
            apply_update(state, lr->grad, cfg.learning_rate);
        }
        epoch_loss /= static_cast<double>(order.size());
        state.epoch += 1;
        if (!std::isfinite(epoch_loss) || !state.all_finite())
            throw TrainingDiverged("training diverged at epoch " + std::to_string(epoch),
                                   std::move(last_good));

        TrainingLogEntry entry{state.epoch, epoch_loss, std::nullopt};
        const bool eval_now = !valid.empty() && (epoch % cfg.eval_every == 0 || epoch == cfg.max_epochs);
        bool stop = false;
        if (eval_now) {
            std::ostringstream rs;
            rs << rng;
            state.rng_state = rs.str();
            double mrr = 0.0;
            try {
                mrr = evaluate(state, valid, known_valid, TieMode::kOptimistic, ExecPolicy::kSerial,
                               cfg.valid_cap)
                          .mrr;
            } catch (const DataError&) {
                mrr = 0.0;  // every validation triple unseen
            }
            entry.valid_mrr = mrr;
            if (!result.best_valid_mrr || mrr > *result.best_valid_mrr) {
                result.best_valid_mrr = mrr;
                result.best_epoch = state.epoch;
                best = state;
                stale = 0;
            } else if (cfg.patience && ++stale >= cfg.patience) {
                stop = true;
            }
        }
        result.log.push_back(entry);
        last_good = state;
        if (stop) break;
    }
    std::ostringstream rs;
    rs << rng;
    state.rng_state = rs.str();
    if (best) {
        result.state = std::move(*best);
    } else {
        result.best_epoch = state.epoch;
        result.state = std::move(state);
    }
    return result;
}

void write_training_log(std::ostream& out, const std::vector<TrainingLogEntry>& log) {
    std::ostringstream s;
    s.precision(10);
    s << "epoch\tloss\tvalid_MRR\n";
    for (const auto& e : log) {
        s << e.epoch << '\t' << e.loss << '\t';
        if (e.valid_mrr) s << *e.valid_mrr;
        s << '\n';
    }
    out << s.str();
}

std::pair<KnowledgeGraph, std::vector<TripleRecord>> carve_validation(const KnowledgeGraph& graph,
                                                                      double fraction,
                                                                      std::uint64_t seed) {
    if (!(fraction >= 0.0 && fraction < 1.0))
        throw UsageError("validation fraction must lie in [0, 1)");
    const std::size_t n = graph.triple_count();
    std::vector<TripleIndex> order(n);
    std::iota(order.begin(), order.end(), 0u);
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    auto take = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n)));
    if (take >= n) take = n > 0 ? n - 1 : 0;
    std::vector<bool> keep(n, true);
    std::vector<TripleIndex> held(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take));
    std::sort(held.begin(), held.end());
    std::vector<TripleRecord> valid;
    for (auto i : held) {
        keep[i] = false;
        valid.push_back(graph.record(i));
    }
    return {graph.subgraph(keep), std::move(valid)};
}

// ---------------------------------------------------------------------------
// Grid search

GridAxes GridAxes::full_lattice(ModelKind model) {
    GridAxes a;
    a.models = {model};
    a.learning_rates = {0.001, 0.01, 0.1};
    a.dims = {50, 100, 250, 400};
    a.regularizations = {2e-6, 2e-8};
    a.adversarial = {true, false};
    a.margins = {1, 5, 10, 20};
    a.norms = model == ModelKind::kTransE ? std::vector<Norm>{Norm::kL1, Norm::kL2}
                                          : std::vector<Norm>{Norm::kL1};
    return a;
}

std::vector<ModelConfig> GridAxes::expand(const ModelConfig& base) const {
    auto or_base = [](const auto& axis, auto value) {
        using T = typename std::decay_t<decltype(axis)>::value_type;
        return axis.empty() ? std::vector<T>{static_cast<T>(value)} : axis;
    };
    std::vector<ModelConfig> out;
    for (auto m : or_base(models, base.model))
        for (auto lr : or_base(learning_rates, base.learning_rate))
            for (auto d : or_base(dims, base.dim))
                for (auto reg : or_base(regularizations, base.regularization))
                    for (bool adv : or_base(adversarial, base.adversarial_sampling))
                        for (auto g : or_base(margins, base.margin))
                            for (auto n : or_base(norms, base.norm)) {
                                ModelConfig c = base;
                                c.model = m;
                                c.learning_rate = lr;
                                c.dim = d;
                                c.regularization = reg;
                                c.adversarial_sampling = adv;
                                c.margin = g;
                                c.norm = n;
                                out.push_back(c);
                            }
    return out;
}

bool config_less(const ModelConfig& a, const ModelConfig& b) {
    auto key = [](const ModelConfig& c) {
        return std::make_tuple(static_cast<std::uint32_t>(c.model), c.dim, c.learning_rate,
                               c.regularization, c.adversarial_sampling, c.margin,
                               static_cast<std::uint32_t>(c.norm), static_cast<std::uint32_t>(c.loss),
                               c.negatives_per_positive, c.adversarial_temperature, c.batch_size,
                               c.max_epochs, c.seed);
    };
    return key(a) < key(b);
}

GridResult grid_search(const KnowledgeGraph& graph, std::span<const TripleRecord> valid,
                       const std::vector<ModelConfig>& lattice) {
    if (lattice.empty()) throw UsageError("grid search needs a non-empty lattice");
    if (valid.empty()) throw UsageError("grid search needs a validation set");
    GridResult result;
    std::optional<std::size_t> best;
    for (const auto& cfg : lattice) {
        GridCell cell{cfg, std::nullopt, {}};
        try {
            auto trained = train(graph, valid, cfg);
            auto known = KnownTriples::from(trained.state, graph, valid);
            cell.valid_mrr = evaluate(trained.state, valid, known, TieMode::kOptimistic,
                                      ExecPolicy::kSerial, cfg.valid_cap)
                                 .mrr;
        } catch (const std::exception& e) {
            cell.error = e.what();
        }
        result.cells.push_back(cell);
        if (!cell.valid_mrr) continue;
        const auto& cur = result.cells.back();
        if (!best) {
            best = result.cells.size() - 1;
            continue;
        }
        const auto& incumbent = result.cells[*best];
        if (*cur.valid_mrr > *incumbent.valid_mrr ||
            (*cur.valid_mrr == *incumbent.valid_mrr && config_less(cur.config, incumbent.config)))
            best = result.cells.size() - 1;
    }
    if (!best) throw NumericError("every grid cell failed");
    result.best = result.cells[*best].config;
    result.best_mrr = *result.cells[*best].valid_mrr;
    return result;
}

void write_grid_table(std::ostream& out, const GridResult& result) {
    std::ostringstream s;
    s.precision(10);
    s << "model\tdim\tlearning_rate\tregularization\tadversarial\tmargin\tnorm\tvalid_MRR\terror\n";
    for (const auto& c : result.cells) {
        s << to_string(c.config.model) << '\t' << c.config.dim << '\t' << c.config.learning_rate
          << '\t' << c.config.regularization << '\t' << (c.config.adversarial_sampling ? "true" : "false")
          << '\t' << c.config.margin << '\t' << to_string(c.config.norm) << '\t';
        if (c.valid_mrr) s << *c.valid_mrr;
        s << '\t' << c.error << '\n';
    }
    out << s.str();
}

}  // namespace kgr
