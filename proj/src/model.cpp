#include "kgr/model.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>

#include "kgr/error.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace kgr {

int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

namespace {

std::string lower(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

double sign(double x) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); }

}  // namespace

std::string_view to_string(ModelKind kind) {
    switch (kind) {
        case ModelKind::kTransE: return "TransE";
        case ModelKind::kRotatE: return "RotatE";
        case ModelKind::kDistMult: return "DistMult";
        case ModelKind::kComplEx: return "ComplEx";
    }
    return "?";
}

std::string_view to_string(Norm norm) { return norm == Norm::kL1 ? "L1" : "L2"; }

std::string_view to_string(LossMode mode) {
    return mode == LossMode::kMargin ? "margin" : "logsigmoid";
}

std::optional<ModelKind> parse_model_kind(std::string_view text) {
    auto s = lower(text);
    if (s == "transe") return ModelKind::kTransE;
    if (s == "rotate") return ModelKind::kRotatE;
    if (s == "distmult") return ModelKind::kDistMult;
    if (s == "complex") return ModelKind::kComplEx;
    return std::nullopt;
}

std::optional<Norm> parse_norm(std::string_view text) {
    auto s = lower(text);
    if (s == "l1" || s == "1") return Norm::kL1;
    if (s == "l2" || s == "2") return Norm::kL2;
    return std::nullopt;
}

std::optional<LossMode> parse_loss_mode(std::string_view text) {
    auto s = lower(text);
    if (s == "margin") return LossMode::kMargin;
    if (s == "logsigmoid") return LossMode::kLogSigmoid;
    return std::nullopt;
}

void ModelConfig::validate() const {
    if (dim == 0) throw UsageError("dim must be positive");
    if (!(margin > 0)) throw UsageError("margin must be > 0");
    if (!(learning_rate > 0)) throw UsageError("learning_rate must be > 0");
    if (!(regularization >= 0)) throw UsageError("regularization must be >= 0");
    if (negatives_per_positive == 0) throw UsageError("negatives_per_positive must be positive");
    if (!(adversarial_temperature > 0)) throw UsageError("adversarial_temperature must be > 0");
    if (batch_size == 0) throw UsageError("batch_size must be positive");
    if (eval_every == 0) throw UsageError("eval_every must be positive");
}

Vocabulary::Vocabulary(std::vector<std::string> ids) : ids_(std::move(ids)) {
    for (std::uint32_t i = 0; i < ids_.size(); ++i) {
        if (!lookup_.emplace(ids_[i], i).second)
            throw DataError("duplicate vocabulary id: " + ids_[i]);
    }
}

std::optional<std::uint32_t> Vocabulary::find(std::string_view id) const {
    auto it = lookup_.find(std::string(id));
    if (it == lookup_.end()) return std::nullopt;
    return it->second;
}

std::size_t entity_width(ModelKind kind, std::size_t dim) {
    return kind == ModelKind::kRotatE || kind == ModelKind::kComplEx ? 2 * dim : dim;
}

std::size_t relation_width(ModelKind kind, std::size_t dim) {
    return kind == ModelKind::kComplEx ? 2 * dim : dim;
}

std::size_t ModelState::entity_width() const { return kgr::entity_width(config.model, config.dim); }
std::size_t ModelState::relation_width() const {
    return kgr::relation_width(config.model, config.dim);
}

std::span<const double> ModelState::entity(EntityIndex e) const {
    const auto w = entity_width();
    if (e >= entities.size()) throw std::out_of_range("entity index out of range");
    return std::span(entity_emb).subspan(e * w, w);
}

std::span<const double> ModelState::relation(RelationIndex r) const {
    const auto w = relation_width();
    if (r >= relations.size()) throw std::out_of_range("relation index out of range");
    return std::span(relation_emb).subspan(r * w, w);
}

std::span<double> ModelState::entity(EntityIndex e) {
    const auto w = entity_width();
    if (e >= entities.size()) throw std::out_of_range("entity index out of range");
    return std::span(entity_emb).subspan(e * w, w);
}

std::span<double> ModelState::relation(RelationIndex r) {
    const auto w = relation_width();
    if (r >= relations.size()) throw std::out_of_range("relation index out of range");
    return std::span(relation_emb).subspan(r * w, w);
}

std::optional<IndexedTriple> ModelState::index(const TripleRecord& record) const {
    auto h = entities.find(record.head);
    auto r = relations.find(record.predicate);
    auto t = entities.find(record.tail);
    if (!h || !r || !t) return std::nullopt;
    return IndexedTriple{*h, *r, *t};
}

bool ModelState::all_finite() const {
    auto finite = [](double v) { return std::isfinite(v); };
    return std::all_of(entity_emb.begin(), entity_emb.end(), finite) &&
           std::all_of(relation_emb.begin(), relation_emb.end(), finite);
}

ModelState init_model(const ModelConfig& config, std::vector<std::string> entity_ids,
                      std::vector<std::string> relation_ids) {
    config.validate();
    if (entity_ids.empty() || relation_ids.empty())
        throw UsageError("model needs at least one entity and one relation");
    ModelState s;
    s.config = config;
    s.entities = Vocabulary(std::move(entity_ids));
    s.relations = Vocabulary(std::move(relation_ids));

    std::mt19937_64 rng(config.seed);
    const double bound = 6.0 / std::sqrt(static_cast<double>(config.dim));
    std::uniform_real_distribution<double> uniform(-bound, bound);
    s.entity_emb.resize(s.entities.size() * s.entity_width());
    for (auto& v : s.entity_emb) v = uniform(rng);
    s.relation_emb.resize(s.relations.size() * s.relation_width());
    if (config.model == ModelKind::kRotatE) {
        std::uniform_real_distribution<double> phase(-std::numbers::pi, std::numbers::pi);
        for (auto& v : s.relation_emb) v = phase(rng);
    } else {
        for (auto& v : s.relation_emb) v = uniform(rng);
    }
    std::ostringstream state;
    state << rng;
    s.rng_state = state.str();
    return s;
}

ModelState init_model(const ModelConfig& config, const KnowledgeGraph& graph) {
    std::vector<std::string> entities, relations;
    for (const auto& c : graph.concepts()) entities.push_back(c.id);
    for (const auto& p : graph.predicates()) relations.push_back(p.id);
    return init_model(config, std::move(entities), std::move(relations));
}

double score_rows(ModelKind kind, Norm norm, std::size_t k, const double* h, const double* r,
                  const double* t) {
    switch (kind) {
        case ModelKind::kTransE: {
            double acc = 0.0;
            if (norm == Norm::kL1) {
                for (std::size_t i = 0; i < k; ++i) acc += std::abs(h[i] + r[i] - t[i]);
                return -acc;
            }
            for (std::size_t i = 0; i < k; ++i) {
                const double d = h[i] + r[i] - t[i];
                acc += d * d;
            }
            return -std::sqrt(acc);
        }
        case ModelKind::kRotatE: {
            double acc = 0.0;
            for (std::size_t i = 0; i < k; ++i) {
                const double c = std::cos(r[i]), s = std::sin(r[i]);
                const double re = h[i] * c - h[k + i] * s - t[i];
                const double im = h[i] * s + h[k + i] * c - t[k + i];
                acc += std::hypot(re, im);
            }
            return -acc;
        }
        case ModelKind::kDistMult: {
            double acc = 0.0;
            for (std::size_t i = 0; i < k; ++i) acc += (h[i] * t[i]) * r[i];  // symmetric in h, t
            return acc;
        }
        case ModelKind::kComplEx: {
            double acc = 0.0;
            for (std::size_t i = 0; i < k; ++i) {
                const double hr = h[i], hi = h[k + i];
                const double rr = r[i], ri = r[k + i];
                const double tr = t[i], ti = t[k + i];
                acc += hr * rr * tr - hi * ri * tr + hr * ri * ti + hi * rr * ti;
            }
            return acc;
        }
    }
    return 0.0;
}

void score_grad_rows(ModelKind kind, Norm norm, std::size_t k, const double* h, const double* r,
                     const double* t, double scale, double* gh, double* gr, double* gt) {
    switch (kind) {
        case ModelKind::kTransE: {
            if (norm == Norm::kL1) {
                for (std::size_t i = 0; i < k; ++i) {
                    const double g = -sign(h[i] + r[i] - t[i]) * scale;
                    gh[i] += g;
                    gr[i] += g;
                    gt[i] -= g;
                }
                return;
            }
            double sq = 0.0;
            for (std::size_t i = 0; i < k; ++i) {
                const double d = h[i] + r[i] - t[i];
                sq += d * d;
            }
            const double n = std::sqrt(sq);
            if (n == 0.0) return;
            for (std::size_t i = 0; i < k; ++i) {
                const double g = -(h[i] + r[i] - t[i]) / n * scale;
                gh[i] += g;
                gr[i] += g;
                gt[i] -= g;
            }
            return;
        }
        case ModelKind::kRotatE: {
            for (std::size_t i = 0; i < k; ++i) {
                const double c = std::cos(r[i]), s = std::sin(r[i]);
                const double hr = h[i], hi = h[k + i];
                const double re = hr * c - hi * s - t[i];
                const double im = hr * s + hi * c - t[k + i];
                const double m = std::hypot(re, im);
                if (m == 0.0) continue;
                const double dre = -re / m * scale;  // d score / d re
                const double dim = -im / m * scale;
                gh[i] += dre * c + dim * s;
                gh[k + i] += -dre * s + dim * c;
                gt[i] -= dre;
                gt[k + i] -= dim;
                gr[i] += dre * (-hr * s - hi * c) + dim * (hr * c - hi * s);
            }
            return;
        }
        case ModelKind::kDistMult: {
            for (std::size_t i = 0; i < k; ++i) {
                gh[i] += r[i] * t[i] * scale;
                gr[i] += h[i] * t[i] * scale;
                gt[i] += h[i] * r[i] * scale;
            }
            return;
        }
        case ModelKind::kComplEx: {
            for (std::size_t i = 0; i < k; ++i) {
                const double hr = h[i], hi = h[k + i];
                const double rr = r[i], ri = r[k + i];
                const double tr = t[i], ti = t[k + i];
                gh[i] += (rr * tr + ri * ti) * scale;
                gh[k + i] += (-ri * tr + rr * ti) * scale;
                gr[i] += (hr * tr + hi * ti) * scale;
                gr[k + i] += (-hi * tr + hr * ti) * scale;
                gt[i] += (hr * rr - hi * ri) * scale;
                gt[k + i] += (hr * ri + hi * rr) * scale;
            }
            return;
        }
    }
}

double score(const ModelState& state, EntityIndex h, RelationIndex r, EntityIndex t) {
    auto hr = state.entity(h);
    auto rr = state.relation(r);
    auto tr = state.entity(t);
    return score_rows(state.config.model, state.config.norm, state.config.dim, hr.data(),
                      rr.data(), tr.data());
}

void score_all_tails(const ModelState& state, EntityIndex h, RelationIndex r,
                     std::span<double> out, ExecPolicy policy) {
    const auto n = static_cast<std::int64_t>(state.entities.size());
    if (out.size() != static_cast<std::size_t>(n))
        throw std::invalid_argument("score buffer size does not match entity count");
    const double* hrow = state.entity(h).data();
    const double* rrow = state.relation(r).data();
    const double* base = state.entity_emb.data();
    const auto w = static_cast<std::int64_t>(state.entity_width());
    const auto kind = state.config.model;
    const auto norm = state.config.norm;
    const auto k = state.config.dim;
    if (policy == ExecPolicy::kParallel) {
#pragma omp parallel for schedule(static)
        for (std::int64_t e = 0; e < n; ++e)
            out[e] = score_rows(kind, norm, k, hrow, rrow, base + e * w);
    } else {
        for (std::int64_t e = 0; e < n; ++e)
            out[e] = score_rows(kind, norm, k, hrow, rrow, base + e * w);
    }
}

void score_all_heads(const ModelState& state, RelationIndex r, EntityIndex t,
                     std::span<double> out, ExecPolicy policy) {
    const auto n = static_cast<std::int64_t>(state.entities.size());
    if (out.size() != static_cast<std::size_t>(n))
        throw std::invalid_argument("score buffer size does not match entity count");
    const double* trow = state.entity(t).data();
    const double* rrow = state.relation(r).data();
    const double* base = state.entity_emb.data();
    const auto w = static_cast<std::int64_t>(state.entity_width());
    const auto kind = state.config.model;
    const auto norm = state.config.norm;
    const auto k = state.config.dim;
    if (policy == ExecPolicy::kParallel) {
#pragma omp parallel for schedule(static)
        for (std::int64_t e = 0; e < n; ++e)
            out[e] = score_rows(kind, norm, k, base + e * w, rrow, trow);
    } else {
        for (std::int64_t e = 0; e < n; ++e)
            out[e] = score_rows(kind, norm, k, base + e * w, rrow, trow);
    }
}

void renormalize_entity(ModelState& state, EntityIndex e) {
    auto row = state.entity(e);
    double sq = 0.0;
    for (double v : row) sq += v * v;
    if (sq <= 0.0) return;
    const double inv = 1.0 / std::sqrt(sq);
    for (double& v : row) v *= inv;
}

}  // namespace kgr
