#include "kgr/discovery.hpp"

#include <algorithm>
#include <optional>
#include <ostream>
#include <set>

#include <json.hpp>

#include "kgr/error.hpp"
#include "kgr/preprocess.hpp"

namespace kgr {

std::string_view to_string(DiscoveryMode mode) {
    return mode == DiscoveryMode::kOpen ? "open" : "closed";
}

std::uint64_t DiscoveryPath::support() const {
    std::uint64_t total = 0;
    for (const auto& s : steps) total += s.count;
    return total;
}

std::size_t DiscoveryResult::path_count() const {
    std::size_t n = 0;
    for (const auto& r : rows) n += r.paths.size();
    return n;
}

std::vector<std::string> known_predicates(const KnowledgeGraph& graph) {
    auto ids = FilterConfig::defaults().predicate_whitelist;
    for (const auto& p : graph.predicates()) ids.insert(p.id);
    return {ids.begin(), ids.end()};
}

namespace {

struct Compiled {
    std::vector<std::vector<bool>> hop_predicates;  // per hop, indexed by RelationIndex
    std::vector<bool> hop_backward;
    std::vector<std::pair<std::vector<RelationIndex>, bool>> negations;
};

std::vector<bool> predicate_mask(const KnowledgeGraph& g, const std::vector<std::string>& ids) {
    std::vector<bool> mask(g.relation_count(), false);
    for (const auto& id : ids)
        if (auto r = g.find_relation(id)) mask[*r] = true;
    return mask;
}

Compiled compile(const KnowledgeGraph& g, const Pattern& p) {
    Compiled c;
    for (const auto& hop : p.hops) {
        c.hop_predicates.push_back(predicate_mask(g, hop.predicates));
        c.hop_backward.push_back(hop.backward);
    }
    for (const auto& n : p.negations) {
        std::vector<RelationIndex> rels;
        for (const auto& id : n.predicates)
            if (auto r = g.find_relation(id)) rels.push_back(*r);
        c.negations.emplace_back(std::move(rels), n.backward);
    }
    return c;
}

class Engine {
public:
    Engine(const KnowledgeGraph& g, const Pattern& p, const DiscoveryOptions& o,
           DiscoveryResult& result)
        : g_(g), p_(p), opt_(o), c_(compile(g, p)), result_(result) {
        if (p.hops.empty()) throw UsageError("a pattern needs at least one hop");
    }

    std::vector<EntityIndex> resolve_ends(const std::vector<std::string>& fixed_end) {
        if (fixed_end.empty()) throw UsageError("discovery needs at least one end concept");
        std::set<EntityIndex> ends;
        for (const auto& id : fixed_end) {
            auto e = g_.find_entity(id);
            if (!e) {
                result_.warnings.push_back("end concept not in graph: " + id);
                continue;
            }
            if (!p_.end_constraint().admits(g_.concept_at(*e))) {
                result_.warnings.push_back("end concept rejected by the end constraint: " + id);
                continue;
            }
            ends.insert(*e);
        }
        return {ends.begin(), ends.end()};
    }

    // Concepts at each variable position that can still reach an end.
    void backward_layers(const std::vector<EntityIndex>& ends, std::size_t lowest) {
        const std::size_t n = p_.hops.size();
        reach_.assign(n + 1, std::vector<bool>(g_.entity_count(), false));
        for (auto e : ends) reach_[n][e] = true;
        std::vector<EntityIndex> frontier = ends;
        for (std::size_t i = n; i-- > lowest;) {
            std::vector<EntityIndex> next;
            const auto& mask = c_.hop_predicates[i];
            for (auto x : frontier) {
                auto triples = c_.hop_backward[i] ? g_.outgoing(x) : g_.incoming(x);
                for (auto ti : triples) {
                    const auto& t = g_.triple_at(ti);
                    if (!mask[t.predicate]) continue;
                    EntityIndex u = c_.hop_backward[i] ? t.tail : t.head;
                    if (reach_[i][u] || !p_.constraints[i].admits(g_.concept_at(u))) continue;
                    reach_[i][u] = true;
                    next.push_back(u);
                }
            }
            std::sort(next.begin(), next.end());
            if (next.size() > opt_.fan_out_cap) {
                for (std::size_t k = opt_.fan_out_cap; k < next.size(); ++k)
                    reach_[i][next[k]] = false;
                next.resize(opt_.fan_out_cap);
                flag_truncated("frontier for variable '" + p_.variables[i] +
                               "' truncated to " + std::to_string(opt_.fan_out_cap));
            }
            frontier = std::move(next);
        }
    }

    std::vector<EntityIndex> starts() const {
        std::vector<EntityIndex> out;
        for (EntityIndex e = 0; e < reach_[0].size(); ++e)
            if (reach_[0][e]) out.push_back(e);
        return out;
    }

    bool negated(EntityIndex s, EntityIndex e) const {
        for (const auto& [rels, backward] : c_.negations)
            for (auto r : rels)
                if (backward ? g_.contains(e, r, s) : g_.contains(s, r, e)) return true;
        return false;
    }

    // Paths from `s`, at most `cap`; sets *hit_cap when more exist.
    std::vector<std::vector<TripleIndex>> paths_from(EntityIndex s, std::size_t cap,
                                                     bool* hit_cap) const {
        std::vector<std::vector<TripleIndex>> out;
        std::vector<EntityIndex> nodes{s};
        std::vector<TripleIndex> steps;
        *hit_cap = false;
        dfs(nodes, steps, out, cap, hit_cap);
        return out;
    }

    DiscoveryPath materialize(const std::vector<TripleIndex>& steps, EntityIndex s) const {
        DiscoveryPath path;
        EntityIndex cur = s;
        path.nodes.push_back(g_.concept_at(cur).id);
        for (std::size_t i = 0; i < steps.size(); ++i) {
            const auto& t = g_.triple_at(steps[i]);
            PathStep step;
            step.head = g_.concept_at(t.head).id;
            step.predicate = g_.predicate_at(t.predicate).id;
            step.tail = g_.concept_at(t.tail).id;
            step.backward = c_.hop_backward[i];
            step.count = t.count;
            step.sentence_ids = t.sentence_ids;
            cur = step.backward ? t.head : t.tail;
            path.nodes.push_back(g_.concept_at(cur).id);
            path.steps.push_back(std::move(step));
        }
        return path;
    }

    void flag_truncated(const std::string& message) {
        result_.truncated = true;
        result_.warnings.push_back(message);
    }

private:
    void dfs(std::vector<EntityIndex>& nodes, std::vector<TripleIndex>& steps,
             std::vector<std::vector<TripleIndex>>& out, std::size_t cap, bool* hit_cap) const {
        const std::size_t i = steps.size();
        if (i == p_.hops.size()) {
            if (negated(nodes.front(), nodes.back())) return;
            if (out.size() >= cap) {
                *hit_cap = true;
                return;
            }
            out.push_back(steps);
            return;
        }
        const EntityIndex u = nodes.back();
        const auto& mask = c_.hop_predicates[i];
        auto triples = c_.hop_backward[i] ? g_.incoming(u) : g_.outgoing(u);
        for (auto ti : triples) {
            const auto& t = g_.triple_at(ti);
            if (!mask[t.predicate]) continue;
            EntityIndex v = c_.hop_backward[i] ? t.head : t.tail;
            if (!reach_[i + 1][v]) continue;
            if (std::find(nodes.begin(), nodes.end(), v) != nodes.end()) continue;
            nodes.push_back(v);
            steps.push_back(ti);
            dfs(nodes, steps, out, cap, hit_cap);
            steps.pop_back();
            nodes.pop_back();
            if (*hit_cap) return;
        }
    }

    const KnowledgeGraph& g_;
    const Pattern& p_;
    const DiscoveryOptions& opt_;
    Compiled c_;
    DiscoveryResult& result_;
    std::vector<std::vector<bool>> reach_;
};

bool path_less(const DiscoveryPath& a, const DiscoveryPath& b) {
    if (a.nodes != b.nodes) return a.nodes < b.nodes;
    for (std::size_t i = 0; i < a.steps.size() && i < b.steps.size(); ++i)
        if (a.steps[i].predicate != b.steps[i].predicate)
            return a.steps[i].predicate < b.steps[i].predicate;
    return a.steps.size() < b.steps.size();
}

}  // namespace

DiscoveryResult open_discovery(const KnowledgeGraph& graph, const Pattern& pattern,
                               const std::vector<std::string>& fixed_end,
                               const DiscoveryOptions& options) {
    DiscoveryResult result;
    result.mode = DiscoveryMode::kOpen;
    Engine engine(graph, pattern, options, result);
    auto ends = engine.resolve_ends(fixed_end);
    if (ends.empty()) return result;
    engine.backward_layers(ends, 0);
    auto starts = engine.starts();

    std::vector<std::optional<DiscoveryRow>> rows(starts.size());
    std::vector<char> capped(starts.size(), 0);
    const auto body = [&](std::size_t k) {
        bool hit = false;
        auto paths = engine.paths_from(starts[k], options.fan_out_cap, &hit);
        capped[k] = hit;
        if (paths.empty()) return;
        DiscoveryRow row;
        const auto& c = graph.concept_at(starts[k]);
        row.start = c.id;
        row.start_name = c.name;
        std::set<std::string> mids;
        for (const auto& steps : paths) {
            row.paths.push_back(engine.materialize(steps, starts[k]));
            const auto& nodes = row.paths.back().nodes;
            for (std::size_t i = 1; i + 1 < nodes.size(); ++i) mids.insert(nodes[i]);
        }
        std::sort(row.paths.begin(), row.paths.end(), path_less);
        row.intermediates.assign(mids.begin(), mids.end());
        row.score = static_cast<double>(row.intermediates.size());
        rows[k] = std::move(row);
    };
    const auto n = static_cast<std::ptrdiff_t>(starts.size());
    if (options.policy == ExecPolicy::kParallel) {
#pragma omp parallel for schedule(dynamic, 16)
        for (std::ptrdiff_t k = 0; k < n; ++k) body(static_cast<std::size_t>(k));
    } else {
        for (std::ptrdiff_t k = 0; k < n; ++k) body(static_cast<std::size_t>(k));
    }

    for (std::size_t k = 0; k < starts.size(); ++k) {
        if (capped[k])
            engine.flag_truncated("paths for start " + graph.concept_at(starts[k]).id +
                                  " truncated to " + std::to_string(options.fan_out_cap));
        if (rows[k]) result.rows.push_back(std::move(*rows[k]));
    }
    std::stable_sort(result.rows.begin(), result.rows.end(),
                     [](const DiscoveryRow& a, const DiscoveryRow& b) {
                         if (a.score != b.score) return a.score > b.score;
                         return a.start < b.start;
                     });
    return result;
}

DiscoveryResult closed_discovery(const KnowledgeGraph& graph, const Pattern& pattern,
                                 const std::string& fixed_start,
                                 const std::vector<std::string>& fixed_end,
                                 const DiscoveryOptions& options) {
    DiscoveryResult result;
    result.mode = DiscoveryMode::kClosed;
    auto s = graph.find_entity(fixed_start);
    if (!s) throw DataError("unknown concept: " + fixed_start);
    Engine engine(graph, pattern, options, result);
    auto ends = engine.resolve_ends(fixed_end);
    if (ends.empty()) return result;
    if (!pattern.start_constraint().admits(graph.concept_at(*s))) {
        result.warnings.push_back("start concept rejected by the start constraint: " +
                                  fixed_start);
        return result;
    }
    engine.backward_layers(ends, 1);
    bool hit = false;
    auto paths = engine.paths_from(*s, options.fan_out_cap, &hit);
    if (hit)
        engine.flag_truncated("paths truncated to " + std::to_string(options.fan_out_cap));
    const auto& c = graph.concept_at(*s);
    for (const auto& steps : paths) {
        DiscoveryRow row;
        row.start = c.id;
        row.start_name = c.name;
        row.paths.push_back(engine.materialize(steps, *s));
        const auto& nodes = row.paths.back().nodes;
        std::set<std::string> mids(nodes.begin() + 1, nodes.end() - 1);
        row.intermediates.assign(mids.begin(), mids.end());
        row.score = static_cast<double>(row.paths.back().support());
        result.rows.push_back(std::move(row));
    }
    std::sort(result.rows.begin(), result.rows.end(),
              [](const DiscoveryRow& a, const DiscoveryRow& b) {
                  if (a.score != b.score) return a.score > b.score;
                  return path_less(a.paths.front(), b.paths.front());
              });
    return result;
}

std::string path_text(const DiscoveryPath& path) {
    std::string out = path.nodes.empty() ? "" : path.nodes.front();
    for (std::size_t i = 0; i < path.steps.size(); ++i) {
        const auto& s = path.steps[i];
        out += s.backward ? " <-" + s.predicate + "- " : " -" + s.predicate + "-> ";
        out += path.nodes[i + 1];
    }
    return out;
}

void write_discovery_tsv(std::ostream& out, const DiscoveryResult& result) {
    out << "row\tstart\tstart_name\tscore\tpath\tsentence_ids\n";
    for (std::size_t r = 0; r < result.rows.size(); ++r) {
        const auto& row = result.rows[r];
        for (const auto& path : row.paths) {
            std::vector<std::string> evidence;
            for (const auto& s : path.steps) evidence.push_back(join(s.sentence_ids, ","));
            out << r + 1 << '\t' << row.start << '\t' << row.start_name << '\t' << row.score
                << '\t' << path_text(path) << '\t' << join(evidence, ";") << '\n';
        }
    }
}

std::string discovery_json(const DiscoveryResult& result, const KnowledgeGraph& graph) {
    using nlohmann::json;
    auto node = [&](const std::string& id) {
        auto e = graph.find_entity(id);
        return json{{"id", id}, {"name", e ? graph.concept_at(*e).name : ""}};
    };
    json rows = json::array();
    for (const auto& row : result.rows) {
        json mids = json::array();
        for (const auto& m : row.intermediates) mids.push_back(node(m));
        json paths = json::array();
        for (const auto& path : row.paths) {
            json nodes = json::array();
            for (const auto& n : path.nodes) nodes.push_back(node(n));
            json steps = json::array();
            for (const auto& s : path.steps)
                steps.push_back({{"head", s.head},
                                 {"predicate", s.predicate},
                                 {"tail", s.tail},
                                 {"backward", s.backward},
                                 {"count", s.count},
                                 {"sentence_ids", s.sentence_ids}});
            paths.push_back({{"nodes", nodes},
                             {"steps", steps},
                             {"support", path.support()},
                             {"text", path_text(path)}});
        }
        rows.push_back({{"start", node(row.start)},
                        {"score", row.score},
                        {"intermediates", mids},
                        {"paths", paths}});
    }
    json doc{{"mode", std::string(to_string(result.mode))},
             {"rows", rows},
             {"path_count", result.path_count()},
             {"truncated", result.truncated},
             {"warnings", result.warnings}};
    return doc.dump();
}

}  // namespace kgr
