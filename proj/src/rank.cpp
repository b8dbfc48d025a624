#include "kgr/rank.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <sstream>

#include "kgr/error.hpp"

namespace kgr {

// ---------------------------------------------------------------------------
// KnownTriples

namespace {

bool by_tail_less(const IndexedTriple& a, const IndexedTriple& b) {
    return std::tie(a.tail, a.relation, a.head) < std::tie(b.tail, b.relation, b.head);
}

}  // namespace

KnownTriples::KnownTriples(std::vector<IndexedTriple> triples) : by_head_(std::move(triples)) {
    std::sort(by_head_.begin(), by_head_.end());
    by_head_.erase(std::unique(by_head_.begin(), by_head_.end()), by_head_.end());
    by_tail_ = by_head_;
    std::sort(by_tail_.begin(), by_tail_.end(), by_tail_less);
}

KnownTriples KnownTriples::from(const ModelState& state, const KnowledgeGraph& graph,
                                std::span<const TripleRecord> extra) {
    std::vector<IndexedTriple> out;
    out.reserve(graph.triple_count() + extra.size());
    // Map graph indices to model indices once per vocabulary entry.
    std::vector<std::optional<EntityIndex>> emap(graph.entity_count());
    std::vector<std::optional<RelationIndex>> rmap(graph.relation_count());
    for (EntityIndex e = 0; e < graph.entity_count(); ++e)
        emap[e] = state.entities.find(graph.concept_at(e).id);
    for (RelationIndex r = 0; r < graph.relation_count(); ++r)
        rmap[r] = state.relations.find(graph.predicate_at(r).id);
    for (const auto& t : graph.triples()) {
        if (emap[t.head] && rmap[t.predicate] && emap[t.tail])
            out.push_back({*emap[t.head], *rmap[t.predicate], *emap[t.tail]});
    }
    for (const auto& rec : extra)
        if (auto idx = state.index(rec)) out.push_back(*idx);
    return KnownTriples(std::move(out));
}

KnownTriples KnownTriples::from(const ModelState& state, std::span<const TripleRecord> records) {
    std::vector<IndexedTriple> out;
    for (const auto& rec : records)
        if (auto idx = state.index(rec)) out.push_back(*idx);
    return KnownTriples(std::move(out));
}

bool KnownTriples::contains(const IndexedTriple& t) const {
    return std::binary_search(by_head_.begin(), by_head_.end(), t);
}

std::vector<EntityIndex> KnownTriples::tails(EntityIndex h, RelationIndex r) const {
    auto lo = std::lower_bound(by_head_.begin(), by_head_.end(), IndexedTriple{h, r, 0});
    std::vector<EntityIndex> out;
    for (auto it = lo; it != by_head_.end() && it->head == h && it->relation == r; ++it)
        out.push_back(it->tail);
    return out;
}

std::vector<EntityIndex> KnownTriples::heads(RelationIndex r, EntityIndex t) const {
    auto lo = std::lower_bound(by_tail_.begin(), by_tail_.end(), IndexedTriple{0, r, t},
                               by_tail_less);
    std::vector<EntityIndex> out;
    for (auto it = lo; it != by_tail_.end() && it->tail == t && it->relation == r; ++it)
        out.push_back(it->head);
    return out;
}

// ---------------------------------------------------------------------------
// Ranking

std::optional<TieMode> parse_tie_mode(std::string_view text) {
    if (text == "optimistic") return TieMode::kOptimistic;
    if (text == "pessimistic") return TieMode::kPessimistic;
    if (text == "mean") return TieMode::kMean;
    return std::nullopt;
}

std::string_view to_string(TieMode mode) {
    switch (mode) {
        case TieMode::kOptimistic: return "optimistic";
        case TieMode::kPessimistic: return "pessimistic";
        case TieMode::kMean: return "mean";
    }
    return "?";
}

double RankResult::get(TieMode mode) const {
    switch (mode) {
        case TieMode::kOptimistic: return optimistic;
        case TieMode::kPessimistic: return pessimistic;
        case TieMode::kMean: return mean;
    }
    return optimistic;
}

namespace {

// Scores the open side into `buf`; returns the index of the true entity.
EntityIndex score_side(const ModelState& state, const IndexedTriple& t, Side side,
                       std::span<double> buf, ExecPolicy policy) {
    if (side == Side::kTail) {
        score_all_tails(state, t.head, t.relation, buf, policy);
        return t.tail;
    }
    score_all_heads(state, t.relation, t.tail, buf, policy);
    return t.head;
}

RankResult count_rank(std::span<const double> scores, EntityIndex truth,
                      const std::vector<EntityIndex>& filtered) {
    const double target = scores[truth];
    std::size_t higher = 0, equal = 0;
    std::size_t f = 0;
    for (EntityIndex e = 0; e < scores.size(); ++e) {
        while (f < filtered.size() && filtered[f] < e) ++f;
        if (e == truth) continue;
        if (f < filtered.size() && filtered[f] == e) continue;
        if (scores[e] > target)
            ++higher;
        else if (scores[e] == target)
            ++equal;
    }
    RankResult r;
    r.optimistic = 1.0 + static_cast<double>(higher);
    r.pessimistic = 1.0 + static_cast<double>(higher + equal);
    r.mean = 1.0 + static_cast<double>(higher) + static_cast<double>(equal) / 2.0;
    return r;
}

RankResult filtered_rank_into(const ModelState& state, const IndexedTriple& t,
                              const KnownTriples& known, Side side, std::span<double> buf,
                              ExecPolicy policy) {
    EntityIndex truth = score_side(state, t, side, buf, policy);
    auto filtered = side == Side::kTail ? known.tails(t.head, t.relation)
                                        : known.heads(t.relation, t.tail);
    return count_rank(buf, truth, filtered);
}

}  // namespace

RankResult filtered_rank(const ModelState& state, const IndexedTriple& triple,
                         const KnownTriples& known, Side side, ExecPolicy policy) {
    std::vector<double> buf(state.entities.size());
    return filtered_rank_into(state, triple, known, side, buf, policy);
}

RankResult raw_rank(const ModelState& state, const IndexedTriple& triple, Side side,
                    ExecPolicy policy) {
    std::vector<double> buf(state.entities.size());
    EntityIndex truth = score_side(state, triple, side, buf, policy);
    return count_rank(buf, truth, {});
}

RankMetrics metrics_from_ranks(std::span<const double> head_ranks,
                               std::span<const double> tail_ranks) {
    RankMetrics m;
    const std::size_t n = head_ranks.size();
    m.n_test = n;
    if (n == 0 || tail_ranks.size() != n) return m;
    double sum = 0, inv = 0;
    std::map<int, std::size_t> within;
    auto add = [&](double rank) {
        sum += rank;
        inv += 1.0 / rank;
        for (int k : kHitsAt)
            if (rank <= k) ++within[k];
    };
    for (std::size_t i = 0; i < n; ++i) {
        add(head_ranks[i]);
        add(tail_ranks[i]);
    }
    const double denom = 2.0 * static_cast<double>(n);
    m.mr = sum / denom;
    m.mrr = inv / denom;
    for (int k : kHitsAt) m.hits[k] = static_cast<double>(within[k]) / denom;
    return m;
}

RankMetrics evaluate(const ModelState& state, std::span<const TripleRecord> test,
                     const KnownTriples& known, TieMode tie_mode, ExecPolicy policy,
                     std::size_t cap) {
    std::vector<IndexedTriple> mapped;
    std::size_t skipped = 0;
    for (const auto& rec : test) {
        if (cap && mapped.size() >= cap) break;
        if (auto idx = state.index(rec))
            mapped.push_back(*idx);
        else
            ++skipped;
    }
    if (mapped.empty())
        throw DataError("evaluation skipped every test triple (unseen entities or relations)");

    const auto n = static_cast<std::int64_t>(mapped.size());
    std::vector<double> head_ranks(mapped.size()), tail_ranks(mapped.size());
    const std::size_t width = state.entities.size();
    if (policy == ExecPolicy::kParallel) {
#pragma omp parallel
        {
            std::vector<double> buf(width);
#pragma omp for schedule(dynamic, 4)
            for (std::int64_t i = 0; i < n; ++i) {
                head_ranks[i] = filtered_rank_into(state, mapped[i], known, Side::kHead, buf,
                                                   ExecPolicy::kSerial)
                                    .get(tie_mode);
                tail_ranks[i] = filtered_rank_into(state, mapped[i], known, Side::kTail, buf,
                                                   ExecPolicy::kSerial)
                                    .get(tie_mode);
            }
        }
    } else {
        std::vector<double> buf(width);
        for (std::int64_t i = 0; i < n; ++i) {
            head_ranks[i] =
                filtered_rank_into(state, mapped[i], known, Side::kHead, buf, ExecPolicy::kSerial)
                    .get(tie_mode);
            tail_ranks[i] =
                filtered_rank_into(state, mapped[i], known, Side::kTail, buf, ExecPolicy::kSerial)
                    .get(tie_mode);
        }
    }
    RankMetrics m = metrics_from_ranks(head_ranks, tail_ranks);
    m.skipped_unseen = skipped;
    m.tie_mode = tie_mode;
    return m;
}

void write_metrics_tsv(std::ostream& out, const RankMetrics& m) {
    std::ostringstream s;
    s.precision(17);
    s << "metric\tvalue\n";
    s << "MR\t" << m.mr << '\n';
    s << "MRR\t" << m.mrr << '\n';
    for (const auto& [k, v] : m.hits) s << "Hits@" << k << '\t' << v << '\n';
    s << "n_test\t" << m.n_test << '\n';
    s << "skipped_unseen\t" << m.skipped_unseen << '\n';
    s << "tie_mode\t" << to_string(m.tie_mode) << '\n';
    out << s.str();
}

void write_metrics_table(std::ostream& out, const RankMetrics& m) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(3);
    s << std::setw(8) << "MR" << std::setw(8) << "MRR";
    for (const auto& [k, v] : m.hits) s << std::setw(9) << ("Hits@" + std::to_string(k));
    s << '\n';
    s << std::setw(8) << m.mr << std::setw(8) << m.mrr;
    for (const auto& [k, v] : m.hits) s << std::setw(9) << v;
    s << '\n';
    s << "test triples: " << m.n_test << ", skipped (unseen): " << m.skipped_unseen
      << ", ties: " << to_string(m.tie_mode) << '\n';
    out << s.str();
}

// ---------------------------------------------------------------------------
// Candidate prediction

bool CandidateConstraint::admits(const Concept& c) const {
    auto any_of = [](const std::set<std::string>& wanted, const std::vector<std::string>& have) {
        for (const auto& w : wanted)
            if (std::binary_search(have.begin(), have.end(), w)) return true;
        return false;
    };
    if (!semantic_types.empty() && !any_of(semantic_types, c.semantic_types)) return false;
    if (!semantic_groups.empty() && !any_of(semantic_groups, c.semantic_groups)) return false;
    return true;
}

CandidateList predict_candidates(const ModelState& state, const KnowledgeGraph* metadata,
                                 const PartialTriple& query, std::size_t k,
                                 const CandidateConstraint& constraint, const KnownTriples& known,
                                 bool novel_only, ExecPolicy policy) {
    if (k == 0) throw UsageError("candidate list length k must be positive");
    if (query.head.has_value() == query.tail.has_value())
        throw UsageError("query must fix exactly one of head and tail");
    if (!constraint.empty() && !metadata)
        throw UsageError("a semantic constraint needs concept metadata");
    auto r = state.relations.find(query.relation);
    if (!r) throw DataError("relation unknown to the model: " + query.relation);
    const std::string& fixed_id = query.head ? *query.head : *query.tail;
    auto fixed = state.entities.find(fixed_id);
    if (!fixed) throw DataError("entity unknown to the model: " + fixed_id);

    const bool open_tail = query.head.has_value();
    std::vector<double> scores(state.entities.size());
    if (open_tail)
        score_all_tails(state, *fixed, *r, scores, policy);
    else
        score_all_heads(state, *r, *fixed, scores, policy);
    auto known_list = open_tail ? known.tails(*fixed, *r) : known.heads(*r, *fixed);

    struct Scored {
        EntityIndex e;
        double score;
        bool known;
        const Concept* meta;
    };
    std::vector<Scored> pool;
    bool any_admitted = false;
    for (EntityIndex e = 0; e < state.entities.size(); ++e) {
        const Concept* c = nullptr;
        if (metadata)
            if (auto ge = metadata->find_entity(state.entities.id(e)))
                c = &metadata->concept_at(*ge);
        if (!constraint.empty() && (!c || !constraint.admits(*c))) continue;
        any_admitted = true;
        const bool is_known = std::binary_search(known_list.begin(), known_list.end(), e);
        if (novel_only && is_known) continue;
        pool.push_back({e, scores[e], is_known, c});
    }
    if (!any_admitted) throw DataError("candidate constraint admits no entity");

    auto better = [&](const Scored& a, const Scored& b) {
        if (a.score != b.score) return a.score > b.score;
        return state.entities.id(a.e) < state.entities.id(b.e);
    };
    const std::size_t take = std::min(k, pool.size());
    std::partial_sort(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(take), pool.end(),
                      better);

    CandidateList list;
    list.query = query;
    list.constraint = constraint;
    list.novel_only = novel_only;
    for (std::size_t i = 0; i < take; ++i) {
        const auto& s = pool[i];
        list.candidates.push_back({state.entities.id(s.e), s.meta ? s.meta->name : "",
                                   s.score, i + 1, s.known});
    }
    return list;
}

void write_candidates(std::ostream& out, const CandidateList& list) {
    std::ostringstream s;
    s.precision(17);
    s << "rank\tentity_id\tname\tscore\tknown\n";
    for (const auto& c : list.candidates)
        s << c.rank << '\t' << c.entity_id << '\t' << c.name << '\t' << c.score << '\t'
          << (c.known ? 1 : 0) << '\n';
    out << s.str();
}

CandidateList read_candidates(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read candidate list: " + path);
    std::string line;
    std::getline(in, line);
    CandidateList list;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto f = split(line, '\t');
        if (f.size() < 5) throw DataError("malformed candidate line: " + line);
        try {
            list.candidates.push_back(
                {f[1], f[2], std::stod(f[3]), std::stoul(f[0]), f[4] == "1"});
        } catch (const std::exception&) {
            throw DataError("malformed candidate line: " + line);
        }
    }
    return list;
}

// ---------------------------------------------------------------------------
// Ground truth

GroundTruthClusters GroundTruthClusters::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read ground-truth clusters: " + path);
    GroundTruthClusters truth;
    truth.source = path;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line.front() == '#') continue;
        std::set<std::string> members;
        for (auto& m : split(line, '|')) {
            while (!m.empty() && m.back() == ' ') m.pop_back();
            while (!m.empty() && m.front() == ' ') m.erase(m.begin());
            if (!m.empty()) members.insert(m);
        }
        if (!members.empty()) truth.clusters.push_back(std::move(members));
    }
    return truth;
}

std::optional<std::size_t> GroundTruthClusters::cluster_of(const std::string& id) const {
    for (std::size_t i = 0; i < clusters.size(); ++i)
        if (clusters[i].count(id)) return i;
    return std::nullopt;
}

GroundTruthHits ground_truth_hits(const CandidateList& candidates,
                                  const GroundTruthClusters& truth) {
    GroundTruthHits out;
    std::vector<bool> seen(truth.clusters.size(), false);
    std::size_t matched = 0;
    const double n_clusters = static_cast<double>(truth.clusters.size());
    for (std::size_t i = 0; i < candidates.candidates.size(); ++i) {
        if (auto c = truth.cluster_of(candidates.candidates[i].entity_id); c && !seen[*c]) {
            seen[*c] = true;
            ++matched;
            out.matched.push_back(*c);
        }
        HitPoint p;
        p.k = i + 1;
        p.matched_clusters = matched;
        p.precision = static_cast<double>(matched) / static_cast<double>(p.k);
        p.recall = n_clusters > 0 ? static_cast<double>(matched) / n_clusters : 0.0;
        out.curve.push_back(p);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Rank differences

RankDiffReport rank_diff_report(const CandidateList& a, const CandidateList& b) {
    std::map<std::string, std::size_t> rank_b;
    for (const auto& c : b.candidates) rank_b.emplace(c.entity_id, c.rank);
    RankDiffReport report;
    for (const auto& c : a.candidates) {
        auto it = rank_b.find(c.entity_id);
        if (it == rank_b.end()) continue;
        const std::size_t d = c.rank > it->second ? c.rank - it->second : it->second - c.rank;
        report.items.push_back({c.entity_id, c.rank, it->second, d});
    }
    if (report.items.empty()) throw DataError("candidate lists share no entity");

    std::vector<double> diffs;
    for (const auto& item : report.items) diffs.push_back(static_cast<double>(item.abs_diff));
    std::sort(diffs.begin(), diffs.end());
    const std::size_t n = diffs.size();
    report.median = n % 2 ? diffs[n / 2] : (diffs[n / 2 - 1] + diffs[n / 2]) / 2.0;
    report.mean = std::accumulate(diffs.begin(), diffs.end(), 0.0) / static_cast<double>(n);
    double ss = 0;
    for (double d : diffs) ss += (d - report.mean) * (d - report.mean);
    report.stdev = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
    for (std::size_t threshold : kRankDiffThresholds) {
        auto count = static_cast<std::size_t>(
            std::upper_bound(diffs.begin(), diffs.end(), static_cast<double>(threshold)) -
            diffs.begin());
        report.within.emplace_back(threshold, count);
    }
    return report;
}

void write_rank_diff(std::ostream& out, const RankDiffReport& report) {
    std::ostringstream s;
    s.precision(10);
    s << "# shared\t" << report.items.size() << '\n';
    s << "# median\t" << report.median << '\n';
    s << "# mean\t" << report.mean << '\n';
    s << "# stdev\t" << report.stdev << '\n';
    s << "max_abs_diff\tcount\tpercent\n";
    for (const auto& [threshold, count] : report.within)
        s << threshold << '\t' << count << '\t'
          << 100.0 * static_cast<double>(count) / static_cast<double>(report.items.size())
          << '\n';
    s << "entity_id\trank_a\trank_b\tabs_diff\n";
    for (const auto& item : report.items)
        s << item.entity_id << '\t' << item.rank_a << '\t' << item.rank_b << '\t'
          << item.abs_diff << '\n';
    out << s.str();
}

}  // namespace kgr
