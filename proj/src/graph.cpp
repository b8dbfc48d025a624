#include "kgr/graph.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "kgr/error.hpp"

namespace kgr {

namespace {

void merge_sorted(std::vector<std::string>& into, const std::vector<std::string>& from) {
    into.insert(into.end(), from.begin(), from.end());
    std::sort(into.begin(), into.end());
    into.erase(std::unique(into.begin(), into.end()), into.end());
}

std::vector<std::string> split_nonempty(std::string_view text, char sep) {
    std::vector<std::string> out;
    for (auto& part : split(text, sep))
        if (!part.empty()) out.push_back(std::move(part));
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

}  // namespace

std::optional<Direction> parse_direction(std::string_view text) {
    if (text == "out") return Direction::kOut;
    if (text == "in") return Direction::kIn;
    if (text == "both") return Direction::kBoth;
    return std::nullopt;
}

std::vector<std::string> split(std::string_view text, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        auto pos = text.find(sep, start);
        if (pos == std::string_view::npos) {
            out.emplace_back(text.substr(start));
            return out;
        }
        out.emplace_back(text.substr(start, pos - start));
        start = pos + 1;
    }
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

bool Concept::has_type(std::string_view type) const {
    return std::binary_search(semantic_types.begin(), semantic_types.end(), type);
}

bool Concept::in_group(std::string_view group) const {
    return std::binary_search(semantic_groups.begin(), semantic_groups.end(), group);
}

// ---------------------------------------------------------------------------
// SemanticGroupMap

SemanticGroupMap SemanticGroupMap::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read semantic group map: " + path);
    SemanticGroupMap map;
    std::string line;
    while (std::getline(in, line)) {
        auto view = trim(line);
        if (view.empty() || view.front() == '#') continue;
        auto fields = split(view, '\t');
        if (fields.size() < 2) throw DataError("malformed semantic group map line: " + line);
        map.add(std::string(trim(fields[0])), std::string(trim(fields[1])));
    }
    return map;
}

void SemanticGroupMap::add(std::string semtype, std::string group) {
    type_to_group_[std::move(semtype)] = std::move(group);
}

std::vector<std::string> SemanticGroupMap::groups_for(
    const std::vector<std::string>& semtypes) const {
    std::vector<std::string> groups;
    for (const auto& t : semtypes)
        if (auto it = type_to_group_.find(t); it != type_to_group_.end())
            groups.push_back(it->second);
    std::sort(groups.begin(), groups.end());
    groups.erase(std::unique(groups.begin(), groups.end()), groups.end());
    return groups;
}

// ---------------------------------------------------------------------------
// GraphBuilder

void GraphBuilder::add_concept(const Concept& incoming) {
    if (incoming.id.empty()) throw DataError("concept id must be non-empty");
    auto [it, inserted] = concepts_.try_emplace(incoming.id, incoming);
    if (inserted) {
        auto& c = it->second;
        std::sort(c.semantic_types.begin(), c.semantic_types.end());
        c.semantic_types.erase(std::unique(c.semantic_types.begin(), c.semantic_types.end()),
                               c.semantic_types.end());
        std::sort(c.semantic_groups.begin(), c.semantic_groups.end());
        c.semantic_groups.erase(
            std::unique(c.semantic_groups.begin(), c.semantic_groups.end()),
            c.semantic_groups.end());
        return;
    }
    auto& c = it->second;
    if (!incoming.name.empty() && (c.name.empty() || incoming.name < c.name)) c.name = incoming.name;
    merge_sorted(c.semantic_types, incoming.semantic_types);
    merge_sorted(c.semantic_groups, incoming.semantic_groups);
}

void GraphBuilder::add_predicate(const std::string& id) {
    if (id.empty()) throw DataError("predicate id must be non-empty");
    predicates_.insert(id);
}

void GraphBuilder::add_triple(const TripleRecord& record) {
    if (record.head.empty() || record.tail.empty() || record.predicate.empty())
        throw DataError("triple with empty head, predicate, or tail");
    if (record.count < 1) throw DataError("triple count must be >= 1");
    add_concept(Concept{record.head, {}, {}, {}});
    add_concept(Concept{record.tail, {}, {}, {}});
    add_predicate(record.predicate);

    Key key{record.head, record.predicate, record.tail};
    auto [it, inserted] = triples_.try_emplace(key, record);
    if (inserted) {
        merge_sorted(it->second.sentence_ids, {});
        return;
    }
    auto& t = it->second;
    t.count += record.count;
    merge_sorted(t.sentence_ids, record.sentence_ids);
    if (record.date && (!t.date || *record.date < *t.date)) t.date = record.date;
    if (record.confidence && (!t.confidence || *record.confidence > *t.confidence))
        t.confidence = record.confidence;
}

KnowledgeGraph GraphBuilder::build() && {
    KnowledgeGraph g;
    g.concepts_.reserve(concepts_.size());
    for (auto& [id, c] : concepts_) {
        g.entity_lookup_.emplace(id, static_cast<EntityIndex>(g.concepts_.size()));
        g.concepts_.push_back(std::move(c));
    }
    for (const auto& id : predicates_) {
        g.relation_lookup_.emplace(id, static_cast<RelationIndex>(g.predicates_.size()));
        g.predicates_.push_back(Predicate{id, true});
    }
    g.triples_.reserve(triples_.size());
    for (auto& [key, rec] : triples_) {
        Triple t;
        t.head = g.entity_lookup_.at(key.head);
        t.predicate = g.relation_lookup_.at(key.predicate);
        t.tail = g.entity_lookup_.at(key.tail);
        t.date = rec.date;
        t.sentence_ids = std::move(rec.sentence_ids);
        t.count = rec.count;
        t.confidence = rec.confidence;
        g.triples_.push_back(std::move(t));
    }
    // Lexicographic id order of the map keys already matches (h, r, t) index
    // order because vocabularies are sorted the same way.
    g.build_indices();
    concepts_.clear();
    predicates_.clear();
    triples_.clear();
    return g;
}

// ---------------------------------------------------------------------------
// KnowledgeGraph

void KnowledgeGraph::build_indices() {
    const std::size_t n = concepts_.size();
    const std::size_t m = triples_.size();

    head_offsets_.assign(n + 1, 0);
    for (const auto& t : triples_) ++head_offsets_[t.head + 1];
    std::partial_sum(head_offsets_.begin(), head_offsets_.end(), head_offsets_.begin());
    head_perm_.resize(m);
    std::iota(head_perm_.begin(), head_perm_.end(), 0u);
    tail_column_.resize(m);
    for (std::size_t i = 0; i < m; ++i) tail_column_[i] = triples_[i].tail;

    tail_perm_.resize(m);
    std::iota(tail_perm_.begin(), tail_perm_.end(), 0u);
    std::sort(tail_perm_.begin(), tail_perm_.end(), [&](TripleIndex a, TripleIndex b) {
        const auto& x = triples_[a];
        const auto& y = triples_[b];
        return std::tie(x.tail, x.predicate, x.head) < std::tie(y.tail, y.predicate, y.head);
    });
    tail_offsets_.assign(n + 1, 0);
    for (const auto& t : triples_) ++tail_offsets_[t.tail + 1];
    std::partial_sum(tail_offsets_.begin(), tail_offsets_.end(), tail_offsets_.begin());
    head_column_.resize(m);
    for (std::size_t i = 0; i < m; ++i) head_column_[i] = triples_[tail_perm_[i]].head;
}

std::optional<EntityIndex> KnowledgeGraph::find_entity(std::string_view id) const {
    auto it = entity_lookup_.find(std::string(id));
    if (it == entity_lookup_.end()) return std::nullopt;
    return it->second;
}

std::optional<RelationIndex> KnowledgeGraph::find_relation(std::string_view id) const {
    auto it = relation_lookup_.find(std::string(id));
    if (it == relation_lookup_.end()) return std::nullopt;
    return it->second;
}

EntityIndex KnowledgeGraph::entity_index(std::string_view id) const {
    if (auto e = find_entity(id)) return *e;
    throw DataError("unknown concept: " + std::string(id));
}

RelationIndex KnowledgeGraph::relation_index(std::string_view id) const {
    if (auto r = find_relation(id)) return *r;
    throw DataError("unknown predicate: " + std::string(id));
}

std::span<const TripleIndex> KnowledgeGraph::outgoing(EntityIndex h) const {
    if (h >= concepts_.size()) return {};
    return std::span(head_perm_).subspan(head_offsets_[h], head_offsets_[h + 1] - head_offsets_[h]);
}

std::span<const TripleIndex> KnowledgeGraph::incoming(EntityIndex t) const {
    if (t >= concepts_.size()) return {};
    return std::span(tail_perm_).subspan(tail_offsets_[t], tail_offsets_[t + 1] - tail_offsets_[t]);
}

std::span<const EntityIndex> KnowledgeGraph::tails(EntityIndex h, RelationIndex r) const {
    if (h >= concepts_.size()) return {};
    auto begin = triples_.begin() + head_offsets_[h];
    auto end = triples_.begin() + head_offsets_[h + 1];
    auto lo = std::partition_point(begin, end, [r](const Triple& t) { return t.predicate < r; });
    auto hi = std::partition_point(lo, end, [r](const Triple& t) { return t.predicate <= r; });
    return std::span(tail_column_).subspan(lo - triples_.begin(), hi - lo);
}

std::span<const EntityIndex> KnowledgeGraph::heads(EntityIndex t, RelationIndex r) const {
    if (t >= concepts_.size()) return {};
    auto begin = tail_perm_.begin() + tail_offsets_[t];
    auto end = tail_perm_.begin() + tail_offsets_[t + 1];
    auto lo = std::partition_point(
        begin, end, [&](TripleIndex i) { return triples_[i].predicate < r; });
    auto hi = std::partition_point(
        lo, end, [&](TripleIndex i) { return triples_[i].predicate <= r; });
    return std::span(head_column_).subspan(lo - tail_perm_.begin(), hi - lo);
}

std::optional<TripleIndex> KnowledgeGraph::find(EntityIndex h, RelationIndex r,
                                                EntityIndex t) const {
    if (h >= concepts_.size()) return std::nullopt;
    auto begin = triples_.begin() + head_offsets_[h];
    auto end = triples_.begin() + head_offsets_[h + 1];
    auto it = std::lower_bound(begin, end, std::pair{r, t}, [](const Triple& x, const auto& key) {
        return std::tie(x.predicate, x.tail) < std::tie(key.first, key.second);
    });
    if (it != end && it->predicate == r && it->tail == t)
        return static_cast<TripleIndex>(it - triples_.begin());
    return std::nullopt;
}

std::size_t KnowledgeGraph::out_degree(EntityIndex e) const {
    return head_offsets_.at(e + 1) - head_offsets_.at(e);
}

std::size_t KnowledgeGraph::in_degree(EntityIndex e) const {
    return tail_offsets_.at(e + 1) - tail_offsets_.at(e);
}

std::size_t KnowledgeGraph::degree(std::string_view concept_id, Direction direction) const {
    EntityIndex e = entity_index(concept_id);
    switch (direction) {
        case Direction::kOut: return out_degree(e);
        case Direction::kIn: return in_degree(e);
        case Direction::kBoth: return out_degree(e) + in_degree(e);
    }
    return 0;
}

std::vector<Neighbor> KnowledgeGraph::neighbors(EntityIndex e,
                                                const std::set<RelationIndex>* predicates,
                                                Direction direction) const {
    std::vector<Neighbor> out;
    auto allowed = [&](RelationIndex r) { return !predicates || predicates->count(r) > 0; };
    if (direction == Direction::kOut || direction == Direction::kBoth) {
        for (TripleIndex i : outgoing(e)) {
            const auto& t = triples_[i];
            if (allowed(t.predicate)) out.push_back({t.predicate, t.tail, Direction::kOut, i});
        }
    }
    if (direction == Direction::kIn || direction == Direction::kBoth) {
        for (TripleIndex i : incoming(e)) {
            const auto& t = triples_[i];
            // A self-loop was already listed as outgoing.
            if (direction == Direction::kBoth && t.is_self_loop()) continue;
            if (allowed(t.predicate)) out.push_back({t.predicate, t.head, Direction::kIn, i});
        }
    }
    return out;
}

std::vector<Neighbor> KnowledgeGraph::neighbors(std::string_view concept_id,
                                                const std::set<std::string>* predicates,
                                                Direction direction) const {
    EntityIndex e = entity_index(concept_id);
    if (!predicates) return neighbors(e, nullptr, direction);
    std::set<RelationIndex> rels;
    for (const auto& p : *predicates)
        if (auto r = find_relation(p)) rels.insert(*r);
    return neighbors(e, &rels, direction);
}

TripleRecord KnowledgeGraph::record(TripleIndex i) const {
    const auto& t = triples_.at(i);
    return TripleRecord{concepts_[t.head].id, predicates_[t.predicate].id, concepts_[t.tail].id,
                        t.date, t.sentence_ids, t.count, t.confidence};
}

std::vector<TripleRecord> KnowledgeGraph::records() const {
    std::vector<TripleRecord> out;
    out.reserve(triples_.size());
    for (TripleIndex i = 0; i < triples_.size(); ++i) out.push_back(record(i));
    return out;
}

KnowledgeGraph KnowledgeGraph::subgraph(const std::vector<bool>& keep) const {
    if (keep.size() != triples_.size())
        throw std::invalid_argument("subgraph mask size does not match triple count");
    GraphBuilder builder;
    for (TripleIndex i = 0; i < triples_.size(); ++i) {
        if (!keep[i]) continue;
        const auto& t = triples_[i];
        builder.add_concept(concepts_[t.head]);
        builder.add_concept(concepts_[t.tail]);
        builder.add_triple(record(i));
    }
    return std::move(builder).build();
}

bool KnowledgeGraph::indices_consistent() const {
    KnowledgeGraph copy;
    copy.concepts_ = concepts_;
    copy.predicates_ = predicates_;
    copy.triples_ = triples_;
    std::sort(copy.triples_.begin(), copy.triples_.end(), [](const Triple& a, const Triple& b) {
        return std::tie(a.head, a.predicate, a.tail) < std::tie(b.head, b.predicate, b.tail);
    });
    if (!(copy.triples_ == triples_)) return false;
    for (const auto& t : triples_)
        if (t.head >= concepts_.size() || t.tail >= concepts_.size() ||
            t.predicate >= predicates_.size())
            return false;
    for (std::size_t i = 1; i < triples_.size(); ++i) {
        const auto& a = triples_[i - 1];
        const auto& b = triples_[i];
        if (std::tie(a.head, a.predicate, a.tail) == std::tie(b.head, b.predicate, b.tail))
            return false;
    }
    copy.build_indices();
    return copy.head_offsets_ == head_offsets_ && copy.head_perm_ == head_perm_ &&
           copy.tail_column_ == tail_column_ && copy.tail_offsets_ == tail_offsets_ &&
           copy.tail_perm_ == tail_perm_ && copy.head_column_ == head_column_;
}

bool KnowledgeGraph::operator==(const KnowledgeGraph& other) const {
    return concepts_ == other.concepts_ && predicates_ == other.predicates_ &&
           triples_ == other.triples_;
}

// ---------------------------------------------------------------------------
// TSV I/O

void TsvSchema::set(std::string_view role, std::string column) {
    std::map<std::string_view, std::string*> roles{
        {"head", &head},
        {"predicate", &predicate},
        {"tail", &tail},
        {"head_semtypes", &head_semtypes},
        {"tail_semtypes", &tail_semtypes},
        {"date", &date},
        {"sentence_id", &sentence_id},
        {"confidence", &confidence},
        {"count", &count},
        {"head_name", &head_name},
        {"tail_name", &tail_name},
        {"head_semgroups", &head_semgroups},
        {"tail_semgroups", &tail_semgroups},
    };
    auto it = roles.find(role);
    if (it == roles.end()) throw UsageError("unknown schema role: " + std::string(role));
    *it->second = std::move(column);
}

namespace {

struct ColumnIndex {
    std::optional<std::size_t> head, predicate, tail, head_semtypes, tail_semtypes, date,
        sentence_id, confidence, count, head_name, tail_name, head_semgroups, tail_semgroups;
};

ColumnIndex resolve_columns(const std::vector<std::string>& header, const TsvSchema& schema) {
    auto find = [&](const std::string& name) -> std::optional<std::size_t> {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (trim(header[i]) == name) return i;
        return std::nullopt;
    };
    ColumnIndex c;
    c.head = find(schema.head);
    c.predicate = find(schema.predicate);
    c.tail = find(schema.tail);
    if (!c.head || !c.predicate || !c.tail) {
        std::string missing;
        if (!c.head) missing += " " + schema.head;
        if (!c.predicate) missing += " " + schema.predicate;
        if (!c.tail) missing += " " + schema.tail;
        throw DataError("schema column missing from header:" + missing);
    }
    c.head_semtypes = find(schema.head_semtypes);
    c.tail_semtypes = find(schema.tail_semtypes);
    c.date = find(schema.date);
    c.sentence_id = find(schema.sentence_id);
    c.confidence = find(schema.confidence);
    c.count = find(schema.count);
    c.head_name = find(schema.head_name);
    c.tail_name = find(schema.tail_name);
    c.head_semgroups = find(schema.head_semgroups);
    c.tail_semgroups = find(schema.tail_semgroups);
    return c;
}

struct ParsedRow {
    TripleRecord record;
    Concept head;
    Concept tail;
};

// Returns a rejection reason, or nullopt when the row is valid.
std::optional<std::string> parse_row(const std::vector<std::string>& fields, const ColumnIndex& c,
                                     const SemanticGroupMap& semgroups, ParsedRow& row) {
    auto field = [&](const std::optional<std::size_t>& idx) -> std::string_view {
        if (!idx || *idx >= fields.size()) return {};
        return trim(fields[*idx]);
    };
    row.record.head = std::string(field(c.head));
    row.record.predicate = std::string(field(c.predicate));
    row.record.tail = std::string(field(c.tail));
    if (row.record.head.empty()) return "empty head";
    if (row.record.predicate.empty()) return "empty predicate";
    if (row.record.tail.empty()) return "empty tail";

    if (auto d = field(c.date); !d.empty()) {
        auto parsed = Date::parse(d);
        if (!parsed) return "bad date";
        row.record.date = parsed;
    }
    if (auto s = field(c.confidence); !s.empty()) {
        double v = 0;
        auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc() || ptr != s.data() + s.size() || !(v >= 0.0 && v <= 1.0))
            return "bad confidence";
        row.record.confidence = v;
    }
    if (auto s = field(c.count); !s.empty()) {
        std::uint64_t v = 0;
        auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc() || ptr != s.data() + s.size() || v < 1) return "bad count";
        row.record.count = v;
    }
    row.record.sentence_ids = split_nonempty(field(c.sentence_id), '|');

    row.head = Concept{row.record.head, std::string(field(c.head_name)),
                       split_nonempty(field(c.head_semtypes), '|'),
                       split_nonempty(field(c.head_semgroups), '|')};
    row.tail = Concept{row.record.tail, std::string(field(c.tail_name)),
                       split_nonempty(field(c.tail_semtypes), '|'),
                       split_nonempty(field(c.tail_semgroups), '|')};
    merge_sorted(row.head.semantic_groups, semgroups.groups_for(row.head.semantic_types));
    merge_sorted(row.tail.semantic_groups, semgroups.groups_for(row.tail.semantic_types));
    return std::nullopt;
}

}  // namespace

LoadResult read_triples(std::istream& in, const TsvSchema& schema,
                        const SemanticGroupMap& semgroups) {
    std::string line;
    if (!std::getline(in, line)) throw DataError("empty triple file (no header)");
    auto header = split(line, '\t');
    ColumnIndex columns = resolve_columns(header, schema);

    LoadResult result;
    GraphBuilder builder;
    ParsedRow row;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        ++result.report.rows_read;
        auto fields = split(line, '\t');
        std::optional<std::string> reason;
        if (fields.size() != header.size()) {
            reason = "field count mismatch";
        } else {
            row = ParsedRow{};
            reason = parse_row(fields, columns, semgroups, row);
        }
        if (reason) {
            ++result.report.rows_rejected;
            ++result.report.rejection_reasons[*reason];
            continue;
        }
        ++result.report.rows_accepted;
        builder.add_concept(row.head);
        builder.add_concept(row.tail);
        builder.add_triple(row.record);
    }
    if (result.report.rows_accepted == 0) throw DataError("triple file has zero valid rows");
    result.graph = std::move(builder).build();
    return result;
}

LoadResult load_triples(const std::string& path, const TsvSchema& schema,
                        const SemanticGroupMap& semgroups) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read triple file: " + path);
    return read_triples(in, schema, semgroups);
}

std::vector<TripleRecord> load_records(const std::string& path, const TsvSchema& schema) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read triple file: " + path);
    std::string line;
    if (!std::getline(in, line)) throw DataError("empty triple file (no header): " + path);
    auto header = split(line, '\t');
    ColumnIndex columns = resolve_columns(header, schema);
    std::vector<TripleRecord> out;
    SemanticGroupMap none;
    ParsedRow row;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        auto fields = split(line, '\t');
        if (fields.size() != header.size()) continue;
        row = ParsedRow{};
        if (!parse_row(fields, columns, none, row)) out.push_back(std::move(row.record));
    }
    return out;
}

namespace {

constexpr const char* kCanonicalHeader =
    "head_cui\tpredicate\ttail_cui\thead_name\ttail_name\thead_semtypes\ttail_semtypes\t"
    "head_semgroups\ttail_semgroups\tdate\tsentence_id\tcount\tconfidence\n";

std::string format_confidence(const std::optional<double>& c) {
    if (!c) return {};
    std::ostringstream s;
    s.precision(17);
    s << *c;
    return s.str();
}

}  // namespace

void write_triples(std::ostream& out, const KnowledgeGraph& graph) {
    out << kCanonicalHeader;
    for (const auto& t : graph.triples()) {
        const auto& h = graph.concept_at(t.head);
        const auto& tl = graph.concept_at(t.tail);
        out << h.id << '\t' << graph.predicate_at(t.predicate).id << '\t' << tl.id << '\t'
            << h.name << '\t' << tl.name << '\t' << join(h.semantic_types, "|") << '\t'
            << join(tl.semantic_types, "|") << '\t' << join(h.semantic_groups, "|") << '\t'
            << join(tl.semantic_groups, "|") << '\t' << (t.date ? t.date->to_string() : "")
            << '\t' << join(t.sentence_ids, "|") << '\t' << t.count << '\t'
            << format_confidence(t.confidence) << '\n';
    }
}

void write_records(std::ostream& out, const std::vector<TripleRecord>& records) {
    out << "head_cui\tpredicate\ttail_cui\tdate\tsentence_id\tcount\tconfidence\n";
    for (const auto& r : records) {
        out << r.head << '\t' << r.predicate << '\t' << r.tail << '\t'
            << (r.date ? r.date->to_string() : "") << '\t' << join(r.sentence_ids, "|") << '\t'
            << r.count << '\t' << format_confidence(r.confidence) << '\n';
    }
}

}  // namespace kgr
