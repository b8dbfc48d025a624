#pragma once

// Knowledge-graph core: concept/predicate vocabularies, triples with
// provenance, and the immutable indexed graph every other module reads.
//
// Layout:
// - vocabularies are sorted lexicographically by id, so dense indices are
//   stable across runs and input orderings
// - triples are stored sorted by (head, predicate, tail); the head CSR index
//   is therefore the triple array itself
// - a second permutation sorted by (tail, predicate, head) backs the tail CSR

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "kgr/date.hpp"

namespace kgr {

using EntityIndex = std::uint32_t;
using RelationIndex = std::uint32_t;
using TripleIndex = std::uint32_t;

enum class Direction { kOut, kIn, kBoth };

std::optional<Direction> parse_direction(std::string_view text);

struct Concept {
    std::string id;
    std::string name;
    std::vector<std::string> semantic_types;   // sorted, unique
    std::vector<std::string> semantic_groups;  // sorted, unique

    bool has_type(std::string_view type) const;
    bool in_group(std::string_view group) const;
    bool operator==(const Concept&) const = default;
};

struct Predicate {
    std::string id;
    bool directed = true;
    bool operator==(const Predicate&) const = default;
};

// Vocabulary-independent triple: loader rows, held-out test sets, exports.
struct TripleRecord {
    std::string head;
    std::string predicate;
    std::string tail;
    std::optional<Date> date;
    std::vector<std::string> sentence_ids;
    std::uint64_t count = 1;
    std::optional<double> confidence;

    bool operator==(const TripleRecord&) const = default;
};

struct Triple {
    EntityIndex head = 0;
    RelationIndex predicate = 0;
    EntityIndex tail = 0;
    std::optional<Date> date;               // earliest supporting date
    std::vector<std::string> sentence_ids;  // sorted, unique
    std::uint64_t count = 1;                // supporting rows
    std::optional<double> confidence;       // max over supporting rows

    bool is_self_loop() const { return head == tail; }
    bool operator==(const Triple&) const = default;
};

struct Neighbor {
    RelationIndex predicate;
    EntityIndex neighbor;
    Direction direction;  // kOut: concept -> neighbor; kIn: neighbor -> concept
    TripleIndex triple;
};

// semtype -> semantic group, loaded from a two-column TSV.
class SemanticGroupMap {
public:
    static SemanticGroupMap load(const std::string& path);
    void add(std::string semtype, std::string group);
    std::vector<std::string> groups_for(const std::vector<std::string>& semtypes) const;
    bool empty() const { return type_to_group_.empty(); }

private:
    std::map<std::string, std::string> type_to_group_;
};

class KnowledgeGraph;

// Accumulates concepts and triple rows, then freezes them into a graph.
// Duplicate triples merge: counts summed, sentence ids unioned, earliest date
// kept, highest confidence kept. Concept metadata merges by union; the display
// name is the lexicographically smallest non-empty name seen.
class GraphBuilder {
public:
    void add_concept(const Concept& incoming);
    void add_predicate(const std::string& id);
    void add_triple(const TripleRecord& record);
    KnowledgeGraph build() &&;

private:
    struct Key {
        std::string head, predicate, tail;
        auto operator<=>(const Key&) const = default;
    };
    std::map<std::string, Concept> concepts_;
    std::set<std::string> predicates_;
    std::map<Key, TripleRecord> triples_;
};

class KnowledgeGraph {
public:
    KnowledgeGraph() = default;

    std::size_t entity_count() const { return concepts_.size(); }
    std::size_t relation_count() const { return predicates_.size(); }
    std::size_t triple_count() const { return triples_.size(); }
    bool empty() const { return triples_.empty(); }

    const Concept& concept_at(EntityIndex e) const { return concepts_.at(e); }
    const Predicate& predicate_at(RelationIndex r) const { return predicates_.at(r); }
    std::span<const Concept> concepts() const { return concepts_; }
    std::span<const Predicate> predicates() const { return predicates_; }
    std::span<const Triple> triples() const { return triples_; }
    const Triple& triple_at(TripleIndex i) const { return triples_.at(i); }

    std::optional<EntityIndex> find_entity(std::string_view id) const;
    std::optional<RelationIndex> find_relation(std::string_view id) const;
    // Throws DataError for unknown ids.
    EntityIndex entity_index(std::string_view id) const;
    RelationIndex relation_index(std::string_view id) const;

    std::optional<TripleIndex> find(EntityIndex h, RelationIndex r, EntityIndex t) const;
    bool contains(EntityIndex h, RelationIndex r, EntityIndex t) const {
        return find(h, r, t).has_value();
    }

    // Sorted tails of (h, r, ?) and sorted heads of (?, r, t).
    std::span<const EntityIndex> tails(EntityIndex h, RelationIndex r) const;
    std::span<const EntityIndex> heads(EntityIndex t, RelationIndex r) const;
    // Triple indices with the given head / tail.
    std::span<const TripleIndex> outgoing(EntityIndex h) const;
    std::span<const TripleIndex> incoming(EntityIndex t) const;

    std::size_t out_degree(EntityIndex e) const;
    std::size_t in_degree(EntityIndex e) const;
    // Throws DataError for an unknown concept.
    std::size_t degree(std::string_view concept_id, Direction direction) const;

    // Duplicate-free adjacency listing, optionally restricted to predicates.
    std::vector<Neighbor> neighbors(EntityIndex e, const std::set<RelationIndex>* predicates,
                                    Direction direction) const;
    std::vector<Neighbor> neighbors(std::string_view concept_id,
                                    const std::set<std::string>* predicates,
                                    Direction direction) const;

    TripleRecord record(TripleIndex i) const;
    std::vector<TripleRecord> records() const;

    // New graph holding the selected triples; the vocabulary is compacted to
    // concepts/predicates that still occur.
    KnowledgeGraph subgraph(const std::vector<bool>& keep) const;

    // Rebuilds every index from the triple array and compares.
    bool indices_consistent() const;

    bool operator==(const KnowledgeGraph& other) const;

private:
    friend class GraphBuilder;
    void build_indices();

    std::vector<Concept> concepts_;
    std::vector<Predicate> predicates_;
    std::unordered_map<std::string, EntityIndex> entity_lookup_;
    std::unordered_map<std::string, RelationIndex> relation_lookup_;

    std::vector<Triple> triples_;             // sorted (h, r, t)
    std::vector<std::uint32_t> head_offsets_;  // |E|+1 into triples_
    std::vector<TripleIndex> head_perm_;       // identity, kept for span access
    std::vector<EntityIndex> tail_column_;     // triples_[i].tail
    std::vector<std::uint32_t> tail_offsets_;  // |E|+1 into tail_perm_
    std::vector<TripleIndex> tail_perm_;       // sorted (t, r, h)
    std::vector<EntityIndex> head_column_;     // triples_[tail_perm_[i]].head
};

// Column mapping for triple TSV files. head/predicate/tail are required;
// every other column is used when present in the header.
struct TsvSchema {
    std::string head = "head_cui";
    std::string predicate = "predicate";
    std::string tail = "tail_cui";
    std::string head_semtypes = "head_semtypes";
    std::string tail_semtypes = "tail_semtypes";
    std::string date = "date";
    std::string sentence_id = "sentence_id";
    std::string confidence = "confidence";
    std::string count = "count";
    std::string head_name = "head_name";
    std::string tail_name = "tail_name";
    std::string head_semgroups = "head_semgroups";
    std::string tail_semgroups = "tail_semgroups";

    // Applies "role=column" overrides; throws UsageError on an unknown role.
    void set(std::string_view role, std::string column);
};

struct LoadReport {
    std::size_t rows_read = 0;
    std::size_t rows_accepted = 0;
    std::size_t rows_rejected = 0;
    std::map<std::string, std::size_t> rejection_reasons;
};

struct LoadResult {
    KnowledgeGraph graph;
    LoadReport report;
};

// Throws DataError: unreadable file, schema column missing, zero valid rows.
LoadResult load_triples(const std::string& path, const TsvSchema& schema = {},
                        const SemanticGroupMap& semgroups = {});
LoadResult read_triples(std::istream& in, const TsvSchema& schema = {},
                        const SemanticGroupMap& semgroups = {});

// Canonical TSV with every default column; readable by load_triples.
void write_triples(std::ostream& out, const KnowledgeGraph& graph);
void write_records(std::ostream& out, const std::vector<TripleRecord>& records);
// Records without concept metadata; used for held-out sets.
std::vector<TripleRecord> load_records(const std::string& path, const TsvSchema& schema = {});

std::vector<std::string> split(std::string_view text, char sep);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

}  // namespace kgr
