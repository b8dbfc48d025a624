#pragma once

// Open and closed discovery over a pattern chain.
//
// Open: the start is enumerated. One row per start concept; the score is the
// number of distinct concepts bound to intermediate variables. Rows sort by
// score descending, then start id.
// Closed: start and ends are fixed. One row per instantiated path; the score
// is the summed support count of the path triples.
//
// Negations are evaluated per (start, end) binding: a path is dropped when the
// graph holds a negated edge between its own start and end. Paths are simple
// (no concept bound twice).

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "kgr/exec.hpp"
#include "kgr/graph.hpp"
#include "kgr/pattern.hpp"

namespace kgr {

enum class DiscoveryMode { kOpen, kClosed };
std::string_view to_string(DiscoveryMode mode);

struct DiscoveryOptions {
    std::size_t fan_out_cap = 10'000;  // per hop frontier, and paths per open row
    ExecPolicy policy = ExecPolicy::kSerial;
};

struct PathStep {
    std::string head;
    std::string predicate;
    std::string tail;
    bool backward = false;  // traversed against the triple direction
    std::uint64_t count = 1;
    std::vector<std::string> sentence_ids;
};

struct DiscoveryPath {
    std::vector<std::string> nodes;  // one per pattern variable
    std::vector<PathStep> steps;
    std::uint64_t support() const;
};

struct DiscoveryRow {
    std::string start;
    std::string start_name;
    std::vector<std::string> intermediates;  // sorted, distinct
    std::vector<DiscoveryPath> paths;
    double score = 0;
};

struct DiscoveryResult {
    DiscoveryMode mode = DiscoveryMode::kOpen;
    std::vector<DiscoveryRow> rows;
    bool truncated = false;
    std::vector<std::string> warnings;

    std::size_t path_count() const;
};

// Predicates a pattern may name: those in the graph plus the fifteen
// standard repurposing predicates.
std::vector<std::string> known_predicates(const KnowledgeGraph& graph);

// Throws UsageError for an empty `fixed_end`. End ids absent from the graph or
// rejected by the end constraint are skipped with a warning.
DiscoveryResult open_discovery(const KnowledgeGraph& graph, const Pattern& pattern,
                               const std::vector<std::string>& fixed_end,
                               const DiscoveryOptions& options = {});

// Throws DataError for an unknown start and UsageError for an empty `fixed_end`.
DiscoveryResult closed_discovery(const KnowledgeGraph& graph, const Pattern& pattern,
                                 const std::string& fixed_start,
                                 const std::vector<std::string>& fixed_end,
                                 const DiscoveryOptions& options = {});

// "C1 -INHIBITS-> C2 <-CAUSES- C3"
std::string path_text(const DiscoveryPath& path);

// One line per path: row, start, start_name, score, path, sentence_ids.
void write_discovery_tsv(std::ostream& out, const DiscoveryResult& result);
// Rows with nested path arrays; keys in canonical order.
std::string discovery_json(const DiscoveryResult& result, const KnowledgeGraph& graph);

}  // namespace kgr
