#include "kgr/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>

#include "kgr/error.hpp"

namespace kgr {

namespace {

std::string trim_copy(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return std::string(s);
}

std::set<std::string> parse_list(std::string_view value) {
    std::set<std::string> out;
    for (const auto& part : split(value, ',')) {
        auto item = trim_copy(part);
        if (!item.empty()) out.insert(item);
    }
    return out;
}

bool parse_bool(const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw UsageError("expected boolean, got: " + v);
}

}  // namespace

FilterConfig FilterConfig::defaults() {
    FilterConfig c;
    c.predicate_whitelist = {"AFFECTS",        "ASSOCIATED_WITH", "AUGMENTS",   "CAUSES",
                             "COEXISTS_WITH",  "COMPLICATES",     "DISRUPTS",   "INHIBITS",
                             "INTERACTS_WITH", "MANIFESTATION_OF", "PREDISPOSES", "PREVENTS",
                             "PRODUCES",       "STIMULATES",      "TREATS"};
    // Activities & Behaviors, Concepts & Ideas, Objects, Occupations,
    // Organizations, Phenomena.
    c.excluded_semantic_groups = {"ACTI", "CONC", "OBJC", "OCCU", "ORGA", "PHEN"};
    c.keep_concepts = {"C5203670", "C5203671", "C5203672", "C5203673",
                       "C5203674", "C5203675", "C5203676"};
    return c;
}

std::set<std::string> load_id_list(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read id list: " + path);
    std::set<std::string> ids;
    std::string line;
    while (std::getline(in, line)) {
        auto id = trim_copy(line);
        if (!id.empty() && id.front() != '#') ids.insert(id);
    }
    return ids;
}

FilterConfig FilterConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read filter config: " + path);
    const auto base = std::filesystem::path(path).parent_path();
    auto resolve = [&](const std::string& p) {
        std::filesystem::path fp(p);
        return (fp.is_relative() ? base / fp : fp).string();
    };
    FilterConfig c = defaults();
    std::string line;
    while (std::getline(in, line)) {
        auto view = trim_copy(line);
        if (view.empty() || view.front() == '#') continue;
        auto eq = view.find('=');
        if (eq == std::string::npos) throw UsageError("malformed filter config line: " + line);
        auto key = trim_copy(std::string_view(view).substr(0, eq));
        auto value = trim_copy(std::string_view(view).substr(eq + 1));
        if (key == "predicates") {
            c.predicate_whitelist = parse_list(value);
        } else if (key == "excluded_groups") {
            c.excluded_semantic_groups = parse_list(value);
        } else if (key == "generic_concepts_file") {
            c.generic_concepts = load_id_list(resolve(value));
        } else if (key == "keep_concepts_file") {
            c.keep_concepts = load_id_list(resolve(value));
        } else if (key == "keep_concepts") {
            c.keep_concepts = parse_list(value);
        } else if (key == "drop_self_loops") {
            c.drop_self_loops = parse_bool(value);
        } else if (key == "confidence_threshold") {
            if (value.empty() || value == "none") {
                c.confidence_threshold.reset();
            } else {
                try {
                    c.confidence_threshold = std::stod(value);
                } catch (const std::exception&) {
                    throw UsageError("bad confidence_threshold: " + value);
                }
            }
        } else {
            throw UsageError("unknown filter config key: " + key);
        }
    }
    c.validate();
    return c;
}

void FilterConfig::validate() const {
    if (confidence_threshold && !(*confidence_threshold >= 0.0 && *confidence_threshold <= 1.0))
        throw UsageError("confidence_threshold must lie in [0, 1]");
}

bool touches_keep(const KnowledgeGraph& graph, const Triple& t, const FilterConfig& config) {
    return config.is_keep(graph.concept_at(t.head).id) || config.is_keep(graph.concept_at(t.tail).id);
}

KnowledgeGraph apply_structural_filters(const KnowledgeGraph& graph, const FilterConfig& config) {
    config.validate();
    auto excluded_group = [&](const Concept& c) {
        for (const auto& g : c.semantic_groups)
            if (config.excluded_semantic_groups.count(g)) return true;
        return false;
    };
    std::vector<bool> keep(graph.triple_count(), false);
    const auto triples = graph.triples();
    for (std::size_t i = 0; i < triples.size(); ++i) {
        const auto& t = triples[i];
        if (touches_keep(graph, t, config)) {
            keep[i] = true;
            continue;
        }
        const auto& head = graph.concept_at(t.head);
        const auto& tail = graph.concept_at(t.tail);
        if (!config.predicate_whitelist.count(graph.predicate_at(t.predicate).id)) continue;
        if (excluded_group(head) || excluded_group(tail)) continue;
        if (config.is_generic(head.id) && config.is_generic(tail.id)) continue;
        if (config.drop_self_loops && t.is_self_loop()) continue;
        // Rows without a confidence value pass.
        if (config.confidence_threshold && t.confidence &&
            *t.confidence < *config.confidence_threshold)
            continue;
        keep[i] = true;
    }
    return graph.subgraph(keep);
}

// ---------------------------------------------------------------------------
// Contingency statistics and G^2

void ContingencyStats::add(std::uint32_t i, std::uint32_t j, std::uint32_t k, double n) {
    if (n < 0) throw DataError("negative contingency cell");
    auto [it, inserted] = cell_index_.try_emplace({i, j, k}, cells_.size());
    if (inserted)
        cells_.push_back({i, j, k, n});
    else
        cells_[it->second].n += n;
    n_i_[i] += n;
    n_j_[j] += n;
    n_k_[k] += n;
    n_ij_[key(i, j)] += n;
    n_ik_[key(i, k)] += n;
    n_jk_[key(j, k)] += n;
    total_ += n;
}

ContingencyStats ContingencyStats::from_graph(const KnowledgeGraph& graph) {
    ContingencyStats s;
    for (const auto& t : graph.triples())
        s.add(t.head, t.predicate, t.tail, static_cast<double>(t.count));
    return s;
}

ContingencyStats ContingencyStats::from_cells(
    const std::vector<std::pair<std::array<std::uint32_t, 3>, double>>& cells) {
    ContingencyStats s;
    for (const auto& [idx, n] : cells) s.add(idx[0], idx[1], idx[2], n);
    return s;
}

double ContingencyStats::observed(std::uint32_t i, std::uint32_t j, std::uint32_t k) const {
    auto it = cell_index_.find({i, j, k});
    return it == cell_index_.end() ? 0.0 : cells_[it->second].n;
}

double ContingencyStats::expected(std::uint32_t i, std::uint32_t j, std::uint32_t k,
                                  ExpectationModel model) const {
    const double t2 = total_ * total_;
    if (model == ExpectationModel::kIndependence)
        return head_marginal(i) * predicate_marginal(j) * tail_marginal(k) / t2;
    return predicate_tail(j, k) * head_tail(i, k) * head_predicate(i, j) / t2;
}

double g2_table(const ContingencyStats& stats, ExpectationModel model) {
    if (stats.total() <= 0) throw NumericError("G^2 undefined for an empty table (T = 0)");
    double sum = 0.0;
    for (const auto& c : stats.cells()) {
        if (c.n <= 0) continue;
        sum += c.n * std::log(c.n / stats.expected(c.i, c.j, c.k, model));
    }
    return 2.0 * sum;
}

std::array<double, 8> collapse_2x2x2(const ContingencyStats& s, std::uint32_t i, std::uint32_t j,
                                     std::uint32_t k) {
    const double n = s.observed(i, j, k);
    const double nij = s.head_predicate(i, j);
    const double nik = s.head_tail(i, k);
    const double njk = s.predicate_tail(j, k);
    const double ni = s.head_marginal(i);
    const double nj = s.predicate_marginal(j);
    const double nk = s.tail_marginal(k);
    const double t = s.total();
    std::array<double, 8> c{};
    c[0b111] = n;
    c[0b110] = nij - n;
    c[0b101] = nik - n;
    c[0b011] = njk - n;
    c[0b100] = ni - nij - nik + n;
    c[0b010] = nj - nij - njk + n;
    c[0b001] = nk - nik - njk + n;
    c[0b000] = t - ni - nj - nk + nij + nik + njk - n;
    for (auto& v : c) v = std::max(v, 0.0);
    return c;
}

double g2_score(const ContingencyStats& stats, std::uint32_t i, std::uint32_t j, std::uint32_t k,
                ExpectationModel model) {
    if (stats.total() <= 0) throw NumericError("G^2 undefined for an empty table (T = 0)");
    if (stats.observed(i, j, k) <= 0)
        throw NumericError("G^2 queried for a cell with zero observations");
    const auto c = collapse_2x2x2(stats, i, j, k);
    const double t = stats.total();

    // Marginals of the collapsed table; a/b/c select the head/pred/tail bit.
    auto bit = [](int idx, int b) { return (idx >> b) & 1; };
    double m1[3][2] = {};  // one-dimensional: [axis][value]
    double m2[3][2][2] = {};  // two-dimensional: [dropped axis][x][y]
    for (int idx = 0; idx < 8; ++idx) {
        const int h = bit(idx, 2), p = bit(idx, 1), tl = bit(idx, 0);
        m1[0][h] += c[idx];
        m1[1][p] += c[idx];
        m1[2][tl] += c[idx];
        m2[0][p][tl] += c[idx];  // sum over head
        m2[1][h][tl] += c[idx];  // sum over predicate
        m2[2][h][p] += c[idx];   // sum over tail
    }
    double sum = 0.0;
    for (int idx = 0; idx < 8; ++idx) {
        if (c[idx] <= 0) continue;
        const int h = bit(idx, 2), p = bit(idx, 1), tl = bit(idx, 0);
        double m = model == ExpectationModel::kIndependence
                       ? m1[0][h] * m1[1][p] * m1[2][tl] / (t * t)
                       : m2[0][p][tl] * m2[1][h][tl] * m2[2][h][p] / (t * t);
        sum += c[idx] * std::log(c[idx] / m);
    }
    return 2.0 * sum;
}

// ---------------------------------------------------------------------------
// Informativeness

namespace {

struct Range {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    void add(double v) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    bool degenerate() const { return !(hi > lo); }
    double normalize(double v) const { return degenerate() ? 0.0 : (v - lo) / (hi - lo); }
};

}  // namespace

InformativenessResult informativeness(const KnowledgeGraph& graph, ExecPolicy policy,
                                      ExpectationModel model) {
    if (graph.empty()) throw DataError("informativeness requires a non-empty graph");
    const auto stats = ContingencyStats::from_graph(graph);
    const auto triples = graph.triples();
    const std::int64_t n = static_cast<std::int64_t>(triples.size());

    InformativenessResult result;
    result.scores.resize(triples.size());
    auto& scores = result.scores;

    auto score_one = [&](std::int64_t idx) {
        const auto& t = triples[idx];
        auto& s = scores[idx];
        s.g2 = g2_score(stats, t.head, t.predicate, t.tail, model);
        s.k_out = static_cast<double>(graph.out_degree(t.head));
        s.k_in = static_cast<double>(graph.in_degree(t.tail));
    };
    if (policy == ExecPolicy::kParallel) {
#pragma omp parallel for schedule(static)
        for (std::int64_t idx = 0; idx < n; ++idx) score_one(idx);
    } else {
        for (std::int64_t idx = 0; idx < n; ++idx) score_one(idx);
    }

    Range g2, kin, kout;
    for (const auto& s : scores) {
        g2.add(s.g2);
        kin.add(s.k_in);
        kout.add(s.k_out);
    }
    if (g2.degenerate()) result.warnings.push_back("G^2 is constant; g2_norm set to 0");
    if (kin.degenerate()) result.warnings.push_back("k_in is constant; k_in_norm set to 0");
    if (kout.degenerate()) result.warnings.push_back("k_out is constant; k_out_norm set to 0");
    for (auto& s : scores) {
        s.g2_norm = g2.normalize(s.g2);
        s.k_in_norm = kin.normalize(s.k_in);
        s.k_out_norm = kout.normalize(s.k_out);
        s.combined = s.k_in_norm + s.k_out_norm + s.g2_norm;
    }
    return result;
}

void write_scores(std::ostream& out, const KnowledgeGraph& graph,
                  const std::vector<InformativenessScore>& scores) {
    out << "head\tpredicate\ttail\tg2\tk_in_norm\tk_out_norm\tg2_norm\tcombined\n";
    std::ostringstream line;
    line.precision(17);
    const auto triples = graph.triples();
    for (std::size_t i = 0; i < triples.size(); ++i) {
        const auto& t = triples[i];
        const auto& s = scores.at(i);
        line.str({});
        line << graph.concept_at(t.head).id << '\t' << graph.predicate_at(t.predicate).id << '\t'
             << graph.concept_at(t.tail).id << '\t' << s.g2 << '\t' << s.k_in_norm << '\t'
             << s.k_out_norm << '\t' << s.g2_norm << '\t' << s.combined << '\n';
        out << line.str();
    }
}

std::vector<double> read_combined_scores(const std::string& path, const KnowledgeGraph& graph) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read score file: " + path);
    std::string line;
    std::getline(in, line);
    std::vector<double> scores(graph.triple_count(), std::numeric_limits<double>::quiet_NaN());
    std::size_t seen = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto f = split(line, '\t');
        if (f.size() < 8) throw DataError("malformed score line: " + line);
        auto h = graph.find_entity(f[0]);
        auto r = graph.find_relation(f[1]);
        auto t = graph.find_entity(f[2]);
        if (!h || !r || !t) continue;
        auto idx = graph.find(*h, *r, *t);
        if (!idx) continue;
        scores[*idx] = std::stod(f[7]);
        ++seen;
    }
    if (seen != graph.triple_count())
        throw DataError("score file does not cover every triple of the graph");
    return scores;
}

KnowledgeGraph prune_by_score(const KnowledgeGraph& graph, const std::vector<double>& scores,
                              std::size_t budget, const std::set<std::string>& keep) {
    if (scores.size() != graph.triple_count())
        throw UsageError("score vector does not match graph");
    const auto triples = graph.triples();
    std::vector<bool> selected(triples.size(), false);
    std::vector<TripleIndex> rest;
    std::size_t kept = 0;
    for (TripleIndex i = 0; i < triples.size(); ++i) {
        const auto& t = triples[i];
        if (keep.count(graph.concept_at(t.head).id) || keep.count(graph.concept_at(t.tail).id)) {
            selected[i] = true;
            ++kept;
        } else {
            rest.push_back(i);
        }
    }
    if (budget < kept)
        throw UsageError("budget " + std::to_string(budget) + " is smaller than the " +
                         std::to_string(kept) + " keep-list triples");
    // Triple index order equals (head id, predicate id, tail id) order.
    std::sort(rest.begin(), rest.end(), [&](TripleIndex a, TripleIndex b) {
        if (scores[a] != scores[b]) return scores[a] < scores[b];
        return a < b;
    });
    const std::size_t take = std::min(budget - kept, rest.size());
    for (std::size_t i = 0; i < take; ++i) selected[rest[i]] = true;
    return graph.subgraph(selected);
}

TrainTestSplit time_slice(const KnowledgeGraph& graph, const Date& cutoff, UndatedPolicy undated) {
    TrainTestSplit split;
    split.cutoff = cutoff;
    const auto triples = graph.triples();
    std::vector<bool> train(triples.size(), false);
    std::size_t train_count = 0;
    for (TripleIndex i = 0; i < triples.size(); ++i) {
        const auto& t = triples[i];
        if (!t.date) {
            if (undated == UndatedPolicy::kTrain) {
                train[i] = true;
                ++train_count;
            } else {
                ++split.excluded_undated;
            }
        } else if (*t.date <= cutoff) {
            train[i] = true;
            ++train_count;
        } else {
            split.test.push_back(graph.record(i));
        }
    }
    if (train_count == 0)
        throw DataError("time slice at " + cutoff.to_string() + " leaves the training side empty");
    if (split.test.empty())
        throw DataError("time slice at " + cutoff.to_string() + " leaves the test side empty");
    split.train = graph.subgraph(train);
    return split;
}

}  // namespace kgr
