// Acceptance checks. One line per criterion:
//   PASS <name> (<detail>; <seconds>s)
// Exit status is the number of failing criteria.

#include <bit>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "kgr/checkpoint.hpp"
#include "kgr/discovery.hpp"
#include "kgr/model.hpp"
#include "kgr/pattern.hpp"
#include "kgr/preprocess.hpp"
#include "kgr/rank.hpp"
#include "kgr/training.hpp"
#include "../oracles.hpp"
#include "../support.hpp"

using namespace kgr;
using kgr::test::data_path;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& what) {
        if (ok) return;
        if (pass) detail.clear();
        pass = false;
        detail += (detail.empty() ? "" : "; ") + what;
    }
};

struct Criterion {
    std::string name;
    double budget_seconds;
    std::function<Outcome()> run;
};

std::string fmt(double v, int precision = 4) {
    std::ostringstream s;
    s.precision(precision);
    s << v;
    return s.str();
}

constexpr ModelKind kModels[] = {ModelKind::kTransE, ModelKind::kRotatE, ModelKind::kDistMult,
                                 ModelKind::kComplEx};
constexpr TieMode kTies[] = {TieMode::kOptimistic, TieMode::kPessimistic, TieMode::kMean};

Outcome metric_oracle() {
    Outcome o;
    auto ex = kgr::test::metric_example();
    IndexedTriple t{0, 0, 1};
    const auto head = filtered_rank(ex.state, t, ex.known, Side::kHead).optimistic;
    const auto tail = filtered_rank(ex.state, t, ex.known, Side::kTail).optimistic;
    o.require(head == 3 && tail == 1, "ranks " + fmt(head) + "/" + fmt(tail));
    auto m = evaluate(ex.state, ex.test, ex.known);
    o.require(m.mr == 2.0, "MR " + fmt(m.mr, 17));
    o.require(std::abs(m.mrr - 2.0 / 3.0) <= 1e-15, "MRR " + fmt(m.mrr, 17));
    o.require(m.hits.at(1) == 0.5, "Hits@1 " + fmt(m.hits.at(1)));
    o.require(m.hits.at(3) == 1.0, "Hits@3 " + fmt(m.hits.at(3)));
    if (o.pass) o.detail = "MR=2 MRR=2/3 Hits@1=0.5 Hits@3=1";
    return o;
}

Outcome brute_force() {
    Outcome o;
    std::mt19937_64 rng(2024);
    std::size_t compared = 0, triples = 0;
    for (auto kind : kModels) {
        // 50 triples per model over ten random graphs.
        for (int graph = 0; graph < 10; ++graph) {
            const std::size_t n = 2 + rng() % 19;
            auto s = kgr::test::quantized_model(kind, n, 3, rng());
            std::set<IndexedTriple> known_set;
            const std::size_t edges = rng() % (3 * n + 1);
            for (std::size_t i = 0; i < edges; ++i)
                known_set.insert(
                    {EntityIndex(rng() % n), RelationIndex(rng() % 3), EntityIndex(rng() % n)});
            KnownTriples known(std::vector<IndexedTriple>(known_set.begin(), known_set.end()));
            for (int i = 0; i < 5; ++i) {
                IndexedTriple t{EntityIndex(rng() % n), RelationIndex(rng() % 3),
                                EntityIndex(rng() % n)};
                ++triples;
                for (auto side : {Side::kHead, Side::kTail}) {
                    auto serial = filtered_rank(s, t, known, side);
                    auto parallel = filtered_rank(s, t, known, side, ExecPolicy::kParallel);
                    auto slow = kgr::test::rank_oracle(s, t, known_set, side);
                    for (auto tie : kTies) {
                        ++compared;
                        if (serial.get(tie) != slow.get(tie) || parallel.get(tie) != slow.get(tie))
                            o.require(false, std::string(to_string(kind)) + " mismatch");
                    }
                }
            }
        }
    }
    o.require(triples == 200, "triple count " + std::to_string(triples));
    if (o.pass) o.detail = std::to_string(triples) + " triples, " + std::to_string(compared) + " ranks";
    return o;
}

Outcome gradients() {
    Outcome o;
    double worst = 0;
    std::uint64_t seed = 1;
    for (auto kind : kModels)
        for (auto mode : {LossMode::kMargin, LossMode::kLogSigmoid}) {
            double e = kgr::test::gradient_check(kind, mode, false, 20, seed++);
            if (mode == LossMode::kLogSigmoid)
                e = std::max(e, kgr::test::gradient_check(kind, mode, true, 20, seed++));
            if (kind == ModelKind::kTransE)
                e = std::max(e, kgr::test::gradient_check(kind, mode, false, 20, seed++, Norm::kL2));
            worst = std::max(worst, e);
            o.require(e <= 1e-4, std::string(to_string(kind)) + "/" +
                                     std::string(to_string(mode)) + " error " + fmt(e));
        }
    if (o.pass) o.detail = "max relative error " + fmt(worst, 3);
    return o;
}

struct Learned {
    RankMetrics metrics;
    double seconds;
};

Learned learn(const kgr::test::SplitFixture& f, const ModelConfig& config) {
    auto start = std::chrono::steady_clock::now();
    auto res = train(f.train, {}, config);
    auto known = KnownTriples::from(res.state, f.train, f.test);
    auto m = evaluate(res.state, f.test, known);
    return {m, std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()};
}

Outcome learnability() {
    Outcome o;
    auto transe = learn(kgr::test::planted_treats_fixture(), kgr::test::learnability_transe());
    auto distmult = learn(kgr::test::symmetric_fixture(), kgr::test::learnability_distmult());
    o.require(transe.metrics.hits.at(10) >= 0.8, "TransE Hits@10 " + fmt(transe.metrics.hits.at(10)));
    o.require(transe.metrics.mrr >= 0.4, "TransE MRR " + fmt(transe.metrics.mrr));
    o.require(distmult.metrics.hits.at(10) >= 0.8,
              "DistMult Hits@10 " + fmt(distmult.metrics.hits.at(10)));
    o.require(transe.seconds < 300 && distmult.seconds < 300, "a run exceeded 5 min");
    if (o.pass)
        o.detail = "TransE Hits@10=" + fmt(transe.metrics.hits.at(10)) +
                   " MRR=" + fmt(transe.metrics.mrr) + " (" + fmt(transe.seconds, 3) +
                   "s), DistMult Hits@10=" + fmt(distmult.metrics.hits.at(10)) + " (" +
                   fmt(distmult.seconds, 3) + "s)";
    return o;
}

ModelState random_state(ModelKind kind, std::uint64_t seed) {
    ModelConfig c;
    c.model = kind;
    c.dim = 8;
    c.seed = seed;
    return init_model(c, kgr::test::numbered("E", 12), kgr::test::numbered("R", 3));
}

Outcome model_properties() {
    Outcome o;
    // TransE: a common shift of every entity leaves scores unchanged.
    double drift = 0;
    for (auto norm : {Norm::kL1, Norm::kL2}) {
        auto s = random_state(ModelKind::kTransE, 1);
        s.config.norm = norm;
        auto shifted = s;
        std::mt19937 rng(2);
        std::uniform_real_distribution<double> u(-3, 3);
        std::vector<double> shift(s.config.dim);
        for (auto& v : shift) v = u(rng);
        for (EntityIndex e = 0; e < s.entities.size(); ++e) {
            auto row = shifted.entity(e);
            for (std::size_t i = 0; i < row.size(); ++i) row[i] += shift[i];
        }
        for (EntityIndex h = 0; h < 12; ++h)
            for (RelationIndex r = 0; r < 3; ++r)
                for (EntityIndex t = 0; t < 12; ++t)
                    drift = std::max(drift, std::abs(score(s, h, r, t) - score(shifted, h, r, t)));
    }
    o.require(drift <= 1e-12, "TransE drift " + fmt(drift));

    bool symmetric = true;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        auto s = random_state(ModelKind::kDistMult, seed);
        for (EntityIndex h = 0; h < 12; ++h)
            for (EntityIndex t = 0; t < 12; ++t)
                for (RelationIndex r = 0; r < 3; ++r)
                    symmetric = symmetric && score(s, h, r, t) == score(s, t, r, h);
    }
    o.require(symmetric, "DistMult not symmetric");

    ModelConfig cc;
    cc.model = ModelKind::kComplEx;
    cc.dim = 1;
    auto c = init_model(cc, kgr::test::numbered("E", 2), {"R000"});
    c.entity_emb = {0, 1, 1, 0};
    c.relation_emb = {0, 1};
    o.require(score(c, 0, 0, 1) == -1.0 && score(c, 1, 0, 0) == 1.0, "ComplEx witness");

    auto rs = random_state(ModelKind::kRotatE, 4);
    const std::size_t k = rs.config.dim;
    double modulus = 0;
    for (EntityIndex e = 0; e < rs.entities.size(); ++e)
        for (RelationIndex r = 0; r < rs.relations.size(); ++r) {
            auto h = rs.entity(e);
            auto th = rs.relation(r);
            for (std::size_t i = 0; i < k; ++i) {
                std::complex<double> hc(h[i], h[k + i]);
                modulus = std::max(modulus, std::abs(std::abs(hc * std::polar(1.0, th[i])) - std::abs(hc)));
            }
        }
    o.require(modulus <= 1e-12, "RotatE modulus drift " + fmt(modulus));
    if (o.pass)
        o.detail = "TransE drift " + fmt(drift, 3) + ", DistMult exact, ComplEx -1 vs 1, RotatE " +
                   fmt(modulus, 3);
    return o;
}

Outcome g2_suite() {
    Outcome o;
    using kgr::test::DenseTable;
    const double a[] = {0.25, 0.75}, b[] = {0.5, 0.5}, c[] = {0.2, 0.3, 0.5};
    DenseTable ind(2, 2, 3);
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j)
            for (int k = 0; k < 3; ++k) ind.at(i, j, k) = 80 * a[i] * b[j] * c[k];
    const double zero = g2_table(ContingencyStats::from_cells(ind.sparse()));
    o.require(std::abs(zero) < 1e-9, "independence G2 " + fmt(zero));

    DenseTable w(2, 1, 2);
    w.at(0, 0, 0) = 8;
    w.at(0, 0, 1) = 2;
    w.at(1, 0, 0) = 2;
    w.at(1, 0, 1) = 8;
    auto ws = ContingencyStats::from_cells(w.sparse());
    o.require(std::abs(g2_table(ws) - w.g2(false)) < 1e-9, "worked table G2");
    o.require(std::abs(g2_score(ws, 0, 0, 0) - w.collapse(0, 0, 0).g2(false)) < 1e-9,
              "worked collapsed G2");

    std::mt19937 rng(17);
    double worst = 0, oracle_gap = 0;
    for (int rep = 0; rep < 1000; ++rep) {
        auto t = kgr::test::random_table(rng);
        auto stats = ContingencyStats::from_cells(t.sparse());
        const double g = g2_table(stats);
        worst = std::min(worst, g);
        oracle_gap = std::max(oracle_gap, std::abs(g - t.g2(false)) / std::max(1.0, std::abs(g)));
        for (const auto& [idx, n] : t.sparse())
            worst = std::min(worst, g2_score(stats, idx[0], idx[1], idx[2]));
    }
    o.require(worst >= -1e-9, "negative G2 " + fmt(worst));
    o.require(oracle_gap <= 1e-9, "oracle gap " + fmt(oracle_gap));
    if (o.pass)
        o.detail = "independence " + fmt(zero, 3) + ", worked " + fmt(g2_table(ws), 12) +
                   ", min over 1000 tables " + fmt(worst, 3);
    return o;
}

std::pair<std::string, std::string> filtered_and_scored(const std::string& tsv) {
    std::istringstream in(tsv);
    auto g = read_triples(in).graph;
    auto f = apply_structural_filters(g, FilterConfig::defaults());
    std::ostringstream graph_out, score_out;
    write_triples(graph_out, f);
    write_scores(score_out, f, informativeness(f).scores);
    return {graph_out.str(), score_out.str()};
}

Outcome preprocessing_determinism() {
    Outcome o;
    std::size_t runs = 0;
    for (const char* name : {"discovery_paclitaxel.tsv", "discovery_oxymatrine.tsv", "raw_sample.tsv"}) {
        auto text = kgr::test::read_text(data_path(name));
        auto lines = split(text, '\n');
        while (!lines.empty() && lines.back().empty()) lines.pop_back();
        const std::string header = lines.front();
        std::vector<std::string> body(lines.begin() + 1, lines.end());
        auto reference = filtered_and_scored(text);
        std::mt19937 rng(31);
        for (int rep = 0; rep < 10; ++rep) {
            std::shuffle(body.begin(), body.end(), rng);
            std::string shuffled = header + "\n";
            for (const auto& l : body) shuffled += l + "\n";
            auto got = filtered_and_scored(shuffled);
            ++runs;
            o.require(got.first == reference.first, std::string(name) + " graph differs");
            o.require(got.second == reference.second, std::string(name) + " scores differ");
        }
    }
    if (o.pass) o.detail = std::to_string(runs) + " permutations byte-identical";
    return o;
}

const DiscoveryRow* row_for(const DiscoveryResult& r, const std::string& start) {
    for (const auto& row : r.rows)
        if (row.start == start) return &row;
    return nullptr;
}

Outcome discovery_fixtures() {
    Outcome o;
    const auto text = kgr::test::read_text(data_path("drug_pattern.txt"));
    struct Case {
        const char* name;
        const char* start;
        std::size_t paths;
    };
    std::string counts;
    double slowest = 0;
    for (auto c : {Case{"paclitaxel", "C0144576", 8}, Case{"metoclopramide", "C0025853", 2},
                   Case{"oxymatrine", "C0069468", 6}}) {
        auto t0 = std::chrono::steady_clock::now();
        auto g = load_triples(data_path(std::string("discovery_") + c.name + ".tsv")).graph;
        auto p = parse_pattern(text, known_predicates(g));
        auto ends = p.end_constraint().ids;
        auto closed = closed_discovery(g, p, c.start, ends);
        auto open = open_discovery(g, p, ends);
        slowest = std::max(slowest, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
        const auto* row = row_for(open, c.start);
        o.require(closed.path_count() == c.paths,
                  std::string(c.name) + " closed " + std::to_string(closed.path_count()));
        o.require(row && row->paths.size() == c.paths, std::string(c.name) + " open");
        for (const auto& r : closed.rows)
            for (const auto& path : r.paths)
                for (const auto& s : path.steps)
                    o.require(g.contains(g.entity_index(s.head), g.relation_index(s.predicate),
                                         g.entity_index(s.tail)),
                              "path step not in graph");
        counts += (counts.empty() ? "" : "/") + std::to_string(closed.path_count());
    }

    // Drugs that already treat COVID-19 are excluded.
    auto g = load_triples(data_path("discovery_paclitaxel.tsv")).graph;
    auto p = parse_pattern(text, known_predicates(g));
    o.require(!row_for(open_discovery(g, p, p.end_constraint().ids), "C0020336"),
              "hydroxychloroquine not excluded");
    GraphBuilder b;
    for (const auto& c : g.concepts()) b.add_concept(c);
    for (const auto& r : g.records()) b.add_triple(r);
    b.add_triple(kgr::test::rec("C0144576", "TREATS", "C5203670"));
    auto treated = std::move(b).build();
    o.require(closed_discovery(treated, p, "C0144576", p.end_constraint().ids).rows.empty(),
              "negation did not exclude paclitaxel");
    o.require(slowest < 1.0, "fixture took " + fmt(slowest) + "s");
    if (o.pass) o.detail = counts + " paths, negation sound";
    return o;
}

Outcome time_slice_partition() {
    Outcome o;
    auto g = load_triples(data_path("slice_fixture.tsv")).graph;
    const auto cutoff = *Date::parse("2020-03-11");
    auto key = [](const TripleRecord& r) { return r.head + " " + r.predicate + " " + r.tail; };
    for (auto policy : {UndatedPolicy::kExclude, UndatedPolicy::kTrain}) {
        auto s = time_slice(g, cutoff, policy);
        std::set<std::string> train, test, all;
        for (const auto& r : s.train.records()) {
            train.insert(key(r));
            o.require(!r.date || *r.date <= cutoff, "late triple in train");
            o.require(r.date || policy == UndatedPolicy::kTrain, "undated triple in train");
        }
        for (const auto& r : s.test) {
            test.insert(key(r));
            o.require(r.date && *r.date > cutoff, "early triple in test");
        }
        for (const auto& r : g.records()) all.insert(key(r));
        std::set<std::string> both;
        for (const auto& k : train)
            if (test.count(k)) both.insert(k);
        o.require(both.empty(), "train and test overlap");
        o.require(train.size() + test.size() + s.excluded_undated == all.size(), "union incomplete");
        if (policy == UndatedPolicy::kExclude) {
            o.require(train == std::set<std::string>{"C1 TREATS C9", "C3 INHIBITS C4",
                                                     "C6 INHIBITS C4", "C1 INHIBITS C4"},
                      "train set");
            o.require(test == std::set<std::string>{"C2 TREATS C9", "C4 CAUSES C9", "C7 TREATS C9"},
                      "test set");
            o.require(s.excluded_undated == 1, "undated count");
        }
    }
    if (o.pass) o.detail = "4 train / 3 test / 1 undated at 2020-03-11";
    return o;
}

Outcome checkpoint_round_trip() {
    Outcome o;
    kgr::test::TempDir dir("acceptance");
    std::size_t compared = 0;
    for (auto kind : kModels) {
        auto s = random_state(kind, 21);
        s.epoch = 9;
        const auto path = dir.file(std::string(to_string(kind)) + ".kge");
        save_checkpoint(s, path);
        auto back = load_checkpoint(path, kind);
        std::mt19937 rng(5);
        for (int i = 0; i < 100; ++i) {
            EntityIndex h = rng() % 12, t = rng() % 12;
            RelationIndex r = rng() % 3;
            ++compared;
            o.require(std::bit_cast<std::uint64_t>(score(back, h, r, t)) ==
                          std::bit_cast<std::uint64_t>(score(s, h, r, t)),
                      std::string(to_string(kind)) + " score bits differ");
        }
        o.require(back.config == s.config && back.epoch == 9, "config or epoch lost");
    }
    if (o.pass) o.detail = std::to_string(compared) + " scores bitwise equal";
    return o;
}

}  // namespace

int main() {
    const std::vector<Criterion> criteria = {
        {"metric-oracle", 1, metric_oracle},
        {"brute-force-equivalence", 30, brute_force},
        {"gradient-checks", 60, gradients},
        {"learnability", 600, learnability},
        {"model-properties", 60, model_properties},
        {"g2-suite", 60, g2_suite},
        {"preprocessing-determinism", 60, preprocessing_determinism},
        {"discovery-fixtures", 3, discovery_fixtures},
        {"time-slice-partition", 60, time_slice_partition},
        {"checkpoint-round-trip", 60, checkpoint_round_trip},
    };
    int failures = 0;
    for (const auto& c : criteria) {
        Outcome o;
        auto start = std::chrono::steady_clock::now();
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail = std::string("exception: ") + e.what();
        }
        const double seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (o.pass && seconds >= c.budget_seconds) {
            o.pass = false;
            o.detail += "; over the " + fmt(c.budget_seconds) + "s budget";
        }
        if (!o.pass) ++failures;
        std::printf("%s %s (%s; %.2fs)\n", o.pass ? "PASS" : "FAIL", c.name.c_str(),
                    o.detail.c_str(), seconds);
        std::fflush(stdout);
    }
    return failures;
}
