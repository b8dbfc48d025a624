#include <doctest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "kgr/error.hpp"
#include "kgr/graph.hpp"
#include "support.hpp"

using namespace kgr;
using kgr::test::data_path;
using kgr::test::make_graph;

TEST_SUITE("graph") {

TEST_CASE("raw rows load with per-reason rejection counts") {
    auto groups = SemanticGroupMap::load(data_path("semgroups.tsv"));
    auto loaded = load_triples(data_path("raw_sample.tsv"), {}, groups);
    const auto& rep = loaded.report;
    CHECK(rep.rows_read == 10);
    CHECK(rep.rows_accepted == 5);
    CHECK(rep.rows_rejected == 5);
    CHECK(rep.rejection_reasons.at("bad date") == 1);
    CHECK(rep.rejection_reasons.at("bad confidence") == 1);
    CHECK(rep.rejection_reasons.at("empty head") == 1);
    CHECK(rep.rejection_reasons.at("bad count") == 1);
    CHECK(rep.rejection_reasons.at("field count mismatch") == 1);

    const auto& g = loaded.graph;
    CHECK(g.triple_count() == 4);
    CHECK(g.entity_count() == 6);
    CHECK(g.indices_consistent());
}

TEST_CASE("duplicate rows merge provenance") {
    auto g = load_triples(data_path("raw_sample.tsv")).graph;
    auto h = g.entity_index("C0144576");
    auto t = g.entity_index("C0021760");
    auto r = g.relation_index("INHIBITS");
    auto i = g.find(h, r, t);
    REQUIRE(i);
    const auto& tr = g.triple_at(*i);
    CHECK(tr.count == 3);
    CHECK(tr.sentence_ids == std::vector<std::string>{"S1", "S2", "S3"});
    CHECK(tr.date->to_string() == "2018-01-15");
    CHECK(*tr.confidence == doctest::Approx(0.9));
    CHECK(g.concept_at(h).name == "Paclitaxel");
    CHECK(g.concept_at(h).semantic_types == std::vector<std::string>{"orch", "phsu"});
}

TEST_CASE("time suffix on a date is ignored") {
    auto g = load_triples(data_path("raw_sample.tsv")).graph;
    auto i = g.find(g.entity_index("C0020336"), g.relation_index("TREATS"),
                    g.entity_index("C5203670"));
    REQUIRE(i);
    CHECK(g.triple_at(*i).date->to_string() == "2020-03-01");
}

TEST_CASE("semantic groups come from the map when the file lacks them") {
    auto groups = SemanticGroupMap::load(data_path("semgroups.tsv"));
    auto g = load_triples(data_path("raw_sample.tsv"), {}, groups).graph;
    CHECK(g.concept_at(g.entity_index("C0144576")).in_group("CHEM"));
    CHECK(g.concept_at(g.entity_index("C5203670")).in_group("DISO"));
    CHECK_FALSE(g.concept_at(g.entity_index("C5203670")).in_group("CHEM"));
}

TEST_CASE("missing schema column and empty input are data errors") {
    TsvSchema s;
    s.set("head", "subject_cui");
    CHECK_THROWS_AS(load_triples(data_path("raw_sample.tsv"), s), DataError);
    CHECK_THROWS_AS(s.set("nonsense", "x"), UsageError);
    std::istringstream only_bad("head_cui\tpredicate\ttail_cui\n\tX\tY\n");
    CHECK_THROWS_AS(read_triples(only_bad), DataError);
    CHECK_THROWS_AS(load_triples("/nonexistent/file.tsv"), DataError);
}

TEST_CASE("schema overrides map renamed columns") {
    std::istringstream in("subj\tpred\tobj\nA\tTREATS\tB\n");
    TsvSchema s;
    s.set("head", "subj");
    s.set("predicate", "pred");
    s.set("tail", "obj");
    auto g = read_triples(in, s).graph;
    CHECK(g.triple_count() == 1);
    CHECK(g.contains(g.entity_index("A"), g.relation_index("TREATS"), g.entity_index("B")));
}

TEST_CASE("adjacency, degrees and neighbor filters") {
    auto g = make_graph({{"A", "TREATS", "B"},
                         {"A", "INHIBITS", "C"},
                         {"C", "CAUSES", "B"},
                         {"B", "CAUSES", "B"},
                         {"D", "TREATS", "B"}});
    auto a = g.entity_index("A"), b = g.entity_index("B"), c = g.entity_index("C");
    CHECK(g.out_degree(a) == 2);
    CHECK(g.in_degree(b) == 4);
    CHECK(g.degree("B", Direction::kBoth) == 5);
    CHECK_THROWS_AS(g.degree("Z", Direction::kIn), DataError);

    auto treats = g.relation_index("TREATS");
    auto heads = g.heads(b, treats);
    CHECK(std::vector<EntityIndex>(heads.begin(), heads.end()) ==
          std::vector<EntityIndex>{a, g.entity_index("D")});
    auto tails = g.tails(a, g.relation_index("INHIBITS"));
    CHECK(std::vector<EntityIndex>(tails.begin(), tails.end()) == std::vector<EntityIndex>{c});

    // The self-loop appears once with direction both.
    auto nb = g.neighbors("B", nullptr, Direction::kBoth);
    CHECK(nb.size() == 4);
    std::set<std::string> only_causes{"CAUSES"};
    CHECK(g.neighbors("B", &only_causes, Direction::kIn).size() == 2);
    CHECK(g.neighbors("B", &only_causes, Direction::kOut).size() == 1);
    CHECK(g.neighbors("A", nullptr, Direction::kIn).empty());
}

TEST_CASE("vocabulary order is independent of insertion order") {
    std::vector<kgr::test::Spo> spo{{"X", "R1", "Y"}, {"Y", "R2", "Z"}, {"Z", "R1", "X"},
                                    {"W", "R3", "X"}, {"X", "R2", "W"}};
    auto g1 = make_graph(spo);
    std::mt19937 rng(7);
    for (int rep = 0; rep < 5; ++rep) {
        std::shuffle(spo.begin(), spo.end(), rng);
        CHECK(make_graph(spo) == g1);
    }
}

TEST_CASE("canonical TSV round-trips") {
    auto groups = SemanticGroupMap::load(data_path("semgroups.tsv"));
    auto g = load_triples(data_path("raw_sample.tsv"), {}, groups).graph;
    std::stringstream buf;
    write_triples(buf, g);
    auto back = read_triples(buf).graph;
    CHECK(back == g);
    CHECK(back.records() == g.records());
}

TEST_CASE("subgraph compacts the vocabulary") {
    auto g = make_graph({{"A", "R", "B"}, {"B", "S", "C"}, {"C", "R", "D"}});
    std::vector<bool> keep(g.triple_count(), false);
    keep[*g.find(g.entity_index("A"), g.relation_index("R"), g.entity_index("B"))] = true;
    auto sub = g.subgraph(keep);
    CHECK(sub.triple_count() == 1);
    CHECK(sub.entity_count() == 2);
    CHECK(sub.relation_count() == 1);
    CHECK(sub.indices_consistent());
    CHECK_FALSE(sub.find_entity("C"));
}

TEST_CASE("indices stay consistent on a random graph") {
    std::mt19937 rng(11);
    std::vector<kgr::test::Spo> spo;
    for (int i = 0; i < 500; ++i)
        spo.emplace_back("E" + std::to_string(rng() % 40), "R" + std::to_string(rng() % 4),
                         "E" + std::to_string(rng() % 40));
    auto g = make_graph(spo);
    CHECK(g.indices_consistent());
    std::size_t out_total = 0, in_total = 0;
    for (EntityIndex e = 0; e < g.entity_count(); ++e) {
        out_total += g.out_degree(e);
        in_total += g.in_degree(e);
        for (auto i : g.outgoing(e)) CHECK(g.triple_at(i).head == e);
        for (auto i : g.incoming(e)) CHECK(g.triple_at(i).tail == e);
    }
    CHECK(out_total == g.triple_count());
    CHECK(in_total == g.triple_count());
}

}  // TEST_SUITE
