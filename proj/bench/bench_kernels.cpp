// Serial vs parallel kernels. Arg 0 = serial, 1 = parallel.

#include <benchmark/benchmark.h>

#include <random>
#include <string>
#include <vector>

#include "kgr/discovery.hpp"
#include "kgr/model.hpp"
#include "kgr/pattern.hpp"
#include "kgr/preprocess.hpp"
#include "kgr/rank.hpp"

using namespace kgr;

namespace {

ExecPolicy policy_of(const benchmark::State& st) {
    return st.range(0) ? ExecPolicy::kParallel : ExecPolicy::kSerial;
}

KnowledgeGraph random_graph(std::size_t entities, std::size_t relations, std::size_t triples,
                            std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    GraphBuilder b;
    for (std::size_t i = 0; i < triples; ++i) {
        TripleRecord r;
        r.head = "N" + std::to_string(rng() % entities);
        r.predicate = "P" + std::to_string(rng() % relations);
        r.tail = "N" + std::to_string(rng() % entities);
        b.add_triple(r);
    }
    return std::move(b).build();
}

const KnowledgeGraph& big_graph() {
    static const KnowledgeGraph g = random_graph(20'000, 8, 200'000, 1);
    return g;
}

ModelState model_for(const KnowledgeGraph& g, ModelKind kind) {
    ModelConfig c;
    c.model = kind;
    c.dim = 100;
    return init_model(c, g);
}

void BM_ScoreAllTails(benchmark::State& st) {
    static const ModelState s = model_for(big_graph(), ModelKind::kTransE);
    std::vector<double> out(s.entities.size());
    EntityIndex h = 0;
    for (auto _ : st) {
        score_all_tails(s, h, 0, out, policy_of(st));
        benchmark::DoNotOptimize(out.data());
        h = (h + 1) % s.entities.size();
    }
    st.SetItemsProcessed(st.iterations() * static_cast<std::int64_t>(out.size()));
}
BENCHMARK(BM_ScoreAllTails)->Arg(0)->Arg(1);

void BM_Evaluate(benchmark::State& st) {
    const auto& g = big_graph();
    static const ModelState s = model_for(g, ModelKind::kDistMult);
    static const KnownTriples known = KnownTriples::from(s, g);
    auto records = g.records();
    records.resize(200);
    for (auto _ : st) {
        auto m = evaluate(s, records, known, TieMode::kOptimistic, policy_of(st));
        benchmark::DoNotOptimize(m.mrr);
    }
}
BENCHMARK(BM_Evaluate)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_Informativeness(benchmark::State& st) {
    const auto& g = big_graph();
    for (auto _ : st) {
        auto r = informativeness(g, policy_of(st));
        benchmark::DoNotOptimize(r.scores.data());
    }
}
BENCHMARK(BM_Informativeness)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_OpenDiscovery(benchmark::State& st) {
    static const KnowledgeGraph g = random_graph(5'000, 4, 60'000, 2);
    static const Pattern p = parse_pattern("A-P0|P1-B AND B-P2-C AND NOT (A-P3-C)");
    const std::vector<std::string> ends{"N1", "N2", "N3", "N4", "N5"};
    DiscoveryOptions opts;
    opts.policy = policy_of(st);
    for (auto _ : st) {
        auto r = open_discovery(g, p, ends, opts);
        benchmark::DoNotOptimize(r.rows.data());
    }
}
BENCHMARK(BM_OpenDiscovery)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
