#include <doctest.h>

#include <bit>
#include <cmath>
#include <complex>
#include <numbers>
#include <random>
#include <sstream>

#include "kgr/checkpoint.hpp"
#include "kgr/error.hpp"
#include "kgr/model.hpp"
#include "kgr/training.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace kgr;
using kgr::test::make_graph;
using kgr::test::numbered;

namespace {

ModelState tiny(ModelKind kind, std::size_t dim, std::size_t n = 3, std::size_t m = 1) {
    ModelConfig c;
    c.model = kind;
    c.dim = dim;
    return init_model(c, numbered("E", n), numbered("R", m));
}

ModelState random_state(ModelKind kind, std::uint64_t seed, std::size_t dim = 8) {
    ModelConfig c;
    c.model = kind;
    c.dim = dim;
    c.seed = seed;
    return init_model(c, numbered("E", 12), numbered("R", 3));
}

constexpr ModelKind kAllModels[] = {ModelKind::kTransE, ModelKind::kRotatE, ModelKind::kDistMult,
                                    ModelKind::kComplEx};

}  // namespace

TEST_SUITE("model") {

TEST_CASE("worked scores") {
    auto s = tiny(ModelKind::kTransE, 2);
    s.entity_emb = {1, 0, 1, 1, 0, 0};
    s.relation_emb = {0, 1};
    CHECK(score(s, 0, 0, 1) == 0.0);
    CHECK(score(s, 0, 0, 2) == -2.0);
    s.config.norm = Norm::kL2;
    CHECK(score(s, 0, 0, 2) == doctest::Approx(-std::sqrt(2.0)));

    auto r = tiny(ModelKind::kRotatE, 1, 2);
    r.entity_emb = {1, 0, 0, 1};  // 1+0i, 0+1i
    r.relation_emb = {std::numbers::pi / 2};
    CHECK(std::abs(score(r, 0, 0, 1)) < 1e-15);

    auto d = tiny(ModelKind::kDistMult, 2, 2);
    d.entity_emb = {1, 2, 3, 4};
    d.relation_emb = {1, 0};
    CHECK(score(d, 0, 0, 1) == 3.0);

    auto c = tiny(ModelKind::kComplEx, 1, 2);
    c.entity_emb = {0, 1, 1, 0};  // i, 1
    c.relation_emb = {1, 0};
    CHECK(score(c, 0, 0, 0) == 1.0);  // Re(i * 1 * conj(i))
    CHECK(score(c, 0, 0, 1) == 0.0);  // Re(i * 1 * 1)

    CHECK_THROWS_AS(score(d, 5, 0, 0), std::out_of_range);
}

TEST_CASE("initialization") {
    ModelConfig c;
    c.dim = 400;
    c.seed = 9;
    auto a = init_model(c, numbered("E", 10), numbered("R", 2));
    auto b = init_model(c, numbered("E", 10), numbered("R", 2));
    CHECK(a.entity_emb == b.entity_emb);
    CHECK(a.relation_emb == b.relation_emb);
    CHECK(a.entity_emb.size() == 10 * 400);
    const double bound = 6.0 / std::sqrt(400.0);
    for (double v : a.entity_emb) CHECK(std::abs(v) <= bound);

    c.seed = 10;
    CHECK(init_model(c, numbered("E", 10), numbered("R", 2)).entity_emb != a.entity_emb);

    c.model = ModelKind::kRotatE;
    c.dim = 5;
    auto r = init_model(c, numbered("E", 4), numbered("R", 2));
    CHECK(r.entity_width() == 10);
    CHECK(r.relation_width() == 5);
    for (double v : r.relation_emb) {
        CHECK(v >= -std::numbers::pi);
        CHECK(v < std::numbers::pi);
    }
    c.model = ModelKind::kComplEx;
    CHECK(init_model(c, numbered("E", 4), numbered("R", 2)).relation_width() == 10);

    c.dim = 0;
    CHECK_THROWS_AS(init_model(c, numbered("E", 4), numbered("R", 2)), UsageError);
    c.dim = 4;
    CHECK_THROWS_AS(init_model(c, {}, numbered("R", 2)), UsageError);
}

TEST_CASE("config validation and parsing") {
    ModelConfig c;
    CHECK_NOTHROW(c.validate());
    c.learning_rate = 0;
    CHECK_THROWS_AS(c.validate(), UsageError);
    c = {};
    c.adversarial_temperature = -1;
    CHECK_THROWS_AS(c.validate(), UsageError);
    c = {};
    c.batch_size = 0;
    CHECK_THROWS_AS(c.validate(), UsageError);
    CHECK(parse_model_kind("complex") == ModelKind::kComplEx);
    CHECK(parse_model_kind("TransE") == ModelKind::kTransE);
    CHECK_FALSE(parse_model_kind("stelp"));
    CHECK(parse_norm("l2") == Norm::kL2);
    CHECK(parse_loss_mode("logsigmoid") == LossMode::kLogSigmoid);
}

TEST_CASE("TransE is translation invariant") {
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
            for (EntityIndex t = 0; t < 12; ++t)
                CHECK(std::abs(score(s, h, 1, t) - score(shifted, h, 1, t)) <= 1e-12);
    }
}

TEST_CASE("DistMult is symmetric") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        auto s = random_state(ModelKind::kDistMult, seed);
        for (EntityIndex h = 0; h < 12; ++h)
            for (EntityIndex t = 0; t < 12; ++t)
                for (RelationIndex r = 0; r < 3; ++r) CHECK(score(s, h, r, t) == score(s, t, r, h));
    }
}

TEST_CASE("ComplEx can score a triple and its reverse differently") {
    auto c = tiny(ModelKind::kComplEx, 1, 2);
    c.entity_emb = {0, 1, 1, 0};
    c.relation_emb = {0, 1};  // r = i
    // Re(i * i * conj(1)) = -1 ; Re(1 * i * conj(i)) = 1
    CHECK(score(c, 0, 0, 1) == -1.0);
    CHECK(score(c, 1, 0, 0) == 1.0);
}

TEST_CASE("RotatE rotation preserves element modulus") {
    auto s = random_state(ModelKind::kRotatE, 4);
    const std::size_t k = s.config.dim;
    for (EntityIndex e = 0; e < s.entities.size(); ++e)
        for (RelationIndex r = 0; r < s.relations.size(); ++r) {
            auto h = s.entity(e);
            auto th = s.relation(r);
            for (std::size_t i = 0; i < k; ++i) {
                std::complex<double> hc(h[i], h[k + i]);
                auto rotated = hc * std::polar(1.0, th[i]);
                CHECK(std::abs(std::abs(rotated) - std::abs(hc)) < 1e-12);
            }
        }
    // A rotated copy of h scores as a perfect match.
    auto t = s.entity(1);
    auto h = s.entity(0);
    auto th = s.relation(0);
    for (std::size_t i = 0; i < k; ++i) {
        auto rotated = std::complex<double>(h[i], h[k + i]) * std::polar(1.0, th[i]);
        t[i] = rotated.real();
        t[k + i] = rotated.imag();
    }
    CHECK(std::abs(score(s, 0, 0, 1)) < 1e-12);
}

TEST_CASE("score_all matches pointwise scores, serial and parallel") {
    for (auto kind : kAllModels) {
        auto s = random_state(kind, 6);
        std::vector<double> tails(12), heads(12), ptails(12);
        score_all_tails(s, 3, 2, tails);
        score_all_tails(s, 3, 2, ptails, ExecPolicy::kParallel);
        score_all_heads(s, 1, 5, heads);
        for (EntityIndex e = 0; e < 12; ++e) {
            CHECK(tails[e] == score(s, 3, 2, e));
            CHECK(ptails[e] == tails[e]);
            CHECK(heads[e] == score(s, e, 1, 5));
        }
    }
}

TEST_CASE("TransE renormalization projects to the unit sphere") {
    auto s = random_state(ModelKind::kTransE, 8);
    renormalize_entity(s, 2);
    double n = 0;
    for (double v : s.entity(2)) n += v * v;
    CHECK(n == doctest::Approx(1.0));
}

TEST_CASE("state index and finiteness") {
    auto s = random_state(ModelKind::kDistMult, 1);
    CHECK(s.index(kgr::test::rec("E001", "R002", "E011")) == IndexedTriple{1, 2, 11});
    CHECK_FALSE(s.index(kgr::test::rec("E001", "R009", "E011")));
    CHECK(s.all_finite());
    s.entity_emb[3] = std::nan("");
    CHECK_FALSE(s.all_finite());
}

}  // TEST_SUITE

TEST_SUITE("gradients") {

TEST_CASE("analytic gradients match central differences") {
    for (auto kind : kAllModels)
        for (auto mode : {LossMode::kMargin, LossMode::kLogSigmoid})
            for (bool adv : {false, true}) {
                if (mode == LossMode::kMargin && adv) continue;
                CAPTURE(to_string(kind));
                CAPTURE(to_string(mode));
                CAPTURE(adv);
                CHECK(kgr::test::gradient_check(kind, mode, adv, 20, 100) <= 1e-4);
            }
    CHECK(kgr::test::gradient_check(ModelKind::kTransE, LossMode::kMargin, false, 20, 5, Norm::kL2) <=
          1e-4);
    CHECK(kgr::test::gradient_check(ModelKind::kTransE, LossMode::kLogSigmoid, true, 20, 6,
                                    Norm::kL2) <= 1e-4);
}

TEST_CASE("satisfied margins give zero loss and zero gradient") {
    auto s = tiny(ModelKind::kDistMult, 1, 3);
    s.entity_emb = {1, 1, -1};
    s.relation_emb = {3};
    // s(pos) = 3, s(neg) = -3, margin 1
    std::vector<CorruptionSet> batch{{{0, 0, 1}, {{0, 0, 2}}, 0}};
    s.config.margin = 1;
    auto lr = loss_and_grad(s, batch, LossMode::kMargin);
    CHECK(lr.loss == 0.0);
    CHECK(lr.grad.all_zero());
}

TEST_CASE("adversarial weights form a softmax") {
    std::vector<double> sn{1.0, 2.0, -4.0, 0.5};
    auto w = adversarial_weights(sn, 0.5);
    double total = 0;
    for (double v : w) total += v;
    CHECK(total == doctest::Approx(1.0));
    CHECK(w[1] > w[0]);
    CHECK(w[0] > w[3]);
    CHECK(w[3] > w[2]);
    auto big = adversarial_weights(std::vector<double>{1000, 999}, 1.0);
    CHECK(big[0] == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))));
}

TEST_CASE("non-finite loss names the triple") {
    auto s = tiny(ModelKind::kDistMult, 1, 3);
    s.entity_emb = {std::numeric_limits<double>::infinity(), 1, 1};
    s.relation_emb = {1};
    std::vector<CorruptionSet> batch{{{0, 0, 1}, {{2, 0, 1}}, 1}};
    try {
        (void)loss_and_grad(s, batch, LossMode::kLogSigmoid);
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find("E000") != std::string::npos);
    }
}

}  // TEST_SUITE

TEST_SUITE("sampling") {

TEST_CASE("negatives avoid known triples") {
    // Every (x, r, E000) is known except x = E003.
    std::vector<IndexedTriple> all{{0, 0, 0}, {1, 0, 0}, {2, 0, 0}, {4, 0, 0}};
    KnownTriples known(all);
    std::mt19937_64 rng(1);
    std::vector<IndexedTriple> batch{{1, 0, 0}};
    SamplingStats stats;
    auto sets = sample_negatives(known, 5, batch, 50, rng, &stats);
    REQUIRE(sets.size() == 1);
    CHECK(sets[0].negatives.size() == 50);
    std::size_t heads = 0;
    for (const auto& n : sets[0].negatives) {
        CHECK_FALSE(known.contains(n));
        CHECK(n != batch[0]);
        const bool head_side = n.tail == 0 && n.head != 1;
        if (head_side) {
            CHECK(n.head == 3);
            ++heads;
        } else {
            CHECK(n.head == 1);
        }
    }
    CHECK(heads == sets[0].head_corruptions);
    CHECK(stats.accepted_after_cap == 0);
}

TEST_CASE("sampling is reproducible and falls back after the attempt cap") {
    std::vector<IndexedTriple> all;
    for (EntityIndex a = 0; a < 3; ++a)
        for (EntityIndex b = 0; b < 3; ++b) all.push_back({a, 0, b});
    KnownTriples known(all);
    std::vector<IndexedTriple> batch{{0, 0, 1}, {2, 0, 2}};
    std::mt19937_64 r1(4), r2(4);
    auto a = sample_negatives(known, 3, batch, 5, r1);
    auto b = sample_negatives(known, 3, batch, 5, r2);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].negatives == b[i].negatives);

    // Every corruption is known: the cap forces acceptance.
    std::mt19937_64 r3(4);
    SamplingStats stats;
    auto c = sample_negatives(known, 3, batch, 5, r3, &stats);
    CHECK(c[0].negatives.size() == 5);
    CHECK(stats.accepted_after_cap == 10);
}

}  // TEST_SUITE

TEST_SUITE("training") {

TEST_CASE("loss falls on a toy graph") {
    auto g = make_graph({{"A", "R", "B"}, {"B", "R", "C"}, {"C", "R", "D"},
                         {"D", "R", "E"}, {"E", "R", "F"}, {"A", "S", "F"}});
    for (auto kind : kAllModels) {
        ModelConfig c;
        c.model = kind;
        c.dim = 8;
        c.max_epochs = 200;
        c.learning_rate = 0.05;
        c.batch_size = 2;
        c.seed = 3;
        if (kind != ModelKind::kTransE) c.loss = LossMode::kLogSigmoid;
        auto res = train(g, {}, c);
        REQUIRE(res.log.size() == 200);
        CAPTURE(to_string(kind));
        CHECK(res.log.back().loss < res.log.front().loss);
        CHECK(res.state.epoch == 200);
        CHECK(res.state.all_finite());
    }
}

TEST_CASE("zero epochs returns the initial state") {
    auto g = make_graph({{"A", "R", "B"}, {"B", "R", "C"}});
    ModelConfig c;
    c.dim = 4;
    c.max_epochs = 0;
    auto res = train(g, {}, c);
    auto init = init_model(c, g);
    CHECK(res.state.entity_emb == init.entity_emb);
    CHECK(res.state.epoch == 0);
    CHECK(res.log.empty());
}

TEST_CASE("seeded training is deterministic and resumable") {
    auto g = make_graph({{"A", "R", "B"}, {"B", "R", "C"}, {"C", "S", "A"}, {"D", "R", "A"}});
    ModelConfig c;
    c.dim = 6;
    c.max_epochs = 20;
    c.batch_size = 2;
    c.seed = 12;
    auto a = train(g, {}, c);
    auto b = train(g, {}, c);
    CHECK(a.state.entity_emb == b.state.entity_emb);
    CHECK(a.state.relation_emb == b.state.relation_emb);

    c.max_epochs = 10;
    auto half = train(g, {}, c);
    auto resumed = train_from(half.state, g, {});
    CHECK(resumed.state.epoch == 20);
    CHECK(resumed.state.entity_emb == a.state.entity_emb);
}

TEST_CASE("large TransE configuration runs") {
    auto g = make_graph({{"A", "R", "B"}, {"B", "R", "C"}, {"C", "R", "A"}});
    ModelConfig c;
    c.model = ModelKind::kTransE;
    c.dim = 400;
    c.norm = Norm::kL1;
    c.learning_rate = 0.01;
    c.regularization = 2e-8;
    c.max_epochs = 2;
    auto res = train(g, {}, c);
    CHECK(res.state.entity_emb.size() == 3 * 400);
}

TEST_CASE("validation tracks the best epoch") {
    auto f = kgr::test::symmetric_fixture();
    auto c = kgr::test::learnability_distmult();
    c.max_epochs = 30;
    c.eval_every = 10;
    c.valid_cap = 50;
    auto res = train(f.train, f.test, c);
    CHECK(res.best_valid_mrr.has_value());
    std::size_t evals = 0;
    double best = 0;
    for (const auto& e : res.log)
        if (e.valid_mrr) {
            ++evals;
            best = std::max(best, *e.valid_mrr);
        }
    CHECK(evals == 3);
    CHECK(*res.best_valid_mrr == best);
    CHECK(res.state.epoch == res.best_epoch);

    std::ostringstream log;
    write_training_log(log, res.log);
    CHECK(log.str().rfind("epoch\tloss\tvalid_MRR\n", 0) == 0);
}

TEST_CASE("divergence reports the last good state") {
    auto g = make_graph({{"A", "R", "B"}, {"B", "R", "C"}, {"C", "R", "A"}});
    ModelConfig c;
    c.model = ModelKind::kDistMult;
    c.dim = 4;
    c.learning_rate = 1e6;
    c.loss = LossMode::kMargin;
    c.margin = 10;
    c.max_epochs = 200;
    c.batch_size = 1;
    try {
        (void)train(g, {}, c);
        FAIL("expected divergence");
    } catch (const TrainingDiverged& e) {
        CHECK(e.last_good().all_finite());
    }
}

TEST_CASE("validation carve is seeded and disjoint") {
    std::vector<kgr::test::Spo> spo;
    for (int i = 0; i < 100; ++i) spo.emplace_back("E" + std::to_string(i), "R", "E" + std::to_string(i + 1));
    auto g = make_graph(spo);
    auto [train_g, valid] = carve_validation(g, 0.05, 3);
    CHECK(valid.size() == 5);
    CHECK(train_g.triple_count() == 95);
    for (const auto& r : valid) {
        auto h = train_g.find_entity(r.head), t = train_g.find_entity(r.tail);
        const bool present = h && t && train_g.contains(*h, 0, *t);
        CHECK_FALSE(present);
    }
    CHECK(carve_validation(g, 0.05, 3).second == valid);
    CHECK_THROWS_AS(carve_validation(g, 1.0, 3), UsageError);
}

}  // TEST_SUITE

TEST_SUITE("grid") {

TEST_CASE("full lattice sizes") {
    ModelConfig base;
    CHECK(GridAxes::full_lattice(ModelKind::kTransE).expand(base).size() == 3 * 4 * 2 * 2 * 4 * 2);
    CHECK(GridAxes::full_lattice(ModelKind::kDistMult).expand(base).size() == 192);
    auto cells = GridAxes::full_lattice(ModelKind::kTransE).expand(base);
    CHECK(cells.front().learning_rate == 0.001);
    CHECK(cells.front().norm == Norm::kL1);
    CHECK(cells[1].norm == Norm::kL2);
}

TEST_CASE("one cell grid returns that cell") {
    auto g = make_graph({{"A", "R", "B"}, {"B", "R", "C"}, {"C", "R", "D"}});
    ModelConfig c;
    c.dim = 4;
    c.max_epochs = 5;
    std::vector<TripleRecord> valid{kgr::test::rec("A", "R", "C")};
    auto res = grid_search(g, valid, {c});
    CHECK(res.best == c);
    CHECK(res.cells.size() == 1);
    CHECK_THROWS_AS(grid_search(g, valid, {}), UsageError);
}

TEST_CASE("trained cell beats an untrained one") {
    auto f = kgr::test::symmetric_fixture();
    auto trained = kgr::test::learnability_distmult();
    trained.max_epochs = 40;
    trained.eval_every = 40;
    trained.valid_cap = 100;
    auto idle = trained;
    idle.max_epochs = 0;
    auto res = grid_search(f.train, f.test, {idle, trained});
    CHECK(res.best == trained);
    CHECK(res.cells.size() == 2);

    std::ostringstream out;
    write_grid_table(out, res);
    CHECK(out.str().find("valid_MRR") != std::string::npos);
}

TEST_CASE("failing cells are recorded and skipped") {
    auto g = make_graph({{"A", "R", "B"}, {"B", "R", "C"}, {"C", "R", "A"}});
    ModelConfig good;
    good.dim = 4;
    good.max_epochs = 3;
    ModelConfig bad = good;
    bad.model = ModelKind::kDistMult;
    bad.learning_rate = 1e6;
    bad.margin = 10;
    bad.batch_size = 1;
    bad.max_epochs = 200;
    std::vector<TripleRecord> valid{kgr::test::rec("A", "R", "C")};
    auto res = grid_search(g, valid, {bad, good});
    CHECK(res.best == good);
    CHECK_FALSE(res.cells[0].error.empty());
    CHECK_THROWS_AS(grid_search(g, valid, {bad}), NumericError);
}

}  // TEST_SUITE

TEST_SUITE("checkpoint") {

TEST_CASE("round trip reproduces scores bitwise") {
    for (auto kind : kAllModels) {
        auto s = random_state(kind, 21, 16);
        s.epoch = 77;
        std::stringstream buf;
        write_checkpoint(buf, s);
        auto back = read_checkpoint(buf, kind);
        CHECK(back.config == s.config);
        CHECK(back.entities == s.entities);
        CHECK(back.relations == s.relations);
        CHECK(back.epoch == 77);
        CHECK(back.rng_state == s.rng_state);
        std::mt19937 rng(5);
        for (int i = 0; i < 100; ++i) {
            EntityIndex h = rng() % 12, t = rng() % 12;
            RelationIndex r = rng() % 3;
            CHECK(std::bit_cast<std::uint64_t>(score(back, h, r, t)) ==
                  std::bit_cast<std::uint64_t>(score(s, h, r, t)));
        }
    }
}

TEST_CASE("file round trip and embedding export") {
    kgr::test::TempDir dir("ckpt");
    auto s = random_state(ModelKind::kComplEx, 3, 2);
    save_checkpoint(s, dir.file("m.kge"));
    auto back = load_checkpoint(dir.file("m.kge"));
    CHECK(back.entity_emb == s.entity_emb);
    std::ostringstream out;
    export_embeddings(out, s);
    auto lines = split(out.str(), '\n');
    CHECK(lines.size() == 13);  // trailing newline
    CHECK(split(lines[0], '\t').size() == 1 + 4);
    CHECK(lines[0].rfind("E000\t", 0) == 0);
}

TEST_CASE("corrupt checkpoints are rejected") {
    auto s = random_state(ModelKind::kTransE, 3, 4);
    std::stringstream buf;
    write_checkpoint(buf, s);
    const std::string good = buf.str();

    auto load = [](const std::string& bytes, std::optional<ModelKind> expect = std::nullopt) {
        std::istringstream in(bytes);
        return read_checkpoint(in, expect);
    };
    CHECK_NOTHROW(load(good));

    auto bad_magic = good;
    bad_magic[0] = 'X';
    CHECK_THROWS_AS(load(bad_magic), DataError);

    auto bad_version = good;
    bad_version[4] = 9;
    CHECK_THROWS_AS(load(bad_version), DataError);

    for (std::size_t cut : {std::size_t{3}, std::size_t{20}, good.size() / 2, good.size() - 1})
        CHECK_THROWS_AS(load(good.substr(0, cut)), DataError);

    CHECK_THROWS_AS(load(good, ModelKind::kRotatE), DataError);
    CHECK_THROWS_AS(load_checkpoint("/nonexistent/model.kge"), DataError);
}

}  // TEST_SUITE
