#include "kgr/cli.hpp"

#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>

#include "kgr/checkpoint.hpp"
#include "kgr/discovery.hpp"
#include "kgr/error.hpp"
#include "kgr/graph.hpp"
#include "kgr/pattern.hpp"
#include "kgr/preprocess.hpp"
#include "kgr/rank.hpp"
#include "kgr/service.hpp"
#include "kgr/training.hpp"
#include "kgr/version.hpp"

namespace kgr {

namespace {

struct Global {
    std::optional<std::uint64_t> seed;
    bool dry_run = false;
    bool serial = false;
    ExecPolicy policy() const { return serial ? ExecPolicy::kSerial : ExecPolicy::kParallel; }
};

struct Io {
    std::ostream& out;
    std::ostream& err;
};

// Declared inputs and outputs of one invocation; --dry-run prints it.
struct Plan {
    std::string command;
    std::vector<std::string> reads;
    std::vector<std::string> writes;
    std::vector<std::string> notes;

    void read(const std::string& path) {
        if (!path.empty()) reads.push_back(path);
    }
    void write(const std::string& path) {
        if (!path.empty()) writes.push_back(path);
    }
    void note(const std::string& text) { notes.push_back(text); }

    void check() const {
        for (const auto& p : reads)
            if (!std::ifstream(p).good()) throw DataError("missing input: " + p);
        for (const auto& p : writes) {
            if (p == "-") continue;
            auto dir = std::filesystem::path(p).parent_path();
            if (!dir.empty() && !std::filesystem::is_directory(dir))
                throw DataError("output directory does not exist: " + dir.string());
        }
    }

    void print(std::ostream& out) const {
        out << "plan: " << command << '\n';
        for (const auto& p : reads) out << "  read  " << p << '\n';
        for (const auto& p : writes) out << "  write " << (p == "-" ? "<stdout>" : p) << '\n';
        for (const auto& n : notes) out << "  " << n << '\n';
    }
};

void write_output(const std::string& path, std::ostream& stdout_stream,
                  const std::function<void(std::ostream&)>& emit) {
    if (path.empty() || path == "-") {
        emit(stdout_stream);
        return;
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot write " + path);
    emit(f);
    if (!f) throw DataError("failed writing " + path);
}

KnowledgeGraph load_graph(const std::string& path) { return load_triples(path).graph; }

std::string describe(const ModelConfig& c) {
    std::ostringstream s;
    s << "model=" << to_string(c.model) << " dim=" << c.dim << " norm=" << to_string(c.norm)
      << " margin=" << c.margin << " lr=" << c.learning_rate << " reg=" << c.regularization
      << " negatives=" << c.negatives_per_positive
      << " adversarial=" << (c.adversarial_sampling ? "true" : "false")
      << " loss=" << to_string(c.loss) << " batch=" << c.batch_size
      << " epochs=" << c.max_epochs << " seed=" << c.seed;
    return s.str();
}

std::vector<std::string> flatten_lists(const std::vector<std::string>& values) {
    std::vector<std::string> out;
    for (const auto& v : values)
        for (auto& part : split(v, ','))
            if (!part.empty()) out.push_back(part);
    return out;
}

struct ModelFlags {
    std::string model = "TransE";
    std::string norm = "L1";
    std::string loss = "margin";
    ModelConfig c;

    void add(CLI::App* s) {
        s->add_option("--model", model, "TransE, RotatE, DistMult or ComplEx")
            ->capture_default_str();
        s->add_option("--dim", c.dim, "embedding dimension k")->capture_default_str();
        s->add_option("--norm", norm, "TransE distance norm: L1 or L2")->capture_default_str();
        s->add_option("--margin", c.margin, "margin gamma")->capture_default_str();
        s->add_option("--lr", c.learning_rate, "learning rate")->capture_default_str();
        s->add_option("--reg", c.regularization, "L2 regularization weight")
            ->capture_default_str();
        s->add_option("--negatives", c.negatives_per_positive, "negatives per positive")
            ->capture_default_str();
        s->add_flag("--adversarial", c.adversarial_sampling, "self-adversarial weighting");
        s->add_option("--temperature", c.adversarial_temperature, "adversarial temperature")
            ->capture_default_str();
        s->add_option("--loss", loss, "margin or logsigmoid")->capture_default_str();
        s->add_option("--batch", c.batch_size, "minibatch size")->capture_default_str();
        s->add_option("--epochs", c.max_epochs, "maximum epochs")->capture_default_str();
        s->add_option("--eval-every", c.eval_every, "epochs between validation passes")
            ->capture_default_str();
        s->add_option("--patience", c.patience, "evaluations without improvement; 0 disables")
            ->capture_default_str();
        s->add_option("--valid-cap", c.valid_cap, "validation subsample; 0 = all")
            ->capture_default_str();
    }

    ModelConfig resolve(const Global& g) const {
        ModelConfig out = c;
        auto m = parse_model_kind(model);
        if (!m) throw UsageError("unknown model: " + model);
        auto n = parse_norm(norm);
        if (!n) throw UsageError("unknown norm: " + norm);
        auto l = parse_loss_mode(loss);
        if (!l) throw UsageError("unknown loss: " + loss);
        out.model = *m;
        out.norm = *n;
        out.loss = *l;
        if (g.seed) out.seed = *g.seed;
        out.validate();
        return out;
    }
};

struct ValidationFlags {
    std::string valid_path;
    double valid_fraction = 0.0;

    void add(CLI::App* s) {
        s->add_option("--valid", valid_path, "held-out validation triples (TSV)");
        s->add_option("--valid-fraction", valid_fraction,
                      "carve this fraction of the input as validation when --valid is absent")
            ->capture_default_str();
    }

    // Graph to train on plus validation records.
    std::pair<KnowledgeGraph, std::vector<TripleRecord>> resolve(KnowledgeGraph graph,
                                                                 std::uint64_t seed) const {
        if (!valid_path.empty()) return {std::move(graph), load_records(valid_path)};
        if (valid_fraction > 0) return carve_validation(graph, valid_fraction, seed);
        return {std::move(graph), {}};
    }
};

class Cli {
public:
    Cli(Io io) : io_(io), app_("kgr: knowledge-graph completion and discovery toolkit", "kgr") {
        app_.set_version_flag("--version", kVersion);
        app_.set_config("--config", "", "pipeline config (TOML/INI, one section per command)");
        app_.add_option("--seed", seed_, "seed for every random choice");
        app_.add_flag("--dry-run", global_.dry_run, "validate and print the plan without writing");
        app_.add_flag("--serial", global_.serial, "use the serial reference kernels");
        app_.require_subcommand(1);
        app_.fallthrough();
        add_ingest();
        add_filter();
        add_score();
        add_prune();
        add_slice();
        add_train();
        add_grid();
        add_eval();
        add_predict();
        add_discover();
        add_serve();
        add_export();
        add_rank_diff();
        add_truth_hits();
    }

    int run(int argc, const char* const* argv) {
        try {
            app_.parse(argc, argv);
        } catch (const CLI::CallForHelp&) {
            io_.out << app_.help();
            return 0;
        } catch (const CLI::CallForAllHelp&) {
            io_.out << app_.help("", CLI::AppFormatMode::All);
            return 0;
        } catch (const CLI::CallForVersion&) {
            io_.out << kVersion << '\n';
            return 0;
        } catch (const CLI::ParseError& e) {
            io_.err << "usage error: " << e.what() << '\n';
            for (auto* sub : app_.get_subcommands()) io_.err << sub->help();
            return 2;
        }
        if (seed_) global_.seed = *seed_;
        for (auto* sub : app_.get_subcommands()) {
            Plan plan;
            plan.command = sub->get_name();
            try {
                actions_.at(sub->get_name())(plan);
            } catch (const UsageError& e) {
                io_.err << "usage error: " << e.what() << '\n';
                return 2;
            } catch (const DataError& e) {
                io_.err << "data error: " << e.what() << '\n';
                return 3;
            } catch (const NumericError& e) {
                io_.err << "numeric error: " << e.what() << '\n';
                return 4;
            } catch (const std::exception& e) {
                io_.err << "error: " << e.what() << '\n';
                return 1;
            }
        }
        return 0;
    }

private:
    // Each action fills the plan, validates it, then either prints it
    // (--dry-run) or does the work.
    using Action = std::function<void(Plan&)>;

    bool stop_for_dry_run(Plan& plan) {
        plan.check();
        if (!global_.dry_run) return false;
        plan.print(io_.out);
        return true;
    }

    CLI::App* sub(const std::string& name, const std::string& about, Action action) {
        actions_[name] = std::move(action);
        return app_.add_subcommand(name, about);
    }

    void add_ingest() {
        auto* s = sub("ingest", "load raw triple TSV files into a canonical graph",
                      [this](Plan& p) { ingest(p); });
        s->add_option("--input", ingest_.inputs, "raw triple TSV (repeatable)")->required();
        s->add_option("--schema", ingest_.schema, "column override role=column (repeatable)");
        s->add_option("--semgroups", ingest_.semgroups, "semtype to semantic group TSV");
        s->add_option("--output", ingest_.output, "canonical graph TSV")->required();
        s->add_option("--report", ingest_.report, "per-reason rejection counts TSV");
    }

    void ingest(Plan& p) {
        TsvSchema schema;
        for (const auto& o : ingest_.schema) {
            auto eq = o.find('=');
            if (eq == std::string::npos) throw UsageError("schema override must be role=column");
            schema.set(o.substr(0, eq), o.substr(eq + 1));
        }
        for (const auto& i : ingest_.inputs) p.read(i);
        p.read(ingest_.semgroups);
        p.write(ingest_.output);
        p.write(ingest_.report);
        if (stop_for_dry_run(p)) return;

        SemanticGroupMap groups;
        if (!ingest_.semgroups.empty()) groups = SemanticGroupMap::load(ingest_.semgroups);
        GraphBuilder builder;
        LoadReport total;
        for (const auto& path : ingest_.inputs) {
            auto loaded = load_triples(path, schema, groups);
            for (const auto& c : loaded.graph.concepts()) builder.add_concept(c);
            for (const auto& r : loaded.graph.records()) builder.add_triple(r);
            total.rows_read += loaded.report.rows_read;
            total.rows_accepted += loaded.report.rows_accepted;
            total.rows_rejected += loaded.report.rows_rejected;
            for (const auto& [reason, n] : loaded.report.rejection_reasons)
                total.rejection_reasons[reason] += n;
        }
        auto graph = std::move(builder).build();
        write_output(ingest_.output, io_.out, [&](std::ostream& o) { write_triples(o, graph); });
        if (!ingest_.report.empty())
            write_output(ingest_.report, io_.out, [&](std::ostream& o) {
                o << "reason\trows\n";
                for (const auto& [reason, n] : total.rejection_reasons)
                    o << reason << '\t' << n << '\n';
            });
        io_.err << "ingest: " << total.rows_read << " rows read, " << total.rows_accepted
                << " accepted, " << total.rows_rejected << " rejected; "
                << graph.entity_count() << " concepts, " << graph.triple_count()
                << " distinct triples\n";
    }

    void add_filter() {
        auto* s = sub("filter", "apply the structural filter rules",
                      [this](Plan& p) { filter(p); });
        s->add_option("--input", filter_.input, "graph TSV")->required();
        s->add_option("--filter-config", filter_.config, "filter config (key=value)");
        s->add_option("--output", filter_.output, "filtered graph TSV")->required();
    }

    void filter(Plan& p) {
        p.read(filter_.input);
        p.read(filter_.config);
        p.write(filter_.output);
        auto config = filter_.config.empty() ? FilterConfig::defaults()
                                             : FilterConfig::load(filter_.config);
        config.validate();
        if (stop_for_dry_run(p)) return;
        auto graph = load_graph(filter_.input);
        auto filtered = apply_structural_filters(graph, config);
        write_output(filter_.output, io_.out, [&](std::ostream& o) { write_triples(o, filtered); });
        io_.err << "filter: " << graph.triple_count() << " -> " << filtered.triple_count()
                << " triples\n";
    }

    void add_score() {
        auto* s = sub("score", "compute informativeness scores for every triple",
                      [this](Plan& p) { score(p); });
        s->add_option("--input", score_.input, "graph TSV")->required();
        s->add_option("--output", score_.output, "score TSV")->required();
        s->add_option("--expectation", score_.expectation, "independence or pairwise")
            ->capture_default_str();
    }

    void score(Plan& p) {
        p.read(score_.input);
        p.write(score_.output);
        ExpectationModel model;
        if (score_.expectation == "independence") model = ExpectationModel::kIndependence;
        else if (score_.expectation == "pairwise") model = ExpectationModel::kPairwiseMarginals;
        else throw UsageError("expectation must be independence or pairwise");
        if (stop_for_dry_run(p)) return;
        auto graph = load_graph(score_.input);
        auto result = informativeness(graph, global_.policy(), model);
        for (const auto& w : result.warnings) io_.err << "warning: " << w << '\n';
        write_output(score_.output, io_.out,
                     [&](std::ostream& o) { write_scores(o, graph, result.scores); });
    }

    void add_prune() {
        auto* s = sub("prune", "keep the lowest-scoring triples within a budget",
                      [this](Plan& p) { prune(p); });
        s->add_option("--input", prune_.input, "graph TSV")->required();
        s->add_option("--scores", prune_.scores, "score TSV from the score command")->required();
        s->add_option("--budget", prune_.budget, "number of triples to keep")->required();
        s->add_option("--filter-config", prune_.config, "filter config supplying the keep-list");
        s->add_option("--keep", prune_.keep, "keep concept ids (comma separated, repeatable)");
        s->add_option("--output", prune_.output, "pruned graph TSV")->required();
    }

    void prune(Plan& p) {
        p.read(prune_.input);
        p.read(prune_.scores);
        p.read(prune_.config);
        p.write(prune_.output);
        std::set<std::string> keep;
        if (!prune_.config.empty()) keep = FilterConfig::load(prune_.config).keep_concepts;
        else if (prune_.keep.empty()) keep = FilterConfig::defaults().keep_concepts;
        for (auto& k : flatten_lists(prune_.keep)) keep.insert(k);
        if (stop_for_dry_run(p)) return;
        auto graph = load_graph(prune_.input);
        auto scores = read_combined_scores(prune_.scores, graph);
        auto pruned = prune_by_score(graph, scores, prune_.budget, keep);
        write_output(prune_.output, io_.out, [&](std::ostream& o) { write_triples(o, pruned); });
        io_.err << "prune: " << graph.triple_count() << " -> " << pruned.triple_count()
                << " triples\n";
    }

    void add_slice() {
        auto* s = sub("slice", "split a graph by date into train and test",
                      [this](Plan& p) { slice(p); });
        s->add_option("--input", slice_.input, "graph TSV")->required();
        s->add_option("--cutoff", slice_.cutoff, "last training date, YYYY-MM-DD")->required();
        s->add_option("--undated", slice_.undated, "exclude or train")->capture_default_str();
        s->add_option("--train-output", slice_.train_output, "training graph TSV")->required();
        s->add_option("--test-output", slice_.test_output, "test triples TSV")->required();
    }

    void slice(Plan& p) {
        p.read(slice_.input);
        p.write(slice_.train_output);
        p.write(slice_.test_output);
        auto cutoff = Date::parse(slice_.cutoff);
        if (!cutoff) throw UsageError("cutoff must be a YYYY-MM-DD date: " + slice_.cutoff);
        UndatedPolicy undated;
        if (slice_.undated == "exclude") undated = UndatedPolicy::kExclude;
        else if (slice_.undated == "train") undated = UndatedPolicy::kTrain;
        else throw UsageError("undated must be exclude or train");
        p.note("cutoff " + cutoff->to_string());
        if (stop_for_dry_run(p)) return;
        auto graph = load_graph(slice_.input);
        auto split_result = time_slice(graph, *cutoff, undated);
        write_output(slice_.train_output, io_.out,
                     [&](std::ostream& o) { write_triples(o, split_result.train); });
        write_output(slice_.test_output, io_.out,
                     [&](std::ostream& o) { write_records(o, split_result.test); });
        io_.err << "slice: " << split_result.train.triple_count() << " train, "
                << split_result.test.size() << " test, " << split_result.excluded_undated
                << " undated excluded\n";
    }

    void add_train() {
        auto* s = sub("train", "train an embedding model", [this](Plan& p) { train_cmd(p); });
        s->add_option("--input", train_.input, "training graph TSV")->required();
        train_.valid.add(s);
        train_.model.add(s);
        s->add_option("--resume", train_.resume, "continue from a checkpoint");
        s->add_option("--output", train_.output, "checkpoint path")->required();
        s->add_option("--log", train_.log, "training log TSV");
    }

    void train_cmd(Plan& p) {
        p.read(train_.input);
        p.read(train_.valid.valid_path);
        p.read(train_.resume);
        p.write(train_.output);
        p.write(train_.log);
        auto config = train_.model.resolve(global_);
        p.note(describe(config));
        if (stop_for_dry_run(p)) return;

        auto [graph, valid] = train_.valid.resolve(load_graph(train_.input), config.seed);
        TrainResult result;
        try {
            if (!train_.resume.empty()) {
                auto state = load_checkpoint(train_.resume, config.model);
                state.config.max_epochs = config.max_epochs;
                result = train_from(std::move(state), graph, valid);
            } else {
                result = train(graph, valid, config);
            }
        } catch (const TrainingDiverged& e) {
            auto fallback = train_.output + ".last_good";
            save_checkpoint(e.last_good(), fallback);
            io_.err << "last finite state saved to " << fallback << '\n';
            throw;
        }
        save_checkpoint(result.state, train_.output);
        if (!train_.log.empty())
            write_output(train_.log, io_.out,
                         [&](std::ostream& o) { write_training_log(o, result.log); });
        io_.err << "train: " << result.state.epoch << " epochs";
        if (result.best_valid_mrr)
            io_.err << ", best validation MRR " << *result.best_valid_mrr << " at epoch "
                    << result.best_epoch;
        io_.err << '\n';
    }

    void add_grid() {
        auto* s = sub("grid", "grid search over model hyperparameters",
                      [this](Plan& p) { grid(p); });
        s->add_option("--input", grid_.input, "training graph TSV")->required();
        grid_.valid.add(s);
        grid_.model.add(s);
        s->add_flag("--full-lattice", grid_.full, "the full standard lattice for --model");
        s->add_option("--models", grid_.models, "model axis (comma separated)");
        s->add_option("--lrs", grid_.lrs, "learning-rate axis");
        s->add_option("--dims", grid_.dims, "dimension axis");
        s->add_option("--regs", grid_.regs, "regularization axis");
        s->add_option("--adversarial-axis", grid_.adversarial, "adversarial axis: true,false");
        s->add_option("--margins", grid_.margins, "margin axis");
        s->add_option("--norms", grid_.norms, "norm axis");
        s->add_option("--output", grid_.output, "grid table TSV")->required();
    }

    void grid(Plan& p) {
        p.read(grid_.input);
        p.read(grid_.valid.valid_path);
        p.write(grid_.output);
        auto base = grid_.model.resolve(global_);
        GridAxes axes = grid_.full ? GridAxes::full_lattice(base.model) : GridAxes{};
        auto to_double = [](const std::string& s) {
            try {
                std::size_t used = 0;
                double v = std::stod(s, &used);
                if (used != s.size()) throw std::invalid_argument(s);
                return v;
            } catch (const std::logic_error&) {
                throw UsageError("not a number: " + s);
            }
        };
        if (!grid_.models.empty()) {
            axes.models.clear();
            for (const auto& m : flatten_lists(grid_.models)) {
                auto k = parse_model_kind(m);
                if (!k) throw UsageError("unknown model: " + m);
                axes.models.push_back(*k);
            }
        }
        if (!grid_.lrs.empty()) {
            axes.learning_rates.clear();
            for (const auto& v : flatten_lists(grid_.lrs)) axes.learning_rates.push_back(to_double(v));
        }
        if (!grid_.dims.empty()) {
            axes.dims.clear();
            for (const auto& v : flatten_lists(grid_.dims))
                axes.dims.push_back(static_cast<std::size_t>(to_double(v)));
        }
        if (!grid_.regs.empty()) {
            axes.regularizations.clear();
            for (const auto& v : flatten_lists(grid_.regs)) axes.regularizations.push_back(to_double(v));
        }
        if (!grid_.adversarial.empty()) {
            axes.adversarial.clear();
            for (const auto& v : flatten_lists(grid_.adversarial)) {
                if (v == "true") axes.adversarial.push_back(true);
                else if (v == "false") axes.adversarial.push_back(false);
                else throw UsageError("adversarial axis takes true/false, got " + v);
            }
        }
        if (!grid_.margins.empty()) {
            axes.margins.clear();
            for (const auto& v : flatten_lists(grid_.margins)) axes.margins.push_back(to_double(v));
        }
        if (!grid_.norms.empty()) {
            axes.norms.clear();
            for (const auto& v : flatten_lists(grid_.norms)) {
                auto n = parse_norm(v);
                if (!n) throw UsageError("unknown norm: " + v);
                axes.norms.push_back(*n);
            }
        }
        auto lattice = axes.expand(base);
        for (const auto& c : lattice) c.validate();
        p.note(std::to_string(lattice.size()) + " configurations");
        if (grid_.valid.valid_path.empty() && grid_.valid.valid_fraction <= 0)
            throw UsageError("grid search needs --valid or --valid-fraction");
        if (stop_for_dry_run(p)) return;

        auto [graph, valid] = grid_.valid.resolve(load_graph(grid_.input), base.seed);
        auto result = grid_search(graph, valid, lattice);
        write_output(grid_.output, io_.out, [&](std::ostream& o) { write_grid_table(o, result); });
        io_.err << "grid: best validation MRR " << result.best_mrr << " with "
                << describe(result.best) << '\n';
    }

    void add_eval() {
        auto* s = sub("eval", "filtered link-prediction metrics on held-out triples",
                      [this](Plan& p) { eval(p); });
        s->add_option("--checkpoint", eval_.checkpoint, "trained checkpoint")->required();
        s->add_option("--test", eval_.test, "test triples TSV")->required();
        s->add_option("--graph", eval_.graphs, "graphs whose triples count as known (repeatable)");
        s->add_option("--known", eval_.known, "extra known triple TSVs (repeatable)");
        s->add_option("--tie", eval_.tie, "optimistic, pessimistic or mean")->capture_default_str();
        s->add_option("--output", eval_.output, "metrics TSV");
    }

    void eval(Plan& p) {
        p.read(eval_.checkpoint);
        p.read(eval_.test);
        for (const auto& g : eval_.graphs) p.read(g);
        for (const auto& k : eval_.known) p.read(k);
        p.write(eval_.output);
        auto tie = parse_tie_mode(eval_.tie);
        if (!tie) throw UsageError("tie mode must be optimistic, pessimistic or mean");
        if (stop_for_dry_run(p)) return;

        auto state = load_checkpoint(eval_.checkpoint);
        auto test = load_records(eval_.test);
        std::vector<TripleRecord> known_records = test;
        for (const auto& g : eval_.graphs) {
            auto recs = load_graph(g).records();
            known_records.insert(known_records.end(), recs.begin(), recs.end());
        }
        for (const auto& k : eval_.known) {
            auto recs = load_records(k);
            known_records.insert(known_records.end(), recs.begin(), recs.end());
        }
        auto known = KnownTriples::from(state, known_records);
        auto metrics = evaluate(state, test, known, *tie, global_.policy());
        write_metrics_table(io_.out, metrics);
        if (!eval_.output.empty())
            write_output(eval_.output, io_.out,
                         [&](std::ostream& o) { write_metrics_tsv(o, metrics); });
    }

    void add_predict() {
        auto* s = sub("predict", "rank candidate entities for a partial triple",
                      [this](Plan& p) { predict(p); });
        s->add_option("--checkpoint", predict_.checkpoint, "trained checkpoint")->required();
        s->add_option("--graph", predict_.graph, "graph supplying names, types and known triples");
        s->add_option("--relation", predict_.relation, "relation id")->required();
        auto* head = s->add_option("--head", predict_.head, "fixed head; rank tails");
        auto* tail = s->add_option("--tail", predict_.tail, "fixed tail; rank heads");
        head->excludes(tail);
        s->add_option("--k", predict_.k, "number of candidates")->capture_default_str();
        s->add_option("--semtype", predict_.semtypes, "admissible semantic types");
        s->add_option("--semgroup", predict_.semgroups, "admissible semantic groups");
        s->add_flag("--novel", predict_.novel, "drop candidates already known");
        s->add_option("--output", predict_.output, "candidate TSV (default stdout)");
    }

    void predict(Plan& p) {
        p.read(predict_.checkpoint);
        p.read(predict_.graph);
        p.write(predict_.output.empty() ? "-" : predict_.output);
        if (predict_.head.empty() == predict_.tail.empty())
            throw UsageError("give exactly one of --head or --tail");
        if (predict_.k == 0) throw UsageError("--k must be positive");
        if (stop_for_dry_run(p)) return;

        auto state = load_checkpoint(predict_.checkpoint);
        std::optional<KnowledgeGraph> graph;
        if (!predict_.graph.empty()) graph = load_graph(predict_.graph);
        auto known = graph ? KnownTriples::from(state, *graph) : KnownTriples{};
        PartialTriple q;
        q.relation = predict_.relation;
        if (!predict_.head.empty()) q.head = predict_.head;
        if (!predict_.tail.empty()) q.tail = predict_.tail;
        CandidateConstraint constraint;
        for (auto& t : flatten_lists(predict_.semtypes)) constraint.semantic_types.insert(t);
        for (auto& g : flatten_lists(predict_.semgroups)) constraint.semantic_groups.insert(g);
        auto list = predict_candidates(state, graph ? &*graph : nullptr, q, predict_.k,
                                       constraint, known, predict_.novel, global_.policy());
        write_output(predict_.output, io_.out,
                     [&](std::ostream& o) { write_candidates(o, list); });
    }

    void add_discover() {
        auto* s = sub("discover", "run a discovery pattern", [this](Plan& p) { discover(p); });
        s->add_option("--graph", discover_.graph, "graph TSV")->required();
        auto* text = s->add_option("--pattern", discover_.pattern, "pattern text");
        auto* file = s->add_option("--pattern-file", discover_.pattern_file, "pattern file");
        text->excludes(file);
        s->add_option("--mode", discover_.mode, "open or closed")->capture_default_str();
        s->add_option("--start", discover_.start, "start concept (closed mode)");
        s->add_option("--end", discover_.ends,
                      "end concepts (repeatable; default: the end variable's id constraint)");
        s->add_option("--fan-out-cap", discover_.cap, "frontier and path cap")
            ->capture_default_str();
        s->add_option("--output", discover_.output, "result TSV (default stdout)");
        s->add_option("--json", discover_.json, "result JSON");
    }

    void discover(Plan& p) {
        p.read(discover_.graph);
        p.read(discover_.pattern_file);
        p.write(discover_.output.empty() ? "-" : discover_.output);
        p.write(discover_.json);
        std::string text = discover_.pattern;
        if (!discover_.pattern_file.empty()) {
            std::ifstream in(discover_.pattern_file);
            if (!in) throw DataError("cannot read pattern file: " + discover_.pattern_file);
            std::ostringstream s;
            s << in.rdbuf();
            text = s.str();
        }
        if (text.empty()) throw UsageError("give --pattern or --pattern-file");
        if (discover_.mode != "open" && discover_.mode != "closed")
            throw UsageError("mode must be open or closed");
        if (discover_.mode == "closed" && discover_.start.empty())
            throw UsageError("closed mode needs --start");
        if (discover_.cap == 0) throw UsageError("--fan-out-cap must be positive");
        auto syntax_only = parse_pattern(text);
        p.note("pattern " + to_string(syntax_only));
        if (stop_for_dry_run(p)) return;

        auto graph = load_graph(discover_.graph);
        auto pattern = parse_pattern(text, known_predicates(graph));
        auto ends = flatten_lists(discover_.ends);
        if (ends.empty()) ends = pattern.end_constraint().ids;
        if (ends.empty()) throw UsageError("no end concepts: give --end or an id constraint");
        DiscoveryOptions opts;
        opts.fan_out_cap = discover_.cap;
        opts.policy = global_.policy();
        auto result = discover_.mode == "open"
                          ? open_discovery(graph, pattern, ends, opts)
                          : closed_discovery(graph, pattern, discover_.start, ends, opts);
        for (const auto& w : result.warnings) io_.err << "warning: " << w << '\n';
        write_output(discover_.output, io_.out,
                     [&](std::ostream& o) { write_discovery_tsv(o, result); });
        if (!discover_.json.empty())
            write_output(discover_.json, io_.out,
                         [&](std::ostream& o) { o << discovery_json(result, graph) << '\n'; });
    }

    void add_serve() {
        auto* s = sub("serve", "serve the JSON query API", [this](Plan& p) { serve(p); });
        s->add_option("--service-config", serve_.config, "service config (key=value)");
        s->add_option("--bind", serve_.bind, "host:port");
        s->add_option("--graph", serve_.graph, "graph TSV");
        s->add_option("--checkpoint", serve_.checkpoints, "name=path (repeatable)");
        s->add_option("--fan-out-cap", serve_.cap, "pattern frontier cap");
        s->add_option("--cors", serve_.cors, "allowed origins (comma separated)");
    }

    void serve(Plan& p) {
        ServiceConfig config;
        if (!serve_.config.empty()) {
            p.read(serve_.config);
            config = ServiceConfig::load(serve_.config);
        }
        config.apply_environment();
        if (!serve_.bind.empty()) config.set_bind(serve_.bind);
        if (!serve_.graph.empty()) config.graph_path = serve_.graph;
        for (const auto& c : serve_.checkpoints) {
            auto eq = c.find('=');
            if (eq == std::string::npos || eq == 0)
                throw UsageError("--checkpoint takes name=path, got " + c);
            config.checkpoints[c.substr(0, eq)] = c.substr(eq + 1);
        }
        if (serve_.cap) config.fan_out_cap = *serve_.cap;
        if (!serve_.cors.empty()) config.cors_allowlist = flatten_lists(serve_.cors);
        config.validate();
        p.read(config.graph_path);
        for (const auto& [name, path] : config.checkpoints) p.read(path);
        p.note("bind " + config.host + ":" + std::to_string(config.port));
        if (stop_for_dry_run(p)) return;
        kgr::run(config);
    }

    void add_export() {
        auto* s = sub("export-embeddings", "write entity vectors as TSV",
                      [this](Plan& p) { export_cmd(p); });
        s->add_option("--checkpoint", export_.checkpoint, "trained checkpoint")->required();
        s->add_option("--output", export_.output, "vector TSV (default stdout)");
    }

    void export_cmd(Plan& p) {
        p.read(export_.checkpoint);
        p.write(export_.output.empty() ? "-" : export_.output);
        if (stop_for_dry_run(p)) return;
        auto state = load_checkpoint(export_.checkpoint);
        write_output(export_.output, io_.out,
                     [&](std::ostream& o) { export_embeddings(o, state); });
    }

    void add_rank_diff() {
        auto* s = sub("rank-diff", "compare two candidate lists",
                      [this](Plan& p) { rank_diff(p); });
        s->add_option("--a", diff_.a, "first candidate TSV")->required();
        s->add_option("--b", diff_.b, "second candidate TSV")->required();
        s->add_option("--output", diff_.output, "report (default stdout)");
    }

    void rank_diff(Plan& p) {
        p.read(diff_.a);
        p.read(diff_.b);
        p.write(diff_.output.empty() ? "-" : diff_.output);
        if (stop_for_dry_run(p)) return;
        auto report = rank_diff_report(read_candidates(diff_.a), read_candidates(diff_.b));
        write_output(diff_.output, io_.out, [&](std::ostream& o) { write_rank_diff(o, report); });
    }

    void add_truth_hits() {
        auto* s = sub("truth-hits", "ground-truth cluster hits along a candidate list",
                      [this](Plan& p) { truth_hits(p); });
        s->add_option("--candidates", hits_.candidates, "candidate TSV")->required();
        s->add_option("--truth", hits_.truth, "ground-truth clusters, one per line")->required();
        s->add_option("--output", hits_.output, "hit curve TSV (default stdout)");
    }

    void truth_hits(Plan& p) {
        p.read(hits_.candidates);
        p.read(hits_.truth);
        p.write(hits_.output.empty() ? "-" : hits_.output);
        if (stop_for_dry_run(p)) return;
        auto hits = ground_truth_hits(read_candidates(hits_.candidates),
                                      GroundTruthClusters::load(hits_.truth));
        write_output(hits_.output, io_.out, [&](std::ostream& o) {
            o << "k\tmatched\tprecision\trecall\n";
            o.precision(17);
            for (const auto& h : hits.curve)
                o << h.k << '\t' << h.matched_clusters << '\t' << h.precision << '\t'
                  << h.recall << '\n';
        });
    }

    Io io_;
    CLI::App app_;
    Global global_;
    std::optional<std::uint64_t> seed_;
    std::map<std::string, Action> actions_;

    struct {
        std::vector<std::string> inputs, schema;
        std::string semgroups, output, report;
    } ingest_;
    struct {
        std::string input, config, output;
    } filter_;
    struct {
        std::string input, output, expectation = "independence";
    } score_;
    struct {
        std::string input, scores, config, output;
        std::vector<std::string> keep;
        std::size_t budget = 0;
    } prune_;
    struct {
        std::string input, cutoff, undated = "exclude", train_output, test_output;
    } slice_;
    struct {
        std::string input, resume, output, log;
        ValidationFlags valid;
        ModelFlags model;
    } train_;
    struct {
        std::string input, output;
        ValidationFlags valid;
        ModelFlags model;
        bool full = false;
        std::vector<std::string> models, lrs, dims, regs, adversarial, margins, norms;
    } grid_;
    struct {
        std::string checkpoint, test, tie = "optimistic", output;
        std::vector<std::string> graphs, known;
    } eval_;
    struct {
        std::string checkpoint, graph, relation, head, tail, output;
        std::vector<std::string> semtypes, semgroups;
        std::size_t k = 10;
        bool novel = false;
    } predict_;
    struct {
        std::string graph, pattern, pattern_file, mode = "open", start, output, json;
        std::vector<std::string> ends;
        std::size_t cap = 10'000;
    } discover_;
    struct {
        std::string config, bind, graph;
        std::vector<std::string> checkpoints, cors;
        std::optional<std::size_t> cap;
    } serve_;
    struct {
        std::string checkpoint, output;
    } export_;
    struct {
        std::string a, b, output;
    } diff_;
    struct {
        std::string candidates, truth, output;
    } hits_;
};

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    Cli cli(Io{out, err});
    return cli.run(argc, argv);
}

}  // namespace kgr
