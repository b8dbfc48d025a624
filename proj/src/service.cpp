#include "kgr/service.hpp"

#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <httplib.h>
#include <json.hpp>

#include "kgr/checkpoint.hpp"
#include "kgr/discovery.hpp"
#include "kgr/error.hpp"
#include "kgr/pattern.hpp"
#include "kgr/version.hpp"

namespace kgr {

using nlohmann::json;

namespace {

std::string trim(std::string_view s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> csv_list(std::string_view s) {
    std::vector<std::string> out;
    for (const auto& part : split(s, ',')) {
        auto t = trim(part);
        if (!t.empty()) out.push_back(t);
    }
    return out;
}

HttpResponse reply(int status, const json& body) { return {status, body.dump()}; }

HttpResponse error(int status, const std::string& message) {
    return reply(status, json{{"error", message}, {"status", status}});
}

std::optional<std::size_t> parse_size(const std::string& text) {
    std::size_t v = 0;
    auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || p != text.data() + text.size() || text.empty()) return std::nullopt;
    return v;
}

const std::string* param(const std::map<std::string, std::string>& params, const char* key) {
    auto it = params.find(key);
    return it == params.end() ? nullptr : &it->second;
}

std::string_view direction_name(Direction d) {
    switch (d) {
        case Direction::kOut: return "out";
        case Direction::kIn: return "in";
        case Direction::kBoth: return "both";
    }
    return "both";
}

}  // namespace

ServiceConfig ServiceConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot read service config: " + path);
    const auto base = std::filesystem::path(path).parent_path();
    auto resolve = [&](const std::string& p) {
        std::filesystem::path fp(p);
        return (fp.is_relative() ? base / fp : fp).string();
    };
    ServiceConfig c;
    std::string line;
    while (std::getline(in, line)) {
        auto view = trim(line);
        if (view.empty() || view.front() == '#') continue;
        auto eq = view.find('=');
        if (eq == std::string::npos) throw UsageError("malformed service config line: " + line);
        auto key = trim(std::string_view(view).substr(0, eq));
        auto value = trim(std::string_view(view).substr(eq + 1));
        if (key == "bind") {
            c.set_bind(value);
        } else if (key == "graph") {
            c.graph_path = resolve(value);
        } else if (key.rfind("checkpoint.", 0) == 0 && key.size() > 11) {
            c.checkpoints[key.substr(11)] = resolve(value);
        } else if (key == "fan_out_cap") {
            auto v = parse_size(value);
            if (!v || *v == 0) throw UsageError("fan_out_cap must be a positive integer");
            c.fan_out_cap = *v;
        } else if (key == "cors_allow") {
            c.cors_allowlist = csv_list(value);
        } else {
            throw UsageError("unknown service config key: " + key);
        }
    }
    return c;
}

void ServiceConfig::set_bind(const std::string& bind) {
    auto colon = bind.rfind(':');
    if (colon == std::string::npos) throw UsageError("bind must be host:port, got " + bind);
    auto port_value = parse_size(bind.substr(colon + 1));
    if (!port_value || *port_value > 65535) throw UsageError("invalid port in bind: " + bind);
    host = bind.substr(0, colon);
    if (host.empty()) throw UsageError("empty host in bind: " + bind);
    port = static_cast<int>(*port_value);
}

void ServiceConfig::apply_environment() {
    if (const char* b = std::getenv("KGR_BIND"); b && *b) set_bind(b);
    if (const char* g = std::getenv("KGR_GRAPH"); g && *g) graph_path = g;
}

void ServiceConfig::validate() const {
    if (graph_path.empty()) throw UsageError("service config needs a graph path");
    auto readable = [](const std::string& p) { return std::ifstream(p).good(); };
    if (!readable(graph_path)) throw UsageError("graph file not readable: " + graph_path);
    for (const auto& [name, path] : checkpoints)
        if (!readable(path))
            throw UsageError("checkpoint '" + name + "' not readable: " + path);
}

QueryService::QueryService(KnowledgeGraph graph, std::map<std::string, ModelState> models,
                           std::size_t fan_out_cap)
    : graph_(std::move(graph)), models_(std::move(models)), fan_out_cap_(fan_out_cap) {
    for (const auto& [name, state] : models_) known_[name] = KnownTriples::from(state, graph_);
}

QueryService QueryService::from_config(const ServiceConfig& config) {
    config.validate();
    auto graph = load_triples(config.graph_path).graph;
    std::map<std::string, ModelState> models;
    for (const auto& [name, path] : config.checkpoints) models[name] = load_checkpoint(path);
    return QueryService(std::move(graph), std::move(models), config.fan_out_cap);
}

HttpResponse QueryService::handle(const HttpRequest& req) const {
    const auto parts = split(req.path, '/');
    // "/a/b" splits into {"", "a", "b"}
    if (parts.size() < 2 || !parts[0].empty()) return error(404, "no such endpoint");
    try {
        if (req.method == "GET" && req.path == "/health") return health();
        if (req.method == "GET" && req.path == "/predict") return predict(req.params);
        if (req.method == "POST" && req.path == "/patterns/query") return pattern_query(req.body);
        if (req.method == "GET" && parts.size() == 3 && parts[1] == "concepts")
            return concept_info(parts[2]);
        if (req.method == "GET" && parts.size() == 4 && parts[1] == "concepts" &&
            parts[3] == "neighbors")
            return neighbors(parts[2], req.params);
    } catch (const UsageError& e) {
        return error(400, e.what());
    } catch (const DataError& e) {
        return error(422, e.what());
    } catch (const std::exception& e) {
        return error(500, e.what());
    }
    return error(404, "no such endpoint: " + req.method + " " + req.path);
}

HttpResponse QueryService::health() const {
    json models = json::array();
    for (const auto& [name, state] : models_) models.push_back(name);
    return reply(200, json{{"status", "ok"},
                           {"version", kVersion},
                           {"entities", graph_.entity_count()},
                           {"relations", graph_.relation_count()},
                           {"triples", graph_.triple_count()},
                           {"models", models}});
}

HttpResponse QueryService::concept_info(const std::string& id) const {
    auto e = graph_.find_entity(id);
    if (!e) return error(404, "unknown concept: " + id);
    const auto& c = graph_.concept_at(*e);
    return reply(200, json{{"id", c.id},
                           {"name", c.name},
                           {"semantic_types", c.semantic_types},
                           {"semantic_groups", c.semantic_groups},
                           {"in_degree", graph_.in_degree(*e)},
                           {"out_degree", graph_.out_degree(*e)}});
}

HttpResponse QueryService::neighbors(const std::string& id,
                                     const std::map<std::string, std::string>& params) const {
    auto e = graph_.find_entity(id);
    if (!e) return error(404, "unknown concept: " + id);
    Direction direction = Direction::kBoth;
    if (auto d = param(params, "direction")) {
        auto parsed = parse_direction(*d);
        if (!parsed) return error(400, "direction must be in, out or both");
        direction = *parsed;
    }
    std::size_t limit = 100, offset = 0;
    if (auto l = param(params, "limit")) {
        auto v = parse_size(*l);
        if (!v || *v == 0) return error(400, "limit must be a positive integer");
        limit = *v;
    }
    if (auto o = param(params, "offset")) {
        auto v = parse_size(*o);
        if (!v) return error(400, "offset must be a nonnegative integer");
        offset = *v;
    }
    std::set<RelationIndex> filter;
    const bool filtered = param(params, "predicates") != nullptr;
    if (filtered) {
        for (const auto& p : csv_list(*param(params, "predicates"))) {
            auto r = graph_.find_relation(p);
            if (!r) return error(400, "unknown predicate: " + p);
            filter.insert(*r);
        }
    }
    auto all = graph_.neighbors(*e, filtered ? &filter : nullptr, direction);
    json list = json::array();
    for (std::size_t i = offset; i < all.size() && i < offset + limit; ++i) {
        const auto& n = all[i];
        const auto& t = graph_.triple_at(n.triple);
        list.push_back({{"predicate", graph_.predicate_at(n.predicate).id},
                        {"neighbor", graph_.concept_at(n.neighbor).id},
                        {"name", graph_.concept_at(n.neighbor).name},
                        {"direction", direction_name(n.direction)},
                        {"count", t.count},
                        {"sentence_ids", t.sentence_ids}});
    }
    return reply(200, json{{"id", id},
                           {"total", all.size()},
                           {"offset", offset},
                           {"limit", limit},
                           {"neighbors", list}});
}

HttpResponse QueryService::pattern_query(const std::string& body) const {
    json req;
    try {
        req = json::parse(body);
    } catch (const json::parse_error& e) {
        return error(400, std::string("malformed JSON body: ") + e.what());
    }
    if (!req.is_object() || !req.contains("pattern_text") || !req["pattern_text"].is_string())
        return error(400, "body needs a string field 'pattern_text'");
    std::string mode = req.value("mode", std::string("open"));
    if (mode != "open" && mode != "closed") return error(400, "mode must be open or closed");

    Pattern pattern;
    try {
        auto known = known_predicates(graph_);
        pattern = parse_pattern(req["pattern_text"].get<std::string>(), known);
    } catch (const PatternError& e) {
        int status = e.kind() == PatternError::Kind::kUnknownPredicate ? 422 : 400;
        return reply(status, json{{"error", e.what()},
                                  {"kind", e.kind_name()},
                                  {"position", e.position()},
                                  {"status", status}});
    }

    std::vector<std::string> ends;
    if (req.contains("ends")) {
        if (!req["ends"].is_array()) return error(400, "'ends' must be an array of ids");
        for (const auto& v : req["ends"]) {
            if (!v.is_string()) return error(400, "'ends' must be an array of ids");
            ends.push_back(v.get<std::string>());
        }
    } else {
        ends = pattern.end_constraint().ids;
    }
    if (ends.empty()) return error(400, "no end concepts: give 'ends' or an id constraint");

    DiscoveryOptions opts;
    opts.fan_out_cap = fan_out_cap_;
    DiscoveryResult result;
    if (mode == "open") {
        result = open_discovery(graph_, pattern, ends, opts);
    } else {
        if (!req.contains("start") || !req["start"].is_string())
            return error(400, "closed mode needs a string field 'start'");
        auto start = req["start"].get<std::string>();
        if (!graph_.find_entity(start)) return error(404, "unknown concept: " + start);
        result = closed_discovery(graph_, pattern, start, ends, opts);
    }
    return {200, discovery_json(result, graph_)};
}

HttpResponse QueryService::predict(const std::map<std::string, std::string>& params) const {
    auto model_name = param(params, "model");
    if (models_.empty()) return error(503, "no model loaded");
    std::string name = model_name ? *model_name : models_.begin()->first;
    auto m = models_.find(name);
    if (m == models_.end()) return error(503, "model not loaded: " + name);
    const auto& state = m->second;

    auto relation = param(params, "relation");
    if (!relation || relation->empty()) return error(400, "missing 'relation'");
    PartialTriple query;
    query.relation = *relation;
    auto head = param(params, "head");
    auto tail = param(params, "tail");
    if ((head != nullptr) == (tail != nullptr))
        return error(400, "give exactly one of 'head' or 'tail'");
    if (head) query.head = *head;
    if (tail) query.tail = *tail;
    if (!state.relations.find(*relation)) return error(404, "unknown relation: " + *relation);
    const auto& fixed = head ? *head : *tail;
    if (!state.entities.find(fixed)) return error(404, "unknown concept: " + fixed);

    std::size_t k = 10, limit = 100, offset = 0;
    for (auto [key, target] : {std::pair{"k", &k}, std::pair{"limit", &limit},
                               std::pair{"offset", &offset}}) {
        if (auto v = param(params, key)) {
            auto parsed = parse_size(*v);
            if (!parsed) return error(400, std::string(key) + " must be a nonnegative integer");
            *target = *parsed;
        }
    }
    if (k == 0) return error(400, "k must be positive");
    if (limit == 0) return error(400, "limit must be positive");

    CandidateConstraint constraint;
    if (auto s = param(params, "semtype"))
        for (auto& t : csv_list(*s)) constraint.semantic_types.insert(t);
    if (auto s = param(params, "semgroup"))
        for (auto& g : csv_list(*s)) constraint.semantic_groups.insert(g);
    bool novel = false;
    if (auto n = param(params, "novel")) {
        if (*n == "true" || *n == "1") novel = true;
        else if (*n == "false" || *n == "0") novel = false;
        else return error(400, "novel must be true or false");
    }

    auto list = predict_candidates(state, &graph_, query, k, constraint, known_.at(name), novel);
    json rows = json::array();
    for (std::size_t i = offset; i < list.candidates.size() && i < offset + limit; ++i) {
        const auto& c = list.candidates[i];
        rows.push_back({{"rank", c.rank},
                        {"entity_id", c.entity_id},
                        {"name", c.name},
                        {"score", c.score},
                        {"known", c.known}});
    }
    json q{{"relation", query.relation}};
    if (query.head) q["head"] = *query.head;
    if (query.tail) q["tail"] = *query.tail;
    return reply(200, json{{"model", name},
                           {"query", q},
                           {"k", k},
                           {"novel_only", novel},
                           {"total", list.candidates.size()},
                           {"offset", offset},
                           {"candidates", rows}});
}

struct HttpFrontend::Impl {
    const QueryService& service;
    std::vector<std::string> cors;
    httplib::Server server;

    void decorate(const httplib::Request& req, httplib::Response& res) const {
        auto origin = req.get_header_value("Origin");
        if (origin.empty()) return;
        for (const auto& allowed : cors)
            if (allowed == "*" || allowed == origin) {
                res.set_header("Access-Control-Allow-Origin", allowed == "*" ? "*" : origin);
                res.set_header("Vary", "Origin");
                return;
            }
    }

    void dispatch(const httplib::Request& req, httplib::Response& res) const {
        HttpRequest r{req.method, req.path, {}, req.body};
        for (const auto& [key, value] : req.params) r.params[key] = value;
        auto out = service.handle(r);
        res.status = out.status;
        decorate(req, res);
        res.set_content(out.body, "application/json");
    }
};

HttpFrontend::HttpFrontend(const QueryService& service, std::vector<std::string> cors_allowlist)
    : impl_(new Impl{service, std::move(cors_allowlist), {}}) {
    auto* impl = impl_.get();
    auto handler = [impl](const httplib::Request& req, httplib::Response& res) {
        impl->dispatch(req, res);
    };
    impl->server.Get(".*", handler);
    impl->server.Post(".*", handler);
    impl->server.Options(".*", [impl](const httplib::Request& req, httplib::Response& res) {
        impl->decorate(req, res);
        res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
        res.set_header("Access-Control-Allow-Headers", "Content-Type");
        res.status = 204;
    });
}

HttpFrontend::~HttpFrontend() { stop(); }

int HttpFrontend::bind(const std::string& host, int port) {
    int bound = port == 0 ? impl_->server.bind_to_any_port(host)
                          : (impl_->server.bind_to_port(host, port) ? port : -1);
    if (bound < 0) throw UsageError("cannot bind " + host + ":" + std::to_string(port));
    return bound;
}

void HttpFrontend::listen() { impl_->server.listen_after_bind(); }

void HttpFrontend::stop() {
    if (impl_) impl_->server.stop();
}

void run(const ServiceConfig& config) {
    auto service = QueryService::from_config(config);
    HttpFrontend frontend(service, config.cors_allowlist);
    int port = frontend.bind(config.host, config.port);
    std::cerr << "kgr serve: " << service.graph().entity_count() << " concepts, "
              << service.graph().triple_count() << " triples; listening on " << config.host
              << ':' << port << '\n';
    frontend.listen();
}

}  // namespace kgr
