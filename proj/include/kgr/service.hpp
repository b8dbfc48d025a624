#pragma once

// JSON query service over a loaded graph and trained checkpoints.
//
//   GET  /health
//   GET  /concepts/{id}
//   GET  /concepts/{id}/neighbors?predicates=&direction=&limit=&offset=
//   POST /patterns/query   {"pattern_text", "mode", "start"?, "ends"?}
//   GET  /predict?model=&relation=&tail=|head=&k=&semtype=&semgroup=&novel=&limit=&offset=
//
// Errors: 400 malformed request or pattern, 404 unknown concept or relation,
// 422 unknown predicate in a pattern, 503 model not loaded. Handlers never
// mutate state, so one QueryService can serve concurrent requests.

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "kgr/graph.hpp"
#include "kgr/model.hpp"
#include "kgr/rank.hpp"

namespace kgr {

// key=value file; '#' starts a comment line.
//   bind=127.0.0.1:8080
//   graph=graph.tsv
//   checkpoint.<name>=model.kge
//   fan_out_cap=10000
//   cors_allow=http://localhost:3000,http://example.org
struct ServiceConfig {
    std::string host = "127.0.0.1";
    int port = 8080;
    std::string graph_path;
    std::map<std::string, std::string> checkpoints;
    std::size_t fan_out_cap = 10'000;
    std::vector<std::string> cors_allowlist;  // "*" allows any origin

    static ServiceConfig load(const std::string& path);
    // KGR_BIND (host:port) and KGR_GRAPH override the file.
    void apply_environment();
    void set_bind(const std::string& bind);
    // Throws UsageError without a graph path or with an unreadable file.
    void validate() const;
};

struct HttpRequest {
    std::string method;  // "GET", "POST"
    std::string path;
    std::map<std::string, std::string> params;
    std::string body;
};

struct HttpResponse {
    int status = 200;
    std::string body;  // JSON
};

class QueryService {
public:
    QueryService(KnowledgeGraph graph, std::map<std::string, ModelState> models,
                 std::size_t fan_out_cap = 10'000);
    static QueryService from_config(const ServiceConfig& config);

    HttpResponse handle(const HttpRequest& request) const;

    HttpResponse health() const;
    HttpResponse concept_info(const std::string& id) const;
    HttpResponse neighbors(const std::string& id,
                           const std::map<std::string, std::string>& params) const;
    HttpResponse pattern_query(const std::string& body) const;
    HttpResponse predict(const std::map<std::string, std::string>& params) const;

    const KnowledgeGraph& graph() const { return graph_; }

private:
    KnowledgeGraph graph_;
    std::map<std::string, ModelState> models_;
    std::map<std::string, KnownTriples> known_;
    std::size_t fan_out_cap_;
};

// Binds an HTTP server to a QueryService. Port 0 picks a free port.
class HttpFrontend {
public:
    HttpFrontend(const QueryService& service, std::vector<std::string> cors_allowlist);
    ~HttpFrontend();
    HttpFrontend(const HttpFrontend&) = delete;
    HttpFrontend& operator=(const HttpFrontend&) = delete;

    // Returns the bound port; throws UsageError when binding fails.
    int bind(const std::string& host, int port);
    // Blocks until stop().
    void listen();
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

// Loads everything and serves until the process is stopped.
void run(const ServiceConfig& config);

}  // namespace kgr
