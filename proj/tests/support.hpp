#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "kgr/graph.hpp"

namespace kgr::test {

inline std::string data_path(const std::string& name) {
    return std::string(KGR_TEST_DATA_DIR) + "/" + name;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() /
                ("kgr_" + tag + "_" + std::to_string(rd()) + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    std::string file(const std::string& name) const { return (path_ / name).string(); }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

inline void write_text(const std::string& path, const std::string& text) {
    std::ofstream(path) << text;
}

inline std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

using Spo = std::tuple<std::string, std::string, std::string>;

inline KnowledgeGraph make_graph(const std::vector<Spo>& triples) {
    GraphBuilder b;
    for (const auto& [h, p, t] : triples) {
        TripleRecord r;
        r.head = h;
        r.predicate = p;
        r.tail = t;
        b.add_triple(r);
    }
    return std::move(b).build();
}

inline TripleRecord rec(const std::string& h, const std::string& p, const std::string& t) {
    TripleRecord r;
    r.head = h;
    r.predicate = p;
    r.tail = t;
    return r;
}

}  // namespace kgr::test
