#include "kgr/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "kgr/error.hpp"

namespace kgr {

namespace {

constexpr std::array<char, 4> kMagic = {'K', 'G', 'E', '1'};

template <class T>
void put_le(std::ostream& out, T value) {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
    U bits = std::bit_cast<U>(value);
    char buf[sizeof(U)];
    for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
    out.write(buf, sizeof buf);
}

template <class T>
T get_le(std::istream& in, const char* what) {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
    unsigned char buf[sizeof(U)];
    if (!in.read(reinterpret_cast<char*>(buf), sizeof buf))
        throw DataError(std::string("checkpoint truncated while reading ") + what);
    U bits = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) bits |= static_cast<U>(buf[i]) << (8 * i);
    return std::bit_cast<T>(bits);
}

void put_section(std::ostream& out, const std::string& bytes) {
    put_le<std::uint64_t>(out, bytes.size());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::string get_section(std::istream& in, const char* what, std::uint64_t limit = 1ull << 34) {
    auto len = get_le<std::uint64_t>(in, what);
    if (len > limit) throw DataError(std::string("checkpoint section too large: ") + what);
    std::string bytes(len, '\0');
    if (len && !in.read(bytes.data(), static_cast<std::streamsize>(len)))
        throw DataError(std::string("checkpoint truncated in section ") + what);
    return bytes;
}

std::string encode_ids(const std::vector<std::string>& ids) {
    std::ostringstream s;
    for (const auto& id : ids) {
        put_le<std::uint32_t>(s, static_cast<std::uint32_t>(id.size()));
        s.write(id.data(), static_cast<std::streamsize>(id.size()));
    }
    return s.str();
}

std::vector<std::string> decode_ids(const std::string& bytes, std::uint64_t expected,
                                    const char* what) {
    std::istringstream in(bytes);
    std::vector<std::string> ids;
    ids.reserve(expected);
    for (std::uint64_t i = 0; i < expected; ++i) {
        auto len = get_le<std::uint32_t>(in, what);
        std::string id(len, '\0');
        if (len && !in.read(id.data(), len))
            throw DataError(std::string("checkpoint truncated in ") + what);
        ids.push_back(std::move(id));
    }
    if (in.peek() != std::char_traits<char>::eof())
        throw DataError(std::string("checkpoint has trailing bytes in ") + what);
    return ids;
}

void put_table(std::ostream& out, const std::vector<double>& values) {
    put_le<std::uint64_t>(out, values.size());
    for (double v : values) put_le<double>(out, v);
}

std::vector<double> get_table(std::istream& in, std::uint64_t expected, const char* what) {
    auto n = get_le<std::uint64_t>(in, what);
    if (n != expected)
        throw DataError(std::string("checkpoint table size mismatch in ") + what);
    std::vector<double> values(n);
    for (auto& v : values) v = get_le<double>(in, what);
    return values;
}

std::string encode_config(const ModelConfig& c) {
    std::ostringstream s;
    s.precision(17);
    s << "norm=" << static_cast<std::uint32_t>(c.norm) << '\n'
      << "margin=" << c.margin << '\n'
      << "learning_rate=" << c.learning_rate << '\n'
      << "regularization=" << c.regularization << '\n'
      << "negatives_per_positive=" << c.negatives_per_positive << '\n'
      << "adversarial_sampling=" << (c.adversarial_sampling ? 1 : 0) << '\n'
      << "adversarial_temperature=" << c.adversarial_temperature << '\n'
      << "loss=" << static_cast<std::uint32_t>(c.loss) << '\n'
      << "batch_size=" << c.batch_size << '\n'
      << "max_epochs=" << c.max_epochs << '\n'
      << "seed=" << c.seed << '\n'
      << "eval_every=" << c.eval_every << '\n'
      << "patience=" << c.patience << '\n'
      << "valid_cap=" << c.valid_cap << '\n';
    return s.str();
}

void decode_config(const std::string& text, ModelConfig& c) {
    std::map<std::string, std::string> kv;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        auto eq = line.find('=');
        if (eq == std::string::npos) throw DataError("malformed checkpoint config line");
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    auto get = [&](const char* key) -> const std::string& {
        auto it = kv.find(key);
        if (it == kv.end()) throw DataError(std::string("checkpoint config lacks ") + key);
        return it->second;
    };
    try {
        auto norm = std::stoul(get("norm"));
        if (norm != 1 && norm != 2) throw DataError("checkpoint has an invalid norm");
        c.norm = static_cast<Norm>(norm);
        c.margin = std::stod(get("margin"));
        c.learning_rate = std::stod(get("learning_rate"));
        c.regularization = std::stod(get("regularization"));
        c.negatives_per_positive = std::stoull(get("negatives_per_positive"));
        c.adversarial_sampling = get("adversarial_sampling") == "1";
        c.adversarial_temperature = std::stod(get("adversarial_temperature"));
        auto loss = std::stoul(get("loss"));
        if (loss > 1) throw DataError("checkpoint has an invalid loss mode");
        c.loss = static_cast<LossMode>(loss);
        c.batch_size = std::stoull(get("batch_size"));
        c.max_epochs = std::stoull(get("max_epochs"));
        c.seed = std::stoull(get("seed"));
        c.eval_every = std::stoull(get("eval_every"));
        c.patience = std::stoull(get("patience"));
        c.valid_cap = std::stoull(get("valid_cap"));
    } catch (const std::logic_error&) {
        throw DataError("checkpoint config has a malformed value");
    }
}

}  // namespace

void write_checkpoint(std::ostream& out, const ModelState& state) {
    out.write(kMagic.data(), kMagic.size());
    put_le<std::uint32_t>(out, kCheckpointVersion);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(state.config.model));
    put_le<std::uint64_t>(out, state.config.dim);
    put_le<std::uint64_t>(out, state.entities.size());
    put_le<std::uint64_t>(out, state.relations.size());
    put_section(out, encode_config(state.config));
    put_section(out, encode_ids(state.entities.ids()));
    put_section(out, encode_ids(state.relations.ids()));
    put_table(out, state.entity_emb);
    put_table(out, state.relation_emb);
    put_le<std::uint64_t>(out, state.epoch);
    put_section(out, state.rng_state);
}

void save_checkpoint(const ModelState& state, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint: " + path);
    write_checkpoint(out, state);
    if (!out) throw DataError("failed writing checkpoint: " + path);
}

ModelState read_checkpoint(std::istream& in, std::optional<ModelKind> expected) {
    std::array<char, 4> magic{};
    if (!in.read(magic.data(), magic.size()) || magic != kMagic)
        throw DataError("not a checkpoint file (bad magic bytes)");
    auto version = get_le<std::uint32_t>(in, "version");
    if (version != kCheckpointVersion)
        throw DataError("unsupported checkpoint version " + std::to_string(version));
    auto tag = get_le<std::uint32_t>(in, "model tag");
    if (tag > 3) throw DataError("checkpoint has an unknown model tag");
    ModelState s;
    s.config.model = static_cast<ModelKind>(tag);
    if (expected && *expected != s.config.model)
        throw DataError("checkpoint holds a " + std::string(to_string(s.config.model)) +
                        " model, expected " + std::string(to_string(*expected)));
    s.config.dim = get_le<std::uint64_t>(in, "dimension");
    auto n_entities = get_le<std::uint64_t>(in, "entity count");
    auto n_relations = get_le<std::uint64_t>(in, "relation count");
    if (s.config.dim == 0) throw DataError("checkpoint has dimension 0");
    decode_config(get_section(in, "config"), s.config);
    s.entities = Vocabulary(decode_ids(get_section(in, "entity ids"), n_entities, "entity ids"));
    s.relations =
        Vocabulary(decode_ids(get_section(in, "relation ids"), n_relations, "relation ids"));
    s.entity_emb = get_table(in, n_entities * s.entity_width(), "entity table");
    s.relation_emb = get_table(in, n_relations * s.relation_width(), "relation table");
    s.epoch = get_le<std::uint64_t>(in, "epoch");
    s.rng_state = get_section(in, "rng state");
    return s;
}

ModelState load_checkpoint(const std::string& path, std::optional<ModelKind> expected) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read checkpoint: " + path);
    return read_checkpoint(in, expected);
}

void export_embeddings(std::ostream& out, const ModelState& state) {
    std::ostringstream s;
    s.precision(17);
    for (EntityIndex e = 0; e < state.entities.size(); ++e) {
        s << state.entities.id(e);
        for (double v : state.entity(e)) s << '\t' << v;
        s << '\n';
    }
    out << s.str();
}

}  // namespace kgr
