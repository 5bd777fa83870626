#include "eclrr/checkpoint.hpp"

#include <zlib.h>

#include <string>

#include "eclrr/errors.hpp"
#include "json.hpp"

namespace eclrr {

namespace {

using nlohmann::json;

json matrix_to_json(const Matrix& m) {
    return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", m.data()}};
}

Matrix matrix_from_json(const json& j, const std::string& where) {
    if (!j.is_object() || !j.contains("rows") || !j.contains("cols") ||
        !j.contains("data"))
        throw FormatError(where + ": expected {rows, cols, data}");
    const std::size_t rows = j["rows"].get<std::size_t>();
    const std::size_t cols = j["cols"].get<std::size_t>();
    Vec data = j["data"].get<Vec>();
    if (data.size() != rows * cols)
        throw FormatError(where + ": data length " + std::to_string(data.size()) +
                          " does not match " + std::to_string(rows) + "x" +
                          std::to_string(cols));
    return Matrix(rows, cols, std::move(data));
}

json layer_to_json(const GaussianLayerParams& p) {
    return json{{"mu_w", matrix_to_json(p.mu_w)},
                {"rho_w", matrix_to_json(p.rho_w)},
                {"mu_b", p.mu_b},
                {"rho_b", p.rho_b}};
}

GaussianLayerParams layer_from_json(const json& j, const std::string& where) {
    GaussianLayerParams p;
    p.mu_w = matrix_from_json(j.at("mu_w"), where + ".mu_w");
    p.rho_w = matrix_from_json(j.at("rho_w"), where + ".rho_w");
    p.mu_b = j.at("mu_b").get<Vec>();
    p.rho_b = j.at("rho_b").get<Vec>();
    p.check_shapes();
    return p;
}

json pln_to_json(const PlnGenerator& g) {
    return json{{"layer_id", g.layer_id},
                {"seed_dim", g.seed_dim},
                {"hidden_dim", g.hidden_dim},
                {"target_dim", g.target_dim},
                {"w1", matrix_to_json(g.w1)},
                {"b1", g.b1},
                {"w2", matrix_to_json(g.w2)},
                {"b2", g.b2},
                {"seeds", matrix_to_json(g.seeds)}};
}

PlnGenerator pln_from_json(const json& j, const std::string& where) {
    PlnGenerator g;
    g.layer_id = j.at("layer_id").get<int>();
    g.seed_dim = j.at("seed_dim").get<std::size_t>();
    g.hidden_dim = j.at("hidden_dim").get<std::size_t>();
    g.target_dim = j.at("target_dim").get<std::size_t>();
    g.w1 = matrix_from_json(j.at("w1"), where + ".w1");
    g.b1 = j.at("b1").get<Vec>();
    g.w2 = matrix_from_json(j.at("w2"), where + ".w2");
    g.b2 = j.at("b2").get<Vec>();
    g.seeds = matrix_from_json(j.at("seeds"), where + ".seeds");
    return g;
}

std::string gz_read_all(const std::string& path) {
    gzFile f = gzopen(path.c_str(), "rb");
    if (!f) throw FormatError("cannot open checkpoint: " + path);
    std::string out;
    char buf[1 << 16];
    int n;
    while ((n = gzread(f, buf, sizeof buf)) > 0) out.append(buf, n);
    const bool failed = n < 0;
    gzclose(f);
    if (failed) throw FormatError("decompression failed: " + path);
    return out;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& c) {
    json j;
    j["version"] = c.version;
    j["task"] = c.task;
    j["seed"] = c.seed;

    json net;
    net["head_mode"] = c.net.head_mode == HeadMode::kMulti ? "multi" : "single";
    net["head_out"] = c.net.head_out;
    net["shared"] = json::array();
    for (const auto& layer : c.net.shared) net["shared"].push_back(layer_to_json(layer));
    net["heads"] = json::array();
    for (const auto& layer : c.net.heads) net["heads"].push_back(layer_to_json(layer));
    j["net"] = std::move(net);

    j["bundles"] = json::array();
    for (const SubspaceBundle& b : c.bundles)
        j["bundles"].push_back({{"layer_id", b.layer_id},
                                {"o_common", matrix_to_json(b.o_common)},
                                {"o_distinct", matrix_to_json(b.o_distinct)}});

    j["plns"] = json::array();
    for (const PlnGenerator& g : c.plns) j["plns"].push_back(pln_to_json(g));

    const std::string text = j.dump();
    gzFile f = gzopen(path.c_str(), "wb6");
    if (!f) throw FormatError("cannot open checkpoint for writing: " + path);
    const unsigned len = static_cast<unsigned>(text.size());
    const bool ok = gzwrite(f, text.data(), len) == static_cast<int>(len);
    gzclose(f);
    if (!ok) throw FormatError("short write to checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    const std::string text = gz_read_all(path);
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw FormatError("checkpoint is not valid JSON: " + std::string(e.what()));
    }

    Checkpoint c;
    try {
        c.version = j.at("version").get<int>();
        if (c.version != 1)
            throw FormatError("unsupported checkpoint version " +
                              std::to_string(c.version));
        c.task = j.at("task").get<int>();
        c.seed = j.at("seed").get<std::uint64_t>();

        const json& net = j.at("net");
        const std::string mode = net.at("head_mode").get<std::string>();
        if (mode == "multi")
            c.net.head_mode = HeadMode::kMulti;
        else if (mode == "single")
            c.net.head_mode = HeadMode::kSingle;
        else
            throw FormatError("unknown head_mode: " + mode);
        c.net.head_out = net.at("head_out").get<std::size_t>();
        int i = 0;
        for (const json& layer : net.at("shared"))
            c.net.shared.push_back(
                layer_from_json(layer, "net.shared[" + std::to_string(i++) + "]"));
        i = 0;
        for (const json& layer : net.at("heads"))
            c.net.heads.push_back(
                layer_from_json(layer, "net.heads[" + std::to_string(i++) + "]"));

        i = 0;
        for (const json& bj : j.at("bundles")) {
            const std::string where = "bundles[" + std::to_string(i++) + "]";
            SubspaceBundle b;
            b.layer_id = bj.at("layer_id").get<int>();
            b.o_common = matrix_from_json(bj.at("o_common"), where + ".o_common");
            b.o_distinct = matrix_from_json(bj.at("o_distinct"), where + ".o_distinct");
            c.bundles.push_back(std::move(b));
        }

        i = 0;
        for (const json& gj : j.at("plns"))
            c.plns.push_back(pln_from_json(gj, "plns[" + std::to_string(i++) + "]"));
    } catch (const json::exception& e) {
        throw FormatError("checkpoint schema mismatch: " + std::string(e.what()));
    }
    return c;
}

}  // namespace eclrr
