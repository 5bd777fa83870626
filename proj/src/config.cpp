#include "eclrr/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "eclrr/errors.hpp"
#include "json.hpp"

namespace eclrr {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

const std::set<std::string>& known_keys() {
    static const std::set<std::string> keys = {
        "protocol",
        "mode",
        "seed",
        "output_dir",
        "data.train_images",
        "data.train_labels",
        "data.test_images",
        "data.test_labels",
        "data.cap_per_class",
        "data.test_cap_per_class",
        "permuted.tasks",
        "split.pairs",
        "synthetic.tasks",
        "synthetic.classes_per_task",
        "synthetic.dim",
        "synthetic.separation",
        "synthetic.per_class",
        "network.hidden",
        "train.epochs",
        "train.batch_size",
        "train.n_mc",
        "eval.n_mc",
        "cor.n_mc",
        "cor.use_coreset",
        "cor.coreset_subsample",
        "gate.n_mc",
        "gate.epsilon",
        "gate.delta",
        "gate.window",
        "reg.w_mu1",
        "reg.w_mu2",
        "reg.w_sig1",
        "reg.w_sig2",
        "reg.alt_sigma_ratio",
        "reg.sigma_floor",
        "learning.lambda",
        "learning.alpha",
        "coreset.size",
        "subspace.energy_fraction",
        "subspace.budget",
        "subspace.snapshot_every",
        "pln.enabled",
        "pln.seed_dim",
        "pln.epochs",
    };
    return keys;
}

}  // namespace

std::string RunConfig::get_str(const std::string& key, const std::string& fallback) const {
    auto it = values.find(key);
    return it == values.end() ? fallback : it->second;
}

double RunConfig::get_num(const std::string& key, double fallback) const {
    auto it = values.find(key);
    if (it == values.end()) return fallback;
    try {
        std::size_t used = 0;
        double v = std::stod(it->second, &used);
        if (used != it->second.size()) throw std::invalid_argument("trailing text");
        return v;
    } catch (const std::exception&) {
        throw ConfigError(key, "not a number: '" + it->second + "'");
    }
}

int RunConfig::get_int(const std::string& key, int fallback) const {
    auto it = values.find(key);
    if (it == values.end()) return fallback;
    try {
        std::size_t used = 0;
        int v = std::stoi(it->second, &used);
        if (used != it->second.size()) throw std::invalid_argument("trailing text");
        return v;
    } catch (const std::exception&) {
        throw ConfigError(key, "not an integer: '" + it->second + "'");
    }
}

std::uint64_t RunConfig::get_u64(const std::string& key, std::uint64_t fallback) const {
    auto it = values.find(key);
    if (it == values.end()) return fallback;
    try {
        std::size_t used = 0;
        unsigned long long v = std::stoull(it->second, &used);
        if (used != it->second.size()) throw std::invalid_argument("trailing text");
        return static_cast<std::uint64_t>(v);
    } catch (const std::exception&) {
        throw ConfigError(key, "not an unsigned integer: '" + it->second + "'");
    }
}

bool RunConfig::get_bool(const std::string& key, bool fallback) const {
    auto it = values.find(key);
    if (it == values.end()) return fallback;
    const std::string& v = it->second;
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError(key, "not a boolean: '" + v + "'");
}

std::vector<std::size_t> RunConfig::get_sizes(
    const std::string& key, const std::vector<std::size_t>& fallback) const {
    auto it = values.find(key);
    if (it == values.end()) return fallback;
    std::vector<std::size_t> out;
    std::stringstream ss(it->second);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) throw ConfigError(key, "empty list element");
        try {
            std::size_t used = 0;
            long v = std::stol(item, &used);
            if (used != item.size() || v <= 0) throw std::invalid_argument("bad");
            out.push_back(static_cast<std::size_t>(v));
        } catch (const std::exception&) {
            throw ConfigError(key, "not a positive integer list: '" + it->second + "'");
        }
    }
    if (out.empty()) throw ConfigError(key, "empty list");
    return out;
}

RunConfig parse_config_text(const std::string& text) {
    RunConfig c;
    std::stringstream ss(text);
    std::string line;
    int lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw FormatError("config line " + std::to_string(lineno) +
                              " has no '=': '" + line + "'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            throw FormatError("config line " + std::to_string(lineno) + " has an empty key");
        c.values[key] = value;
    }
    return c;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open config file: " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str());
}

void apply_override(RunConfig& c, const std::string& key_eq_value) {
    const std::size_t eq = key_eq_value.find('=');
    if (eq == std::string::npos || eq == 0)
        throw FormatError("override must look like key=value: '" + key_eq_value + "'");
    c.values[trim(key_eq_value.substr(0, eq))] = trim(key_eq_value.substr(eq + 1));
}

void validate_keys(const RunConfig& c) {
    for (const auto& [key, value] : c.values)
        if (!known_keys().count(key)) throw ConfigError(key, "unknown key");
}

TrainOptions make_train_options(const RunConfig& c) {
    TrainOptions o;
    o.hidden = c.get_sizes("network.hidden", o.hidden);
    if (o.hidden.empty()) throw ConfigError("network.hidden", "needs at least one layer");

    o.epochs = c.get_int("train.epochs", o.epochs);
    if (o.epochs < 1) throw ConfigError("train.epochs", "must be >= 1");
    const int bs = c.get_int("train.batch_size", static_cast<int>(o.batch_size));
    if (bs < 1) throw ConfigError("train.batch_size", "must be >= 1");
    o.batch_size = static_cast<std::size_t>(bs);

    o.n_mc = c.get_int("train.n_mc", o.n_mc);
    if (o.n_mc < 1) throw ConfigError("train.n_mc", "must be >= 1");
    o.n_mc_eval = c.get_int("eval.n_mc", o.n_mc_eval);
    if (o.n_mc_eval < 1) throw ConfigError("eval.n_mc", "must be >= 1");
    o.n_mc_cor = c.get_int("cor.n_mc", o.n_mc_cor);
    if (o.n_mc_cor < 2) throw ConfigError("cor.n_mc", "must be >= 2");
    o.n_mc_gate = c.get_int("gate.n_mc", o.n_mc_gate);
    if (o.n_mc_gate < 1) throw ConfigError("gate.n_mc", "must be >= 1");

    o.reg.w_mu1 = c.get_num("reg.w_mu1", o.reg.w_mu1);
    o.reg.w_mu2 = c.get_num("reg.w_mu2", o.reg.w_mu2);
    o.reg.w_sig1 = c.get_num("reg.w_sig1", o.reg.w_sig1);
    o.reg.w_sig2 = c.get_num("reg.w_sig2", o.reg.w_sig2);
    if (o.reg.w_mu1 < 0) throw ConfigError("reg.w_mu1", "must be >= 0");
    if (o.reg.w_mu2 < 0) throw ConfigError("reg.w_mu2", "must be >= 0");
    if (o.reg.w_sig1 < 0) throw ConfigError("reg.w_sig1", "must be >= 0");
    if (o.reg.w_sig2 < 0) throw ConfigError("reg.w_sig2", "must be >= 0");
    o.reg.alt_sigma_ratio = c.get_bool("reg.alt_sigma_ratio", o.reg.alt_sigma_ratio);
    o.reg.sigma_floor = c.get_num("reg.sigma_floor", o.reg.sigma_floor);
    if (!(o.reg.sigma_floor > 0)) throw ConfigError("reg.sigma_floor", "must be > 0");

    o.gate.epsilon = c.get_num("gate.epsilon", o.gate.epsilon);
    o.gate.delta = c.get_num("gate.delta", o.gate.delta);
    o.gate.window = c.get_int("gate.window", o.gate.window);
    if (!(o.gate.epsilon > 0 && o.gate.epsilon <= 1))
        throw ConfigError("gate.epsilon", "must be in (0, 1]");
    if (!(o.gate.delta >= 0 && o.gate.delta < o.gate.epsilon))
        throw ConfigError("gate.delta", "must be in [0, epsilon)");
    if (o.gate.window < 2) throw ConfigError("gate.window", "must be >= 2");

    o.rates.lambda = c.get_num("learning.lambda", o.rates.lambda);
    if (!(o.rates.lambda > 0)) throw ConfigError("learning.lambda", "must be > 0");
    o.rates.alpha = c.get_num("learning.alpha", o.rates.alpha);
    if (o.rates.alpha < 0) throw ConfigError("learning.alpha", "must be >= 0");

    o.coreset_size = c.get_int("coreset.size", o.coreset_size);
    if (o.coreset_size < 1) throw ConfigError("coreset.size", "must be >= 1");

    o.energy_fraction = c.get_num("subspace.energy_fraction", o.energy_fraction);
    if (!(o.energy_fraction > 0 && o.energy_fraction <= 1))
        throw ConfigError("subspace.energy_fraction", "must be in (0, 1]");
    const int budget = c.get_int("subspace.budget", static_cast<int>(o.budget));
    if (budget < 1) throw ConfigError("subspace.budget", "must be >= 1");
    o.budget = static_cast<std::size_t>(budget);
    o.snapshot_every = c.get_int("subspace.snapshot_every", o.snapshot_every);
    if (o.snapshot_every < 1) throw ConfigError("subspace.snapshot_every", "must be >= 1");

    o.pln_enabled = c.get_bool("pln.enabled", o.pln_enabled);
    const int seed_dim = c.get_int("pln.seed_dim", static_cast<int>(o.pln_seed_dim));
    if (seed_dim < 1) throw ConfigError("pln.seed_dim", "must be >= 1");
    o.pln_seed_dim = static_cast<std::size_t>(seed_dim);
    o.pln_epochs = c.get_int("pln.epochs", o.pln_epochs);
    if (o.pln_epochs < 0) throw ConfigError("pln.epochs", "must be >= 0");

    o.cor_use_coreset = c.get_bool("cor.use_coreset", o.cor_use_coreset);
    o.cor_coreset_subsample =
        c.get_int("cor.coreset_subsample", o.cor_coreset_subsample);
    if (o.cor_coreset_subsample < 1)
        throw ConfigError("cor.coreset_subsample", "must be >= 1");

    const std::string mode = c.get_str("mode", "eclrr");
    if (mode == "eclrr") {
        o.eclrr = true;
    } else if (mode == "naive") {
        o.eclrr = false;
    } else {
        throw ConfigError("mode", "must be 'eclrr' or 'naive', got '" + mode + "'");
    }

    o.seed = c.get_u64("seed", o.seed);
    o.validate();
    return o;
}

namespace {

std::vector<std::pair<int, int>> parse_pairs(const RunConfig& c) {
    const std::string text = c.get_str("split.pairs", "0-1,2-3,4-5,6-7,8-9");
    std::vector<std::pair<int, int>> pairs;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        const std::size_t dash = item.find('-');
        if (dash == std::string::npos || dash == 0 || dash + 1 == item.size())
            throw ConfigError("split.pairs", "expected 'a-b' entries, got '" + item + "'");
        try {
            pairs.emplace_back(std::stoi(item.substr(0, dash)),
                               std::stoi(item.substr(dash + 1)));
        } catch (const std::exception&) {
            throw ConfigError("split.pairs", "expected 'a-b' entries, got '" + item + "'");
        }
    }
    if (pairs.empty()) throw ConfigError("split.pairs", "no pairs given");
    return pairs;
}

Dataset load_named_idx(const RunConfig& c, const std::string& images_key,
                       const std::string& labels_key) {
    const std::string images = c.get_str(images_key, "");
    const std::string labels = c.get_str(labels_key, "");
    if (images.empty()) throw ConfigError(images_key, "required for this protocol");
    if (labels.empty()) throw ConfigError(labels_key, "required for this protocol");
    return load_idx(images, labels);
}

}  // namespace

TaskStream make_stream(const RunConfig& c) {
    const std::string protocol = c.get_str("protocol", "synthetic");
    const std::uint64_t seed = c.get_u64("seed", 1);

    if (protocol == "synthetic") {
        const int tasks = c.get_int("synthetic.tasks", 3);
        const int cpt = c.get_int("synthetic.classes_per_task", 2);
        const int dim = c.get_int("synthetic.dim", 16);
        const double sep = c.get_num("synthetic.separation", 2.5);
        const int per_class = c.get_int("synthetic.per_class", 50);
        if (tasks < 1) throw ConfigError("synthetic.tasks", "must be >= 1");
        if (cpt < 2) throw ConfigError("synthetic.classes_per_task", "must be >= 2");
        if (dim < 1) throw ConfigError("synthetic.dim", "must be >= 1");
        if (!(sep > 0)) throw ConfigError("synthetic.separation", "must be > 0");
        if (per_class < 2) throw ConfigError("synthetic.per_class", "must be >= 2");
        return make_synthetic_blobs(tasks, cpt, static_cast<std::size_t>(dim), sep,
                                    per_class, seed);
    }

    if (protocol == "permuted" || protocol == "split") {
        Dataset train = load_named_idx(c, "data.train_images", "data.train_labels");
        Dataset test = load_named_idx(c, "data.test_images", "data.test_labels");
        const int cap = c.get_int("data.cap_per_class", 0);
        const int test_cap = c.get_int("data.test_cap_per_class", 0);
        if (cap < 0) throw ConfigError("data.cap_per_class", "must be >= 0");
        if (test_cap < 0) throw ConfigError("data.test_cap_per_class", "must be >= 0");
        if (cap > 0) train = cap_per_class(train, cap, seed ^ 0x5eed);
        if (test_cap > 0) test = cap_per_class(test, test_cap, seed ^ 0x7e57);

        if (protocol == "permuted") {
            const int tasks = c.get_int("permuted.tasks", 3);
            if (tasks < 1) throw ConfigError("permuted.tasks", "must be >= 1");
            return make_permuted(train, test, tasks, seed);
        }
        return make_split(train, test, parse_pairs(c));
    }

    throw ConfigError("protocol",
                      "must be 'synthetic', 'permuted' or 'split', got '" + protocol + "'");
}

void write_metrics_csv(const std::string& path, const std::vector<EpochLog>& logs) {
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw FormatError("cannot open for writing: " + path);
    std::fputs("task,epoch,split,loss,acc,gate_r,gate_branch\n", f);
    for (const EpochLog& l : logs) {
        if (std::isnan(l.gate_r))
            std::fprintf(f, "%d,%d,%s,%.10g,%.10g,nan,%s\n", l.task, l.epoch,
                         l.split.c_str(), l.loss, l.acc, l.branch.c_str());
        else
            std::fprintf(f, "%d,%d,%s,%.10g,%.10g,%.10g,%s\n", l.task, l.epoch,
                         l.split.c_str(), l.loss, l.acc, l.gate_r, l.branch.c_str());
    }
    std::fclose(f);
}

void write_summary_json(const std::string& path, const RunConfig& c,
                        const RunReport& r) {
    nlohmann::json j;
    auto echo = c.values;  // every result-affecting key; output_dir only moves files
    echo.erase("output_dir");
    j["config"] = echo;
    j["seed"] = c.get_u64("seed", 1);
    j["accuracy_matrix"] = r.matrix.rows;
    j["acc"] = r.acc;
    if (r.bwt)
        j["bwt"] = *r.bwt;
    else
        j["bwt"] = nullptr;
    nlohmann::json sigmas = nlohmann::json::array();
    for (const SigmaSummary& s : r.sigmas) {
        sigmas.push_back({{"task", s.task},
                          {"layer", s.layer},
                          {"mean", s.mean},
                          {"p10", s.p10},
                          {"p50", s.p50},
                          {"p90", s.p90},
                          {"lo", s.lo},
                          {"hi", s.hi},
                          {"bins", s.bins}});
    }
    j["sigma_histograms"] = sigmas;
    double total = 0.0;
    for (double t : r.task_seconds) total += t;
    j["runtimes"] = {{"task_seconds", r.task_seconds}, {"total_seconds", total}};

    std::ofstream out(path);
    if (!out) throw FormatError("cannot open for writing: " + path);
    out << j.dump(2) << "\n";
}

AccuracyMatrix load_matrix_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open matrix file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad JSON: ") + e.what());
    }
    if (j.is_object()) {
        if (j.contains("accuracy_matrix"))
            j = j["accuracy_matrix"];
        else if (j.contains("matrix"))
            j = j["matrix"];
        else
            throw FormatError("no 'matrix' or 'accuracy_matrix' key in " + path);
    }
    if (!j.is_array()) throw FormatError("matrix JSON must be an array of rows");
    AccuracyMatrix m;
    try {
        for (const auto& row : j) m.rows.push_back(row.get<std::vector<double>>());
    } catch (const nlohmann::json::exception&) {
        throw FormatError("matrix rows must be arrays of numbers");
    }
    return m;
}

}  // namespace eclrr
