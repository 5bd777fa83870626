#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "eclrr/checkpoint.hpp"
#include "eclrr/config.hpp"
#include "eclrr/errors.hpp"
#include "eclrr/trainer.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json matrix_json(const eclrr::Matrix& m) {
    return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", m.data()}};
}

void write_json_file(const std::string& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw eclrr::FormatError("cannot open for writing: " + path);
    out << j.dump(2) << "\n";
}

std::string bwt_text(const std::optional<double>& bwt) {
    if (!bwt) return "undefined";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", *bwt);
    return buf;
}

int cmd_run(const std::string& config_path, const std::optional<std::uint64_t>& seed,
            const std::string& out_flag, const std::vector<std::string>& sets) {
    eclrr::RunConfig c = eclrr::load_config(config_path);
    for (const std::string& kv : sets) eclrr::apply_override(c, kv);
    if (seed) c.values["seed"] = std::to_string(*seed);
    if (!out_flag.empty()) c.values["output_dir"] = out_flag;
    eclrr::validate_keys(c);

    const std::string out_dir = c.get_str("output_dir", "out");
    const eclrr::TrainOptions o = eclrr::make_train_options(c);
    const eclrr::TaskStream stream = eclrr::make_stream(c);
    fs::create_directories(out_dir);

    eclrr::RunReport report;
    try {
        report = eclrr::run_stream(
            stream, o, [&](const eclrr::TrainerState& s, int task) {
                eclrr::Checkpoint ck;
                ck.task = task;
                ck.seed = o.seed;
                ck.net = s.net;
                ck.bundles = s.bundles;
                ck.plns = s.plns;
                eclrr::save_checkpoint(
                    out_dir + "/checkpoint_task_" + std::to_string(task) + ".json.gz",
                    ck);
            });
    } catch (const eclrr::TrainAbort& e) {
        const std::string diag_path = out_dir + "/abort.json";
        write_json_file(diag_path, json{{"error", e.what()},
                                        {"task", e.task},
                                        {"epoch", e.epoch},
                                        {"batch", e.batch}});
        std::fprintf(stderr, "training aborted: %s\ndiagnostics: %s\n", e.what(),
                     diag_path.c_str());
        return 1;
    }

    eclrr::write_metrics_csv(out_dir + "/metrics.csv", report.logs);
    eclrr::write_summary_json(out_dir + "/summary.json", c, report);
    std::printf("ACC=%.4f BWT=%s\n", report.acc, bwt_text(report.bwt).c_str());
    return 0;
}

int cmd_metrics(const std::string& matrix_path) {
    eclrr::AccuracyMatrix m = eclrr::load_matrix_json(matrix_path);
    m.validate();
    const eclrr::Metrics met = eclrr::metrics(m);
    std::printf("ACC=%.4f BWT=%s\n", met.acc, bwt_text(met.bwt).c_str());
    return 0;
}

json sigma_hist_report(const eclrr::Checkpoint& ck) {
    json layers = json::array();
    auto add_layer = [&](const std::string& name,
                         const eclrr::GaussianLayerParams& p) {
        std::vector<double> sigmas = p.sigma_w().data();
        const eclrr::Vec sb = p.sigma_b();
        sigmas.insert(sigmas.end(), sb.begin(), sb.end());
        double max_sigma = 0.0;
        double sum = 0.0;
        for (double s : sigmas) {
            if (s > max_sigma) max_sigma = s;
            sum += s;
        }
        constexpr int kBins = 50;
        std::vector<int> bins(kBins, 0);
        const double width = max_sigma > 0 ? max_sigma / kBins : 1.0;
        for (double s : sigmas) {
            int b = static_cast<int>(s / width);
            if (b >= kBins) b = kBins - 1;
            if (b < 0) b = 0;
            ++bins[b];
        }
        layers.push_back({{"layer", name},
                          {"count", sigmas.size()},
                          {"mean", sigmas.empty() ? 0.0 : sum / sigmas.size()},
                          {"max_sigma", max_sigma},
                          {"bin_width", width},
                          {"bins", bins}});
    };
    for (std::size_t i = 0; i < ck.net.shared.size(); ++i)
        add_layer("shared[" + std::to_string(i) + "]", ck.net.shared[i]);
    for (std::size_t i = 0; i < ck.net.heads.size(); ++i)
        add_layer("heads[" + std::to_string(i) + "]", ck.net.heads[i]);
    return json{{"what", "sigma-hist"}, {"task", ck.task}, {"layers", layers}};
}

json subspace_report(const eclrr::Checkpoint& ck) {
    json bundles = json::array();
    for (const eclrr::SubspaceBundle& b : ck.bundles)
        bundles.push_back({{"layer_id", b.layer_id},
                           {"common_dim", b.o_common.cols()},
                           {"distinct_dim", b.o_distinct.cols()},
                           {"o_common", matrix_json(b.o_common)},
                           {"o_distinct", matrix_json(b.o_distinct)}});
    return json{{"what", "subspace"}, {"task", ck.task}, {"bundles", bundles}};
}

json pln_report(const eclrr::Checkpoint& ck) {
    json gens = json::array();
    std::size_t psi_total = 0, target_total = 0;
    for (const eclrr::PlnGenerator& g : ck.plns) {
        const std::size_t psi = g.param_count();
        const std::size_t targets = g.seeds.rows() * g.target_dim;
        psi_total += psi;
        target_total += targets;
        gens.push_back({{"layer_id", g.layer_id},
                        {"seed_dim", g.seed_dim},
                        {"hidden_dim", g.hidden_dim},
                        {"target_dim", g.target_dim},
                        {"n_targets", g.seeds.rows()},
                        {"psi_params", psi},
                        {"target_params", targets},
                        {"ratio", targets ? static_cast<double>(psi) / targets : 0.0}});
    }
    return json{{"what", "pln"},
                {"task", ck.task},
                {"generators", gens},
                {"psi_params_total", psi_total},
                {"target_params_total", target_total},
                {"ratio", target_total
                              ? static_cast<double>(psi_total) / target_total
                              : 0.0}};
}

int cmd_inspect(const std::string& checkpoint_path, const std::string& what,
                std::string out_path) {
    if (what != "sigma-hist" && what != "subspace" && what != "pln") {
        std::fprintf(stderr, "unknown --what '%s' (expected sigma-hist, subspace or pln)\n",
                     what.c_str());
        return 2;
    }
    const eclrr::Checkpoint ck = eclrr::load_checkpoint(checkpoint_path);
    json report;
    if (what == "sigma-hist")
        report = sigma_hist_report(ck);
    else if (what == "subspace")
        report = subspace_report(ck);
    else
        report = pln_report(ck);
    if (out_path.empty()) out_path = what + ".json";
    write_json_file(out_path, report);
    std::printf("%s\n", out_path.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ECL-RR continual-learning experiments"};
    app.require_subcommand(1);

    auto* run = app.add_subcommand("run", "train a task stream from a config file");
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir;
    std::vector<std::string> sets;
    run->add_option("--config", config_path, "config file (key = value lines)")
        ->required();
    run->add_option("--seed", seed, "override the config seed");
    run->add_option("--out", out_dir, "override the output directory");
    run->add_option("--set", sets, "extra key=value overrides");

    auto* met = app.add_subcommand("metrics", "print ACC/BWT for a stored matrix");
    std::string matrix_path;
    met->add_option("--matrix", matrix_path, "accuracy matrix JSON")->required();

    auto* ins = app.add_subcommand("inspect", "dump diagnostics from a checkpoint");
    std::string checkpoint_path, what, report_path;
    ins->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
    ins->add_option("--what", what, "sigma-hist, subspace or pln")->required();
    ins->add_option("--out", report_path, "report path (default <what>.json)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (*run) return cmd_run(config_path, seed, out_dir, sets);
        if (*met) return cmd_metrics(matrix_path);
        return cmd_inspect(checkpoint_path, what, report_path);
    } catch (const eclrr::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const eclrr::FormatError& e) {
        std::fprintf(stderr, "format error: %s\n", e.what());
        return 2;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "invalid input: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
