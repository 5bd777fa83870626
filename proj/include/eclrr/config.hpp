#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "eclrr/task_streams.hpp"
#include "eclrr/trainer.hpp"

namespace eclrr {

// A parsed flat key=value config. Values stay strings until a typed getter
// converts them, so conversion failures can name the offending key.
struct RunConfig {
    std::map<std::string, std::string> values;

    bool has(const std::string& key) const { return values.count(key) != 0; }
    std::string get_str(const std::string& key, const std::string& fallback) const;
    double get_num(const std::string& key, double fallback) const;
    int get_int(const std::string& key, int fallback) const;
    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::vector<std::size_t> get_sizes(const std::string& key,
                                       const std::vector<std::size_t>& fallback) const;
};

// Parses "key = value" lines; '#' starts a comment, blank lines are skipped.
RunConfig parse_config_text(const std::string& text);
RunConfig load_config(const std::string& path);  // FormatError on unreadable file

// Applies one "key=value" command-line override.
void apply_override(RunConfig& c, const std::string& key_eq_value);

// Rejects keys outside the documented set, so typos fail loudly.
void validate_keys(const RunConfig& c);

// Builds and validates the trainer options; throws ConfigError naming the
// key for any out-of-range value.
TrainOptions make_train_options(const RunConfig& c);

// Builds the task stream for the configured protocol (synthetic needs no
// files; permuted/split read the configured IDX paths).
TaskStream make_stream(const RunConfig& c);

// Run outputs. The summary carries the echoed config so a run is fully
// reconstructable from it plus the seed; wall-times live under a single
// "runtimes" key so determinism diffs can drop exactly that.
void write_metrics_csv(const std::string& path, const std::vector<EpochLog>& logs);
void write_summary_json(const std::string& path, const RunConfig& c,
                        const RunReport& r);

// Reads an accuracy matrix from JSON: either a bare array of rows, or an
// object carrying "matrix" or "accuracy_matrix".
AccuracyMatrix load_matrix_json(const std::string& path);

}  // namespace eclrr
