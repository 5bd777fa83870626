#pragma once

#include <stdexcept>
#include <string>

namespace eclrr {

// Numerical routine failed to converge or produced non-finite values.
// `iterations` reports how far the routine got before giving up.
struct NumericFailure : std::runtime_error {
    int iterations;
    explicit NumericFailure(const std::string& msg, int iters = 0)
        : std::runtime_error(msg), iterations(iters) {}
};

// Correlation is undefined: one of the series has (near-)zero variance.
struct DegenerateCorrelation : std::runtime_error {
    explicit DegenerateCorrelation(const std::string& msg)
        : std::runtime_error(msg) {}
};

// Malformed input file (IDX stream, checkpoint, ...). `what()` names the
// offending field or offset.
struct FormatError : std::runtime_error {
    explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad run configuration; `field` holds the dotted key that failed validation.
struct ConfigError : std::runtime_error {
    std::string field;
    ConfigError(const std::string& field_name, const std::string& msg)
        : std::runtime_error(field_name + ": " + msg), field(field_name) {}
};

// Training hit non-finite loss or gradients and stopped.
struct TrainAbort : std::runtime_error {
    int task;
    int epoch;
    int batch;
    TrainAbort(const std::string& msg, int task_id, int epoch_id, int batch_id)
        : std::runtime_error(msg + " (task " + std::to_string(task_id) +
                             ", epoch " + std::to_string(epoch_id) +
                             ", batch " + std::to_string(batch_id) + ")"),
          task(task_id), epoch(epoch_id), batch(batch_id) {}
};

// An operation was called on state that is not ready for it (e.g. scoring
// against a previous task that stored no coreset).
struct InvalidState : std::runtime_error {
    explicit InvalidState(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace eclrr
