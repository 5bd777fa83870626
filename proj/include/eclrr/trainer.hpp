#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "eclrr/bayes_net.hpp"
#include "eclrr/losses.hpp"
#include "eclrr/pln.hpp"
#include "eclrr/rng.hpp"
#include "eclrr/subspace.hpp"
#include "eclrr/task_streams.hpp"

namespace eclrr {

// Correlation gate thresholds: r >= epsilon means robust correspondence,
// |r| <= delta means none, anything between changes nothing.
struct GateThresholds {
    double epsilon = 0.7;
    double delta = 0.1;
    int window = 10;
    void validate() const;
};

struct LearningRates {
    double lambda = 0.1;  // base step, every parameter
    double alpha = 0.01;  // extra projected-gradient step on gated mu
    void validate() const;
};

enum class GateBranch { kWarmup, kRobust, kNone, kIntermediate };

struct GateDecision {
    GateBranch branch = GateBranch::kWarmup;
    double r = 0.0;  // NaN when no correlation was computable
};

// Pure function of one layer's two loss histories plus thresholds; other
// layers never enter. Histories shorter than the window give kWarmup, a
// degenerate (constant) history gives kIntermediate.
GateDecision gate_decision(const std::deque<double>& proj_hist,
                           const std::deque<double>& cor_hist,
                           const GateThresholds& g);
// Branch for an externally supplied r (forced-gate test hook).
GateDecision gate_from_r(double r, const GateThresholds& g);

// Per-task held-out samples kept for the backward-transfer gate and the
// correspondence score's data term; never replayed into training batches.
struct CoresetEntry {
    int task = 0;
    Dataset data;  // labels in the task's own label space
};

struct Coreset {
    std::vector<CoresetEntry> entries;
    const CoresetEntry* find(int task) const;
};

// Lower-triangular accuracy record: rows[i][j] = accuracy on task j after
// training task i, j <= i.
struct AccuracyMatrix {
    std::vector<std::vector<double>> rows;
    std::size_t tasks() const { return rows.size(); }
    void validate() const;
};

struct Metrics {
    double acc = 0.0;
    std::optional<double> bwt;  // empty when fewer than two tasks
};

// ACC = mean of the final row; BWT = mean of (final accuracy - accuracy
// right after training) over all but the last task.
Metrics metrics(const AccuracyMatrix& a);

// Everything the training loop needs to know, json-free. The cli module
// builds one of these from a RunConfig.
struct TrainOptions {
    std::vector<std::size_t> hidden = {100, 100};
    int epochs = 5;
    std::size_t batch_size = 128;
    int n_mc = 2;        // training-gradient draws
    int n_mc_eval = 16;  // evaluation draws
    int n_mc_cor = 8;    // importance samples M for the correspondence score
    int n_mc_gate = 4;   // draws for the backward-transfer gate losses
    RegWeights reg;
    GateThresholds gate;
    LearningRates rates;
    int coreset_size = 40;
    double energy_fraction = 0.95;
    std::size_t budget = 64;
    int snapshot_every = 5;  // epochs between snapshot pushes (plus the last)
    bool eclrr = true;       // false: naive fine-tuning baseline
    bool pln_enabled = false;
    std::size_t pln_seed_dim = 16;
    int pln_epochs = 20;
    bool cor_use_coreset = true;
    int cor_coreset_subsample = 8;
    std::optional<double> forced_gate_r;  // test hook overriding the gate r
    bool invariant_checks = false;  // verify subspace invariants every batch
    std::uint64_t seed = 1;
    void validate() const;
};

// Cross-task mutable state. "Trunk" layers are the shared dense blocks the
// subspace machinery operates on: every shared layer in multi-head mode,
// all but the final classifier in single-head mode.
struct TrainerState {
    BayesMlp net;
    RngState rng{1, 1};

    std::vector<GaussianLayerParams> prev_shared;  // frozen at task end
    std::vector<Vec> prev_mu_w;                    // flattened, trunk layers
    std::vector<Vec> prev_sigma_w;
    bool has_prev = false;

    // Trunk mu at construction. The PLN fits learned offsets from this
    // reference: the seeded init is reproducible for free, so only the
    // trained delta needs compressing.
    std::vector<Matrix> init_mu_w;

    std::vector<RepresentationMatrix> reps;  // one per trunk layer
    std::vector<SubspaceBundle> bundles;
    std::vector<Matrix> candidates;  // cached residual bases
    std::uint64_t cand_stamp = 0;    // bumped whenever candidates change

    Coreset coreset;
    std::vector<PlnGenerator> plns;  // last task's generators when enabled

    std::vector<std::deque<double>> hist_proj;  // per trunk layer, this task
    std::vector<std::deque<double>> hist_cor;

    int tasks_seen = 0;

    std::size_t trunk_count() const {
        return net.head_mode == HeadMode::kMulti ? net.shared.size()
                                                 : net.shared.size() - 1;
    }
};

// Builds the network and empty per-layer structures. head_out is the class
// count per task; protocol decides single vs multi head.
TrainerState init_trainer(std::size_t input_dim, std::size_t head_out,
                          HeadMode mode, const TrainOptions& o);

struct EpochLog {
    int task = 0;
    int epoch = 0;
    std::string split;  // "train" or "test"
    double loss = 0.0;
    double acc = 0.0;
    double gate_r = 0.0;  // NaN when never computed
    std::string branch;   // modal branch over the epoch
};

// One task's optimization: plain Bayes-by-backprop steps everywhere, plus
// the correlation-gated projected mu updates and distinctive-subspace
// bookkeeping from the second task on. Throws TrainAbort when the loss
// turns non-finite.
std::vector<EpochLog> train_task(TrainerState& s, const TaskItem& task, int task_id,
                                 const TrainOptions& o);

// End-of-task transition: freeze prev params (through the PLN when enabled),
// fill the task's coreset, and promote distinctive bases whose combined
// projection serves some earlier coreset at least as well as the common one.
void finish_task(TrainerState& s, const TaskItem& task, int task_id,
                 const TrainOptions& o);

// Coreset loss comparison for task j and one trunk layer: true iff the
// combined projection scores <= the common-only projection under identical
// MC noise. Missing coreset -> InvalidState.
bool backward_transfer_gate(TrainerState& s, int j, std::size_t layer,
                            const TrainOptions& o);

// Accuracy by argmax of the MC-averaged softmax. Pure in `net`.
double evaluate(const BayesMlp& net, const Dataset& data, int task, int n_mc,
                RngState rng);

struct SigmaSummary {
    int task = 0;
    int layer = 0;
    double mean = 0.0, p10 = 0.0, p50 = 0.0, p90 = 0.0, lo = 0.0, hi = 0.0;
    std::vector<int> bins;  // 16 equal-width bins over [lo, hi]
};

struct RunReport {
    AccuracyMatrix matrix;
    double acc = 0.0;
    std::optional<double> bwt;
    std::vector<EpochLog> logs;
    std::vector<SigmaSummary> sigmas;
    std::vector<double> task_seconds;
};

// Invoked after each finish_task with the state and the finished task id,
// e.g. to write a checkpoint. Mutating the state voids determinism.
using TaskCallback = std::function<void(const TrainerState&, int)>;

// Full stream: train tasks in order, evaluating every seen task after each.
// Deterministic for a fixed (options, stream); ECLRR_THREADS caps how many
// evaluations run concurrently (read-only net, results placed by index).
RunReport run_stream(const TaskStream& stream, const TrainOptions& o,
                     const TaskCallback& after_task = {});

// Flattened weight means / sigmas of one layer, used by the subspace and
// correspondence paths (biases stay out of the subspace story).
Vec flat_mu_w(const GaussianLayerParams& p);
Vec flat_sigma_w(const GaussianLayerParams& p);
void set_mu_w_from_flat(GaussianLayerParams& p, const Vec& flat);

}  // namespace eclrr
