#pragma once

#include <cstddef>
#include <vector>

#include "eclrr/matrix.hpp"
#include "eclrr/rng.hpp"

namespace eclrr {

// One variational dense layer: every weight and bias carries a Gaussian
// (mu, rho) pair with sigma = softplus(rho).
struct GaussianLayerParams {
    Matrix mu_w;   // out x in
    Matrix rho_w;  // out x in
    Vec mu_b;      // out
    Vec rho_b;     // out

    std::size_t in() const { return mu_w.cols(); }
    std::size_t out() const { return mu_w.rows(); }
    std::size_t param_count() const { return mu_w.rows() * mu_w.cols() + mu_b.size(); }

    Matrix sigma_w() const;
    Vec sigma_b() const;
    void check_shapes() const;  // throws invalid_argument on inconsistency
};

enum class HeadMode { kSingle, kMulti };

// Fully connected variational classifier. In single-head mode `shared` holds
// every layer including the output. In multi-head mode `shared` is the trunk
// and each observed task owns one affine head in `heads`.
struct BayesMlp {
    std::vector<GaussianLayerParams> shared;
    std::vector<GaussianLayerParams> heads;
    HeadMode head_mode = HeadMode::kSingle;
    std::size_t head_out = 0;  // classes per head (multi-head mode)

    std::size_t input_dim() const { return shared.empty() ? 0 : shared.front().in(); }
    // Depth of one sampled stack: trunk plus the active head if any.
    std::size_t stack_depth() const {
        return shared.size() + (head_mode == HeadMode::kMulti ? 1 : 0);
    }
};

// dims = {input, hidden..., output} for single-head; {input, hidden...} for
// multi-head with `head_out` classes per head (heads are added per task via
// add_head). mu ~ N(0, 0.1); sigma initialized 0.03 / 0.02 / 0.015 by depth.
BayesMlp make_mlp(const std::vector<std::size_t>& dims, HeadMode mode,
                  std::size_t head_out, RngState& rng);

// Appends a fresh head for the next task id (multi-head mode only).
void add_head(BayesMlp& net, RngState& rng);

double sigma_init_for_depth(std::size_t depth);

// A concrete draw from the network posterior. One entry per layer of the
// active stack (trunk layers, then the head in multi-head mode). The epsilon
// draws are retained so pathwise rho-gradients can reuse them.
struct LayerSample {
    Matrix w;
    Vec b;
    Matrix eps_w;
    Vec eps_b;
};

struct SampledWeights {
    std::vector<LayerSample> layers;
};

// W = mu + softplus(rho) * eps for a single layer.
SampledWeights sample_weights(const GaussianLayerParams& params, RngState& rng);
// Full stack for the given task (head selection in multi-head mode).
SampledWeights sample_net(const BayesMlp& net, int task, RngState& rng);
// eps = 0 everywhere: the deterministic mean (MAP) stack.
SampledWeights mean_net(const BayesMlp& net, int task);

// Logits for a batch (rows are examples). ReLU between stack layers,
// identity at the output.
Matrix forward(const BayesMlp& net, const Matrix& x, const SampledWeights& weights,
               int task);

// Row-wise softmax with the max subtracted.
Matrix softmax_rows(const Matrix& logits);

struct Batch {
    Matrix x;
    std::vector<int> y;
    int task = 0;
};

struct LayerGrads {
    Matrix d_mu_w;
    Matrix d_rho_w;
    Vec d_mu_b;
    Vec d_rho_b;
};

// Loss plus per-layer gradients, aligned with the sampled stack (trunk
// layers first, head last in multi-head mode).
struct NetGrads {
    double loss = 0.0;
    std::vector<LayerGrads> layers;
};

// Mean softmax cross-entropy over the batch at fixed sampled weights.
double nll_loss_at(const BayesMlp& net, const Batch& batch, const SampledWeights& weights);

// Same, also returning d loss / d W and d loss / d b per stack layer
// (reported in the d_mu slots; d_rho slots are zero).
NetGrads nll_grads_at(const BayesMlp& net, const Batch& batch, const SampledWeights& weights);

// Monte-Carlo estimate: mean over n_mc reparameterized draws of the batch
// cross-entropy, with pathwise gradients for mu and rho.
NetGrads nll_loss_and_grads(const BayesMlp& net, const Batch& batch, int n_mc,
                            RngState& rng);
double nll_loss(const BayesMlp& net, const Batch& batch, int n_mc, RngState& rng);

// Predictive class probabilities: softmax averaged over n_mc posterior draws.
Matrix predict_probs(const BayesMlp& net, const Matrix& x, int task, int n_mc,
                     RngState& rng);

}  // namespace eclrr
