#include "eclrr/bayes_net.hpp"

#include <cmath>
#include <stdexcept>

#include "eclrr/errors.hpp"
#include "eclrr/stats.hpp"

namespace eclrr {

Matrix GaussianLayerParams::sigma_w() const {
    Matrix s = rho_w;
    for (auto& v : s.data()) v = softplus(v);
    return s;
}

Vec GaussianLayerParams::sigma_b() const { return softplus(rho_b); }

void GaussianLayerParams::check_shapes() const {
    if (rho_w.rows() != mu_w.rows() || rho_w.cols() != mu_w.cols())
        throw std::invalid_argument("GaussianLayerParams: rho_w shape mismatch");
    if (mu_b.size() != mu_w.rows() || rho_b.size() != mu_w.rows())
        throw std::invalid_argument("GaussianLayerParams: bias length mismatch");
}

double sigma_init_for_depth(std::size_t depth) {
    if (depth == 0) return 0.03;
    if (depth == 1) return 0.02;
    return 0.015;
}

namespace {

GaussianLayerParams init_layer(std::size_t in, std::size_t out, std::size_t depth,
                               RngState& rng) {
    GaussianLayerParams p;
    p.mu_w = Matrix(out, in);
    for (auto& v : p.mu_w.data()) v = 0.1 * rng.gaussian();
    const double rho0 = softplus_inv(sigma_init_for_depth(depth));
    p.rho_w = Matrix(out, in);
    for (auto& v : p.rho_w.data()) v = rho0;
    p.mu_b = Vec(out, 0.0);
    p.rho_b = Vec(out, rho0);
    return p;
}

}  // namespace

BayesMlp make_mlp(const std::vector<std::size_t>& dims, HeadMode mode,
                  std::size_t head_out, RngState& rng) {
    if (dims.size() < 2) throw std::invalid_argument("make_mlp: need at least two dims");
    if (mode == HeadMode::kMulti && head_out == 0)
        throw std::invalid_argument("make_mlp: multi-head mode needs head_out > 0");
    BayesMlp net;
    net.head_mode = mode;
    net.head_out = (mode == HeadMode::kMulti) ? head_out : 0;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l)
        net.shared.push_back(init_layer(dims[l], dims[l + 1], l, rng));
    return net;
}

void add_head(BayesMlp& net, RngState& rng) {
    if (net.head_mode != HeadMode::kMulti)
        throw InvalidState("add_head: network is single-head");
    const std::size_t in = net.shared.back().out();
    net.heads.push_back(init_layer(in, net.head_out, net.shared.size(), rng));
}

SampledWeights sample_weights(const GaussianLayerParams& params, RngState& rng) {
    params.check_shapes();
    LayerSample s;
    s.eps_w = Matrix(params.out(), params.in());
    for (auto& v : s.eps_w.data()) v = rng.gaussian();
    s.eps_b = Vec(params.out());
    for (auto& v : s.eps_b) v = rng.gaussian();

    s.w = params.mu_w;
    for (std::size_t i = 0; i < s.w.data().size(); ++i)
        s.w.data()[i] += softplus(params.rho_w.data()[i]) * s.eps_w.data()[i];
    s.b = params.mu_b;
    for (std::size_t i = 0; i < s.b.size(); ++i)
        s.b[i] += softplus(params.rho_b[i]) * s.eps_b[i];

    SampledWeights out;
    out.layers.push_back(std::move(s));
    return out;
}

namespace {

const GaussianLayerParams& head_for_task(const BayesMlp& net, int task) {
    if (task < 0 || static_cast<std::size_t>(task) >= net.heads.size())
        throw std::invalid_argument("bayes_net: no head for task " + std::to_string(task));
    return net.heads[static_cast<std::size_t>(task)];
}

LayerSample mean_layer(const GaussianLayerParams& p) {
    LayerSample s;
    s.w = p.mu_w;
    s.b = p.mu_b;
    s.eps_w = Matrix(p.out(), p.in());
    s.eps_b = Vec(p.out(), 0.0);
    return s;
}

}  // namespace

SampledWeights sample_net(const BayesMlp& net, int task, RngState& rng) {
    SampledWeights out;
    for (const auto& p : net.shared) {
        SampledWeights one = sample_weights(p, rng);
        out.layers.push_back(std::move(one.layers[0]));
    }
    if (net.head_mode == HeadMode::kMulti) {
        SampledWeights one = sample_weights(head_for_task(net, task), rng);
        out.layers.push_back(std::move(one.layers[0]));
    }
    return out;
}

SampledWeights mean_net(const BayesMlp& net, int task) {
    SampledWeights out;
    for (const auto& p : net.shared) out.layers.push_back(mean_layer(p));
    if (net.head_mode == HeadMode::kMulti)
        out.layers.push_back(mean_layer(head_for_task(net, task)));
    return out;
}

namespace {

// z = x * w^T + b, rows are examples.
Matrix affine(const Matrix& x, const Matrix& w, const Vec& b) {
    Matrix z = matmul_nt(x, w);
    for (std::size_t i = 0; i < z.rows(); ++i)
        for (std::size_t j = 0; j < z.cols(); ++j) z(i, j) += b[j];
    return z;
}

struct ForwardTrace {
    std::vector<Matrix> acts;  // acts[0] = input, acts[l+1] = activation after layer l
    std::vector<Matrix> zs;    // pre-activations per layer
};

ForwardTrace run_forward(const Matrix& x, const SampledWeights& weights) {
    ForwardTrace t;
    t.acts.push_back(x);
    const std::size_t depth = weights.layers.size();
    for (std::size_t l = 0; l < depth; ++l) {
        const auto& s = weights.layers[l];
        if (t.acts.back().cols() != s.w.cols())
            throw std::invalid_argument("forward: input width does not match layer " +
                                        std::to_string(l));
        Matrix z = affine(t.acts.back(), s.w, s.b);
        if (l + 1 < depth) {
            Matrix a = z;
            for (auto& v : a.data()) v = v > 0.0 ? v : 0.0;
            t.zs.push_back(std::move(z));
            t.acts.push_back(std::move(a));
        } else {
            t.acts.push_back(z);  // identity output
            t.zs.push_back(std::move(z));
        }
    }
    return t;
}

}  // namespace

Matrix forward(const BayesMlp& net, const Matrix& x, const SampledWeights& weights,
               int task) {
    (void)net;
    (void)task;
    if (weights.layers.empty()) throw std::invalid_argument("forward: empty weight stack");
    ForwardTrace t = run_forward(x, weights);
    return t.acts.back();
}

Matrix softmax_rows(const Matrix& logits) {
    Matrix p = logits;
    for (std::size_t i = 0; i < p.rows(); ++i) {
        double m = p(i, 0);
        for (std::size_t j = 1; j < p.cols(); ++j) m = std::max(m, p(i, j));
        double s = 0.0;
        for (std::size_t j = 0; j < p.cols(); ++j) {
            p(i, j) = std::exp(p(i, j) - m);
            s += p(i, j);
        }
        for (std::size_t j = 0; j < p.cols(); ++j) p(i, j) /= s;
    }
    return p;
}

namespace {

void check_batch(const Batch& batch) {
    if (batch.x.rows() == 0) throw std::invalid_argument("bayes_net: empty batch");
    if (batch.y.size() != batch.x.rows())
        throw std::invalid_argument("bayes_net: label count does not match batch rows");
}

double ce_from_logits(const Matrix& logits, const std::vector<int>& y) {
    double total = 0.0;
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        if (y[i] < 0 || static_cast<std::size_t>(y[i]) >= logits.cols())
            throw std::invalid_argument("bayes_net: label out of range");
        double m = logits(i, 0);
        for (std::size_t j = 1; j < logits.cols(); ++j) m = std::max(m, logits(i, j));
        double s = 0.0;
        for (std::size_t j = 0; j < logits.cols(); ++j) s += std::exp(logits(i, j) - m);
        total += (m + std::log(s)) - logits(i, static_cast<std::size_t>(y[i]));
    }
    return total / static_cast<double>(logits.rows());
}

// Backprop through the sampled stack. Returns mean cross-entropy and
// d loss / d {W, b} per layer.
double backprop(const Batch& batch, const SampledWeights& weights,
                std::vector<Matrix>& d_w, std::vector<Vec>& d_b) {
    ForwardTrace t = run_forward(batch.x, weights);
    const Matrix& logits = t.acts.back();
    const double loss = ce_from_logits(logits, batch.y);
    const std::size_t n = batch.x.rows();
    const std::size_t depth = weights.layers.size();

    Matrix delta = softmax_rows(logits);  // dL/dz at the output, times n
    for (std::size_t i = 0; i < n; ++i)
        delta(i, static_cast<std::size_t>(batch.y[i])) -= 1.0;
    for (auto& v : delta.data()) v /= static_cast<double>(n);

    d_w.assign(depth, Matrix());
    d_b.assign(depth, Vec());
    for (std::size_t l = depth; l-- > 0;) {
        // z_l = a_{l-1} w_l^T + b_l  =>  dW = delta^T a_{l-1}, db = col-sums.
        d_w[l] = matmul_tn(delta, t.acts[l]);
        Vec db(weights.layers[l].b.size(), 0.0);
        for (std::size_t i = 0; i < delta.rows(); ++i)
            for (std::size_t j = 0; j < delta.cols(); ++j) db[j] += delta(i, j);
        d_b[l] = std::move(db);
        if (l == 0) break;
        Matrix da = matmul(delta, weights.layers[l].w);  // dL/da_{l-1}
        const Matrix& z_prev = t.zs[l - 1];
        for (std::size_t i = 0; i < da.rows(); ++i)
            for (std::size_t j = 0; j < da.cols(); ++j)
                if (z_prev(i, j) <= 0.0) da(i, j) = 0.0;
        delta = std::move(da);
    }
    return loss;
}

const GaussianLayerParams& stack_params(const BayesMlp& net, int task, std::size_t l) {
    if (l < net.shared.size()) return net.shared[l];
    return head_for_task(net, task);
}

}  // namespace

double nll_loss_at(const BayesMlp& net, const Batch& batch, const SampledWeights& weights) {
    (void)net;
    check_batch(batch);
    ForwardTrace t = run_forward(batch.x, weights);
    return ce_from_logits(t.acts.back(), batch.y);
}

NetGrads nll_grads_at(const BayesMlp& net, const Batch& batch,
                      const SampledWeights& weights) {
    (void)net;
    check_batch(batch);
    std::vector<Matrix> d_w;
    std::vector<Vec> d_b;
    NetGrads out;
    out.loss = backprop(batch, weights, d_w, d_b);
    out.layers.resize(weights.layers.size());
    for (std::size_t l = 0; l < weights.layers.size(); ++l) {
        out.layers[l].d_mu_w = std::move(d_w[l]);
        out.layers[l].d_mu_b = std::move(d_b[l]);
        out.layers[l].d_rho_w = Matrix(weights.layers[l].w.rows(), weights.layers[l].w.cols());
        out.layers[l].d_rho_b = Vec(weights.layers[l].b.size(), 0.0);
    }
    return out;
}

NetGrads nll_loss_and_grads(const BayesMlp& net, const Batch& batch, int n_mc,
                            RngState& rng) {
    check_batch(batch);
    if (n_mc < 1) throw std::invalid_argument("nll_loss_and_grads: n_mc must be >= 1");

    NetGrads acc;
    acc.layers.resize(net.stack_depth());
    for (std::size_t l = 0; l < acc.layers.size(); ++l) {
        const auto& p = stack_params(net, batch.task, l);
        acc.layers[l].d_mu_w = Matrix(p.out(), p.in());
        acc.layers[l].d_rho_w = Matrix(p.out(), p.in());
        acc.layers[l].d_mu_b = Vec(p.out(), 0.0);
        acc.layers[l].d_rho_b = Vec(p.out(), 0.0);
    }

    const double inv = 1.0 / static_cast<double>(n_mc);
    for (int s = 0; s < n_mc; ++s) {
        SampledWeights w = sample_net(net, batch.task, rng);
        std::vector<Matrix> d_w;
        std::vector<Vec> d_b;
        acc.loss += inv * backprop(batch, w, d_w, d_b);
        for (std::size_t l = 0; l < acc.layers.size(); ++l) {
            const auto& p = stack_params(net, batch.task, l);
            auto& g = acc.layers[l];
            const auto& sl = w.layers[l];
            // W = mu + softplus(rho) * eps: dW/dmu = 1, dW/drho = eps * sigmoid(rho).
            for (std::size_t i = 0; i < g.d_mu_w.data().size(); ++i) {
                const double gw = d_w[l].data()[i];
                g.d_mu_w.data()[i] += inv * gw;
                g.d_rho_w.data()[i] +=
                    inv * gw * sl.eps_w.data()[i] * sigmoid(p.rho_w.data()[i]);
            }
            for (std::size_t i = 0; i < g.d_mu_b.size(); ++i) {
                const double gb = d_b[l][i];
                g.d_mu_b[i] += inv * gb;
                g.d_rho_b[i] += inv * gb * sl.eps_b[i] * sigmoid(p.rho_b[i]);
            }
        }
    }
    return acc;
}

double nll_loss(const BayesMlp& net, const Batch& batch, int n_mc, RngState& rng) {
    check_batch(batch);
    if (n_mc < 1) throw std::invalid_argument("nll_loss: n_mc must be >= 1");
    double loss = 0.0;
    for (int s = 0; s < n_mc; ++s) {
        SampledWeights w = sample_net(net, batch.task, rng);
        loss += nll_loss_at(net, batch, w);
    }
    return loss / static_cast<double>(n_mc);
}

Matrix predict_probs(const BayesMlp& net, const Matrix& x, int task, int n_mc,
                     RngState& rng) {
    if (x.rows() == 0) throw std::invalid_argument("predict_probs: empty input");
    if (n_mc < 1) throw std::invalid_argument("predict_probs: n_mc must be >= 1");
    Matrix acc;
    for (int s = 0; s < n_mc; ++s) {
        SampledWeights w = sample_net(net, task, rng);
        Matrix p = softmax_rows(forward(net, x, w, task));
        if (acc.empty()) {
            acc = std::move(p);
        } else {
            for (std::size_t i = 0; i < acc.data().size(); ++i)
                acc.data()[i] += p.data()[i];
        }
    }
    for (auto& v : acc.data()) v /= static_cast<double>(n_mc);
    return acc;
}

}  // namespace eclrr
