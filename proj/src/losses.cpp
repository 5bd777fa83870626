#include "eclrr/losses.hpp"

#include <cmath>
#include <stdexcept>

#include "eclrr/errors.hpp"
#include "eclrr/stats.hpp"

namespace eclrr {

void RegWeights::validate() const {
    if (w_mu1 < 0.0 || w_mu2 < 0.0 || w_sig1 < 0.0 || w_sig2 < 0.0)
        throw std::invalid_argument("RegWeights: coefficients must be non-negative");
    if (!(sigma_floor > 0.0))
        throw std::invalid_argument("RegWeights: sigma_floor must be positive");
}

namespace {

void check_kl_args(const Vec& mu_q, const Vec& sigma_q, const Vec& mu_p,
                   const Vec& sigma_p) {
    const std::size_t n = mu_q.size();
    if (sigma_q.size() != n || mu_p.size() != n || sigma_p.size() != n)
        throw std::invalid_argument("kl_diag_gauss: length mismatch");
    for (std::size_t i = 0; i < n; ++i)
        if (!(sigma_q[i] > 0.0) || !(sigma_p[i] > 0.0))
            throw std::invalid_argument("kl_diag_gauss: sigmas must be strictly positive");
}

}  // namespace

double kl_diag_gauss(const Vec& mu_q, const Vec& sigma_q, const Vec& mu_p,
                     const Vec& sigma_p) {
    check_kl_args(mu_q, sigma_q, mu_p, sigma_p);
    double kl = 0.0;
    for (std::size_t i = 0; i < mu_q.size(); ++i) {
        const double dm = mu_q[i] - mu_p[i];
        const double sq = sigma_q[i], sp = sigma_p[i];
        kl += std::log(sp / sq) + (sq * sq + dm * dm) / (2.0 * sp * sp) - 0.5;
    }
    return std::max(kl, 0.0);  // clip the tiny negative round-off near identity
}

std::pair<Vec, Vec> kl_grad(const Vec& mu_q, const Vec& sigma_q, const Vec& mu_p,
                            const Vec& sigma_p) {
    check_kl_args(mu_q, sigma_q, mu_p, sigma_p);
    const std::size_t n = mu_q.size();
    Vec d_mu(n), d_sigma(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double sp2 = sigma_p[i] * sigma_p[i];
        d_mu[i] = (mu_q[i] - mu_p[i]) / sp2;
        d_sigma[i] = sigma_q[i] / sp2 - 1.0 / sigma_q[i];
    }
    return {std::move(d_mu), std::move(d_sigma)};
}

namespace {

struct RegAccum {
    double value = 0.0;
    Vec* d_mu = nullptr;
    Vec* d_sigma = nullptr;  // gradient w.r.t. the (unfloored) sigma_t
};

// Shared element loop for revised_reg and its gradients. `floored_t` tells
// whether sigma_t was clamped at this element, which cuts the sigma path.
void accumulate_reg(const Vec& mu_t, const Vec& mu_prev, const Vec& sigma_t_raw,
                    const Vec& sigma_prev_raw, const RegWeights& w, RegAccum& acc) {
    const std::size_t n = mu_t.size();
    if (mu_prev.size() != n || sigma_t_raw.size() != n || sigma_prev_raw.size() != n)
        throw std::invalid_argument("revised_reg: length mismatch");
    w.validate();

    for (std::size_t i = 0; i < n; ++i) {
        const double d = mu_t[i] - mu_prev[i];
        const bool clamped = sigma_t_raw[i] < w.sigma_floor;
        const double st = clamped ? w.sigma_floor : sigma_t_raw[i];
        const double sp = std::max(sigma_prev_raw[i], w.sigma_floor);

        const double st2 = st * st;
        const double ratio = d * d / st2;  // (mu delta)^2 / sigma_t^2

        acc.value += w.w_mu1 * d * d;
        acc.value += w.w_mu2 * ratio * ratio;
        acc.value += w.w_sig1 * sp;
        if (w.alt_sigma_ratio)
            acc.value += w.w_sig2 * (sp / st);
        else
            acc.value += w.w_sig2 * std::fabs(st - sp) / sp;

        if (acc.d_mu) {
            (*acc.d_mu)[i] += 2.0 * w.w_mu1 * d + 4.0 * w.w_mu2 * (d * d * d) / (st2 * st2);
        }
        if (acc.d_sigma && !clamped) {
            double g = -4.0 * w.w_mu2 * ratio * ratio / st;  // term 2 via sigma_t
            if (w.alt_sigma_ratio) {
                g += -w.w_sig2 * sp / st2;
            } else {
                const double diff = st - sp;
                if (diff != 0.0) g += w.w_sig2 * (diff > 0.0 ? 1.0 : -1.0) / sp;
            }
            (*acc.d_sigma)[i] += g;
        }
    }
}

}  // namespace

double revised_reg(const Vec& mu_t, const Vec& mu_prev, const Vec& sigma_t,
                   const Vec& sigma_prev, const RegWeights& w) {
    RegAccum acc;
    accumulate_reg(mu_t, mu_prev, sigma_t, sigma_prev, w, acc);
    return acc.value;
}

std::pair<Vec, Vec> revised_reg_grads(const Vec& mu_t, const Vec& mu_prev,
                                      const Vec& rho_t, const Vec& sigma_prev,
                                      const RegWeights& w) {
    const std::size_t n = mu_t.size();
    if (rho_t.size() != n) throw std::invalid_argument("revised_reg_grads: length mismatch");
    Vec sigma_t = softplus(rho_t);
    Vec d_mu(n, 0.0), d_sigma(n, 0.0);
    RegAccum acc;
    acc.d_mu = &d_mu;
    acc.d_sigma = &d_sigma;
    accumulate_reg(mu_t, mu_prev, sigma_t, sigma_prev, w, acc);
    Vec d_rho(n);
    for (std::size_t i = 0; i < n; ++i) d_rho[i] = d_sigma[i] * sigmoid(rho_t[i]);
    return {std::move(d_mu), std::move(d_rho)};
}

namespace {

// Flatten a layer's weight matrix followed by its bias into one vector view
// for the regularizer.
Vec flat_mu(const GaussianLayerParams& p) {
    Vec v = p.mu_w.data();
    v.insert(v.end(), p.mu_b.begin(), p.mu_b.end());
    return v;
}

Vec flat_rho(const GaussianLayerParams& p) {
    Vec v = p.rho_w.data();
    v.insert(v.end(), p.rho_b.begin(), p.rho_b.end());
    return v;
}

}  // namespace

double layer_reg(const GaussianLayerParams& cur, const GaussianLayerParams& prev,
                 const RegWeights& w) {
    return revised_reg(flat_mu(cur), flat_mu(prev), softplus(flat_rho(cur)),
                       softplus(flat_rho(prev)), w);
}

void add_layer_reg_grads(const GaussianLayerParams& cur, const GaussianLayerParams& prev,
                         const RegWeights& w, LayerGrads& grads) {
    auto [d_mu, d_rho] =
        revised_reg_grads(flat_mu(cur), flat_mu(prev), flat_rho(cur),
                          softplus(flat_rho(prev)), w);
    const std::size_t nw = cur.mu_w.data().size();
    for (std::size_t i = 0; i < nw; ++i) {
        grads.d_mu_w.data()[i] += d_mu[i];
        grads.d_rho_w.data()[i] += d_rho[i];
    }
    for (std::size_t i = 0; i < cur.mu_b.size(); ++i) {
        grads.d_mu_b[i] += d_mu[nw + i];
        grads.d_rho_b[i] += d_rho[nw + i];
    }
}

NetGrads total_loss(const BayesMlp& net, const std::vector<GaussianLayerParams>& prev_shared,
                    const Batch& batch, const RegWeights& w, int n_mc, RngState& rng) {
    NetGrads g = nll_loss_and_grads(net, batch, n_mc, rng);
    if (w.all_zero()) return g;  // exact NLL path, bit for bit
    if (prev_shared.size() != net.shared.size())
        throw std::invalid_argument("total_loss: prev_shared layer count mismatch");
    for (std::size_t l = 0; l < net.shared.size(); ++l) {
        g.loss += layer_reg(net.shared[l], prev_shared[l], w);
        add_layer_reg_grads(net.shared[l], prev_shared[l], w, g.layers[l]);
    }
    return g;
}

}  // namespace eclrr
