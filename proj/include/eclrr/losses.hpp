#pragma once

#include <utility>

#include "eclrr/bayes_net.hpp"
#include "eclrr/matrix.hpp"

namespace eclrr {

// Coefficients of the four regularizer terms. The formulation writes the
// terms without coefficients, so they default to 1; experiment configs sweep
// them. sigma_floor clamps both sigmas before any division. alt_sigma_ratio
// swaps the fourth term for the sigma-ratio variant used in the ablations.
struct RegWeights {
    double w_mu1 = 1.0;   // ||mu_t - mu_prev||_2^2
    double w_mu2 = 1.0;   // ||(mu_t - mu_prev)^2 / sigma_t^2||_2^2
    double w_sig1 = 1.0;  // ||sigma_prev||_1
    double w_sig2 = 1.0;  // ||(sigma_t - sigma_prev) / sigma_prev||_1
    double sigma_floor = 1e-6;
    bool alt_sigma_ratio = false;  // use ||sigma_prev / sigma_t||_1 instead

    bool all_zero() const { return w_mu1 == 0.0 && w_mu2 == 0.0 && w_sig1 == 0.0 && w_sig2 == 0.0; }
    void validate() const;  // throws invalid_argument
};

// KL[ N(mu_q, diag sigma_q^2) || N(mu_p, diag sigma_p^2) ], closed form:
// sum_i [ ln(sp/sq) + (sq^2 + (mq - mp)^2) / (2 sp^2) - 1/2 ].
double kl_diag_gauss(const Vec& mu_q, const Vec& sigma_q, const Vec& mu_p,
                     const Vec& sigma_p);

// Analytic gradients of kl_diag_gauss with respect to (mu_q, sigma_q).
std::pair<Vec, Vec> kl_grad(const Vec& mu_q, const Vec& sigma_q, const Vec& mu_p,
                            const Vec& sigma_p);

// The four-term regularizer. Both sigma vectors are floored at w.sigma_floor
// before use.
double revised_reg(const Vec& mu_t, const Vec& mu_prev, const Vec& sigma_t,
                   const Vec& sigma_prev, const RegWeights& w);

// Gradients of revised_reg with respect to (mu_t, rho_t), chained through
// sigma_t = softplus(rho_t). L1 subgradients at kinks are taken as 0; where
// the floor clamps sigma_t the rho path is cut.
std::pair<Vec, Vec> revised_reg_grads(const Vec& mu_t, const Vec& mu_prev,
                                      const Vec& rho_t, const Vec& sigma_prev,
                                      const RegWeights& w);

// Batch NLL (Monte-Carlo, n_mc draws) plus the regularizer applied layer by
// layer against prev_shared (trunk layers; heads are never regularized).
// With w.all_zero() this is exactly nll_loss_and_grads, same rng draws.
NetGrads total_loss(const BayesMlp& net, const std::vector<GaussianLayerParams>& prev_shared,
                    const Batch& batch, const RegWeights& w, int n_mc, RngState& rng);

// Regularizer value/grads for one layer pair, flattened over weights then
// biases. Exposed for the trainer's bookkeeping.
double layer_reg(const GaussianLayerParams& cur, const GaussianLayerParams& prev,
                 const RegWeights& w);
void add_layer_reg_grads(const GaussianLayerParams& cur, const GaussianLayerParams& prev,
                         const RegWeights& w, LayerGrads& grads);

}  // namespace eclrr
