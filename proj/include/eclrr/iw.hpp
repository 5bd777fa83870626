#pragma once

#include <functional>

#include "eclrr/matrix.hpp"
#include "eclrr/rng.hpp"
#include "eclrr/subspace.hpp"

namespace eclrr {

// One batch of importance samples and their log-densities. log_q_prev_joint
// holds log Q(W_i, D_prev) surrogates (previous posterior density, plus the
// coreset log-likelihood when one is supplied); log_q_curr holds the current
// posterior densities at the same samples.
struct IwSampleSet {
    int m = 0;
    Vec log_q_prev_joint;
    Vec log_q_curr;
    Matrix samples;  // dim x m
};

// Optional data term: log P(D_prev | W) evaluated at a flattened sample.
using LogLikFn = std::function<double(const Vec&)>;

// log R_{t,M} = log [ (1/M) sum_i exp(log_prev_i - log_curr_i) ], computed
// via log-sum-exp so ratios spanning hundreds of nats cannot overflow.
double iw_log_ratio(const IwSampleSet& s);

// Draws M samples W_i = mu_t + O_C c_i + O_D d_i with c, d ~ N(0,1) and
// fills in both log-density vectors. Exposed mainly for tests; cor_loss
// streams the same computation without materializing `samples`.
IwSampleSet draw_iw_samples(const Vec& mu_t, const Vec& sigma_t, const Vec& mu_prev,
                            const Vec& sigma_prev, const SubspaceBundle& subspace,
                            int m, RngState& rng, const LogLikFn& loglik = nullptr);

// Correspondence score between the current per-layer posterior and the
// previous session: log R_{t,M} over subspace-spanned samples plus the
// closed-form KL between the two posteriors. The conditional term for the
// trailing samples vanishes under the factorized i.i.d. proposal, so it
// contributes nothing here. Requires m >= 2.
double cor_loss(const Vec& mu_t, const Vec& sigma_t, const Vec& mu_prev,
                const Vec& sigma_prev, const SubspaceBundle& subspace, int m,
                RngState& rng, const LogLikFn& loglik = nullptr);

}  // namespace eclrr
