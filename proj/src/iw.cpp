#include "eclrr/iw.hpp"

#include <cmath>
#include <stdexcept>

#include "eclrr/errors.hpp"
#include "eclrr/losses.hpp"
#include "eclrr/stats.hpp"

namespace eclrr {

double iw_log_ratio(const IwSampleSet& s) {
    if (s.m < 1 || s.log_q_prev_joint.empty())
        throw std::invalid_argument("iw_log_ratio: empty sample set");
    if (s.log_q_prev_joint.size() != static_cast<std::size_t>(s.m) ||
        s.log_q_curr.size() != static_cast<std::size_t>(s.m))
        throw std::invalid_argument("iw_log_ratio: log vector length mismatch");
    Vec log_ratios(static_cast<std::size_t>(s.m));
    for (int i = 0; i < s.m; ++i) {
        log_ratios[static_cast<std::size_t>(i)] =
            s.log_q_prev_joint[static_cast<std::size_t>(i)] -
            s.log_q_curr[static_cast<std::size_t>(i)];
        if (!std::isfinite(log_ratios[static_cast<std::size_t>(i)]))
            throw std::invalid_argument("iw_log_ratio: non-finite log ratio");
    }
    return logsumexp(log_ratios) - std::log(static_cast<double>(s.m));
}

namespace {

void check_cor_args(const Vec& mu_t, const Vec& sigma_t, const Vec& mu_prev,
                    const Vec& sigma_prev, const SubspaceBundle& subspace) {
    const std::size_t n = mu_t.size();
    if (sigma_t.size() != n || mu_prev.size() != n || sigma_prev.size() != n)
        throw std::invalid_argument("cor_loss: parameter length mismatch");
    if (n == 0) throw std::invalid_argument("cor_loss: empty parameters");
    if (!subspace.o_common.empty() && subspace.o_common.rows() != n)
        throw std::invalid_argument("cor_loss: O_C dimension mismatch");
    if (!subspace.o_distinct.empty() && subspace.o_distinct.rows() != n)
        throw std::invalid_argument("cor_loss: O_D dimension mismatch");
    for (std::size_t i = 0; i < n; ++i)
        if (!(sigma_t[i] > 0.0) || !(sigma_prev[i] > 0.0))
            throw std::invalid_argument("cor_loss: sigmas must be strictly positive");
}

// Draw one subspace-spanned sample into `w`: w = mu_t + O_C c + O_D d.
// Coefficient order is fixed (common first), so streams are reproducible.
void draw_sample(const Vec& mu_t, const SubspaceBundle& subspace, RngState& rng,
                 Vec& w) {
    w = mu_t;
    for (const Matrix* basis : {&subspace.o_common, &subspace.o_distinct}) {
        if (basis->empty()) continue;
        for (std::size_t j = 0; j < basis->cols(); ++j) {
            const double coeff = rng.gaussian();
            for (std::size_t i = 0; i < w.size(); ++i) w[i] += coeff * (*basis)(i, j);
        }
    }
}

double log_diag_density(const Vec& x, const Vec& mu, const Vec& sigma) {
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i)
        acc += log_normal_pdf(x[i], mu[i], sigma[i]);
    return acc;
}

}  // namespace

IwSampleSet draw_iw_samples(const Vec& mu_t, const Vec& sigma_t, const Vec& mu_prev,
                            const Vec& sigma_prev, const SubspaceBundle& subspace,
                            int m, RngState& rng, const LogLikFn& loglik) {
    if (m < 1) throw std::invalid_argument("draw_iw_samples: m must be >= 1");
    check_cor_args(mu_t, sigma_t, mu_prev, sigma_prev, subspace);

    IwSampleSet set;
    set.m = m;
    set.samples = Matrix(mu_t.size(), static_cast<std::size_t>(m));
    Vec w;
    for (int i = 0; i < m; ++i) {
        draw_sample(mu_t, subspace, rng, w);
        set.samples.set_col(static_cast<std::size_t>(i), w);
        set.log_q_curr.push_back(log_diag_density(w, mu_t, sigma_t));
        double joint = log_diag_density(w, mu_prev, sigma_prev);
        if (loglik) joint += loglik(w);
        set.log_q_prev_joint.push_back(joint);
    }
    return set;
}

double cor_loss(const Vec& mu_t, const Vec& sigma_t, const Vec& mu_prev,
                const Vec& sigma_prev, const SubspaceBundle& subspace, int m,
                RngState& rng, const LogLikFn& loglik) {
    if (m < 2) throw std::invalid_argument("cor_loss: m must be >= 2");
    check_cor_args(mu_t, sigma_t, mu_prev, sigma_prev, subspace);

    // Streamed version of draw_iw_samples: same draw order, no sample matrix.
    Vec log_ratios(static_cast<std::size_t>(m));
    Vec w;
    for (int i = 0; i < m; ++i) {
        draw_sample(mu_t, subspace, rng, w);
        double curr = log_diag_density(w, mu_t, sigma_t);
        double joint = log_diag_density(w, mu_prev, sigma_prev);
        if (loglik) joint += loglik(w);
        log_ratios[static_cast<std::size_t>(i)] = joint - curr;
    }
    const double log_r = logsumexp(log_ratios) - std::log(static_cast<double>(m));

    // KL[Q(W_1^t) || Q(W_1^{t-1})], closed form; the conditional KL over the
    // remaining samples is identically zero for i.i.d. proposals.
    const double kl = kl_diag_gauss(mu_t, sigma_t, mu_prev, sigma_prev);
    return log_r + kl;
}

}  // namespace eclrr
