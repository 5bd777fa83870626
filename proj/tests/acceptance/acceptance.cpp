// Acceptance suite: one pass/fail line per criterion, exit code = number of
// failed criteria. Heavier criteria print their elapsed time, which is part
// of the verdict whenever a budget applies.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <string>
#include <vector>

#include "eclrr/bayes_net.hpp"
#include "eclrr/iw.hpp"
#include "eclrr/losses.hpp"
#include "eclrr/pln.hpp"
#include "eclrr/rng.hpp"
#include "eclrr/stats.hpp"
#include "eclrr/subspace.hpp"
#include "eclrr/task_streams.hpp"
#include "eclrr/trainer.hpp"

using namespace eclrr;

namespace {

double now_s() {
    return std::chrono::duration<double>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

double rel_err(double a, double b) {
    return std::fabs(a - b) / std::max({1.0, std::fabs(a), std::fabs(b)});
}

std::string data_dir() {
    const char* env = std::getenv("ECLRR_DATA_DIR");
    return env ? env : "data";
}

// ---- criterion 7/10/11 shared fixtures -----------------------------------

// Three 2-class blob tasks crowded into a low-dimensional box, so tasks
// genuinely interfere and plain fine-tuning forgets.
TaskStream contrast_stream() { return make_synthetic_blobs(3, 2, 3, 2.5, 100, 7); }

TrainOptions blob_options() {
    TrainOptions o;
    o.hidden = {20};
    o.epochs = 10;
    o.batch_size = 16;
    o.n_mc = 2;
    o.n_mc_eval = 8;
    o.n_mc_cor = 4;
    o.n_mc_gate = 4;
    o.reg.w_mu1 = 0.3;
    o.reg.w_mu2 = 0.0;  // quartic term explodes under plain SGD at this scale
    o.reg.w_sig1 = 1.0;
    o.reg.w_sig2 = 0.5;
    o.reg.sigma_floor = 0.005;
    o.gate.window = 5;
    o.rates.lambda = 0.1;
    o.rates.alpha = 0.01;
    o.coreset_size = 16;
    o.budget = 32;
    o.snapshot_every = 2;
    o.seed = 7;
    return o;
}

// ---- criterion 1 ----------------------------------------------------------

bool c1_kl_vs_mc(std::string& detail) {
    const double t0 = now_s();
    RngState rng(101, 0);
    const std::size_t dim = 16;
    const int pairs = 25;
    const int samples = 200000;
    double worst_rel = 0.0, worst_abs = 0.0;
    bool ok = true;
    for (int p = 0; p < pairs; ++p) {
        Vec mu_q(dim), sigma_q(dim), mu_p(dim), sigma_p(dim);
        for (std::size_t i = 0; i < dim; ++i) {
            mu_q[i] = rng.uniform(-0.8, 0.8);
            mu_p[i] = rng.uniform(-0.8, 0.8);
            sigma_q[i] = rng.uniform(0.5, 1.2);
            sigma_p[i] = rng.uniform(0.5, 1.2);
        }
        const double closed = kl_diag_gauss(mu_q, sigma_q, mu_p, sigma_p);

        RngState draw = rng.split(1000 + p);
        double acc = 0.0;
        for (int s = 0; s < samples; ++s) {
            double term = 0.0;
            for (std::size_t i = 0; i < dim; ++i) {
                const double eps = draw.gaussian();
                const double x = mu_q[i] + sigma_q[i] * eps;
                const double zq = eps;
                const double zp = (x - mu_p[i]) / sigma_p[i];
                term += std::log(sigma_p[i] / sigma_q[i]) +
                        0.5 * (zp * zp - zq * zq);
            }
            acc += term;
        }
        const double mc = acc / samples;
        const double abs_err = std::fabs(closed - mc);
        const double rel = abs_err / std::max(1e-12, std::fabs(closed));
        if (closed < 1.0) {
            worst_abs = std::max(worst_abs, abs_err);
            if (abs_err > 0.01) ok = false;
        } else {
            worst_rel = std::max(worst_rel, rel);
            if (rel > 0.01) ok = false;
        }
    }
    const double secs = now_s() - t0;
    if (secs > 10.0) ok = false;
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "worst rel %.2e, worst abs (KL<1) %.2e, %.1fs", worst_rel,
                  worst_abs, secs);
    detail = buf;
    return ok;
}

// ---- criterion 2 ----------------------------------------------------------

struct FdTally {
    double worst = 0.0;
    void take(double analytic, double fd) { worst = std::max(worst, rel_err(analytic, fd)); }
};

void check_net_fd(BayesMlp& net, const Batch& batch,
                  const std::vector<GaussianLayerParams>& prev, const RegWeights& w,
                  int n_mc, const RngState& base, FdTally& tally) {
    const double h = 1e-5;
    RngState g = base;
    const NetGrads grads = total_loss(net, prev, batch, w, n_mc, g);

    const std::size_t stack = grads.layers.size();
    for (std::size_t l = 0; l < stack; ++l) {
        GaussianLayerParams& p = (l < net.shared.size())
                                     ? net.shared[l]
                                     : net.heads[static_cast<std::size_t>(batch.task)];
        auto probe = [&](double& slot, double analytic) {
            const double keep = slot;
            slot = keep + h;
            RngState r1 = base;
            const double up = total_loss(net, prev, batch, w, n_mc, r1).loss;
            slot = keep - h;
            RngState r2 = base;
            const double dn = total_loss(net, prev, batch, w, n_mc, r2).loss;
            slot = keep;
            tally.take(analytic, (up - dn) / (2.0 * h));
        };
        const LayerGrads& lg = grads.layers[l];
        for (std::size_t i = 0; i < p.mu_w.rows(); ++i)
            for (std::size_t j = 0; j < p.mu_w.cols(); ++j) {
                probe(p.mu_w(i, j), lg.d_mu_w(i, j));
                probe(p.rho_w(i, j), lg.d_rho_w(i, j));
            }
        for (std::size_t i = 0; i < p.mu_b.size(); ++i) {
            probe(p.mu_b[i], lg.d_mu_b[i]);
            probe(p.rho_b[i], lg.d_rho_b[i]);
        }
    }
}

Batch random_batch(std::size_t n, std::size_t dim, int classes, int task,
                   RngState& rng) {
    Batch b;
    b.task = task;
    b.x = Matrix(n, dim);
    for (auto& v : b.x.data()) v = rng.uniform(0.0, 1.0);
    b.y.resize(n);
    for (auto& y : b.y) y = static_cast<int>(rng.uniform_index(classes));
    return b;
}

std::vector<GaussianLayerParams> perturbed_prev(const BayesMlp& net, RngState& rng) {
    std::vector<GaussianLayerParams> prev = net.shared;
    for (auto& p : prev) {
        for (auto& v : p.mu_w.data()) v += 0.1 * rng.gaussian();
        for (auto& v : p.mu_b) v += 0.1 * rng.gaussian();
        // Offset rho so the sigma-difference kink stays far away.
        for (auto& v : p.rho_w.data()) v += 0.2;
        for (auto& v : p.rho_b) v += 0.2;
    }
    return prev;
}

bool c2_gradients(std::string& detail) {
    const double t0 = now_s();
    FdTally tally;
    const double h = 1e-5;

    {  // NLL only, single-head 64 -> 32 -> 16.
        RngState rng(202, 0);
        BayesMlp net = make_mlp({64, 32, 16}, HeadMode::kSingle, 0, rng);
        Batch batch = random_batch(16, 64, 16, 0, rng);
        RegWeights none;
        none.w_mu1 = none.w_mu2 = none.w_sig1 = none.w_sig2 = 0.0;
        check_net_fd(net, batch, {}, none, 2, rng.split(9), tally);
    }
    {  // Full loss with all four terms, multi-head net, second head.
        RngState rng(203, 0);
        BayesMlp net = make_mlp({12, 10}, HeadMode::kMulti, 4, rng);
        add_head(net, rng);
        add_head(net, rng);
        Batch batch = random_batch(12, 12, 4, 1, rng);
        std::vector<GaussianLayerParams> prev = perturbed_prev(net, rng);
        RegWeights w;
        w.w_mu1 = 0.7;
        w.w_mu2 = 0.3;
        w.w_sig1 = 0.4;
        w.w_sig2 = 0.6;
        check_net_fd(net, batch, prev, w, 2, rng.split(5), tally);
    }
    {  // Closed-form KL gradients.
        RngState rng(204, 0);
        const std::size_t n = 48;
        Vec mq(n), sq(n), mp(n), sp(n);
        for (std::size_t i = 0; i < n; ++i) {
            mq[i] = rng.uniform(-1, 1);
            mp[i] = rng.uniform(-1, 1);
            sq[i] = rng.uniform(0.4, 1.4);
            sp[i] = rng.uniform(0.4, 1.4);
        }
        const auto [gm, gs] = kl_grad(mq, sq, mp, sp);
        for (std::size_t i = 0; i < n; ++i) {
            Vec up = mq, dn = mq;
            up[i] += h;
            dn[i] -= h;
            tally.take(gm[i], (kl_diag_gauss(up, sq, mp, sp) -
                               kl_diag_gauss(dn, sq, mp, sp)) /
                                  (2 * h));
            Vec su = sq, sd = sq;
            su[i] += h;
            sd[i] -= h;
            tally.take(gs[i], (kl_diag_gauss(mq, su, mp, sp) -
                               kl_diag_gauss(mq, sd, mp, sp)) /
                                  (2 * h));
        }
    }
    {  // Revised regularizer, all terms active, away from kinks.
        RngState rng(205, 0);
        const std::size_t n = 48;
        Vec mt(n), mp(n), rho(n), sp(n);
        for (std::size_t i = 0; i < n; ++i) {
            mt[i] = rng.uniform(-1, 1);
            mp[i] = mt[i] + (rng.uniform() < 0.5 ? -1 : 1) * rng.uniform(0.1, 0.6);
            const double st = rng.uniform(0.3, 0.9);
            rho[i] = softplus_inv(st);
            sp[i] = st + (rng.uniform() < 0.5 ? -1 : 1) * rng.uniform(0.05, 0.2);
        }
        RegWeights w;
        w.w_mu1 = 0.9;
        w.w_mu2 = 0.5;
        w.w_sig1 = 0.7;
        w.w_sig2 = 0.8;
        const auto [dmu, drho] = revised_reg_grads(mt, mp, rho, sp, w);
        auto value = [&](const Vec& m, const Vec& r) {
            return revised_reg(m, mp, softplus(r), sp, w);
        };
        for (std::size_t i = 0; i < n; ++i) {
            Vec up = mt, dn = mt;
            up[i] += h;
            dn[i] -= h;
            tally.take(dmu[i], (value(up, rho) - value(dn, rho)) / (2 * h));
            Vec ru = rho, rd = rho;
            ru[i] += h;
            rd[i] -= h;
            tally.take(drho[i], (value(mt, ru) - value(mt, rd)) / (2 * h));
        }
    }

    const double secs = now_s() - t0;
    const bool ok = tally.worst <= 1e-5 && secs <= 60.0;
    char buf[120];
    std::snprintf(buf, sizeof buf, "max rel err %.2e, %.1fs", tally.worst, secs);
    detail = buf;
    return ok;
}

// ---- criterion 3 ----------------------------------------------------------

bool c3_positivity(std::string& detail) {
    RngState rng(303, 0);
    int violations = 0;
    double min_val = 1e300;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 1 + rng.uniform_index(32);
        Vec mt(n), mp(n), st(n), sp(n);
        for (std::size_t i = 0; i < n; ++i) {
            mt[i] = rng.uniform(-3, 3);
            mp[i] = rng.uniform(-3, 3);
            st[i] = rng.uniform(1e-4, 2.0);
            sp[i] = rng.uniform(1e-4, 2.0);
        }
        RegWeights w;
        w.w_mu1 = rng.uniform(0, 2);
        w.w_mu2 = rng.uniform(0, 2);
        w.w_sig1 = rng.uniform(0, 2);
        w.w_sig2 = rng.uniform(0, 2);
        w.alt_sigma_ratio = rng.uniform() < 0.25;
        const double v = revised_reg(mt, mp, st, sp, w);
        min_val = std::min(min_val, v);
        if (!(v >= 0.0)) ++violations;
    }
    char buf[96];
    std::snprintf(buf, sizeof buf, "%d violations in 1000 draws, min %.3e",
                  violations, min_val);
    detail = buf;
    return violations == 0;
}

// ---- criterion 4 ----------------------------------------------------------

// theta ~ N(0, tau^2 I_d), x_j ~ N(theta, sigma^2 I_d): per dimension the
// evidence is N(x; 0, sigma^2 I + tau^2 11^T), evaluated in closed form.
double toy_log_evidence(const Matrix& x, double tau2, double sigma2) {
    const std::size_t n = x.rows(), d = x.cols();
    double total = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
        double s1 = 0, s2 = 0;
        for (std::size_t j = 0; j < n; ++j) {
            s1 += x(j, k);
            s2 += x(j, k) * x(j, k);
        }
        const double quad = (s2 - tau2 * s1 * s1 / (sigma2 + n * tau2)) / sigma2;
        const double logdet =
            (static_cast<double>(n) - 1.0) * std::log(sigma2) +
            std::log(sigma2 + static_cast<double>(n) * tau2);
        total += -0.5 * static_cast<double>(n) * std::log(2 * M_PI) -
                 0.5 * logdet - 0.5 * quad;
    }
    return total;
}

bool c4_iw_bound(std::string& detail) {
    const double t0 = now_s();
    const std::size_t d = 4, n = 8;
    const double tau2 = 1.5, sigma2 = 0.7;
    RngState rng(404, 0);

    Matrix x(n, d);
    for (std::size_t k = 0; k < d; ++k) {
        const double theta = std::sqrt(tau2) * rng.gaussian();
        for (std::size_t j = 0; j < n; ++j)
            x(j, k) = theta + std::sqrt(sigma2) * rng.gaussian();
    }
    const double log_z = toy_log_evidence(x, tau2, sigma2);

    // Posterior per dim is N(nv*s1/sigma2, nv), nv = 1/(1/tau2 + n/sigma2);
    // the proposal is deliberately offset and widened.
    Vec post_mu(d), prop_mu(d);
    const double nv = 1.0 / (1.0 / tau2 + static_cast<double>(n) / sigma2);
    for (std::size_t k = 0; k < d; ++k) {
        double s1 = 0;
        for (std::size_t j = 0; j < n; ++j) s1 += x(j, k);
        post_mu[k] = nv * s1 / sigma2;
        prop_mu[k] = post_mu[k] + 0.3;
    }
    const double prop_sigma = 1.5 * std::sqrt(nv);

    const int replicates = 30;
    auto mean_log_r = [&](int m, double& se) {
        Vec vals;
        RngState draw = rng.split(2000 + m);
        for (int rep = 0; rep < replicates; ++rep) {
            IwSampleSet set;
            set.m = m;
            set.log_q_prev_joint.resize(m);
            set.log_q_curr.resize(m);
            for (int i = 0; i < m; ++i) {
                double lp = 0, lc = 0;
                for (std::size_t k = 0; k < d; ++k) {
                    const double th = prop_mu[k] + prop_sigma * draw.gaussian();
                    lp += log_normal_pdf(th, 0.0, std::sqrt(tau2));
                    for (std::size_t j = 0; j < n; ++j)
                        lp += log_normal_pdf(x(j, k), th, std::sqrt(sigma2));
                    lc += log_normal_pdf(th, prop_mu[k], prop_sigma);
                }
                set.log_q_prev_joint[i] = lp;
                set.log_q_curr[i] = lc;
            }
            vals.push_back(iw_log_ratio(set));
        }
        const double m1 = mean(vals);
        double var = 0;
        for (double v : vals) var += (v - m1) * (v - m1);
        var /= replicates - 1;
        se = std::sqrt(var / replicates);
        return m1;
    };

    double se[4];
    double means[4];
    const int ms[4] = {1, 4, 16, 64};
    bool ok = true;
    for (int i = 0; i < 4; ++i) {
        means[i] = mean_log_r(ms[i], se[i]);
        if (!(means[i] <= log_z + 3.0 * se[i])) ok = false;
    }
    for (int i = 1; i < 4; ++i) {
        const double slack = 3.0 * std::sqrt(se[i] * se[i] + se[i - 1] * se[i - 1]);
        if (!(means[i] >= means[i - 1] - slack)) ok = false;
    }
    const double secs = now_s() - t0;
    if (secs > 30.0) ok = false;
    char buf[200];
    std::snprintf(buf, sizeof buf,
                  "logZ %.3f, means %.3f/%.3f/%.3f/%.3f, %.1fs", log_z, means[0],
                  means[1], means[2], means[3], secs);
    detail = buf;
    return ok;
}

// ---- criterion 5 ----------------------------------------------------------

bool c5_subspace_invariants(std::string& detail) {
    const double t0 = now_s();
    TaskStream stream = make_synthetic_blobs(3, 2, 16, 2.5, 50, 7);
    TrainOptions o = blob_options();
    o.epochs = 6;
    o.invariant_checks = true;  // per-step orthonormality and idempotence
    try {
        TrainerState s = init_trainer(16, 2, HeadMode::kSingle, o);
        for (int t = 0; t < 3; ++t) {
            train_task(s, stream.tasks[t], t, o);
            finish_task(s, stream.tasks[t], t, o);
        }
        double worst_defect = 0.0, worst_idem = 0.0;
        RngState probe(555, 0);
        for (const SubspaceBundle& b : s.bundles) {
            worst_defect = std::max(worst_defect, bundle_defect(b));
            Vec v(b.o_common.rows() ? b.o_common.rows() : b.o_distinct.rows());
            if (v.empty()) continue;
            for (auto& e : v) e = probe.gaussian();
            const Vec p1 = project(b, BundlePart::kCombined, v);
            const Vec p2 = project(b, BundlePart::kCombined, p1);
            for (std::size_t i = 0; i < p1.size(); ++i)
                worst_idem = std::max(worst_idem, std::fabs(p1[i] - p2[i]));
        }
        const bool ok = worst_defect <= 1e-8 && worst_idem <= 1e-10;
        char buf[140];
        std::snprintf(buf, sizeof buf,
                      "checked every step; final defect %.2e, idempotence %.2e, %.1fs",
                      worst_defect, worst_idem, now_s() - t0);
        detail = buf;
        return ok;
    } catch (const std::exception& e) {
        detail = std::string("violated during training: ") + e.what();
        return false;
    }
}

// ---- criterion 6 ----------------------------------------------------------

bool c6_metrics(std::string& detail) {
    AccuracyMatrix a;
    a.rows = {{0.90}, {0.85, 0.95}};
    const Metrics m = metrics(a);
    const bool ok = std::fabs(m.acc - 0.900) <= 1e-12 && m.bwt &&
                    std::fabs(*m.bwt + 0.050) <= 1e-12;
    char buf[96];
    std::snprintf(buf, sizeof buf, "ACC %.15g BWT %.15g", m.acc,
                  m.bwt ? *m.bwt : std::nan(""));
    detail = buf;
    return ok;
}

// ---- criterion 7 ----------------------------------------------------------

bool c7_contrast(std::string& detail, RunReport& ecl_out) {
    const double t0 = now_s();
    TaskStream stream = contrast_stream();
    TrainOptions o = blob_options();
    TrainOptions naive = o;
    naive.eclrr = false;
    const RunReport rn = run_stream(stream, naive);
    const RunReport re = run_stream(stream, o);
    ecl_out = re;
    const double secs = now_s() - t0;
    const bool ok = rn.bwt && re.bwt && *rn.bwt <= -0.10 &&
                    *re.bwt >= *rn.bwt + 0.05 && re.acc >= rn.acc + 0.05 &&
                    secs <= 120.0;
    char buf[180];
    std::snprintf(buf, sizeof buf,
                  "naive ACC %.4f BWT %+.4f, ecl ACC %.4f BWT %+.4f, %.1fs",
                  rn.acc, rn.bwt ? *rn.bwt : std::nan(""), re.acc,
                  re.bwt ? *re.bwt : std::nan(""), secs);
    detail = buf;
    return ok;
}

// ---- criteria 8 and 9 ------------------------------------------------------

bool load_mnist(Dataset& train, Dataset& test, std::string& err) {
    try {
        const std::string dir = data_dir() + "/mnist/";
        train = load_idx(dir + "train-images-idx3-ubyte.gz",
                         dir + "train-labels-idx1-ubyte.gz");
        test = load_idx(dir + "t10k-images-idx3-ubyte.gz",
                        dir + "t10k-labels-idx1-ubyte.gz");
        return true;
    } catch (const std::exception& e) {
        err = e.what();
        return false;
    }
}

bool c8_split_mnist(std::string& detail) {
    const double t0 = now_s();
    Dataset train, test;
    std::string err;
    if (!load_mnist(train, test, err)) {
        detail = "mnist unavailable: " + err;
        return false;
    }
    TaskStream stream =
        make_split(train, test, {{0, 1}, {2, 3}, {4, 5}, {6, 7}, {8, 9}});

    TrainOptions o;
    o.hidden = {256, 256};
    o.epochs = 5;
    o.batch_size = 64;
    o.n_mc = 2;
    o.n_mc_eval = 8;
    o.n_mc_cor = 8;
    o.n_mc_gate = 4;
    o.reg.w_mu1 = 1.0;
    o.reg.w_mu2 = 0.0;
    o.reg.w_sig1 = 1.0;
    o.reg.w_sig2 = 0.5;
    o.reg.sigma_floor = 0.005;
    o.rates.lambda = 0.2;
    o.rates.alpha = 0.01;
    o.coreset_size = 40;
    o.budget = 64;
    o.snapshot_every = 2;
    o.seed = 1;

    TrainOptions naive = o;
    naive.eclrr = false;
    const RunReport rn = run_stream(stream, naive);
    const RunReport re = run_stream(stream, o);
    const double secs = now_s() - t0;
    const bool ok = re.acc >= 0.95 && re.bwt && *re.bwt >= -0.03 && rn.bwt &&
                    *rn.bwt <= -0.10 && secs <= 600.0;
    char buf[180];
    std::snprintf(buf, sizeof buf,
                  "ecl ACC %.4f BWT %+.4f, naive BWT %+.4f, %.0fs", re.acc,
                  re.bwt ? *re.bwt : std::nan(""),
                  rn.bwt ? *rn.bwt : std::nan(""), secs);
    detail = buf;
    return ok;
}

bool c9_permuted_mnist(std::string& detail) {
    const double t0 = now_s();
    Dataset train, test;
    std::string err;
    if (!load_mnist(train, test, err)) {
        detail = "mnist unavailable: " + err;
        return false;
    }
    TaskStream stream = make_permuted(train, test, 3, 1);

    TrainOptions o;
    o.hidden = {100, 100};
    o.epochs = 5;
    o.batch_size = 128;
    o.n_mc = 2;
    o.n_mc_eval = 8;
    o.n_mc_cor = 8;
    o.n_mc_gate = 4;
    o.reg.w_mu1 = 0.1;
    o.reg.w_mu2 = 0.0;
    o.reg.w_sig1 = 1.0;
    o.reg.w_sig2 = 0.5;
    o.reg.sigma_floor = 0.005;
    o.rates.lambda = 0.1;
    o.rates.alpha = 0.01;
    o.coreset_size = 40;
    o.budget = 64;
    o.snapshot_every = 2;
    o.seed = 1;

    TrainOptions naive = o;
    naive.eclrr = false;
    const RunReport rn = run_stream(stream, naive);
    const RunReport re = run_stream(stream, o);
    const double secs = now_s() - t0;
    const bool ok = re.acc >= 0.90 && re.acc >= rn.acc + 0.03 && secs <= 600.0;
    char buf[160];
    std::snprintf(buf, sizeof buf, "ecl ACC %.4f, naive ACC %.4f, %.0fs", re.acc,
                  rn.acc, secs);
    detail = buf;
    return ok;
}

// ---- criterion 10 ----------------------------------------------------------

bool c10_pln(std::string& detail) {
    const double t0 = now_s();
    // Parameter-count arithmetic on the default split-MNIST shared slices.
    RngState rng(1010, 0);
    PlnGenerator g1 = make_pln(0, 784, 256, 16, rng);
    PlnGenerator g2 = make_pln(1, 256, 256, 16, rng);
    const double ratio1 = static_cast<double>(g1.param_count()) / (256.0 * 784.0);
    const double ratio2 = static_cast<double>(g2.param_count()) / (256.0 * 256.0);

    // Fit quality at adequate capacity: a row subset below the generator's
    // hidden width, so the least-squares solve can place every target.
    std::vector<Vec> targets(48, Vec(784));
    for (auto& t : targets)
        for (auto& v : t) v = 0.1 * rng.gaussian();
    double sum = 0, sq = 0;
    std::size_t cnt = 0;
    for (const Vec& t : targets)
        for (double v : t) {
            sum += v;
            sq += v * v;
            ++cnt;
        }
    const double std_t = std::sqrt(sq / cnt - (sum / cnt) * (sum / cnt));
    const double rmse = train_pln(targets, g1, 20, rng);

    // End to end: PLN-stored versus exact previous parameters, on a blob
    // stream whose 20x64 trunk slice gives the generator a hidden width of 4,
    // enough to span the trained delta's principal directions (psi 400 vs
    // slice 1280). The stream interferes (naive forgetting is visible), so
    // the stored anchors are load-bearing rather than decorative.
    TaskStream stream = make_synthetic_blobs(3, 2, 64, 2.5, 200, 7);
    TrainOptions o = blob_options();
    o.pln_seed_dim = 19;  // one feature per target row, minus the bias
    o.pln_epochs = 100;
    const RunReport rx = run_stream(stream, o);
    o.pln_enabled = true;
    const RunReport rp = run_stream(stream, o);
    const double acc_gap = std::fabs(rp.acc - rx.acc);

    const double secs = now_s() - t0;
    const bool ok = ratio1 < 0.25 && ratio2 < 0.25 && rmse <= 0.05 * std_t &&
                    acc_gap <= 0.01 + 1e-12;
    char buf[200];
    std::snprintf(buf, sizeof buf,
                  "ratios %.3f/%.3f, rmse %.2e vs bound %.2e, acc gap %.4f, %.1fs",
                  ratio1, ratio2, rmse, 0.05 * std_t, acc_gap, secs);
    detail = buf;
    return ok;
}

// ---- criterion 11 ----------------------------------------------------------

bool c11_determinism(std::string& detail, const RunReport& first) {
    TaskStream stream = contrast_stream();
    const RunReport second = run_stream(stream, blob_options());
    bool identical = first.matrix.rows.size() == second.matrix.rows.size();
    if (identical)
        for (std::size_t i = 0; i < first.matrix.rows.size(); ++i) {
            const auto& a = first.matrix.rows[i];
            const auto& b = second.matrix.rows[i];
            if (a.size() != b.size() ||
                std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) != 0)
                identical = false;
        }
    detail = identical ? "accuracy matrices byte-identical across reruns"
                       : "matrices differ between identical runs";
    return identical;
}

}  // namespace

int main(int argc, char** argv) {
    // Optional args restrict the run to the listed criterion ids (dev aid);
    // no args runs the full suite.
    bool wanted[12];
    for (bool& w : wanted) w = argc <= 1;
    for (int i = 1; i < argc; ++i) {
        const int id = std::atoi(argv[i]);
        if (id >= 1 && id <= 11) wanted[id] = true;
    }

    int failed = 0, ran = 0;
    auto add = [&](int id, const char* name, bool ok, const std::string& detail) {
        ++ran;
        std::printf("criterion %2d %-22s %s  (%s)\n", id, name,
                    ok ? "pass" : "FAIL", detail.c_str());
        std::fflush(stdout);
        if (!ok) ++failed;
    };

    // Criterion 7's gated run doubles as the reference for 10 and 11.
    RunReport ecl_blob;
    bool have_blob = false;
    auto blob_run = [&]() -> const RunReport& {
        if (!have_blob) {
            TaskStream stream = contrast_stream();
            ecl_blob = run_stream(stream, blob_options());
            have_blob = true;
        }
        return ecl_blob;
    };

    std::string d;
    if (wanted[1]) add(1, "kl closed form vs mc", c1_kl_vs_mc(d), d);
    if (wanted[2]) add(2, "gradient checks", c2_gradients(d), d);
    if (wanted[3]) add(3, "regularizer >= 0", c3_positivity(d), d);
    if (wanted[4]) add(4, "iw lower bound", c4_iw_bound(d), d);
    if (wanted[5]) add(5, "subspace invariants", c5_subspace_invariants(d), d);
    if (wanted[6]) add(6, "metrics exactness", c6_metrics(d), d);
    if (wanted[7]) {
        const bool ok = c7_contrast(d, ecl_blob);
        have_blob = true;
        add(7, "synthetic contrast", ok, d);
    }
    if (wanted[8]) add(8, "split-mnist desk", c8_split_mnist(d), d);
    if (wanted[9]) add(9, "permuted-mnist desk", c9_permuted_mnist(d), d);
    if (wanted[10]) add(10, "pln compression", c10_pln(d), d);
    if (wanted[11]) add(11, "determinism", c11_determinism(d, blob_run()), d);

    std::printf("%d of %d criteria failed\n", failed, ran);
    return failed;
}
