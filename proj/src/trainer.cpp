#include "eclrr/trainer.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <thread>

#include "eclrr/errors.hpp"
#include "eclrr/iw.hpp"
#include "eclrr/stats.hpp"

namespace eclrr {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}

void GateThresholds::validate() const {
    if (!(delta >= 0.0 && delta < epsilon && epsilon <= 1.0))
        throw std::invalid_argument("gate thresholds need 0 <= delta < epsilon <= 1");
    if (window < 2) throw std::invalid_argument("gate window must be >= 2");
}

void LearningRates::validate() const {
    if (!(lambda > 0.0)) throw std::invalid_argument("lambda must be > 0");
    if (!(alpha >= 0.0)) throw std::invalid_argument("alpha must be >= 0");
}

void TrainOptions::validate() const {
    gate.validate();
    rates.validate();
    reg.validate();
    if (hidden.empty())
        throw std::invalid_argument("at least one hidden layer is required");
    if (epochs < 1 || batch_size == 0 || n_mc < 1 || n_mc_eval < 1 || n_mc_gate < 1)
        throw std::invalid_argument("epoch/batch/MC counts must be positive");
    if (n_mc_cor < 2)
        throw std::invalid_argument("n_mc_cor must be >= 2");
    if (coreset_size < 1) throw std::invalid_argument("coreset_size must be >= 1");
    if (!(energy_fraction > 0.0) || energy_fraction > 1.0)
        throw std::invalid_argument("energy_fraction must be in (0, 1]");
    if (budget == 0 || snapshot_every < 1)
        throw std::invalid_argument("budget and snapshot_every must be positive");
    if (pln_seed_dim == 0 || pln_epochs < 0 || cor_coreset_subsample < 1)
        throw std::invalid_argument("pln/correspondence settings must be positive");
}

GateDecision gate_from_r(double r, const GateThresholds& g) {
    GateDecision d;
    d.r = r;
    if (std::isnan(r)) {
        d.branch = GateBranch::kIntermediate;
    } else if (r >= g.epsilon) {
        d.branch = GateBranch::kRobust;
    } else if (std::abs(r) <= g.delta) {
        d.branch = GateBranch::kNone;
    } else {
        d.branch = GateBranch::kIntermediate;
    }
    return d;
}

GateDecision gate_decision(const std::deque<double>& proj_hist,
                           const std::deque<double>& cor_hist,
                           const GateThresholds& g) {
    GateDecision d;
    d.r = kNaN;
    const auto w = static_cast<std::size_t>(g.window);
    if (proj_hist.size() < w || cor_hist.size() < w) return d;  // warmup
    Vec a(proj_hist.end() - g.window, proj_hist.end());
    Vec b(cor_hist.end() - g.window, cor_hist.end());
    try {
        return gate_from_r(pearson(a, b), g);
    } catch (const DegenerateCorrelation&) {
        d.branch = GateBranch::kIntermediate;
        return d;
    }
}

const CoresetEntry* Coreset::find(int task) const {
    for (const CoresetEntry& e : entries)
        if (e.task == task) return &e;
    return nullptr;
}

void AccuracyMatrix::validate() const {
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != i + 1)
            throw std::invalid_argument("accuracy matrix is not lower-triangular");
        for (double v : rows[i])
            if (!(v >= 0.0 && v <= 1.0))
                throw std::invalid_argument("accuracy outside [0, 1]");
    }
}

Metrics metrics(const AccuracyMatrix& a) {
    a.validate();
    if (a.rows.empty()) throw std::invalid_argument("metrics: empty matrix");
    const std::size_t t = a.rows.size();
    Metrics m;
    m.acc = mean(a.rows.back());
    if (t >= 2) {
        double s = 0.0;
        for (std::size_t i = 0; i + 1 < t; ++i) s += a.rows[t - 1][i] - a.rows[i][i];
        m.bwt = s / static_cast<double>(t - 1);
    }
    return m;
}

Vec flat_mu_w(const GaussianLayerParams& p) {
    const double* d = p.mu_w.row_ptr(0);
    return Vec(d, d + p.mu_w.rows() * p.mu_w.cols());
}

Vec flat_sigma_w(const GaussianLayerParams& p) {
    const double* d = p.rho_w.row_ptr(0);
    Vec rho(d, d + p.rho_w.rows() * p.rho_w.cols());
    return softplus(rho);
}

void set_mu_w_from_flat(GaussianLayerParams& p, const Vec& flat) {
    if (flat.size() != p.mu_w.rows() * p.mu_w.cols())
        throw std::invalid_argument("set_mu_w_from_flat: size mismatch");
    std::copy(flat.begin(), flat.end(), p.mu_w.row_ptr(0));
}

TrainerState init_trainer(std::size_t input_dim, std::size_t head_out,
                          HeadMode mode, const TrainOptions& o) {
    o.validate();
    std::vector<std::size_t> dims;
    dims.push_back(input_dim);
    dims.insert(dims.end(), o.hidden.begin(), o.hidden.end());
    if (mode == HeadMode::kSingle) dims.push_back(head_out);

    TrainerState s;
    RngState init_rng(o.seed, 0);
    s.net = make_mlp(dims, mode, head_out, init_rng);
    s.rng = RngState(o.seed, 1);

    const std::size_t tc = s.trunk_count();
    for (std::size_t l = 0; l < tc; ++l) {
        const auto& lay = s.net.shared[l];
        s.reps.emplace_back(static_cast<int>(l), lay.in() * lay.out(), o.budget,
                            RngState(o.seed, 100 + l));
        SubspaceBundle b;
        b.layer_id = static_cast<int>(l);
        s.bundles.push_back(b);
        s.candidates.emplace_back();
    }
    s.prev_shared = s.net.shared;  // init snapshot; inert until has_prev
    s.prev_mu_w.resize(tc);
    s.prev_sigma_w.resize(tc);
    s.init_mu_w.reserve(tc);
    for (std::size_t l = 0; l < tc; ++l) s.init_mu_w.push_back(s.net.shared[l].mu_w);
    s.hist_proj.resize(tc);
    s.hist_cor.resize(tc);
    return s;
}

namespace {

Batch make_batch(const Dataset& d, const std::vector<std::size_t>& order,
                 std::size_t start, std::size_t bs, int task) {
    const std::size_t end = std::min(start + bs, order.size());
    Batch b;
    b.task = task;
    b.x = Matrix(end - start, d.dim());
    b.y.reserve(end - start);
    for (std::size_t i = start; i < end; ++i) {
        const double* src = d.inputs.row_ptr(order[i]);
        std::copy(src, src + d.dim(), b.x.row_ptr(i - start));
        b.y.push_back(d.labels[order[i]]);
    }
    return b;
}

// Deterministic forward pass at the weight means, no stack materialization.
Matrix forward_mean(const BayesMlp& net, const Matrix& x, int task) {
    Matrix a = x;
    const std::size_t depth = net.stack_depth();
    for (std::size_t p = 0; p < depth; ++p) {
        const GaussianLayerParams& lay =
            p < net.shared.size() ? net.shared[p] : net.heads[static_cast<std::size_t>(task)];
        Matrix z = matmul_nt(a, lay.mu_w);
        for (std::size_t r = 0; r < z.rows(); ++r) {
            double* row = z.row_ptr(r);
            for (std::size_t c = 0; c < z.cols(); ++c) {
                row[c] += lay.mu_b[c];
                if (p + 1 < depth && row[c] < 0.0) row[c] = 0.0;
            }
        }
        a = std::move(z);
    }
    return a;
}

double mean_point_nll(const BayesMlp& net, const Batch& b) {
    Matrix p = softmax_rows(forward_mean(net, b.x, b.task));
    double acc = 0.0;
    for (std::size_t i = 0; i < p.rows(); ++i)
        acc -= std::log(std::max(p(i, static_cast<std::size_t>(b.y[i])), 1e-300));
    return acc / static_cast<double>(p.rows());
}

double mean_accuracy(const BayesMlp& net, const Dataset& d, int task) {
    const std::size_t chunk = 512;
    std::size_t hits = 0;
    for (std::size_t start = 0; start < d.size(); start += chunk) {
        const std::size_t end = std::min(start + chunk, d.size());
        Matrix x(end - start, d.dim());
        for (std::size_t i = start; i < end; ++i) {
            const double* src = d.inputs.row_ptr(i);
            std::copy(src, src + d.dim(), x.row_ptr(i - start));
        }
        Matrix logits = forward_mean(net, x, task);
        for (std::size_t r = 0; r < logits.rows(); ++r) {
            const double* row = logits.row_ptr(r);
            std::size_t best = 0;
            for (std::size_t c = 1; c < logits.cols(); ++c)
                if (row[c] > row[best]) best = c;
            if (static_cast<int>(best) == d.labels[start + r]) ++hits;
        }
    }
    return static_cast<double>(hits) / static_cast<double>(d.size());
}

// Gate signal 1: batch NLL at the weight means with trunk layer l projected
// onto its common subspace (empty O_C projects to zero).
double proj_common_nll(TrainerState& s, const Batch& b, std::size_t l) {
    GaussianLayerParams& lay = s.net.shared[l];
    Matrix saved = lay.mu_w;
    set_mu_w_from_flat(lay, project(s.bundles[l].o_common, flat_mu_w(lay)));
    const double v = mean_point_nll(s.net, b);
    lay.mu_w = saved;
    return v;
}

// Gate signal 2: correspondence score of trunk layer l against the frozen
// session, with a coreset-subsample data term when configured.
double layer_cor_loss(TrainerState& s, std::size_t l, const TrainOptions& o) {
    GaussianLayerParams& lay = s.net.shared[l];
    Vec mu = flat_mu_w(lay);
    Vec sig = flat_sigma_w(lay);
    for (double& v : sig) v = std::max(v, o.reg.sigma_floor);

    LogLikFn fn;
    std::vector<std::pair<const CoresetEntry*, std::size_t>> picks;
    if (o.cor_use_coreset && !s.coreset.entries.empty()) {
        std::size_t total = 0;
        for (const CoresetEntry& e : s.coreset.entries) total += e.data.size();
        const std::size_t k =
            std::min<std::size_t>(static_cast<std::size_t>(o.cor_coreset_subsample), total);
        for (std::size_t i = 0; i < k; ++i) {
            std::size_t idx = s.rng.uniform_index(total);
            for (const CoresetEntry& e : s.coreset.entries) {
                if (idx < e.data.size()) {
                    picks.emplace_back(&e, idx);
                    break;
                }
                idx -= e.data.size();
            }
        }
        fn = [&s, l, &picks](const Vec& wf) {
            GaussianLayerParams& gate_lay = s.net.shared[l];
            Matrix kept = gate_lay.mu_w;
            set_mu_w_from_flat(gate_lay, wf);
            double ll = 0.0;
            for (const auto& [entry, row] : picks) {
                Matrix x(1, entry->data.dim());
                const double* src = entry->data.inputs.row_ptr(row);
                std::copy(src, src + entry->data.dim(), x.row_ptr(0));
                Matrix p = softmax_rows(forward_mean(s.net, x, entry->task));
                const auto y = static_cast<std::size_t>(entry->data.labels[row]);
                ll += std::log(std::max(p(0, y), 1e-300));
            }
            gate_lay.mu_w = kept;
            return ll;
        };
    }
    return cor_loss(mu, sig, s.prev_mu_w[l], s.prev_sigma_w[l], s.bundles[l],
                    o.n_mc_cor, s.rng, fn);
}

void refresh_candidates(TrainerState& s, const TrainOptions& o) {
    for (std::size_t l = 0; l < s.trunk_count(); ++l) {
        if (s.reps[l].empty()) {
            s.candidates[l] = Matrix();
            continue;
        }
        Matrix res = residual_update(s.reps[l], s.bundles[l].o_common);
        if (frobenius_norm(res) <= 1e-12) {
            s.candidates[l] = Matrix();
            continue;
        }
        s.candidates[l] = extract_bases(res, o.energy_fraction);
    }
    ++s.cand_stamp;
}

void sgd_step(GaussianLayerParams& p, const LayerGrads& g, double lr) {
    const std::size_t nw = p.mu_w.rows() * p.mu_w.cols();
    double* mu = p.mu_w.row_ptr(0);
    double* rho = p.rho_w.row_ptr(0);
    const double* gm = g.d_mu_w.row_ptr(0);
    const double* gr = g.d_rho_w.row_ptr(0);
    for (std::size_t i = 0; i < nw; ++i) {
        mu[i] -= lr * gm[i];
        rho[i] -= lr * gr[i];
    }
    for (std::size_t i = 0; i < p.mu_b.size(); ++i) {
        p.mu_b[i] -= lr * g.d_mu_b[i];
        p.rho_b[i] -= lr * g.d_rho_b[i];
    }
}

// The Eq. 6 second term: loss gradient taken at the common-projected weight
// means, routed back through the (symmetric) projector.
Vec projected_mu_grad(TrainerState& s, const Batch& b, std::size_t l,
                      const RegWeights& w) {
    GaussianLayerParams& lay = s.net.shared[l];
    Matrix saved = lay.mu_w;
    set_mu_w_from_flat(lay, project(s.bundles[l].o_common, flat_mu_w(lay)));
    NetGrads g = nll_grads_at(s.net, b, mean_net(s.net, b.task));
    if (!w.all_zero()) add_layer_reg_grads(lay, s.prev_shared[l], w, g.layers[l]);
    lay.mu_w = saved;
    const double* d = g.layers[l].d_mu_w.row_ptr(0);
    Vec gf(d, d + g.layers[l].d_mu_w.rows() * g.layers[l].d_mu_w.cols());
    return project(s.bundles[l].o_common, gf);
}

const char* branch_name(GateBranch b) {
    switch (b) {
        case GateBranch::kWarmup: return "warmup";
        case GateBranch::kRobust: return "robust";
        case GateBranch::kNone: return "none";
        case GateBranch::kIntermediate: return "mid";
    }
    return "?";
}

void fill_coreset(TrainerState& s, const TaskItem& task, int task_id,
                  const TrainOptions& o) {
    std::vector<std::vector<std::size_t>> by_class(
        static_cast<std::size_t>(task.train.class_count));
    for (std::size_t i = 0; i < task.train.size(); ++i)
        by_class[static_cast<std::size_t>(task.train.labels[i])].push_back(i);
    for (auto& idx : by_class) s.rng.shuffle(idx);

    // Round-robin across classes keeps the per-class split as even as the
    // requested size allows.
    std::vector<std::size_t> chosen;
    const std::size_t want =
        std::min<std::size_t>(static_cast<std::size_t>(o.coreset_size), task.train.size());
    for (std::size_t round = 0; chosen.size() < want; ++round) {
        bool any = false;
        for (auto& idx : by_class) {
            if (round < idx.size() && chosen.size() < want) {
                chosen.push_back(idx[round]);
                any = true;
            }
        }
        if (!any) break;
    }

    CoresetEntry entry;
    entry.task = task_id;
    entry.data.class_count = task.train.class_count;
    entry.data.inputs = Matrix(chosen.size(), task.train.dim());
    for (std::size_t i = 0; i < chosen.size(); ++i) {
        const double* src = task.train.inputs.row_ptr(chosen[i]);
        std::copy(src, src + task.train.dim(), entry.data.inputs.row_ptr(i));
        entry.data.labels.push_back(task.train.labels[chosen[i]]);
    }
    s.coreset.entries.push_back(std::move(entry));
}

int eval_threads() {
    if (const char* env = std::getenv("ECLRR_THREADS")) {
        const int v = std::atoi(env);
        if (v >= 1) return v;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw ? static_cast<int>(hw) : 1;
}

SigmaSummary summarize_sigma(const GaussianLayerParams& lay, int task, int layer) {
    Vec v = flat_sigma_w(lay);
    Vec vb = lay.sigma_b();
    v.insert(v.end(), vb.begin(), vb.end());
    std::sort(v.begin(), v.end());

    SigmaSummary out;
    out.task = task;
    out.layer = layer;
    out.mean = mean(v);
    auto quantile = [&](double q) {
        const double pos = q * static_cast<double>(v.size() - 1);
        return v[static_cast<std::size_t>(pos + 0.5)];
    };
    out.p10 = quantile(0.10);
    out.p50 = quantile(0.50);
    out.p90 = quantile(0.90);
    out.lo = v.front();
    out.hi = v.back();
    out.bins.assign(16, 0);
    const double span = out.hi > out.lo ? out.hi - out.lo : 1.0;
    for (double x : v) {
        auto bin = static_cast<std::size_t>((x - out.lo) / span * 16.0);
        if (bin >= 16) bin = 15;
        ++out.bins[bin];
    }
    return out;
}

}  // namespace

std::vector<EpochLog> train_task(TrainerState& s, const TaskItem& task, int task_id,
                                 const TrainOptions& o) {
    o.validate();
    if (task.train.size() == 0) throw std::invalid_argument("train_task: empty task");
    task.train.validate();

    const std::size_t tc = s.trunk_count();
    if (s.net.head_mode == HeadMode::kMulti)
        while (s.net.heads.size() <= static_cast<std::size_t>(task_id))
            add_head(s.net, s.rng);

    for (auto& h : s.hist_proj) h.clear();
    for (auto& h : s.hist_cor) h.clear();

    const bool gated = o.eclrr && s.has_prev;
    if (gated) refresh_candidates(s, o);

    RegWeights w_eff = o.reg;
    if (!gated) w_eff.w_mu1 = w_eff.w_mu2 = w_eff.w_sig1 = w_eff.w_sig2 = 0.0;

    // Skip subspace work already done for the same candidate set.
    std::vector<int> last_action(tc, -1);
    std::vector<std::uint64_t> last_stamp(tc, ~0ull);

    std::vector<EpochLog> logs;
    std::vector<std::size_t> order(task.train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    for (int e = 0; e < o.epochs; ++e) {
        s.rng.shuffle(order);
        double loss_sum = 0.0;
        int batches = 0;
        double r_sum = 0.0;
        int r_n = 0;
        std::array<int, 4> branch_n{};

        for (std::size_t start = 0; start < order.size(); start += o.batch_size) {
            Batch b = make_batch(task.train, order, start, o.batch_size, task_id);
            NetGrads g = total_loss(s.net, s.prev_shared, b, w_eff, o.n_mc, s.rng);
            if (!std::isfinite(g.loss))
                throw TrainAbort("non-finite training loss", task_id, e, batches);
            loss_sum += g.loss;

            std::vector<GateDecision> dec(tc);
            if (gated) {
                for (std::size_t l = 0; l < tc; ++l) {
                    if (o.forced_gate_r) {
                        dec[l] = gate_from_r(*o.forced_gate_r, o.gate);
                    } else {
                        const double l1 = proj_common_nll(s, b, l);
                        const double l2 = layer_cor_loss(s, l, o);
                        auto& hp = s.hist_proj[l];
                        auto& hc = s.hist_cor[l];
                        hp.push_back(l1);
                        hc.push_back(l2);
                        while (hp.size() > static_cast<std::size_t>(o.gate.window))
                            hp.pop_front();
                        while (hc.size() > static_cast<std::size_t>(o.gate.window))
                            hc.pop_front();
                        dec[l] = gate_decision(hp, hc, o.gate);
                    }
                    ++branch_n[static_cast<std::size_t>(dec[l].branch)];
                    if (std::isfinite(dec[l].r)) {
                        r_sum += dec[l].r;
                        ++r_n;
                    }
                }
            }

            // Both Eq. 6 gradient terms are taken at the pre-step parameters.
            std::vector<Vec> alpha_g(tc);
            if (gated && o.rates.alpha > 0.0)
                for (std::size_t l = 0; l < tc; ++l)
                    if (dec[l].branch == GateBranch::kRobust &&
                        !s.bundles[l].o_common.empty())
                        alpha_g[l] = projected_mu_grad(s, b, l, w_eff);

            for (std::size_t p = 0; p < g.layers.size(); ++p) {
                GaussianLayerParams& lay =
                    p < s.net.shared.size()
                        ? s.net.shared[p]
                        : s.net.heads[static_cast<std::size_t>(task_id)];
                sgd_step(lay, g.layers[p], o.rates.lambda);
            }
            for (std::size_t l = 0; l < tc; ++l) {
                if (alpha_g[l].empty()) continue;
                Vec f = flat_mu_w(s.net.shared[l]);
                for (std::size_t i = 0; i < f.size(); ++i)
                    f[i] -= o.rates.alpha * alpha_g[l][i];
                set_mu_w_from_flat(s.net.shared[l], f);
            }

            if (gated) {
                for (std::size_t l = 0; l < tc; ++l) {
                    if (dec[l].branch == GateBranch::kRobust) {
                        if (last_action[l] == 0 && last_stamp[l] == s.cand_stamp) continue;
                        s.bundles[l].o_distinct = Matrix();
                        if (!s.candidates[l].empty())
                            extend_distinctive(s.bundles[l], s.candidates[l]);
                        last_action[l] = 0;
                        last_stamp[l] = s.cand_stamp;
                    } else if (dec[l].branch == GateBranch::kNone) {
                        if (last_action[l] == 1 && last_stamp[l] == s.cand_stamp) continue;
                        if (!s.candidates[l].empty())
                            extend_distinctive(s.bundles[l], s.candidates[l]);
                        last_action[l] = 1;
                        last_stamp[l] = s.cand_stamp;
                    }
                }
            }
            if (o.invariant_checks) {
                for (std::size_t l = 0; l < tc; ++l) {
                    check_bundle(s.bundles[l]);
                    // Projection idempotence on the live parameter vector.
                    const Vec f = flat_mu_w(s.net.shared[l]);
                    const Vec p1 = project(s.bundles[l], BundlePart::kCombined, f);
                    const Vec p2 = project(s.bundles[l], BundlePart::kCombined, p1);
                    for (std::size_t i = 0; i < p1.size(); ++i)
                        if (std::abs(p1[i] - p2[i]) > 1e-10)
                            throw NumericFailure("projection lost idempotence");
                }
            }
            ++batches;
        }

        if (o.eclrr && (((e + 1) % o.snapshot_every) == 0 || e + 1 == o.epochs)) {
            for (std::size_t l = 0; l < tc; ++l)
                s.reps[l].push_snapshot(flat_mu_w(s.net.shared[l]), task_id);
            if (gated) refresh_candidates(s, o);
        }

        EpochLog log;
        log.task = task_id;
        log.epoch = e;
        log.split = "train";
        log.loss = loss_sum / static_cast<double>(std::max(1, batches));
        log.acc = mean_accuracy(s.net, task.train, task_id);
        log.gate_r = r_n > 0 ? r_sum / r_n : kNaN;
        if (!gated) {
            log.branch = "off";
        } else {
            const std::size_t m = static_cast<std::size_t>(
                std::max_element(branch_n.begin(), branch_n.end()) - branch_n.begin());
            log.branch = branch_name(static_cast<GateBranch>(m));
        }
        logs.push_back(std::move(log));
    }

    for (const SubspaceBundle& bnd : s.bundles) check_bundle(bnd);
    return logs;
}

bool backward_transfer_gate(TrainerState& s, int j, std::size_t layer,
                            const TrainOptions& o) {
    const CoresetEntry* e = s.coreset.find(j);
    if (!e) throw InvalidState("no coreset stored for task " + std::to_string(j));
    if (layer >= s.trunk_count())
        throw std::invalid_argument("backward_transfer_gate: not a trunk layer");

    Batch b;
    b.task = j;
    b.x = e->data.inputs;
    b.y = e->data.labels;

    GaussianLayerParams& lay = s.net.shared[layer];
    const Matrix saved = lay.mu_w;
    const Vec flat = flat_mu_w(lay);
    // One split per (task, layer) pair so both sides see identical MC noise.
    const RngState noise =
        s.rng.split(0xB170000ull + static_cast<std::uint64_t>(j) * 64 + layer);

    set_mu_w_from_flat(lay, project(s.bundles[layer], BundlePart::kCombined, flat));
    RngState r1 = noise;
    const double combined = nll_loss(s.net, b, o.n_mc_gate, r1);

    set_mu_w_from_flat(lay, project(s.bundles[layer], BundlePart::kCommon, flat));
    RngState r2 = noise;
    const double common = nll_loss(s.net, b, o.n_mc_gate, r2);

    lay.mu_w = saved;
    return combined <= common;
}

void finish_task(TrainerState& s, const TaskItem& task, int task_id,
                 const TrainOptions& o) {
    const std::size_t tc = s.trunk_count();

    s.prev_shared = s.net.shared;
    s.plns.clear();
    if (o.eclrr && o.pln_enabled) {
        for (std::size_t l = 0; l < tc; ++l) {
            GaussianLayerParams& lay = s.prev_shared[l];
            const std::size_t rows = lay.out(), width = lay.in();
            const std::size_t hidden = pln_hidden_width(width);
            const std::size_t psi = hidden * o.pln_seed_dim + hidden +
                                    width * hidden + width;
            // Layers too small to compress keep their exact values.
            if (psi >= rows * width) continue;
            // Dedicated substream: fitting the generator must not shift the
            // training trajectory's draw sequence, or enabling the PLN would
            // change every later batch even with perfect reconstruction.
            RngState pln_rng =
                s.rng.split(4000 + static_cast<std::uint64_t>(task_id) * 64 + l);
            PlnGenerator gen =
                make_pln(static_cast<int>(l), width, rows, o.pln_seed_dim, pln_rng);
            // Fit the learned offset from the seeded init, not the raw rows:
            // the init is i.i.d. noise no small generator could keep, and it
            // is reproducible from the run seed, so only the delta is stored.
            const Matrix& init = s.init_mu_w[l];
            std::vector<Vec> targets;
            targets.reserve(rows);
            for (std::size_t r = 0; r < rows; ++r) {
                Vec delta(width);
                const double* src = lay.mu_w.row_ptr(r);
                const double* ref = init.row_ptr(r);
                for (std::size_t j = 0; j < width; ++j) delta[j] = src[j] - ref[j];
                targets.push_back(std::move(delta));
            }
            train_pln(targets, gen, o.pln_epochs, pln_rng);
            for (std::size_t r = 0; r < rows; ++r) {
                Vec recon = reconstruct(gen, r);
                double* dst = lay.mu_w.row_ptr(r);
                const double* ref = init.row_ptr(r);
                for (std::size_t j = 0; j < width; ++j) dst[j] = ref[j] + recon[j];
            }
            s.plns.push_back(std::move(gen));
        }
    }

    for (std::size_t l = 0; l < tc; ++l) {
        s.prev_mu_w[l] = flat_mu_w(s.prev_shared[l]);
        s.prev_sigma_w[l] = flat_sigma_w(s.prev_shared[l]);
        for (double& v : s.prev_sigma_w[l]) v = std::max(v, o.reg.sigma_floor);
    }

    if (o.eclrr) {
        fill_coreset(s, task, task_id, o);
        for (std::size_t l = 0; l < tc; ++l) {
            if (s.bundles[l].o_distinct.empty()) continue;
            bool gate = false;
            for (const CoresetEntry& e : s.coreset.entries) {
                if (e.task >= task_id) continue;
                if (backward_transfer_gate(s, e.task, l, o)) {
                    gate = true;
                    break;
                }
            }
            const Matrix candidates = s.bundles[l].o_distinct;
            promote_bases(s.bundles[l], candidates, gate);
        }
    }

    s.has_prev = true;
    s.tasks_seen = std::max(s.tasks_seen, task_id + 1);
}

double evaluate(const BayesMlp& net, const Dataset& data, int task, int n_mc,
                RngState rng) {
    if (data.size() == 0) throw std::invalid_argument("evaluate: empty dataset");
    const std::size_t chunk = 256;
    std::size_t hits = 0;
    for (std::size_t start = 0; start < data.size(); start += chunk) {
        const std::size_t end = std::min(start + chunk, data.size());
        Matrix x(end - start, data.dim());
        for (std::size_t i = start; i < end; ++i) {
            const double* src = data.inputs.row_ptr(i);
            std::copy(src, src + data.dim(), x.row_ptr(i - start));
        }
        Matrix probs = predict_probs(net, x, task, n_mc, rng);
        for (std::size_t r = 0; r < probs.rows(); ++r) {
            const double* row = probs.row_ptr(r);
            std::size_t best = 0;
            for (std::size_t c = 1; c < probs.cols(); ++c)
                if (row[c] > row[best]) best = c;
            if (static_cast<int>(best) == data.labels[start + r]) ++hits;
        }
    }
    return static_cast<double>(hits) / static_cast<double>(data.size());
}

RunReport run_stream(const TaskStream& stream, const TrainOptions& o,
                     const TaskCallback& after_task) {
    if (stream.tasks.empty()) throw std::invalid_argument("run_stream: empty stream");
    o.validate();
    const Dataset& first = stream.tasks[0].train;
    for (const TaskItem& t : stream.tasks)
        if (t.train.dim() != first.dim())
            throw std::invalid_argument("run_stream: inconsistent input dimensions");

    const HeadMode mode =
        stream.protocol == Protocol::kSplit ? HeadMode::kMulti : HeadMode::kSingle;
    TrainerState s = init_trainer(first.dim(),
                                  static_cast<std::size_t>(first.class_count), mode, o);

    RunReport rep;
    for (std::size_t t = 0; t < stream.tasks.size(); ++t) {
        const auto t0 = std::chrono::steady_clock::now();
        auto logs = train_task(s, stream.tasks[t], static_cast<int>(t), o);
        finish_task(s, stream.tasks[t], static_cast<int>(t), o);
        if (after_task) after_task(s, static_cast<int>(t));
        rep.logs.insert(rep.logs.end(), logs.begin(), logs.end());
        rep.task_seconds.push_back(
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                .count());

        // Evaluate every seen task; read-only over the net, so the env cap
        // is the only limit on concurrency. Results land by index.
        std::vector<double> accs(t + 1, 0.0);
        auto eval_one = [&](std::size_t j) {
            RngState er(o.seed, 0xEA00000ull + t * 1024 + j);
            accs[j] = evaluate(s.net, stream.tasks[j].test, static_cast<int>(j),
                               o.n_mc_eval, er);
        };
        const int cap = std::min<int>(eval_threads(), static_cast<int>(t) + 1);
        if (cap <= 1) {
            for (std::size_t j = 0; j <= t; ++j) eval_one(j);
        } else {
            std::atomic<std::size_t> next{0};
            std::vector<std::thread> pool;
            for (int w = 0; w < cap; ++w)
                pool.emplace_back([&] {
                    for (std::size_t j = next.fetch_add(1); j <= t;
                         j = next.fetch_add(1))
                        eval_one(j);
                });
            for (auto& th : pool) th.join();
        }
        rep.matrix.rows.push_back(accs);

        for (std::size_t j = 0; j <= t; ++j) {
            Batch tb;
            tb.task = static_cast<int>(j);
            tb.x = stream.tasks[j].test.inputs;
            tb.y = stream.tasks[j].test.labels;
            EpochLog log;
            log.task = static_cast<int>(j);
            log.epoch = static_cast<int>(t);
            log.split = "test";
            log.loss = mean_point_nll(s.net, tb);
            log.acc = accs[j];
            log.gate_r = kNaN;
            log.branch = "-";
            rep.logs.push_back(std::move(log));
        }
        for (std::size_t l = 0; l < s.net.shared.size(); ++l)
            rep.sigmas.push_back(summarize_sigma(s.net.shared[l], static_cast<int>(t),
                                                 static_cast<int>(l)));
    }

    const Metrics m = metrics(rep.matrix);
    rep.acc = m.acc;
    rep.bwt = m.bwt;
    return rep;
}

}  // namespace eclrr
