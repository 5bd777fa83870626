#include "eclrr/pln.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "eclrr/svd.hpp"

namespace eclrr {

std::size_t PlnGenerator::param_count() const {
    return hidden_dim * seed_dim + hidden_dim + target_dim * hidden_dim + target_dim;
}

std::size_t pln_hidden_width(std::size_t target_dim) {
    return std::min<std::size_t>((target_dim + 15) / 16, 64);
}

PlnGenerator make_pln(int layer_id, std::size_t target_dim, std::size_t n_targets,
                      std::size_t seed_dim, RngState& rng) {
    if (target_dim == 0 || n_targets == 0 || seed_dim == 0)
        throw std::invalid_argument("make_pln: dimensions must be positive");
    PlnGenerator gen;
    gen.layer_id = layer_id;
    gen.seed_dim = seed_dim;
    gen.hidden_dim = pln_hidden_width(target_dim);
    gen.target_dim = target_dim;
    if (gen.param_count() >= n_targets * target_dim)
        throw std::invalid_argument("make_pln: psi would not compress the slice");

    // Random-feature first layer; the output layer starts at zero and is
    // always obtained by least squares in train_pln.
    gen.w1 = Matrix(gen.hidden_dim, seed_dim);
    gen.b1.assign(gen.hidden_dim, 0.0);
    const double scale = 2.0 / std::sqrt(static_cast<double>(seed_dim));
    for (std::size_t k = 0; k < gen.hidden_dim; ++k) {
        for (std::size_t j = 0; j < seed_dim; ++j) gen.w1(k, j) = scale * rng.gaussian();
        gen.b1[k] = 2.0 * rng.uniform() - 1.0;
    }
    gen.w2 = Matrix(target_dim, gen.hidden_dim);
    gen.b2.assign(target_dim, 0.0);
    return gen;
}

namespace {

// Hidden activations for every stored seed, with a trailing bias column.
Matrix feature_matrix(const PlnGenerator& gen) {
    const std::size_t n = gen.seeds.rows(), h = gen.hidden_dim, s = gen.seed_dim;
    Matrix phi(n, h + 1);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < h; ++k) {
            double pre = gen.b1[k];
            for (std::size_t j = 0; j < s; ++j) pre += gen.w1(k, j) * gen.seeds(i, j);
            phi(i, k) = std::tanh(pre);
        }
        phi(i, h) = 1.0;
    }
    return phi;
}

// Least-squares solve of phi * A = T via the SVD pseudo-inverse, written
// back into w2 (rows of A transposed) and b2 (last row of A).
void solve_output(const Matrix& phi, const Matrix& t_mat, PlnGenerator& gen) {
    SvdResult svd = thin_svd(phi);
    Matrix ut_t = matmul_tn(svd.u, t_mat);
    const double tol = svd.s.empty()
                           ? 0.0
                           : svd.s[0] * static_cast<double>(std::max(phi.rows(), phi.cols())) *
                                 std::numeric_limits<double>::epsilon();
    for (std::size_t k = 0; k < svd.s.size(); ++k) {
        const double inv = svd.s[k] > tol ? 1.0 / svd.s[k] : 0.0;
        for (std::size_t c = 0; c < ut_t.cols(); ++c) ut_t(k, c) *= inv;
    }
    Matrix a = matmul(svd.v, ut_t);
    const std::size_t h = gen.hidden_dim;
    for (std::size_t c = 0; c < gen.target_dim; ++c) {
        for (std::size_t k = 0; k < h; ++k) gen.w2(c, k) = a(k, c);
        gen.b2[c] = a(h, c);
    }
}

double rmse_over(const Matrix& phi, const Matrix& t_mat, const PlnGenerator& gen) {
    const std::size_t n = phi.rows(), h = gen.hidden_dim, d = gen.target_dim;
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < d; ++c) {
            double pred = gen.b2[c];
            for (std::size_t k = 0; k < h; ++k) pred += gen.w2(c, k) * phi(i, k);
            const double e = pred - t_mat(i, c);
            acc += e * e;
        }
    }
    return std::sqrt(acc / static_cast<double>(n * d));
}

// Least-squares solution X of A X = B through the SVD pseudo-inverse.
Matrix lsq_solve(const Matrix& a, const Matrix& b) {
    SvdResult svd = thin_svd(a);
    Matrix ut_b = matmul_tn(svd.u, b);
    const double tol = svd.s.empty()
                           ? 0.0
                           : svd.s[0] * static_cast<double>(std::max(a.rows(), a.cols())) *
                                 std::numeric_limits<double>::epsilon();
    for (std::size_t k = 0; k < svd.s.size(); ++k) {
        const double inv = svd.s[k] > tol ? 1.0 / svd.s[k] : 0.0;
        for (std::size_t c = 0; c < ut_b.cols(); ++c) ut_b(k, c) *= inv;
    }
    return matmul(svd.v, ut_b);
}

// Point w1/b1 at the targets' own structure instead of leaving them random:
// the ideal hidden activations are the targets' principal-component
// coefficients, so solve seeds -> atanh(scaled coefficients) per feature.
// Beats random features whenever the seed count can express the coefficient
// pattern; the caller keeps whichever solution fits better.
void svd_guided_features(const Matrix& t_mat, PlnGenerator& gen) {
    const std::size_t n = t_mat.rows(), d = gen.target_dim, h = gen.hidden_dim;
    const std::size_t s = gen.seed_dim;
    Vec mean_col(d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < d; ++c) mean_col[c] += t_mat(i, c);
    for (double& v : mean_col) v /= static_cast<double>(n);
    Matrix centered(n, d);
    double energy = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < d; ++c) {
            centered(i, c) = t_mat(i, c) - mean_col[c];
            energy += centered(i, c) * centered(i, c);
        }
    if (energy < 1e-24) return;  // constant targets: the bias already fits

    SvdResult svd = thin_svd(centered);
    const std::size_t comps = std::min(h, svd.s.size());

    Matrix seeds_aug(n, s + 1);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < s; ++j) seeds_aug(i, j) = gen.seeds(i, j);
        seeds_aug(i, s) = 1.0;
    }
    Matrix want(n, comps);
    for (std::size_t k = 0; k < comps; ++k) {
        if (svd.s[k] * svd.s[k] < 1e-18 * energy) {
            for (std::size_t i = 0; i < n; ++i) want(i, k) = 0.0;
            continue;
        }
        double peak = 0.0;
        for (std::size_t i = 0; i < n; ++i) peak = std::max(peak, std::abs(svd.u(i, k)));
        const double scale = peak > 0 ? 0.9 / peak : 0.0;
        for (std::size_t i = 0; i < n; ++i) want(i, k) = std::atanh(scale * svd.u(i, k));
    }
    Matrix sol = lsq_solve(seeds_aug, want);
    for (std::size_t k = 0; k < comps; ++k) {
        for (std::size_t j = 0; j < s; ++j) gen.w1(k, j) = sol(j, k);
        gen.b1[k] = sol(s, k);
    }
}

}  // namespace

double train_pln(const std::vector<Vec>& targets, PlnGenerator& gen, int epochs,
                 RngState& rng) {
    if (targets.empty()) throw std::invalid_argument("train_pln: no targets");
    const std::size_t n = targets.size(), d = gen.target_dim;
    const std::size_t h = gen.hidden_dim, s = gen.seed_dim;
    for (const Vec& t : targets)
        if (t.size() != d) throw std::invalid_argument("train_pln: target dimension mismatch");

    gen.seeds = Matrix(n, s);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < s; ++j) gen.seeds(i, j) = rng.uniform();

    Matrix t_mat(n, d);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < d; ++c) t_mat(i, c) = targets[i][c];

    Matrix phi = feature_matrix(gen);
    solve_output(phi, t_mat, gen);
    double best = rmse_over(phi, t_mat, gen);
    Matrix best_w1 = gen.w1, best_w2 = gen.w2;
    Vec best_b1 = gen.b1, best_b2 = gen.b2;

    // Try target-guided features as an alternative starting point and keep
    // the better of the two solutions.
    svd_guided_features(t_mat, gen);
    phi = feature_matrix(gen);
    solve_output(phi, t_mat, gen);
    const double guided = rmse_over(phi, t_mat, gen);
    if (guided < best) {
        best = guided;
        best_w1 = gen.w1;
        best_b1 = gen.b1;
        best_w2 = gen.w2;
        best_b2 = gen.b2;
    } else {
        gen.w1 = best_w1;
        gen.b1 = best_b1;
        gen.w2 = best_w2;
        gen.b2 = best_b2;
        phi = feature_matrix(gen);
    }

    // First-layer refinement: full-batch gradient steps, each followed by a
    // fresh output solve. The best psi seen wins, so a bad step cannot make
    // the final fit worse than the plain random-feature solution.
    const double lr = 0.5;
    for (int e = 0; e < epochs && h > 0; ++e) {
        Matrix g_w1(h, s);
        Vec g_b1(h, 0.0);
        const double inv = 2.0 / static_cast<double>(n * d);
        Matrix resid(n, d);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t c = 0; c < d; ++c) {
                double pred = gen.b2[c];
                for (std::size_t k = 0; k < h; ++k) pred += gen.w2(c, k) * phi(i, k);
                resid(i, c) = pred - t_mat(i, c);
            }
        }
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t k = 0; k < h; ++k) {
                double dphi = 0.0;
                for (std::size_t c = 0; c < d; ++c) dphi += gen.w2(c, k) * resid(i, c);
                const double dpre = inv * dphi * (1.0 - phi(i, k) * phi(i, k));
                for (std::size_t j = 0; j < s; ++j) g_w1(k, j) += dpre * gen.seeds(i, j);
                g_b1[k] += dpre;
            }
        }
        for (std::size_t k = 0; k < h; ++k) {
            for (std::size_t j = 0; j < s; ++j) gen.w1(k, j) -= lr * g_w1(k, j);
            gen.b1[k] -= lr * g_b1[k];
        }
        phi = feature_matrix(gen);
        solve_output(phi, t_mat, gen);
        const double r = rmse_over(phi, t_mat, gen);
        if (r < best) {
            best = r;
            best_w1 = gen.w1;
            best_b1 = gen.b1;
            best_w2 = gen.w2;
            best_b2 = gen.b2;
        }
    }
    gen.w1 = best_w1;
    gen.b1 = best_b1;
    gen.w2 = best_w2;
    gen.b2 = best_b2;
    return best;
}

Vec generate(const PlnGenerator& gen, const Vec& seed) {
    if (seed.size() != gen.seed_dim)
        throw std::invalid_argument("generate: seed dimension mismatch");
    Vec phi(gen.hidden_dim);
    for (std::size_t k = 0; k < gen.hidden_dim; ++k) {
        double pre = gen.b1[k];
        for (std::size_t j = 0; j < gen.seed_dim; ++j) pre += gen.w1(k, j) * seed[j];
        phi[k] = std::tanh(pre);
    }
    Vec out(gen.target_dim);
    for (std::size_t c = 0; c < gen.target_dim; ++c) {
        double v = gen.b2[c];
        for (std::size_t k = 0; k < gen.hidden_dim; ++k) v += gen.w2(c, k) * phi[k];
        out[c] = v;
    }
    return out;
}

Vec reconstruct(const PlnGenerator& gen, std::size_t index) {
    if (index >= gen.seeds.rows())
        throw std::out_of_range("reconstruct: no stored seed for that index");
    Vec z(gen.seed_dim);
    for (std::size_t j = 0; j < gen.seed_dim; ++j) z[j] = gen.seeds(index, j);
    return generate(gen, z);
}

}  // namespace eclrr
