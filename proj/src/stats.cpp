#include "eclrr/stats.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "eclrr/errors.hpp"

namespace eclrr {

double softplus(double x) {
    // max(x, 0) + log1p(exp(-|x|)) is exact in both tails.
    return std::max(x, 0.0) + std::log1p(std::exp(-std::fabs(x)));
}

double softplus_inv(double y) {
    if (!(y > 0.0)) throw std::invalid_argument("softplus_inv: input must be > 0");
    // ln(e^y - 1). expm1 keeps full precision when y is tiny; the log1p form
    // avoids overflow when y is large.
    if (y > 30.0) return y + std::log1p(-std::exp(-y));
    return std::log(std::expm1(y));
}

double sigmoid(double x) {
    if (x >= 0.0) {
        double e = std::exp(-x);
        return 1.0 / (1.0 + e);
    }
    double e = std::exp(x);
    return e / (1.0 + e);
}

Vec softplus(const Vec& v) {
    Vec out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = softplus(v[i]);
    return out;
}

Vec softplus_inv(const Vec& v) {
    Vec out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = softplus_inv(v[i]);
    return out;
}

double logsumexp(const Vec& xs) {
    if (xs.empty()) throw std::invalid_argument("logsumexp: empty input");
    double m = *std::max_element(xs.begin(), xs.end());
    if (!std::isfinite(m)) return m;  // all -inf, or a +inf/nan dominates
    double s = 0.0;
    for (double x : xs) s += std::exp(x - m);
    return m + std::log(s);
}

double log_normal_pdf(double x, double mu, double sigma) {
    if (!(sigma > 0.0)) throw std::invalid_argument("log_normal_pdf: sigma must be > 0");
    static const double kLogSqrt2Pi = 0.9189385332046727;  // ln(sqrt(2*pi))
    double z = (x - mu) / sigma;
    return -0.5 * z * z - std::log(sigma) - kLogSqrt2Pi;
}

double pearson(const Vec& xs, const Vec& ys) {
    if (xs.size() != ys.size()) throw std::invalid_argument("pearson: length mismatch");
    if (xs.size() < 2) throw std::invalid_argument("pearson: need at least two points");
    const std::size_t n = xs.size();
    double mx = mean(xs), my = mean(ys);
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double dx = xs[i] - mx, dy = ys[i] - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    double denom = std::sqrt(sxx) * std::sqrt(syy);
    // Relative threshold: a series whose spread is at machine-noise level
    // relative to its magnitude carries no correlation signal.
    double scale_x = std::max(std::fabs(mx), 1.0);
    double scale_y = std::max(std::fabs(my), 1.0);
    if (std::sqrt(sxx / n) <= 1e-12 * scale_x || std::sqrt(syy / n) <= 1e-12 * scale_y)
        throw DegenerateCorrelation("pearson: a series has zero variance");
    double r = sxy / denom;
    return std::clamp(r, -1.0, 1.0);
}

double mean(const Vec& xs) {
    if (xs.empty()) throw std::invalid_argument("mean: empty input");
    double s = 0.0;
    for (double x : xs) s += x;
    return s / static_cast<double>(xs.size());
}

}  // namespace eclrr
