#pragma once

#include "eclrr/matrix.hpp"

namespace eclrr {

// softplus(x) = ln(1 + e^x), computed without overflow for large |x|.
double softplus(double x);
// Inverse: softplus_inv(softplus(x)) == x. Input must be > 0.
double softplus_inv(double y);
// d softplus / dx = logistic sigmoid.
double sigmoid(double x);

Vec softplus(const Vec& v);
Vec softplus_inv(const Vec& v);

// log sum_i exp(xs[i]) with the max factored out. Empty input is an error.
double logsumexp(const Vec& xs);

// log N(x | mu, sigma), sigma > 0.
double log_normal_pdf(double x, double mu, double sigma);

// Pearson correlation of two equal-length series. Throws std::invalid_argument
// on length mismatch or fewer than two points, DegenerateCorrelation when
// either series has (near-)zero variance.
double pearson(const Vec& xs, const Vec& ys);

double mean(const Vec& xs);

}  // namespace eclrr
