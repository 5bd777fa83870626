#pragma once

#include <cstddef>
#include <initializer_list>
#include <vector>

namespace eclrr {

using Vec = std::vector<double>;

// Dense row-major matrix of doubles. Deliberately small: just the pieces the
// library needs (products, transpose, norms), no expression templates.
class Matrix {
  public:
    Matrix() : rows_(0), cols_(0) {}
    Matrix(std::size_t rows, std::size_t cols)
        : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}
    Matrix(std::size_t rows, std::size_t cols, Vec data);

    static Matrix identity(std::size_t n);
    // Rows listed literally; handy in tests.
    static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
    static Matrix from_cols(const std::vector<Vec>& cols);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    bool empty() const { return rows_ == 0 || cols_ == 0; }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    double* row_ptr(std::size_t i) { return data_.data() + i * cols_; }
    const double* row_ptr(std::size_t i) const { return data_.data() + i * cols_; }

    Vec& data() { return data_; }
    const Vec& data() const { return data_; }

    Vec col(std::size_t j) const;
    void set_col(std::size_t j, const Vec& v);

    Matrix transposed() const;

  private:
    std::size_t rows_, cols_;
    Vec data_;
};

Matrix matmul(const Matrix& a, const Matrix& b);
// a^T * b without forming the transpose.
Matrix matmul_tn(const Matrix& a, const Matrix& b);
// a * b^T without forming the transpose.
Matrix matmul_nt(const Matrix& a, const Matrix& b);

Vec matvec(const Matrix& a, const Vec& x);
// a^T * x without forming the transpose.
Vec matvec_t(const Matrix& a, const Vec& x);

double dot(const Vec& a, const Vec& b);
double norm2(const Vec& a);
void axpy(double alpha, const Vec& x, Vec& y);  // y += alpha * x

double frobenius_norm(const Matrix& m);
double max_abs_diff(const Matrix& a, const Matrix& b);
double max_abs_diff(const Vec& a, const Vec& b);

// Appends `extra`'s columns to the right of `base` (rows must match; an
// empty operand passes through).
Matrix hcat(const Matrix& base, const Matrix& extra);

bool all_finite(const Vec& v);
bool all_finite(const Matrix& m);

}  // namespace eclrr
