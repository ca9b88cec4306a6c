#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace redprobe {

// Dense row-major matrix of doubles. All arithmetic in this project runs in
// double precision; gradient checks rely on it.
class Matrix {
public:
    Matrix() = default;
    Matrix(int rows, int cols) : rows_(rows), cols_(cols), values_(static_cast<size_t>(rows) * cols, 0.0) {}
    Matrix(int rows, int cols, std::vector<double> values);

    static Matrix filled(int rows, int cols, double v);
    static Matrix row_vector(std::vector<double> values);
    static Matrix scalar(double v) { return Matrix(1, 1, {v}); }

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    size_t size() const { return values_.size(); }
    bool empty() const { return values_.empty(); }

    double& operator()(int r, int c) { return values_[static_cast<size_t>(r) * cols_ + c]; }
    double operator()(int r, int c) const { return values_[static_cast<size_t>(r) * cols_ + c]; }

    double* data() { return values_.data(); }
    const double* data() const { return values_.data(); }
    double* row(int r) { return values_.data() + static_cast<size_t>(r) * cols_; }
    const double* row(int r) const { return values_.data() + static_cast<size_t>(r) * cols_; }

    std::vector<double>& values() { return values_; }
    const std::vector<double>& values() const { return values_; }

    bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }
    std::string shape_str() const;

    void fill(double v);

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<double> values_;
};

// Throws NumericError if any entry is not finite.
void check_finite(const Matrix& m, const char* what);

// Standard product. Shapes must agree; the error message names both.
Matrix matmul(const Matrix& a, const Matrix& b);

// a * b^T without materializing the transpose.
Matrix matmul_nt(const Matrix& a, const Matrix& b);

// a^T * b.
Matrix matmul_tn(const Matrix& a, const Matrix& b);

Matrix transpose(const Matrix& m);

// Row-wise softmax with per-row max subtraction.
Matrix softmax_rows(const Matrix& m);

// Per row: gain * (x - mean) / sqrt(var + eps) + bias, population variance.
Matrix layer_norm_rows(const Matrix& m, std::span<const double> gain, std::span<const double> bias,
                       double eps);

// Elementwise x * 0.5 * (1 + tanh(sqrt(2/pi) * (x + 0.044715 x^3))).
Matrix gelu(const Matrix& m);
double gelu_scalar(double x);
double gelu_derivative(double x);

Matrix add(const Matrix& a, const Matrix& b);
Matrix sub(const Matrix& a, const Matrix& b);
Matrix mul_elem(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& a, double s);

// Adds a 1xC row vector to every row of a.
Matrix add_row_broadcast(const Matrix& a, const Matrix& row);

double frobenius_norm_sq(const Matrix& m);

}  // namespace redprobe
