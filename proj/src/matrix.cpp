#include "redprobe/matrix.hpp"

#include <cmath>
#include <cstring>

#include "redprobe/errors.hpp"

namespace redprobe {

Matrix::Matrix(int rows, int cols, std::vector<double> values) : rows_(rows), cols_(cols), values_(std::move(values)) {
    if (values_.size() != static_cast<size_t>(rows) * cols) {
        throw DimensionError("matrix init: " + std::to_string(values_.size()) + " values for shape " +
                             shape_str());
    }
}

Matrix Matrix::filled(int rows, int cols, double v) {
    Matrix m(rows, cols);
    m.fill(v);
    return m;
}

Matrix Matrix::row_vector(std::vector<double> values) {
    const int n = static_cast<int>(values.size());
    return Matrix(1, n, std::move(values));
}

std::string Matrix::shape_str() const {
    return "(" + std::to_string(rows_) + "x" + std::to_string(cols_) + ")";
}

void Matrix::fill(double v) {
    for (auto& x : values_) {
        x = v;
    }
}

void check_finite(const Matrix& m, const char* what) {
    for (double v : m.values()) {
        if (!std::isfinite(v)) {
            throw NumericError(std::string(what) + ": non-finite entry");
        }
    }
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw DimensionError("matmul: inner dimensions differ, " + a.shape_str() + " x " + b.shape_str());
    }
    Matrix c(a.rows(), b.cols());
    const int n = a.rows(), k = a.cols(), m = b.cols();
    for (int i = 0; i < n; ++i) {
        const double* arow = a.row(i);
        double* crow = c.row(i);
        for (int p = 0; p < k; ++p) {
            const double av = arow[p];
            const double* brow = b.row(p);
            for (int j = 0; j < m; ++j) {
                crow[j] += av * brow[j];
            }
        }
    }
    check_finite(c, "matmul");
    return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) {
        throw DimensionError("matmul_nt: inner dimensions differ, " + a.shape_str() + " x " + b.shape_str() +
                             "^T");
    }
    Matrix c(a.rows(), b.rows());
    for (int i = 0; i < a.rows(); ++i) {
        const double* arow = a.row(i);
        double* crow = c.row(i);
        for (int j = 0; j < b.rows(); ++j) {
            const double* brow = b.row(j);
            double s = 0.0;
            for (int p = 0; p < a.cols(); ++p) {
                s += arow[p] * brow[p];
            }
            crow[j] = s;
        }
    }
    check_finite(c, "matmul_nt");
    return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) {
        throw DimensionError("matmul_tn: inner dimensions differ, " + a.shape_str() + "^T x " +
                             b.shape_str());
    }
    Matrix c(a.cols(), b.cols());
    for (int p = 0; p < a.rows(); ++p) {
        const double* arow = a.row(p);
        const double* brow = b.row(p);
        for (int i = 0; i < a.cols(); ++i) {
            const double av = arow[i];
            double* crow = c.row(i);
            for (int j = 0; j < b.cols(); ++j) {
                crow[j] += av * brow[j];
            }
        }
    }
    check_finite(c, "matmul_tn");
    return c;
}

Matrix transpose(const Matrix& m) {
    Matrix t(m.cols(), m.rows());
    for (int i = 0; i < m.rows(); ++i) {
        for (int j = 0; j < m.cols(); ++j) {
            t(j, i) = m(i, j);
        }
    }
    return t;
}

Matrix softmax_rows(const Matrix& m) {
    Matrix out(m.rows(), m.cols());
    for (int i = 0; i < m.rows(); ++i) {
        const double* x = m.row(i);
        double* y = out.row(i);
        double mx = x[0];
        for (int j = 1; j < m.cols(); ++j) {
            mx = std::max(mx, x[j]);
        }
        double sum = 0.0;
        for (int j = 0; j < m.cols(); ++j) {
            y[j] = std::exp(x[j] - mx);
            sum += y[j];
        }
        for (int j = 0; j < m.cols(); ++j) {
            y[j] /= sum;
        }
    }
    check_finite(out, "softmax_rows");
    return out;
}

Matrix layer_norm_rows(const Matrix& m, std::span<const double> gain, std::span<const double> bias,
                       double eps) {
    if (static_cast<int>(gain.size()) != m.cols() || static_cast<int>(bias.size()) != m.cols()) {
        throw DimensionError("layer_norm_rows: gain/bias length " + std::to_string(gain.size()) + "/" +
                             std::to_string(bias.size()) + " vs " + std::to_string(m.cols()) + " columns");
    }
    if (eps < 0.0) {
        throw ConfigError("layer_norm_rows: eps must be >= 0");
    }
    Matrix out(m.rows(), m.cols());
    const int c = m.cols();
    for (int i = 0; i < m.rows(); ++i) {
        const double* x = m.row(i);
        double* y = out.row(i);
        double mean = 0.0;
        for (int j = 0; j < c; ++j) {
            mean += x[j];
        }
        mean /= c;
        double var = 0.0;
        for (int j = 0; j < c; ++j) {
            const double d = x[j] - mean;
            var += d * d;
        }
        var /= c;
        const double inv = 1.0 / std::sqrt(var + eps);
        for (int j = 0; j < c; ++j) {
            y[j] = gain[j] * ((x[j] - mean) * inv) + bias[j];
        }
    }
    check_finite(out, "layer_norm_rows");
    return out;
}

namespace {
constexpr double kGeluC = 0.7978845608028653558798921198687;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
}  // namespace

double gelu_scalar(double x) {
    const double u = kGeluC * (x + kGeluA * x * x * x);
    return 0.5 * x * (1.0 + std::tanh(u));
}

double gelu_derivative(double x) {
    const double u = kGeluC * (x + kGeluA * x * x * x);
    const double t = std::tanh(u);
    const double sech2 = 1.0 - t * t;
    return 0.5 * (1.0 + t) + 0.5 * x * sech2 * kGeluC * (1.0 + 3.0 * kGeluA * x * x);
}

Matrix gelu(const Matrix& m) {
    Matrix out(m.rows(), m.cols());
    for (size_t i = 0; i < m.size(); ++i) {
        out.values()[i] = gelu_scalar(m.values()[i]);
    }
    check_finite(out, "gelu");
    return out;
}

Matrix add(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) {
        throw DimensionError("add: shapes differ, " + a.shape_str() + " vs " + b.shape_str());
    }
    Matrix c(a.rows(), a.cols());
    for (size_t i = 0; i < a.size(); ++i) {
        c.values()[i] = a.values()[i] + b.values()[i];
    }
    return c;
}

Matrix sub(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) {
        throw DimensionError("sub: shapes differ, " + a.shape_str() + " vs " + b.shape_str());
    }
    Matrix c(a.rows(), a.cols());
    for (size_t i = 0; i < a.size(); ++i) {
        c.values()[i] = a.values()[i] - b.values()[i];
    }
    return c;
}

Matrix mul_elem(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) {
        throw DimensionError("mul_elem: shapes differ, " + a.shape_str() + " vs " + b.shape_str());
    }
    Matrix c(a.rows(), a.cols());
    for (size_t i = 0; i < a.size(); ++i) {
        c.values()[i] = a.values()[i] * b.values()[i];
    }
    return c;
}

Matrix scale(const Matrix& a, double s) {
    Matrix c(a.rows(), a.cols());
    for (size_t i = 0; i < a.size(); ++i) {
        c.values()[i] = a.values()[i] * s;
    }
    return c;
}

Matrix add_row_broadcast(const Matrix& a, const Matrix& row) {
    if (row.rows() != 1 || row.cols() != a.cols()) {
        throw DimensionError("add_row_broadcast: row shape " + row.shape_str() + " vs matrix " +
                             a.shape_str());
    }
    Matrix c(a.rows(), a.cols());
    for (int i = 0; i < a.rows(); ++i) {
        const double* ar = a.row(i);
        double* cr = c.row(i);
        for (int j = 0; j < a.cols(); ++j) {
            cr[j] = ar[j] + row(0, j);
        }
    }
    return c;
}

double frobenius_norm_sq(const Matrix& m) {
    double s = 0.0;
    for (double v : m.values()) {
        s += v * v;
    }
    return s;
}

}  // namespace redprobe
