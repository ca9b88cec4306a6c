#include "redprobe/autograd.hpp"

#include <cmath>

#include "redprobe/errors.hpp"

namespace redprobe {

Var Tape::push(Matrix value, std::function<void(Tape&)> back) {
    nodes_.push_back(Node{std::move(value), Matrix(), std::move(back)});
    return static_cast<Var>(nodes_.size() - 1);
}

void Tape::accumulate(Var v, const Matrix& delta) {
    Matrix& g = nodes_[v].grad;
    if (g.empty()) {
        g = delta;
        return;
    }
    for (size_t i = 0; i < g.size(); ++i) {
        g.values()[i] += delta.values()[i];
    }
}

Matrix& Tape::grad_buffer(Var v) {
    Matrix& g = nodes_[v].grad;
    if (g.empty()) {
        g = Matrix(nodes_[v].value.rows(), nodes_[v].value.cols());
    }
    return g;
}

const Matrix& Tape::grad(Var v) const {
    const Matrix& g = nodes_[v].grad;
    if (g.empty()) {
        static const Matrix kEmpty;
        return kEmpty;
    }
    return g;
}

void Tape::reset() {
    nodes_.clear();
    params_.clear();
    consumed_ = false;
}

Var Tape::leaf(Matrix value) {
    return push(std::move(value), nullptr);
}

Var Tape::param(Parameter& p) {
    const Var v = push(p.value, nullptr);
    params_.emplace_back(v, &p);
    return v;
}

void Tape::backward(Var loss) {
    if (consumed_) {
        throw StaleTapeError("backward: tape already consumed; re-record the forward pass first");
    }
    const Matrix& lv = nodes_[loss].value;
    if (lv.rows() != 1 || lv.cols() != 1) {
        throw DimensionError("backward: loss must be 1x1, got " + lv.shape_str());
    }
    if (!std::isfinite(lv(0, 0))) {
        throw NumericError("backward: loss is not finite");
    }
    grad_buffer(loss)(0, 0) = 1.0;
    for (Var v = static_cast<Var>(nodes_.size()) - 1; v >= 0; --v) {
        Node& n = nodes_[v];
        if (n.back && !n.grad.empty()) {
            n.back(*this);
        }
    }
    for (auto& [v, p] : params_) {
        const Matrix& g = nodes_[v].grad;
        if (g.empty()) {
            continue;
        }
        for (size_t i = 0; i < g.size(); ++i) {
            p->grad.values()[i] += g.values()[i];
        }
    }
    consumed_ = true;
}

Var Tape::add(Var a, Var b) {
    Matrix v = redprobe::add(nodes_[a].value, nodes_[b].value);
    return push(std::move(v), [a, b, out = static_cast<Var>(nodes_.size())](Tape& t) {
        const Matrix& g = t.nodes_[out].grad;
        t.accumulate(a, g);
        t.accumulate(b, g);
    });
}

Var Tape::add_row(Var m, Var row) {
    Matrix v = add_row_broadcast(nodes_[m].value, nodes_[row].value);
    return push(std::move(v), [m, row, out = static_cast<Var>(nodes_.size())](Tape& t) {
        const Matrix& g = t.nodes_[out].grad;
        t.accumulate(m, g);
        Matrix& gr = t.grad_buffer(row);
        for (int i = 0; i < g.rows(); ++i) {
            for (int j = 0; j < g.cols(); ++j) {
                gr(0, j) += g(i, j);
            }
        }
    });
}

Var Tape::mul(Var a, Var b) {
    Matrix v = mul_elem(nodes_[a].value, nodes_[b].value);
    return push(std::move(v), [a, b, out = static_cast<Var>(nodes_.size())](Tape& t) {
        const Matrix& g = t.nodes_[out].grad;
        t.accumulate(a, mul_elem(g, t.nodes_[b].value));
        t.accumulate(b, mul_elem(g, t.nodes_[a].value));
    });
}

Var Tape::scale(Var a, double s) {
    Matrix v = redprobe::scale(nodes_[a].value, s);
    return push(std::move(v), [a, s, out = static_cast<Var>(nodes_.size())](Tape& t) {
        t.accumulate(a, redprobe::scale(t.nodes_[out].grad, s));
    });
}

Var Tape::matmul(Var a, Var b) {
    Matrix v = redprobe::matmul(nodes_[a].value, nodes_[b].value);
    return push(std::move(v), [a, b, out = static_cast<Var>(nodes_.size())](Tape& t) {
        const Matrix& g = t.nodes_[out].grad;
        t.accumulate(a, redprobe::matmul_nt(g, t.nodes_[b].value));
        t.accumulate(b, redprobe::matmul_tn(t.nodes_[a].value, g));
    });
}

Var Tape::matmul_nt(Var a, Var b) {
    Matrix v = redprobe::matmul_nt(nodes_[a].value, nodes_[b].value);
    return push(std::move(v), [a, b, out = static_cast<Var>(nodes_.size())](Tape& t) {
        const Matrix& g = t.nodes_[out].grad;
        t.accumulate(a, redprobe::matmul(g, t.nodes_[b].value));
        t.accumulate(b, redprobe::matmul_tn(g, t.nodes_[a].value));
    });
}

Var Tape::add_const(Var a, Matrix c) {
    Matrix v = redprobe::add(nodes_[a].value, c);
    return push(std::move(v), [a, out = static_cast<Var>(nodes_.size())](Tape& t) {
        t.accumulate(a, t.nodes_[out].grad);
    });
}

Var Tape::softmax_rows(Var a) {
    Matrix v = redprobe::softmax_rows(nodes_[a].value);
    return push(std::move(v), [a, out = static_cast<Var>(nodes_.size())](Tape& t) {
        const Matrix& g = t.nodes_[out].grad;
        const Matrix& y = t.nodes_[out].value;
        Matrix dx(g.rows(), g.cols());
        for (int i = 0; i < g.rows(); ++i) {
            double dot = 0.0;
            for (int j = 0; j < g.cols(); ++j) {
                dot += g(i, j) * y(i, j);
            }
            for (int j = 0; j < g.cols(); ++j) {
                dx(i, j) = y(i, j) * (g(i, j) - dot);
            }
        }
        t.accumulate(a, dx);
    });
}

Var Tape::layer_norm_rows(Var x, Var gain, Var bias, double eps) {
    const Matrix& xv = nodes_[x].value;
    const Matrix& gv = nodes_[gain].value;
    const Matrix& bv = nodes_[bias].value;
    Matrix v = redprobe::layer_norm_rows(
        xv, std::span<const double>(gv.values()), std::span<const double>(bv.values()), eps);

    // Cache normalized rows and inverse stddevs for the backward pass.
    const int rows = xv.rows(), c = xv.cols();
    Matrix xhat(rows, c);
    std::vector<double> inv(rows);
    for (int i = 0; i < rows; ++i) {
        double mean = 0.0;
        for (int j = 0; j < c; ++j) {
            mean += xv(i, j);
        }
        mean /= c;
        double var = 0.0;
        for (int j = 0; j < c; ++j) {
            const double d = xv(i, j) - mean;
            var += d * d;
        }
        var /= c;
        inv[i] = 1.0 / std::sqrt(var + eps);
        for (int j = 0; j < c; ++j) {
            xhat(i, j) = (xv(i, j) - mean) * inv[i];
        }
    }

    return push(std::move(v), [x, gain, bias, xhat = std::move(xhat), inv = std::move(inv),
                               out = static_cast<Var>(nodes_.size())](Tape& t) {
        const Matrix& g = t.nodes_[out].grad;
        const Matrix& gv = t.nodes_[gain].value;
        const int rows = g.rows(), c = g.cols();

        Matrix dgain(1, c), dbias(1, c), dx(rows, c);
        for (int i = 0; i < rows; ++i) {
            double mean_d = 0.0, mean_dxhat = 0.0;
            for (int j = 0; j < c; ++j) {
                const double d = g(i, j) * gv(0, j);
                mean_d += d;
                mean_dxhat += d * xhat(i, j);
            }
            mean_d /= c;
            mean_dxhat /= c;
            for (int j = 0; j < c; ++j) {
                const double d = g(i, j) * gv(0, j);
                dx(i, j) = inv[i] * (d - mean_d - xhat(i, j) * mean_dxhat);
                dgain(0, j) += g(i, j) * xhat(i, j);
                dbias(0, j) += g(i, j);
            }
        }
        t.accumulate(x, dx);
        t.accumulate(gain, dgain);
        t.accumulate(bias, dbias);
    });
}

Var Tape::gelu(Var a) {
    Matrix v = redprobe::gelu(nodes_[a].value);
    return push(std::move(v), [a, out = static_cast<Var>(nodes_.size())](Tape& t) {
        const Matrix& g = t.nodes_[out].grad;
        const Matrix& x = t.nodes_[a].value;
        Matrix dx(g.rows(), g.cols());
        for (size_t i = 0; i < g.size(); ++i) {
            dx.values()[i] = g.values()[i] * gelu_derivative(x.values()[i]);
        }
        t.accumulate(a, dx);
    });
}

Var Tape::embedding_rows(Var table, std::vector<int> ids) {
    const Matrix& tab = nodes_[table].value;
    Matrix v(static_cast<int>(ids.size()), tab.cols());
    for (size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || ids[i] >= tab.rows()) {
            throw IndexError("embedding_rows: id " + std::to_string(ids[i]) + " outside table of " +
                             std::to_string(tab.rows()) + " rows");
        }
        for (int j = 0; j < tab.cols(); ++j) {
            v(static_cast<int>(i), j) = tab(ids[i], j);
        }
    }
    return push(std::move(v), [table, ids = std::move(ids), out = static_cast<Var>(nodes_.size())](Tape& t) {
        const Matrix& g = t.nodes_[out].grad;
        Matrix& gt = t.grad_buffer(table);
        for (size_t i = 0; i < ids.size(); ++i) {
            for (int j = 0; j < g.cols(); ++j) {
                gt(ids[i], j) += g(static_cast<int>(i), j);
            }
        }
    });
}

Var Tape::col_slice(Var a, int c0, int c1) {
    const Matrix& x = nodes_[a].value;
    if (c0 < 0 || c1 > x.cols() || c0 >= c1) {
        throw IndexError("col_slice: [" + std::to_string(c0) + ", " + std::to_string(c1) +
                         ") outside " + x.shape_str());
    }
    Matrix v(x.rows(), c1 - c0);
    for (int i = 0; i < x.rows(); ++i) {
        for (int j = c0; j < c1; ++j) {
            v(i, j - c0) = x(i, j);
        }
    }
    return push(std::move(v), [a, c0, out = static_cast<Var>(nodes_.size())](Tape& t) {
        const Matrix& g = t.nodes_[out].grad;
        Matrix& ga = t.grad_buffer(a);
        for (int i = 0; i < g.rows(); ++i) {
            for (int j = 0; j < g.cols(); ++j) {
                ga(i, c0 + j) += g(i, j);
            }
        }
    });
}

Var Tape::col_concat(const std::vector<Var>& parts) {
    if (parts.empty()) {
        throw DimensionError("col_concat: no parts");
    }
    const int rows = nodes_[parts[0]].value.rows();
    int cols = 0;
    for (Var p : parts) {
        if (nodes_[p].value.rows() != rows) {
            throw DimensionError("col_concat: row count mismatch");
        }
        cols += nodes_[p].value.cols();
    }
    Matrix v(rows, cols);
    int off = 0;
    for (Var p : parts) {
        const Matrix& x = nodes_[p].value;
        for (int i = 0; i < rows; ++i) {
            for (int j = 0; j < x.cols(); ++j) {
                v(i, off + j) = x(i, j);
            }
        }
        off += x.cols();
    }
    return push(std::move(v), [parts, out = static_cast<Var>(nodes_.size())](Tape& t) {
        const Matrix& g = t.nodes_[out].grad;
        int off = 0;
        for (Var p : parts) {
            const int pc = t.nodes_[p].value.cols();
            Matrix dp(g.rows(), pc);
            for (int i = 0; i < g.rows(); ++i) {
                for (int j = 0; j < pc; ++j) {
                    dp(i, j) = g(i, off + j);
                }
            }
            t.accumulate(p, dp);
            off += pc;
        }
    });
}

Var Tape::row_select(Var a, int r) {
    const Matrix& x = nodes_[a].value;
    if (r < 0 || r >= x.rows()) {
        throw IndexError("row_select: row " + std::to_string(r) + " outside " + x.shape_str());
    }
    Matrix v(1, x.cols());
    for (int j = 0; j < x.cols(); ++j) {
        v(0, j) = x(r, j);
    }
    return push(std::move(v), [a, r, out = static_cast<Var>(nodes_.size())](Tape& t) {
        const Matrix& g = t.nodes_[out].grad;
        Matrix& ga = t.grad_buffer(a);
        for (int j = 0; j < g.cols(); ++j) {
            ga(r, j) += g(0, j);
        }
    });
}

Var Tape::dropout(Var a, double rate, Rng& rng) {
    if (rate < 0.0 || rate >= 1.0) {
        throw ConfigError("dropout: rate must be in [0, 1)");
    }
    if (rate == 0.0) {
        return a;
    }
    const Matrix& x = nodes_[a].value;
    Matrix mask(x.rows(), x.cols());
    const double keep_scale = 1.0 / (1.0 - rate);
    for (size_t i = 0; i < mask.size(); ++i) {
        mask.values()[i] = rng.bernoulli(rate) ? 0.0 : keep_scale;
    }
    Matrix v = mul_elem(x, mask);
    return push(std::move(v), [a, mask = std::move(mask), out = static_cast<Var>(nodes_.size())](Tape& t) {
        t.accumulate(a, mul_elem(t.nodes_[out].grad, mask));
    });
}

Var Tape::sum(Var a) {
    const Matrix& x = nodes_[a].value;
    double s = 0.0;
    for (double v : x.values()) {
        s += v;
    }
    return push(Matrix::scalar(s), [a, out = static_cast<Var>(nodes_.size())](Tape& t) {
        const double g = t.nodes_[out].grad(0, 0);
        const Matrix& x = t.nodes_[a].value;
        t.accumulate(a, Matrix::filled(x.rows(), x.cols(), g));
    });
}

Var Tape::mean_scalars(const std::vector<Var>& xs) {
    if (xs.empty()) {
        throw DimensionError("mean_scalars: empty input");
    }
    double s = 0.0;
    for (Var v : xs) {
        s += nodes_[v].value(0, 0);
    }
    s /= static_cast<double>(xs.size());
    return push(Matrix::scalar(s), [xs, out = static_cast<Var>(nodes_.size())](Tape& t) {
        const double g = t.nodes_[out].grad(0, 0) / static_cast<double>(xs.size());
        for (Var v : xs) {
            t.grad_buffer(v)(0, 0) += g;
        }
    });
}

Var Tape::softmax_cross_entropy(Var logits_row, int gold) {
    const Matrix& z = nodes_[logits_row].value;
    if (z.rows() != 1) {
        throw DimensionError("softmax_cross_entropy: logits must be a row vector, got " + z.shape_str());
    }
    if (gold < 0 || gold >= z.cols()) {
        throw IndexError("softmax_cross_entropy: gold class " + std::to_string(gold) + " outside " +
                         std::to_string(z.cols()) + " logits");
    }
    double mx = z(0, 0);
    for (int j = 1; j < z.cols(); ++j) {
        mx = std::max(mx, z(0, j));
    }
    double sum = 0.0;
    for (int j = 0; j < z.cols(); ++j) {
        sum += std::exp(z(0, j) - mx);
    }
    const double lse = mx + std::log(sum);
    const double loss = lse - z(0, gold);
    return push(Matrix::scalar(loss), [logits_row, gold, out = static_cast<Var>(nodes_.size())](Tape& t) {
        const double g = t.nodes_[out].grad(0, 0);
        const Matrix& z = t.nodes_[logits_row].value;
        Matrix p = redprobe::softmax_rows(z);
        p(0, gold) -= 1.0;
        t.accumulate(logits_row, redprobe::scale(p, g));
    });
}

Var Tape::squared_error(Var pred, double target) {
    const Matrix& p = nodes_[pred].value;
    if (p.rows() != 1 || p.cols() != 1) {
        throw DimensionError("squared_error: prediction must be 1x1, got " + p.shape_str());
    }
    const double d = p(0, 0) - target;
    return push(Matrix::scalar(d * d), [pred, target, out = static_cast<Var>(nodes_.size())](Tape& t) {
        const double g = t.nodes_[out].grad(0, 0);
        const double d = t.nodes_[pred].value(0, 0) - target;
        t.grad_buffer(pred)(0, 0) += g * 2.0 * d;
    });
}

void zero_grads(const std::vector<Parameter*>& params) {
    for (Parameter* p : params) {
        p->zero_grad();
    }
}

double global_grad_norm(const std::vector<Parameter*>& params) {
    double s = 0.0;
    for (const Parameter* p : params) {
        s += frobenius_norm_sq(p->grad);
    }
    return std::sqrt(s);
}

void clip_global_norm(const std::vector<Parameter*>& params, double max_norm) {
    const double norm = global_grad_norm(params);
    if (norm <= max_norm || norm == 0.0) {
        return;
    }
    const double f = max_norm / norm;
    for (Parameter* p : params) {
        for (auto& g : p->grad.values()) {
            g *= f;
        }
    }
}

void sgd_step(const std::vector<Parameter*>& params, double lr) {
    for (Parameter* p : params) {
        for (size_t i = 0; i < p->value.size(); ++i) {
            p->value.values()[i] -= lr * p->grad.values()[i];
        }
    }
}

size_t total_scalars(const std::vector<Parameter*>& params) {
    size_t n = 0;
    for (const Parameter* p : params) {
        n += p->value.size();
    }
    return n;
}

FiniteDiffReport finite_diff_check(const std::vector<Parameter*>& params,
                                   const std::function<double(bool)>& loss_fn, double tolerance,
                                   double step, double denom_floor) {
    constexpr size_t kMaxScalars = 5000;
    const size_t n_scalars = total_scalars(params);
    if (n_scalars > kMaxScalars) {
        throw ConfigError("finite_diff_check: " + std::to_string(n_scalars) +
                          " scalars exceed the " + std::to_string(kMaxScalars) + " perturbation limit");
    }

    zero_grads(params);
    const double base = loss_fn(true);
    if (!std::isfinite(base)) {
        throw NumericError("finite_diff_check: non-finite loss");
    }
    std::vector<Matrix> analytic;
    analytic.reserve(params.size());
    for (Parameter* p : params) {
        analytic.push_back(p->grad);
    }

    FiniteDiffReport report;
    report.tolerance = tolerance;
    report.checked_scalars = n_scalars;
    for (size_t pi = 0; pi < params.size(); ++pi) {
        Parameter* p = params[pi];
        for (size_t i = 0; i < p->value.size(); ++i) {
            const double save = p->value.values()[i];
            p->value.values()[i] = save + step;
            const double lp = loss_fn(false);
            p->value.values()[i] = save - step;
            const double lm = loss_fn(false);
            p->value.values()[i] = save;
            if (!std::isfinite(lp) || !std::isfinite(lm)) {
                throw NumericError("finite_diff_check: non-finite loss at " + p->name);
            }
            const double fd = (lp - lm) / (2.0 * step);
            const double g = analytic[pi].values()[i];
            const double err = std::fabs(fd - g) / std::max({denom_floor, std::fabs(fd), std::fabs(g)});
            if (err > report.max_rel_error) {
                report.max_rel_error = err;
                report.worst_param = p->name;
                report.worst_index = static_cast<int>(i);
            }
        }
    }
    report.pass = report.max_rel_error <= tolerance;
    return report;
}

}  // namespace redprobe
