#pragma once

#include <functional>
#include <string>
#include <vector>

#include "redprobe/matrix.hpp"
#include "redprobe/rng.hpp"

namespace redprobe {

// A named trainable tensor. grad always has the shape of value and is all
// zero right after zero_grad().
struct Parameter {
    std::string name;
    Matrix value;
    Matrix grad;

    Parameter() = default;
    Parameter(std::string n, Matrix v)
        : name(std::move(n)), value(std::move(v)), grad(value.rows(), value.cols()) {}

    void zero_grad() { grad.fill(0.0); }
};

using Var = int;

// Reverse-mode tape. Every op records its value and a closure that scatters
// the output gradient back to its inputs. Nodes only reference earlier nodes,
// so reverse creation order is a valid topological order.
//
// One forward recording supports exactly one backward() call; a second call
// without re-recording throws StaleTapeError.
class Tape {
public:
    Var leaf(Matrix value);

    // Trainable leaf. backward() adds the node gradient into p.grad.
    Var param(Parameter& p);

    const Matrix& value(Var v) const { return nodes_[v].value; }
    double scalar(Var v) const { return nodes_[v].value(0, 0); }
    const Matrix& grad(Var v) const;
    size_t node_count() const { return nodes_.size(); }
    bool consumed() const { return consumed_; }

    void reset();

    // Seeds d(loss)/d(loss) = 1 and propagates. loss must be 1x1 and finite.
    void backward(Var loss);

    Var add(Var a, Var b);
    Var add_row(Var m, Var row);  // broadcast 1xC over rows
    Var mul(Var a, Var b);
    Var scale(Var a, double s);
    Var matmul(Var a, Var b);
    Var matmul_nt(Var a, Var b);  // a * b^T
    Var add_const(Var a, Matrix c);
    Var softmax_rows(Var a);
    Var layer_norm_rows(Var x, Var gain, Var bias, double eps);
    Var gelu(Var a);
    Var embedding_rows(Var table, std::vector<int> ids);
    Var col_slice(Var a, int c0, int c1);
    Var col_concat(const std::vector<Var>& parts);
    Var row_select(Var a, int r);
    Var dropout(Var a, double rate, Rng& rng);  // inverted dropout; rate 0 is identity
    Var sum(Var a);                             // 1x1
    Var mean_scalars(const std::vector<Var>& xs);
    Var softmax_cross_entropy(Var logits_row, int gold);
    Var squared_error(Var pred, double target);

private:
    struct Node {
        Matrix value;
        Matrix grad;  // allocated on first accumulation; empty means zero
        std::function<void(Tape&)> back;
    };

    Var push(Matrix value, std::function<void(Tape&)> back);
    void accumulate(Var v, const Matrix& delta);
    Matrix& grad_buffer(Var v);

    std::vector<Node> nodes_;
    std::vector<std::pair<Var, Parameter*>> params_;
    bool consumed_ = false;
};

void zero_grads(const std::vector<Parameter*>& params);
double global_grad_norm(const std::vector<Parameter*>& params);

// Scales all gradients so their global norm is at most max_norm.
void clip_global_norm(const std::vector<Parameter*>& params, double max_norm);

void sgd_step(const std::vector<Parameter*>& params, double lr);

size_t total_scalars(const std::vector<Parameter*>& params);

struct FiniteDiffReport {
    double max_rel_error = 0.0;
    std::string worst_param;
    int worst_index = -1;
    double tolerance = 0.0;
    bool pass = false;
    size_t checked_scalars = 0;
};

// Central-difference gradient check over every scalar of every parameter.
//
// loss_fn(true) must run forward + backward, leaving gradients in the
// parameters; loss_fn(false) must run forward only. Both must be
// deterministic pure functions of the current parameter values.
// The per-scalar error is |fd - grad| / max(denom_floor, |fd|, |grad|).
FiniteDiffReport finite_diff_check(const std::vector<Parameter*>& params,
                                   const std::function<double(bool want_grad)>& loss_fn,
                                   double tolerance, double step = 1e-3, double denom_floor = 1e-2);

}  // namespace redprobe
