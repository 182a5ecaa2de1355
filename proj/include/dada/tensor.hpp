#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "dada/error.hpp"

namespace dada {

// When enabled, every op validates that its output is free of NaN/Inf.
// Defaults to on in debug builds, off in release; tests toggle it explicitly.
bool finite_checks_enabled();
void set_finite_checks(bool enabled);

struct TensorNode {
    std::vector<std::int64_t> shape;
    std::vector<double> values;   // row-major flat storage
    std::vector<double> grad;     // persistent accumulator, empty until first backward
    std::vector<double> pass;     // per-backward scratch, cleared after each traversal
    bool requires_grad = false;
    std::string name;
    std::vector<std::shared_ptr<TensorNode>> parents;
    // Receives this node's gradient for the current pass and adds the
    // chain-rule contributions into each parent's `pass` buffer.
    std::function<void(const std::vector<double>&)> backprop;
};

// Value-semantic handle to a node of the (implicit) computation graph.
// Copies share the underlying storage; ops build fresh nodes, so the graph
// is rebuilt on every forward pass while leaf parameters persist.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(std::vector<std::int64_t> shape, bool requires_grad = false);
    static Tensor from(std::vector<std::int64_t> shape, std::vector<double> values,
                       bool requires_grad = false);
    static Tensor scalar(double v);

    bool defined() const { return static_cast<bool>(node_); }

    const std::vector<std::int64_t>& shape() const { return node_->shape; }
    std::size_t size() const { return node_->values.size(); }
    std::int64_t rank() const { return static_cast<std::int64_t>(node_->shape.size()); }
    std::int64_t rows() const;
    std::int64_t cols() const;

    std::vector<double>& values() { return node_->values; }
    const std::vector<double>& values() const { return node_->values; }
    double item() const;
    double at(std::int64_t i) const;
    double at(std::int64_t i, std::int64_t j) const;
    double& mut(std::int64_t i, std::int64_t j);

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool rg) { node_->requires_grad = rg; }
    const std::vector<double>& grad() const;
    bool has_grad() const { return !node_->grad.empty(); }
    void zero_grad();

    const std::string& name() const { return node_->name; }
    void set_name(std::string name) { node_->name = std::move(name); }

    // Copy of the values with no graph linkage; gradients never flow through.
    Tensor detach() const;

    std::shared_ptr<TensorNode> node() const { return node_; }
    static Tensor wrap(std::shared_ptr<TensorNode> node);

private:
    std::shared_ptr<TensorNode> node_;
};

// One reverse traversal order over the ops that produced `loss`.
// Running it accumulates gradients additively into every requires_grad
// tensor reachable from the loss; values are never touched.
class Graph {
public:
    explicit Graph(const Tensor& loss);
    void run_backward();

private:
    std::shared_ptr<TensorNode> root_;
    std::vector<TensorNode*> order_;  // consumers before producers
};

void backward(const Tensor& loss);

// ---- ops ----------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);

// Elementwise; same shape, or one side a 1-element scalar tensor.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& a, double c);
Tensor add_const(const Tensor& a, double c);
Tensor relu(const Tensor& a);
Tensor leaky_relu(const Tensor& a, double alpha = 0.2);
Tensor tanh_op(const Tensor& a);
Tensor exp_op(const Tensor& a);
Tensor log_op(const Tensor& a);
Tensor sqrt_op(const Tensor& a);

Tensor concat(const Tensor& a, const Tensor& b, int axis);
Tensor softmax(const Tensor& logits);

// Broadcasts a length-c vector over the rows of an r x c matrix.
Tensor add_rowvec(const Tensor& m, const Tensor& v);
// out[i] = m[i, cols[i]]; 0-based column indices.
Tensor gather_cols(const Tensor& m, const std::vector<std::int64_t>& cols);
// Row subset (indices may repeat); backward scatter-adds.
Tensor select_rows(const Tensor& m, const std::vector<std::int64_t>& rows);
// Stable log(sum(exp(row))) per row of a rank-2 tensor.
Tensor logsumexp_rows(const Tensor& m);
// Stable log(exp(a_i) + exp(b_i)) for two rank-1 tensors.
Tensor logaddexp(const Tensor& a, const Tensor& b);
Tensor mean_axis0(const Tensor& m);
Tensor sum_all(const Tensor& a);
Tensor mean_all(const Tensor& a);

// ---- gradient oracle -----------------------------------------------------

struct GradCheckReport {
    std::vector<double> analytic;
    std::vector<double> numeric;
    std::vector<double> rel_err;
    double max_rel_err = 0.0;
    std::size_t worst_index = 0;
    bool passed = false;
};

// Central-difference check of d f / d param. `f` must rebuild its graph on
// every call and close over `param`; non-deterministic f is rejected.
GradCheckReport grad_check(const std::function<Tensor()>& f, Tensor param, double h,
                           double tol);

}  // namespace dada
