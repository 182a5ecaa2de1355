#include "dada/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>
#include <unordered_set>

namespace dada {

namespace {

#ifdef NDEBUG
bool g_finite_checks = false;
#else
bool g_finite_checks = true;
#endif

std::size_t shape_numel(const std::vector<std::int64_t>& shape) {
    std::size_t n = 1;
    for (std::int64_t e : shape) {
        if (e < 0) throw DimensionError("negative extent in tensor shape");
        n *= static_cast<std::size_t>(e);
    }
    return shape.empty() ? 0 : n;
}

std::string shape_str(const std::vector<std::int64_t>& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

void check_finite(const TensorNode& node, const char* op) {
    if (!g_finite_checks) return;
    for (double v : node.values) {
        if (!std::isfinite(v)) {
            throw DomainError(std::string("non-finite value produced by op '") + op + "'");
        }
    }
}

using NodePtr = std::shared_ptr<TensorNode>;

Tensor make_op(const char* op, std::vector<std::int64_t> shape, std::vector<double> values,
               std::vector<NodePtr> parents,
               std::function<void(const std::vector<double>&)> backprop) {
    auto node = std::make_shared<TensorNode>();
    node->shape = std::move(shape);
    node->values = std::move(values);
    bool needs_grad = false;
    for (const auto& p : parents) {
        if (p->requires_grad) needs_grad = true;
    }
    if (needs_grad) {
        node->requires_grad = true;
        node->parents = std::move(parents);
        node->backprop = std::move(backprop);
    }
    check_finite(*node, op);
    return Tensor::wrap(std::move(node));
}

void accumulate(TensorNode& parent, std::size_t index, double amount) {
    if (parent.pass.empty()) parent.pass.assign(parent.values.size(), 0.0);
    parent.pass[index] += amount;
}

std::vector<double>& pass_buf(TensorNode& parent) {
    if (parent.pass.empty()) parent.pass.assign(parent.values.size(), 0.0);
    return parent.pass;
}

}  // namespace

bool finite_checks_enabled() { return g_finite_checks; }
void set_finite_checks(bool enabled) { g_finite_checks = enabled; }

// ---- Tensor ---------------------------------------------------------------

Tensor Tensor::wrap(std::shared_ptr<TensorNode> node) {
    Tensor t;
    t.node_ = std::move(node);
    return t;
}

Tensor Tensor::zeros(std::vector<std::int64_t> shape, bool requires_grad) {
    std::size_t n = shape_numel(shape);
    return from(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::from(std::vector<std::int64_t> shape, std::vector<double> values,
                    bool requires_grad) {
    if (shape_numel(shape) != values.size()) {
        throw DimensionError("shape " + shape_str(shape) + " does not match value count " +
                             std::to_string(values.size()));
    }
    auto node = std::make_shared<TensorNode>();
    node->shape = std::move(shape);
    node->values = std::move(values);
    node->requires_grad = requires_grad;
    return wrap(std::move(node));
}

Tensor Tensor::scalar(double v) { return from({1}, {v}); }

std::int64_t Tensor::rows() const {
    if (node_->shape.size() != 2) throw DimensionError("rows() needs a rank-2 tensor");
    return node_->shape[0];
}

std::int64_t Tensor::cols() const {
    if (node_->shape.size() != 2) throw DimensionError("cols() needs a rank-2 tensor");
    return node_->shape[1];
}

double Tensor::item() const {
    if (size() != 1) throw UsageError("item() on a tensor with " + std::to_string(size()) +
                                      " elements");
    return node_->values[0];
}

double Tensor::at(std::int64_t i) const { return node_->values.at(static_cast<std::size_t>(i)); }

double Tensor::at(std::int64_t i, std::int64_t j) const {
    return node_->values.at(static_cast<std::size_t>(i * cols() + j));
}

double& Tensor::mut(std::int64_t i, std::int64_t j) {
    return node_->values.at(static_cast<std::size_t>(i * cols() + j));
}

const std::vector<double>& Tensor::grad() const {
    if (node_->grad.empty()) {
        throw UsageError("gradient of '" + node_->name + "' read before any backward pass");
    }
    return node_->grad;
}

void Tensor::zero_grad() {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::detach() const {
    auto node = std::make_shared<TensorNode>();
    node->shape = node_->shape;
    node->values = node_->values;
    return wrap(std::move(node));
}

// ---- Graph / backward ------------------------------------------------------

Graph::Graph(const Tensor& loss) : root_(loss.node()) {
    if (loss.size() != 1) {
        throw UsageError("backward requires a scalar loss, got shape with " +
                         std::to_string(loss.size()) + " elements");
    }
    // Iterative post-order DFS over parents; reversing the resulting list
    // yields an order where every node precedes all of its inputs.
    std::unordered_set<TensorNode*> visited;
    std::vector<std::pair<TensorNode*, std::size_t>> stack;
    stack.emplace_back(root_.get(), 0);
    visited.insert(root_.get());
    while (!stack.empty()) {
        auto& [node, next_parent] = stack.back();
        if (next_parent < node->parents.size()) {
            TensorNode* parent = node->parents[next_parent].get();
            ++next_parent;
            if (visited.insert(parent).second) stack.emplace_back(parent, 0);
        } else {
            order_.push_back(node);
            stack.pop_back();
        }
    }
    std::reverse(order_.begin(), order_.end());
}

void Graph::run_backward() {
    for (TensorNode* node : order_) node->pass.clear();
    root_->pass.assign(1, 1.0);
    for (TensorNode* node : order_) {
        if (node->pass.empty()) continue;  // unreachable in this pass
        if (node->backprop) node->backprop(node->pass);
    }
    for (TensorNode* node : order_) {
        if (node->requires_grad && !node->pass.empty()) {
            if (node->grad.empty()) node->grad.assign(node->values.size(), 0.0);
            for (std::size_t i = 0; i < node->pass.size(); ++i) node->grad[i] += node->pass[i];
        }
        node->pass.clear();
        node->pass.shrink_to_fit();
    }
}

void backward(const Tensor& loss) { Graph(loss).run_backward(); }

// ---- ops -------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2) throw DimensionError("matmul needs rank-2 tensors");
    const std::int64_t m = a.shape()[0], k = a.shape()[1];
    const std::int64_t k2 = b.shape()[0], n = b.shape()[1];
    if (k != k2) {
        throw DimensionError("matmul inner extents differ: " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
    }
    std::vector<double> out(static_cast<std::size_t>(m * n), 0.0);
    const auto& av = a.values();
    const auto& bv = b.values();
    for (std::int64_t i = 0; i < m; ++i) {
        for (std::int64_t p = 0; p < k; ++p) {
            const double aip = av[static_cast<std::size_t>(i * k + p)];
            if (aip == 0.0) continue;
            const double* brow = bv.data() + p * n;
            double* orow = out.data() + i * n;
            for (std::int64_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
        }
    }
    auto an = a.node(), bn = b.node();
    return make_op("matmul", {m, n}, std::move(out), {an, bn},
                   [an, bn, m, k, n](const std::vector<double>& g) {
                       if (an->requires_grad || !an->parents.empty()) {
                           auto& da = pass_buf(*an);
                           for (std::int64_t i = 0; i < m; ++i)
                               for (std::int64_t j = 0; j < n; ++j) {
                                   const double gij = g[static_cast<std::size_t>(i * n + j)];
                                   if (gij == 0.0) continue;
                                   for (std::int64_t p = 0; p < k; ++p)
                                       da[static_cast<std::size_t>(i * k + p)] +=
                                           gij * bn->values[static_cast<std::size_t>(p * n + j)];
                               }
                       }
                       if (bn->requires_grad || !bn->parents.empty()) {
                           auto& db = pass_buf(*bn);
                           for (std::int64_t i = 0; i < m; ++i)
                               for (std::int64_t p = 0; p < k; ++p) {
                                   const double aip =
                                       an->values[static_cast<std::size_t>(i * k + p)];
                                   if (aip == 0.0) continue;
                                   for (std::int64_t j = 0; j < n; ++j)
                                       db[static_cast<std::size_t>(p * n + j)] +=
                                           aip * g[static_cast<std::size_t>(i * n + j)];
                               }
                       }
                   });
}

namespace {

enum class BinKind { add, sub, mul };

Tensor binary_ew(const char* name, BinKind kind, const Tensor& a, const Tensor& b) {
    const bool a_scalar = a.size() == 1 && b.size() != 1;
    const bool b_scalar = b.size() == 1 && a.size() != 1;
    if (!a_scalar && !b_scalar && a.shape() != b.shape()) {
        throw DimensionError(std::string(name) + ": shapes differ " + shape_str(a.shape()) +
                             " vs " + shape_str(b.shape()) +
                             " (only scalar-vs-tensor broadcast is supported)");
    }
    const auto& av = a.values();
    const auto& bv = b.values();
    const std::size_t n = std::max(av.size(), bv.size());
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double x = a_scalar ? av[0] : av[i];
        const double y = b_scalar ? bv[0] : bv[i];
        switch (kind) {
            case BinKind::add: out[i] = x + y; break;
            case BinKind::sub: out[i] = x - y; break;
            case BinKind::mul: out[i] = x * y; break;
        }
    }
    auto an = a.node(), bn = b.node();
    auto shape = a_scalar ? b.shape() : a.shape();
    return make_op(name, std::move(shape), std::move(out), {an, bn},
                   [an, bn, a_scalar, b_scalar, kind, n](const std::vector<double>& g) {
                       auto& da = pass_buf(*an);
                       auto& db = pass_buf(*bn);
                       for (std::size_t i = 0; i < n; ++i) {
                           const std::size_t ia = a_scalar ? 0 : i;
                           const std::size_t ib = b_scalar ? 0 : i;
                           switch (kind) {
                               case BinKind::add:
                                   da[ia] += g[i];
                                   db[ib] += g[i];
                                   break;
                               case BinKind::sub:
                                   da[ia] += g[i];
                                   db[ib] -= g[i];
                                   break;
                               case BinKind::mul:
                                   da[ia] += g[i] * bn->values[ib];
                                   db[ib] += g[i] * an->values[ia];
                                   break;
                           }
                       }
                   });
}

Tensor unary_ew(const char* name, const Tensor& a, const std::function<double(double)>& fwd,
                const std::function<double(double, double)>& dfn) {
    const auto& av = a.values();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i]);
    auto an = a.node();
    auto outcopy = out;  // some derivatives are cheapest in terms of the output
    return make_op(name, a.shape(), std::move(out), {an},
                   [an, dfn, outcopy](const std::vector<double>& g) {
                       auto& da = pass_buf(*an);
                       for (std::size_t i = 0; i < g.size(); ++i)
                           da[i] += g[i] * dfn(an->values[i], outcopy[i]);
                   });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary_ew("add", BinKind::add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary_ew("sub", BinKind::sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary_ew("mul", BinKind::mul, a, b); }

Tensor scale(const Tensor& a, double c) {
    return unary_ew("scale", a, [c](double x) { return c * x; },
                    [c](double, double) { return c; });
}

Tensor add_const(const Tensor& a, double c) {
    return unary_ew("add_const", a, [c](double x) { return x + c; },
                    [](double, double) { return 1.0; });
}

Tensor relu(const Tensor& a) {
    return unary_ew("relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
                    [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor leaky_relu(const Tensor& a, double alpha) {
    return unary_ew("leaky_relu", a, [alpha](double x) { return x >= 0.0 ? x : alpha * x; },
                    [alpha](double x, double) { return x >= 0.0 ? 1.0 : alpha; });
}

Tensor tanh_op(const Tensor& a) {
    return unary_ew("tanh", a, [](double x) { return std::tanh(x); },
                    [](double, double y) { return 1.0 - y * y; });
}

Tensor exp_op(const Tensor& a) {
    return unary_ew("exp", a, [](double x) { return std::exp(x); },
                    [](double, double y) { return y; });
}

Tensor log_op(const Tensor& a) {
    for (double v : a.values()) {
        if (!(v > 0.0)) {
            throw DomainError("log of non-positive value " + std::to_string(v));
        }
    }
    return unary_ew("log", a, [](double x) { return std::log(x); },
                    [](double x, double) { return 1.0 / x; });
}

Tensor sqrt_op(const Tensor& a) {
    for (double v : a.values()) {
        if (v < 0.0) throw DomainError("sqrt of negative value " + std::to_string(v));
    }
    // Subgradient 0 at the origin keeps the norm of two identical feature
    // means from producing infinities.
    return unary_ew("sqrt", a, [](double x) { return std::sqrt(x); },
                    [](double x, double y) { return x > 0.0 ? 0.5 / y : 0.0; });
}

Tensor concat(const Tensor& a, const Tensor& b, int axis) {
    if (a.rank() != b.rank()) throw DimensionError("concat: rank mismatch");
    if (a.rank() < 1 || a.rank() > 2) throw DimensionError("concat supports rank-1 and rank-2");
    if (axis < 0 || axis >= a.rank()) throw DimensionError("concat: axis out of range");
    for (std::int64_t d = 0; d < a.rank(); ++d) {
        if (d != axis && a.shape()[d] != b.shape()[d]) {
            throw DimensionError("concat: non-axis extents differ: " + shape_str(a.shape()) +
                                 " vs " + shape_str(b.shape()));
        }
    }
    std::vector<std::int64_t> shape = a.shape();
    shape[axis] += b.shape()[axis];
    std::vector<double> out;
    out.reserve(a.size() + b.size());
    if (a.rank() == 1 || axis == 0) {
        out.insert(out.end(), a.values().begin(), a.values().end());
        out.insert(out.end(), b.values().begin(), b.values().end());
    } else {
        const std::int64_t r = a.shape()[0], ca = a.shape()[1], cb = b.shape()[1];
        for (std::int64_t i = 0; i < r; ++i) {
            out.insert(out.end(), a.values().begin() + i * ca, a.values().begin() + (i + 1) * ca);
            out.insert(out.end(), b.values().begin() + i * cb, b.values().begin() + (i + 1) * cb);
        }
    }
    auto an = a.node(), bn = b.node();
    const bool rowwise = (a.rank() == 2 && axis == 1);
    const std::int64_t r = rowwise ? a.shape()[0] : 0;
    const std::int64_t ca = rowwise ? a.shape()[1] : static_cast<std::int64_t>(a.size());
    const std::int64_t cb = rowwise ? b.shape()[1] : static_cast<std::int64_t>(b.size());
    return make_op("concat", std::move(shape), std::move(out), {an, bn},
                   [an, bn, rowwise, r, ca, cb](const std::vector<double>& g) {
                       auto& da = pass_buf(*an);
                       auto& db = pass_buf(*bn);
                       if (!rowwise) {
                           for (std::int64_t i = 0; i < ca; ++i) da[i] += g[i];
                           for (std::int64_t i = 0; i < cb; ++i) db[i] += g[ca + i];
                       } else {
                           for (std::int64_t i = 0; i < r; ++i) {
                               for (std::int64_t j = 0; j < ca; ++j)
                                   da[i * ca + j] += g[i * (ca + cb) + j];
                               for (std::int64_t j = 0; j < cb; ++j)
                                   db[i * cb + j] += g[i * (ca + cb) + ca + j];
                           }
                       }
                   });
}

Tensor softmax(const Tensor& logits) {
    if (logits.rank() != 1 && logits.rank() != 2) {
        throw DimensionError("softmax needs a rank-1 or rank-2 tensor");
    }
    const std::int64_t r = logits.rank() == 2 ? logits.shape()[0] : 1;
    const std::int64_t c = logits.rank() == 2 ? logits.shape()[1] : logits.shape()[0];
    if (c == 0) throw DimensionError("softmax over an empty axis");
    std::vector<double> out(logits.size());
    const auto& lv = logits.values();
    for (std::int64_t i = 0; i < r; ++i) {
        const double* row = lv.data() + i * c;
        double* orow = out.data() + i * c;
        double mx = row[0];
        for (std::int64_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        for (std::int64_t j = 0; j < c; ++j) {
            orow[j] = std::exp(row[j] - mx);
            sum += orow[j];
        }
        for (std::int64_t j = 0; j < c; ++j) orow[j] /= sum;
    }
    auto ln = logits.node();
    auto probs = out;
    return make_op("softmax", logits.shape(), std::move(out), {ln},
                   [ln, probs, r, c](const std::vector<double>& g) {
                       auto& dl = pass_buf(*ln);
                       for (std::int64_t i = 0; i < r; ++i) {
                           double dot = 0.0;
                           for (std::int64_t j = 0; j < c; ++j)
                               dot += g[i * c + j] * probs[i * c + j];
                           for (std::int64_t j = 0; j < c; ++j)
                               dl[i * c + j] += probs[i * c + j] * (g[i * c + j] - dot);
                       }
                   });
}

Tensor add_rowvec(const Tensor& m, const Tensor& v) {
    if (m.rank() != 2 || v.rank() != 1) throw DimensionError("add_rowvec needs matrix + vector");
    const std::int64_t r = m.shape()[0], c = m.shape()[1];
    if (v.shape()[0] != c) {
        throw DimensionError("add_rowvec: vector length " + std::to_string(v.shape()[0]) +
                             " vs matrix cols " + std::to_string(c));
    }
    std::vector<double> out(m.size());
    for (std::int64_t i = 0; i < r; ++i)
        for (std::int64_t j = 0; j < c; ++j)
            out[i * c + j] = m.values()[i * c + j] + v.values()[j];
    auto mn = m.node(), vn = v.node();
    return make_op("add_rowvec", m.shape(), std::move(out), {mn, vn},
                   [mn, vn, r, c](const std::vector<double>& g) {
                       auto& dm = pass_buf(*mn);
                       auto& dv = pass_buf(*vn);
                       for (std::int64_t i = 0; i < r; ++i)
                           for (std::int64_t j = 0; j < c; ++j) {
                               dm[i * c + j] += g[i * c + j];
                               dv[j] += g[i * c + j];
                           }
                   });
}

Tensor gather_cols(const Tensor& m, const std::vector<std::int64_t>& cols) {
    if (m.rank() != 2) throw DimensionError("gather_cols needs a rank-2 tensor");
    const std::int64_t r = m.shape()[0], c = m.shape()[1];
    if (static_cast<std::int64_t>(cols.size()) != r) {
        throw DimensionError("gather_cols: need one column index per row");
    }
    std::vector<double> out(static_cast<std::size_t>(r));
    for (std::int64_t i = 0; i < r; ++i) {
        if (cols[i] < 0 || cols[i] >= c) {
            throw DomainError("gather_cols: column " + std::to_string(cols[i]) +
                              " out of range [0," + std::to_string(c - 1) + "]");
        }
        out[i] = m.values()[i * c + cols[i]];
    }
    auto mn = m.node();
    return make_op("gather_cols", {r}, std::move(out), {mn},
                   [mn, cols, c](const std::vector<double>& g) {
                       auto& dm = pass_buf(*mn);
                       for (std::size_t i = 0; i < g.size(); ++i)
                           dm[static_cast<std::size_t>(i * c + cols[i])] += g[i];
                   });
}

Tensor select_rows(const Tensor& m, const std::vector<std::int64_t>& rows) {
    if (m.rank() != 2) throw DimensionError("select_rows needs a rank-2 tensor");
    const std::int64_t r = m.shape()[0], c = m.shape()[1];
    std::vector<double> out;
    out.reserve(rows.size() * static_cast<std::size_t>(c));
    for (std::int64_t row : rows) {
        if (row < 0 || row >= r) throw DomainError("select_rows: row index out of range");
        out.insert(out.end(), m.values().begin() + row * c, m.values().begin() + (row + 1) * c);
    }
    auto mn = m.node();
    return make_op("select_rows", {static_cast<std::int64_t>(rows.size()), c}, std::move(out),
                   {mn}, [mn, rows, c](const std::vector<double>& g) {
                       auto& dm = pass_buf(*mn);
                       for (std::size_t i = 0; i < rows.size(); ++i)
                           for (std::int64_t j = 0; j < c; ++j)
                               dm[static_cast<std::size_t>(rows[i] * c + j)] += g[i * c + j];
                   });
}

Tensor logsumexp_rows(const Tensor& m) {
    if (m.rank() != 2) throw DimensionError("logsumexp_rows needs a rank-2 tensor");
    const std::int64_t r = m.shape()[0], c = m.shape()[1];
    if (c == 0) throw DimensionError("logsumexp over an empty axis");
    std::vector<double> out(static_cast<std::size_t>(r));
    for (std::int64_t i = 0; i < r; ++i) {
        const double* row = m.values().data() + i * c;
        double mx = row[0];
        for (std::int64_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        for (std::int64_t j = 0; j < c; ++j) sum += std::exp(row[j] - mx);
        out[i] = mx + std::log(sum);
    }
    auto mn = m.node();
    auto lse = out;
    return make_op("logsumexp_rows", {r}, std::move(out), {mn},
                   [mn, lse, c](const std::vector<double>& g) {
                       auto& dm = pass_buf(*mn);
                       for (std::size_t i = 0; i < g.size(); ++i)
                           for (std::int64_t j = 0; j < c; ++j)
                               dm[i * c + j] += g[i] * std::exp(mn->values[i * c + j] - lse[i]);
                   });
}

Tensor logaddexp(const Tensor& a, const Tensor& b) {
    if (a.rank() != 1 || b.rank() != 1 || a.shape() != b.shape()) {
        throw DimensionError("logaddexp needs two rank-1 tensors of equal length");
    }
    const std::size_t n = a.size();
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double x = a.values()[i], y = b.values()[i];
        const double mx = std::max(x, y);
        out[i] = mx + std::log(std::exp(x - mx) + std::exp(y - mx));
    }
    auto an = a.node(), bn = b.node();
    auto lse = out;
    return make_op("logaddexp", a.shape(), std::move(out), {an, bn},
                   [an, bn, lse](const std::vector<double>& g) {
                       auto& da = pass_buf(*an);
                       auto& db = pass_buf(*bn);
                       for (std::size_t i = 0; i < g.size(); ++i) {
                           da[i] += g[i] * std::exp(an->values[i] - lse[i]);
                           db[i] += g[i] * std::exp(bn->values[i] - lse[i]);
                       }
                   });
}

Tensor mean_axis0(const Tensor& m) {
    if (m.rank() != 2) throw DimensionError("mean_axis0 needs a rank-2 tensor");
    const std::int64_t r = m.shape()[0], c = m.shape()[1];
    if (r == 0) throw UsageError("mean_axis0 over zero rows");
    std::vector<double> out(static_cast<std::size_t>(c), 0.0);
    for (std::int64_t i = 0; i < r; ++i)
        for (std::int64_t j = 0; j < c; ++j) out[j] += m.values()[i * c + j];
    for (std::int64_t j = 0; j < c; ++j) out[j] /= static_cast<double>(r);
    auto mn = m.node();
    return make_op("mean_axis0", {c}, std::move(out), {mn},
                   [mn, r, c](const std::vector<double>& g) {
                       auto& dm = pass_buf(*mn);
                       const double inv = 1.0 / static_cast<double>(r);
                       for (std::int64_t i = 0; i < r; ++i)
                           for (std::int64_t j = 0; j < c; ++j) dm[i * c + j] += g[j] * inv;
                   });
}

Tensor sum_all(const Tensor& a) {
    double s = 0.0;
    for (double v : a.values()) s += v;
    auto an = a.node();
    return make_op("sum_all", {1}, {s}, {an}, [an](const std::vector<double>& g) {
        auto& da = pass_buf(*an);
        for (double& d : da) d += g[0];
    });
}

Tensor mean_all(const Tensor& a) {
    if (a.size() == 0) throw UsageError("mean_all of an empty tensor");
    double s = 0.0;
    for (double v : a.values()) s += v;
    const double inv = 1.0 / static_cast<double>(a.size());
    auto an = a.node();
    return make_op("mean_all", {1}, {s * inv}, {an}, [an, inv](const std::vector<double>& g) {
        auto& da = pass_buf(*an);
        for (double& d : da) d += g[0] * inv;
    });
}

// ---- grad_check -------------------------------------------------------------

GradCheckReport grad_check(const std::function<Tensor()>& f, Tensor param, double h,
                           double tol) {
    if (!(h > 0.0)) throw ConfigError("grad_check: h must be positive");
    Tensor first = f();
    if (first.size() != 1) throw UsageError("grad_check: f must return a scalar");
    const double v1 = first.item();
    const double v2 = f().item();
    if (!(v1 == v2)) {
        throw UsageError("grad_check: f is not deterministic (two passes differ: " +
                         std::to_string(v1) + " vs " + std::to_string(v2) + ")");
    }

    param.zero_grad();
    backward(f());
    GradCheckReport report;
    report.analytic = param.has_grad() ? param.grad() : std::vector<double>(param.size(), 0.0);

    auto& w = param.values();
    report.numeric.resize(w.size());
    report.rel_err.resize(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) {
        const double saved = w[i];
        w[i] = saved + h;
        const double fp = f().item();
        w[i] = saved - h;
        const double fm = f().item();
        w[i] = saved;
        report.numeric[i] = (fp - fm) / (2.0 * h);
        const double a = report.analytic[i], n = report.numeric[i];
        const double denom = std::max({std::fabs(a), std::fabs(n), 1e-8});
        report.rel_err[i] = std::fabs(a - n) / denom;
        if (report.rel_err[i] > report.max_rel_err) {
            report.max_rel_err = report.rel_err[i];
            report.worst_index = i;
        }
    }
    report.passed = report.max_rel_err < tol;
    return report;
}

}  // namespace dada
