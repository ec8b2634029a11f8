#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace e2p {

// Reverse-mode autodiff over dense row-major double tensors, define-by-run.
// Each op appends a node whose creation id gives the forward execution
// order; backward() walks the reachable subgraph in exact reverse order.
//
// Gradient accumulators are additive: backward() computes this pass's
// gradient in scratch space and then adds it into the persistent .grad of
// every requires_grad tensor it reached, so two passes without a reset
// yield exactly twice the gradient.

struct Node {
    std::vector<std::size_t> shape;
    std::vector<double> values;
    std::vector<double> grad;     // persistent accumulator, lazily sized
    std::vector<double> tmp_grad; // per-pass scratch, managed by backward()
    bool requires_grad = false;
    bool needs_grad = false; // requires_grad or depends on something that does
    std::uint64_t id = 0;    // strictly increasing creation order
    const char* op = "leaf";
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn; // reads tmp_grad, adds into parents'
};

class Tensor {
  public:
    Tensor() = default;

    static Tensor zeros(std::vector<std::size_t> shape, bool requires_grad = false);
    static Tensor full(std::vector<std::size_t> shape, double value, bool requires_grad = false);
    static Tensor from(std::vector<std::size_t> shape, std::vector<double> values,
                       bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const std::vector<std::size_t>& shape() const { return node_->shape; }
    std::size_t numel() const { return node_->values.size(); }
    std::size_t rows() const;
    std::size_t cols() const;

    const std::vector<double>& values() const { return node_->values; }
    std::vector<double>& data() { return node_->values; } // leaves only; mutating
                                                          // a recorded interior
                                                          // node invalidates its
                                                          // graph
    double item() const;
    double at(std::size_t i) const { return node_->values[i]; }
    double at(std::size_t r, std::size_t c) const;

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool v);
    const std::vector<double>& grad() const;
    bool has_grad() const { return node_ && !node_->grad.empty(); }
    void zero_grad();

    std::shared_ptr<Node> node() const { return node_; }

  private:
    explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}
    std::shared_ptr<Node> node_;

    friend Tensor wrap_node(std::shared_ptr<Node> n);
};

Tensor wrap_node(std::shared_ptr<Node> n);

// Ordered record of the executed ops reachable from a root, in forward
// execution order (parents always precede their consumers).
struct Graph {
    std::vector<std::shared_ptr<Node>> nodes;
};

Graph trace(const Tensor& root);

// Accumulates d(loss)/d(t) into every requires_grad tensor reachable from
// loss. loss must be scalar.
void backward(const Tensor& loss);

// While alive, ops do not record graph structure (forward only).
class NoGradGuard {
  public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

  private:
    bool prev_;
};

bool grad_enabled();

// ---- ops ----
// Shapes are explicit; the only broadcast is add_bias over the leading dim.

Tensor matmul(const Tensor& a, const Tensor& b);      // [m×k]·[k×n] -> [m×n]
Tensor transpose(const Tensor& x);                    // [m×n] -> [n×m]
Tensor add(const Tensor& a, const Tensor& b);         // same shape
Tensor add_bias(const Tensor& x, const Tensor& b);    // [m×n] + [n]
Tensor affine(const Tensor& x, double s, double t);   // s*x + t, elementwise
Tensor scale(const Tensor& x, double s);
Tensor relu(const Tensor& x);
Tensor exp_op(const Tensor& x);
Tensor log_op(const Tensor& x);
Tensor clamp(const Tensor& x, double lo, double hi); // gradient zero where clamped
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps);
Tensor softmax_cross_entropy(const Tensor& logits, std::size_t target); // logits 1-D
Tensor causal_softmax(const Tensor& scores);  // [L×L], row i over columns j<=i
Tensor softmax_rows(const Tensor& scores);    // full row-wise softmax
Tensor gather_rows(const Tensor& table, const std::vector<int>& ids);
Tensor row(const Tensor& x, std::size_t i); // [m×n] -> [n]
Tensor as_row(const Tensor& x);             // [n] -> [1×n]
Tensor slice_rows(const Tensor& x, std::size_t r0, std::size_t nrows);
Tensor slice_cols(const Tensor& x, std::size_t c0, std::size_t ncols);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor sum(const Tensor& x);                        // -> scalar
Tensor add_scalars(const std::vector<Tensor>& xs);  // sum of scalars -> scalar
Tensor mean_scalars(const std::vector<Tensor>& xs);

std::string shape_str(const std::vector<std::size_t>& shape);

} // namespace e2p
