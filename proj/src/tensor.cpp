#include "e2p/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <unordered_set>

#include "e2p/errors.hpp"

namespace e2p {

namespace {

std::atomic<std::uint64_t> g_next_id{1};
thread_local bool g_grad_enabled = true;

std::size_t shape_numel(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

std::shared_ptr<Node> new_node(std::vector<std::size_t> shape) {
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->values.assign(shape_numel(n->shape), 0.0);
    n->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
    return n;
}

// Result node for an op. Parent links and the backward closure are recorded
// only when gradients can flow, so no-grad forwards stay cheap.
Tensor make_result(std::vector<std::size_t> shape, const char* op,
                   std::vector<Tensor> parents, std::function<void(Node&)> backward_fn) {
    auto n = new_node(std::move(shape));
    n->op = op;
    bool needs = false;
    if (g_grad_enabled) {
        for (const Tensor& p : parents) needs = needs || p.node()->needs_grad;
    }
    if (needs) {
        n->needs_grad = true;
        n->parents.reserve(parents.size());
        for (const Tensor& p : parents) n->parents.push_back(p.node());
        n->backward_fn = std::move(backward_fn);
    }
    return wrap_node(n);
}

void require_2d(const Tensor& x, const char* op) {
    if (x.shape().size() != 2)
        throw ShapeError(std::string(op) + ": expected 2-D tensor, got " + shape_str(x.shape()));
}

} // namespace

std::string shape_str(const std::vector<std::size_t>& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

Tensor wrap_node(std::shared_ptr<Node> n) { return Tensor(std::move(n)); }

Tensor Tensor::zeros(std::vector<std::size_t> shape, bool requires_grad) {
    auto n = new_node(std::move(shape));
    n->requires_grad = requires_grad;
    n->needs_grad = requires_grad;
    return Tensor(n);
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value, bool requires_grad) {
    Tensor t = zeros(std::move(shape), requires_grad);
    std::fill(t.node_->values.begin(), t.node_->values.end(), value);
    return t;
}

Tensor Tensor::from(std::vector<std::size_t> shape, std::vector<double> values,
                    bool requires_grad) {
    if (shape_numel(shape) != values.size())
        throw ShapeError("Tensor::from: " + shape_str(shape) + " does not hold " +
                         std::to_string(values.size()) + " values");
    Tensor t = zeros(std::move(shape), requires_grad);
    t.node_->values = std::move(values);
    return t;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return from({}, {value}, requires_grad);
}

std::size_t Tensor::rows() const {
    require_2d(*this, "rows");
    return node_->shape[0];
}

std::size_t Tensor::cols() const {
    require_2d(*this, "cols");
    return node_->shape[1];
}

double Tensor::item() const {
    if (numel() != 1) throw ShapeError("item: tensor " + shape_str(shape()) + " is not scalar");
    return node_->values[0];
}

double Tensor::at(std::size_t r, std::size_t c) const {
    require_2d(*this, "at");
    return node_->values[r * node_->shape[1] + c];
}

void Tensor::set_requires_grad(bool v) {
    node_->requires_grad = v;
    node_->needs_grad = v || !node_->parents.empty();
}

const std::vector<double>& Tensor::grad() const {
    if (node_->grad.empty())
        throw ContractError("grad: no gradient accumulated (run backward first)");
    return node_->grad;
}

void Tensor::zero_grad() {
    if (node_) node_->grad.clear();
}

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

bool grad_enabled() { return g_grad_enabled; }

Graph trace(const Tensor& root) {
    Graph g;
    if (!root.defined()) return g;
    std::unordered_set<Node*> seen;
    // iterative DFS; children pushed after parents so sorting by id below
    // reproduces the recording order
    std::vector<Node*> stack{root.node().get()};
    seen.insert(root.node().get());
    g.nodes.push_back(root.node());
    while (!stack.empty()) {
        Node* cur = stack.back();
        stack.pop_back();
        for (const auto& p : cur->parents) {
            if (seen.insert(p.get()).second) {
                g.nodes.push_back(p);
                stack.push_back(p.get());
            }
        }
    }
    std::sort(g.nodes.begin(), g.nodes.end(),
              [](const auto& a, const auto& b) { return a->id < b->id; });
    return g;
}

void backward(const Tensor& loss) {
    if (!loss.defined() || loss.numel() != 1)
        throw ContractError("backward: root must be a scalar tensor");

    Graph g = trace(loss);
    for (auto& n : g.nodes) n->tmp_grad.assign(n->values.size(), 0.0);
    loss.node()->tmp_grad[0] = 1.0;

    // exact reverse of forward execution order
    for (auto it = g.nodes.rbegin(); it != g.nodes.rend(); ++it) {
        Node& n = **it;
        if (n.backward_fn) n.backward_fn(n);
    }

    for (auto& n : g.nodes) {
        if (n->requires_grad) {
            if (n->grad.empty()) n->grad.assign(n->values.size(), 0.0);
            for (std::size_t i = 0; i < n->grad.size(); ++i) n->grad[i] += n->tmp_grad[i];
        }
        n->tmp_grad = {};
    }
}

// ---- ops ----

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_2d(a, "matmul");
    require_2d(b, "matmul");
    const std::size_t m = a.shape()[0], k = a.shape()[1];
    const std::size_t k2 = b.shape()[0], n = b.shape()[1];
    if (k != k2)
        throw ShapeError("matmul: inner extents disagree, " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));

    Tensor out = make_result({m, n}, "matmul", {a, b}, [m, k, n](Node& self) {
        const auto& g = self.tmp_grad;
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        if (pa.needs_grad) {
            // dA = G · B^T
            const double* B = pb.values.data();
            for (std::size_t i = 0; i < m; ++i) {
                double* da = pa.tmp_grad.data() + i * k;
                const double* gi = g.data() + i * n;
                for (std::size_t l = 0; l < k; ++l) {
                    const double* bl = B + l * n;
                    double acc = 0.0;
                    for (std::size_t j = 0; j < n; ++j) acc += gi[j] * bl[j];
                    da[l] += acc;
                }
            }
        }
        if (pb.needs_grad) {
            // dB = A^T · G
            const double* A = pa.values.data();
            for (std::size_t l = 0; l < k; ++l) {
                double* db = pb.tmp_grad.data() + l * n;
                for (std::size_t i = 0; i < m; ++i) {
                    const double ail = A[i * k + l];
                    if (ail == 0.0) continue;
                    const double* gi = g.data() + i * n;
                    for (std::size_t j = 0; j < n; ++j) db[j] += ail * gi[j];
                }
            }
        }
    });

    // C = A·B, ikj order
    const double* A = a.values().data();
    const double* B = b.values().data();
    double* C = out.data().data();
    for (std::size_t i = 0; i < m; ++i) {
        double* ci = C + i * n;
        const double* ai = A + i * k;
        for (std::size_t l = 0; l < k; ++l) {
            const double ail = ai[l];
            if (ail == 0.0) continue;
            const double* bl = B + l * n;
            for (std::size_t j = 0; j < n; ++j) ci[j] += ail * bl[j];
        }
    }
    return out;
}

Tensor transpose(const Tensor& x) {
    require_2d(x, "transpose");
    const std::size_t m = x.shape()[0], n = x.shape()[1];
    Tensor out = make_result({n, m}, "transpose", {x}, [m, n](Node& self) {
        Node& px = *self.parents[0];
        if (!px.needs_grad) return;
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t i = 0; i < m; ++i) px.tmp_grad[i * n + j] += self.tmp_grad[j * m + i];
    });
    const auto& xv = x.values();
    auto& ov = out.data();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) ov[j * m + i] = xv[i * n + j];
    return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw ShapeError("add: shape mismatch, " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    Tensor out = make_result(a.shape(), "add", {a, b}, [](Node& self) {
        for (int p = 0; p < 2; ++p) {
            Node& par = *self.parents[p];
            if (!par.needs_grad) continue;
            for (std::size_t i = 0; i < self.tmp_grad.size(); ++i)
                par.tmp_grad[i] += self.tmp_grad[i];
        }
    });
    const auto& av = a.values();
    const auto& bv = b.values();
    auto& ov = out.data();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + bv[i];
    return out;
}

Tensor add_bias(const Tensor& x, const Tensor& b) {
    require_2d(x, "add_bias");
    if (b.shape().size() != 1 || b.shape()[0] != x.shape()[1])
        throw ShapeError("add_bias: bias " + shape_str(b.shape()) + " does not match columns of " +
                         shape_str(x.shape()));
    const std::size_t m = x.shape()[0], n = x.shape()[1];
    Tensor out = make_result({m, n}, "add_bias", {x, b}, [m, n](Node& self) {
        Node& px = *self.parents[0];
        Node& pb = *self.parents[1];
        if (px.needs_grad)
            for (std::size_t i = 0; i < m * n; ++i) px.tmp_grad[i] += self.tmp_grad[i];
        if (pb.needs_grad)
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) pb.tmp_grad[j] += self.tmp_grad[i * n + j];
    });
    const auto& xv = x.values();
    const auto& bv = b.values();
    auto& ov = out.data();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) ov[i * n + j] = xv[i * n + j] + bv[j];
    return out;
}

Tensor affine(const Tensor& x, double s, double t) {
    Tensor out = make_result(x.shape(), "affine", {x}, [s](Node& self) {
        Node& px = *self.parents[0];
        if (!px.needs_grad) return;
        for (std::size_t i = 0; i < self.tmp_grad.size(); ++i)
            px.tmp_grad[i] += s * self.tmp_grad[i];
    });
    const auto& xv = x.values();
    auto& ov = out.data();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = s * xv[i] + t;
    return out;
}

Tensor scale(const Tensor& x, double s) { return affine(x, s, 0.0); }

Tensor relu(const Tensor& x) {
    Tensor out = make_result(x.shape(), "relu", {x}, [](Node& self) {
        Node& px = *self.parents[0];
        if (!px.needs_grad) return;
        for (std::size_t i = 0; i < self.tmp_grad.size(); ++i)
            if (px.values[i] > 0.0) px.tmp_grad[i] += self.tmp_grad[i];
    });
    const auto& xv = x.values();
    auto& ov = out.data();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = xv[i] > 0.0 ? xv[i] : 0.0;
    return out;
}

Tensor exp_op(const Tensor& x) {
    Tensor out = make_result(x.shape(), "exp", {x}, [](Node& self) {
        Node& px = *self.parents[0];
        if (!px.needs_grad) return;
        for (std::size_t i = 0; i < self.tmp_grad.size(); ++i)
            px.tmp_grad[i] += self.tmp_grad[i] * self.values[i];
    });
    const auto& xv = x.values();
    auto& ov = out.data();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = std::exp(xv[i]);
    return out;
}

Tensor log_op(const Tensor& x) {
    Tensor out = make_result(x.shape(), "log", {x}, [](Node& self) {
        Node& px = *self.parents[0];
        if (!px.needs_grad) return;
        for (std::size_t i = 0; i < self.tmp_grad.size(); ++i)
            px.tmp_grad[i] += self.tmp_grad[i] / px.values[i];
    });
    const auto& xv = x.values();
    auto& ov = out.data();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = std::log(xv[i]);
    return out;
}

Tensor clamp(const Tensor& x, double lo, double hi) {
    Tensor out = make_result(x.shape(), "clamp", {x}, [lo, hi](Node& self) {
        Node& px = *self.parents[0];
        if (!px.needs_grad) return;
        for (std::size_t i = 0; i < self.tmp_grad.size(); ++i)
            if (px.values[i] > lo && px.values[i] < hi) px.tmp_grad[i] += self.tmp_grad[i];
    });
    const auto& xv = x.values();
    auto& ov = out.data();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = std::min(hi, std::max(lo, xv[i]));
    return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    if (x.shape().empty()) throw ShapeError("layer_norm: scalar input");
    if (eps <= 0.0) throw ShapeError("layer_norm: eps must be positive");
    const std::size_t n = x.shape().back();
    const std::size_t rows = x.numel() / n;
    if (gamma.shape() != std::vector<std::size_t>{n} || beta.shape() != std::vector<std::size_t>{n})
        throw ShapeError("layer_norm: gamma/beta must be [" + std::to_string(n) + "], got " +
                         shape_str(gamma.shape()) + " and " + shape_str(beta.shape()));

    Tensor out = make_result(x.shape(), "layer_norm", {x, gamma, beta}, [n, rows, eps](Node& self) {
        Node& px = *self.parents[0];
        Node& pg = *self.parents[1];
        Node& pb = *self.parents[2];
        std::vector<double> xhat(n);
        for (std::size_t r = 0; r < rows; ++r) {
            const double* xr = px.values.data() + r * n;
            const double* gr = self.tmp_grad.data() + r * n;
            double mean = 0.0;
            for (std::size_t i = 0; i < n; ++i) mean += xr[i];
            mean /= double(n);
            double var = 0.0;
            for (std::size_t i = 0; i < n; ++i) var += (xr[i] - mean) * (xr[i] - mean);
            var /= double(n); // biased estimator
            const double inv_std = 1.0 / std::sqrt(var + eps);
            for (std::size_t i = 0; i < n; ++i) xhat[i] = (xr[i] - mean) * inv_std;

            if (pg.needs_grad)
                for (std::size_t i = 0; i < n; ++i) pg.tmp_grad[i] += gr[i] * xhat[i];
            if (pb.needs_grad)
                for (std::size_t i = 0; i < n; ++i) pb.tmp_grad[i] += gr[i];
            if (px.needs_grad) {
                // dx = (gy - mean(gy) - xhat*mean(gy*xhat)) / std, gy = gamma*g
                double m1 = 0.0, m2 = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    const double gy = pg.values[i] * gr[i];
                    m1 += gy;
                    m2 += gy * xhat[i];
                }
                m1 /= double(n);
                m2 /= double(n);
                double* dx = px.tmp_grad.data() + r * n;
                for (std::size_t i = 0; i < n; ++i) {
                    const double gy = pg.values[i] * gr[i];
                    dx[i] += (gy - m1 - xhat[i] * m2) * inv_std;
                }
            }
        }
    });

    const auto& xv = x.values();
    const auto& gv = gamma.values();
    const auto& bv = beta.values();
    auto& ov = out.data();
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = xv.data() + r * n;
        double* orow = ov.data() + r * n;
        double mean = 0.0;
        for (std::size_t i = 0; i < n; ++i) mean += xr[i];
        mean /= double(n);
        double var = 0.0;
        for (std::size_t i = 0; i < n; ++i) var += (xr[i] - mean) * (xr[i] - mean);
        var /= double(n);
        const double inv_std = 1.0 / std::sqrt(var + eps);
        for (std::size_t i = 0; i < n; ++i) orow[i] = gv[i] * ((xr[i] - mean) * inv_std) + bv[i];
    }
    return out;
}

Tensor softmax_cross_entropy(const Tensor& logits, std::size_t target) {
    if (logits.shape().size() != 1)
        throw ShapeError("softmax_cross_entropy: logits must be 1-D, got " +
                         shape_str(logits.shape()));
    const std::size_t v = logits.shape()[0];
    if (target >= v)
        throw std::out_of_range("softmax_cross_entropy: target " + std::to_string(target) +
                                " out of range for vocab " + std::to_string(v));

    Tensor out = make_result({}, "softmax_xent", {logits}, [v, target](Node& self) {
        Node& pl = *self.parents[0];
        if (!pl.needs_grad) return;
        const double g = self.tmp_grad[0];
        double mx = pl.values[0];
        for (std::size_t i = 1; i < v; ++i) mx = std::max(mx, pl.values[i]);
        double z = 0.0;
        for (std::size_t i = 0; i < v; ++i) z += std::exp(pl.values[i] - mx);
        for (std::size_t i = 0; i < v; ++i) {
            const double p = std::exp(pl.values[i] - mx) / z;
            pl.tmp_grad[i] += g * (p - (i == target ? 1.0 : 0.0));
        }
    });

    const auto& lv = logits.values();
    double mx = lv[0];
    for (std::size_t i = 1; i < v; ++i) mx = std::max(mx, lv[i]);
    double z = 0.0;
    for (std::size_t i = 0; i < v; ++i) z += std::exp(lv[i] - mx);
    out.data()[0] = mx + std::log(z) - lv[target];
    return out;
}

namespace {

// Shared forward/backward for row-wise softmax; support_end(i) gives the
// exclusive column bound of row i.
template <typename SupportFn>
Tensor rowwise_softmax(const Tensor& scores, const char* name, SupportFn support_end) {
    require_2d(scores, name);
    const std::size_t rows = scores.shape()[0], cols = scores.shape()[1];
    Tensor out = make_result(scores.shape(), name, {scores}, [rows, cols, support_end](Node& self) {
        Node& ps = *self.parents[0];
        if (!ps.needs_grad) return;
        for (std::size_t i = 0; i < rows; ++i) {
            const std::size_t end = support_end(i);
            const double* p = self.values.data() + i * cols;
            const double* g = self.tmp_grad.data() + i * cols;
            double dot = 0.0;
            for (std::size_t j = 0; j < end; ++j) dot += p[j] * g[j];
            double* ds = ps.tmp_grad.data() + i * cols;
            for (std::size_t j = 0; j < end; ++j) ds[j] += p[j] * (g[j] - dot);
        }
    });
    const auto& sv = scores.values();
    auto& ov = out.data();
    for (std::size_t i = 0; i < rows; ++i) {
        const std::size_t end = support_end(i);
        const double* srow = sv.data() + i * cols;
        double* orow = ov.data() + i * cols;
        double mx = srow[0];
        for (std::size_t j = 1; j < end; ++j) mx = std::max(mx, srow[j]);
        double z = 0.0;
        for (std::size_t j = 0; j < end; ++j) z += std::exp(srow[j] - mx);
        for (std::size_t j = 0; j < end; ++j) orow[j] = std::exp(srow[j] - mx) / z;
        for (std::size_t j = end; j < cols; ++j) orow[j] = 0.0;
    }
    return out;
}

} // namespace

Tensor causal_softmax(const Tensor& scores) {
    if (scores.shape().size() != 2 || scores.shape()[0] != scores.shape()[1])
        throw ShapeError("causal_softmax: expected square matrix, got " + shape_str(scores.shape()));
    return rowwise_softmax(scores, "causal_softmax", [](std::size_t i) { return i + 1; });
}

Tensor softmax_rows(const Tensor& scores) {
    const std::size_t cols = scores.shape().size() == 2 ? scores.shape()[1] : 0;
    if (cols == 0) throw ShapeError("softmax_rows: expected 2-D input");
    return rowwise_softmax(scores, "softmax_rows", [cols](std::size_t) { return cols; });
}

Tensor gather_rows(const Tensor& table, const std::vector<int>& ids) {
    require_2d(table, "gather_rows");
    const std::size_t v = table.shape()[0], d = table.shape()[1];
    for (int id : ids)
        if (id < 0 || std::size_t(id) >= v)
            throw std::out_of_range("gather_rows: id " + std::to_string(id) +
                                    " out of range for table " + shape_str(table.shape()));
    const std::size_t t = ids.size();
    Tensor out = make_result({t, d}, "gather_rows", {table}, [ids, d](Node& self) {
        Node& pt = *self.parents[0];
        if (!pt.needs_grad) return;
        for (std::size_t r = 0; r < ids.size(); ++r) {
            double* dst = pt.tmp_grad.data() + std::size_t(ids[r]) * d;
            const double* src = self.tmp_grad.data() + r * d;
            for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
        }
    });
    const auto& tv = table.values();
    auto& ov = out.data();
    for (std::size_t r = 0; r < t; ++r)
        std::copy_n(tv.data() + std::size_t(ids[r]) * d, d, ov.data() + r * d);
    return out;
}

Tensor row(const Tensor& x, std::size_t i) {
    require_2d(x, "row");
    const std::size_t m = x.shape()[0], n = x.shape()[1];
    if (i >= m)
        throw ShapeError("row: index " + std::to_string(i) + " out of range for " +
                         shape_str(x.shape()));
    Tensor out = make_result({n}, "row", {x}, [i, n](Node& self) {
        Node& px = *self.parents[0];
        if (!px.needs_grad) return;
        for (std::size_t j = 0; j < n; ++j) px.tmp_grad[i * n + j] += self.tmp_grad[j];
    });
    std::copy_n(x.values().data() + i * n, n, out.data().data());
    return out;
}

Tensor as_row(const Tensor& x) {
    if (x.shape().size() != 1)
        throw ShapeError("as_row: expected 1-D tensor, got " + shape_str(x.shape()));
    const std::size_t n = x.shape()[0];
    Tensor out = make_result({1, n}, "as_row", {x}, [](Node& self) {
        Node& px = *self.parents[0];
        if (!px.needs_grad) return;
        for (std::size_t i = 0; i < self.tmp_grad.size(); ++i)
            px.tmp_grad[i] += self.tmp_grad[i];
    });
    out.data() = x.values();
    return out;
}

Tensor slice_rows(const Tensor& x, std::size_t r0, std::size_t nrows) {
    require_2d(x, "slice_rows");
    const std::size_t m = x.shape()[0], n = x.shape()[1];
    if (r0 + nrows > m)
        throw ShapeError("slice_rows: [" + std::to_string(r0) + ", " + std::to_string(r0 + nrows) +
                         ") exceeds " + shape_str(x.shape()));
    Tensor out = make_result({nrows, n}, "slice_rows", {x}, [r0, nrows, n](Node& self) {
        Node& px = *self.parents[0];
        if (!px.needs_grad) return;
        for (std::size_t i = 0; i < nrows * n; ++i) px.tmp_grad[r0 * n + i] += self.tmp_grad[i];
    });
    std::copy_n(x.values().data() + r0 * n, nrows * n, out.data().data());
    return out;
}

Tensor slice_cols(const Tensor& x, std::size_t c0, std::size_t ncols) {
    require_2d(x, "slice_cols");
    const std::size_t m = x.shape()[0], n = x.shape()[1];
    if (c0 + ncols > n)
        throw ShapeError("slice_cols: [" + std::to_string(c0) + ", " + std::to_string(c0 + ncols) +
                         ") exceeds " + shape_str(x.shape()));
    Tensor out = make_result({m, ncols}, "slice_cols", {x}, [c0, ncols, m, n](Node& self) {
        Node& px = *self.parents[0];
        if (!px.needs_grad) return;
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < ncols; ++j)
                px.tmp_grad[i * n + c0 + j] += self.tmp_grad[i * ncols + j];
    });
    const auto& xv = x.values();
    auto& ov = out.data();
    for (std::size_t i = 0; i < m; ++i)
        std::copy_n(xv.data() + i * n + c0, ncols, ov.data() + i * ncols);
    return out;
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("concat_rows: no parts");
    const std::size_t n = parts[0].shape().size() == 2 ? parts[0].shape()[1] : 0;
    if (n == 0) throw ShapeError("concat_rows: parts must be 2-D");
    std::size_t m = 0;
    for (const Tensor& p : parts) {
        require_2d(p, "concat_rows");
        if (p.shape()[1] != n)
            throw ShapeError("concat_rows: column mismatch, " + shape_str(p.shape()));
        m += p.shape()[0];
    }
    std::vector<std::size_t> row_offsets;
    row_offsets.reserve(parts.size());
    std::size_t off = 0;
    for (const Tensor& p : parts) {
        row_offsets.push_back(off);
        off += p.shape()[0];
    }
    Tensor out = make_result({m, n}, "concat_rows", parts, [row_offsets, n](Node& self) {
        for (std::size_t pi = 0; pi < self.parents.size(); ++pi) {
            Node& par = *self.parents[pi];
            if (!par.needs_grad) continue;
            const std::size_t base = row_offsets[pi] * n;
            for (std::size_t i = 0; i < par.values.size(); ++i)
                par.tmp_grad[i] += self.tmp_grad[base + i];
        }
    });
    auto& ov = out.data();
    for (std::size_t pi = 0; pi < parts.size(); ++pi) {
        const auto& pv = parts[pi].values();
        std::copy_n(pv.data(), pv.size(), ov.data() + row_offsets[pi] * n);
    }
    return out;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no parts");
    const std::size_t m = parts[0].shape().size() == 2 ? parts[0].shape()[0] : 0;
    if (m == 0) throw ShapeError("concat_cols: parts must be 2-D");
    std::size_t n = 0;
    std::vector<std::size_t> col_offsets;
    for (const Tensor& p : parts) {
        require_2d(p, "concat_cols");
        if (p.shape()[0] != m)
            throw ShapeError("concat_cols: row mismatch, " + shape_str(p.shape()));
        col_offsets.push_back(n);
        n += p.shape()[1];
    }
    std::vector<std::size_t> widths;
    for (const Tensor& p : parts) widths.push_back(p.shape()[1]);
    Tensor out =
        make_result({m, n}, "concat_cols", parts, [col_offsets, widths, m, n](Node& self) {
            for (std::size_t pi = 0; pi < self.parents.size(); ++pi) {
                Node& par = *self.parents[pi];
                if (!par.needs_grad) continue;
                const std::size_t w = widths[pi];
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < w; ++j)
                        par.tmp_grad[i * w + j] += self.tmp_grad[i * n + col_offsets[pi] + j];
            }
        });
    auto& ov = out.data();
    for (std::size_t pi = 0; pi < parts.size(); ++pi) {
        const auto& pv = parts[pi].values();
        const std::size_t w = widths[pi];
        for (std::size_t i = 0; i < m; ++i)
            std::copy_n(pv.data() + i * w, w, ov.data() + i * n + col_offsets[pi]);
    }
    return out;
}

Tensor sum(const Tensor& x) {
    Tensor out = make_result({}, "sum", {x}, [](Node& self) {
        Node& px = *self.parents[0];
        if (!px.needs_grad) return;
        const double g = self.tmp_grad[0];
        for (std::size_t i = 0; i < px.tmp_grad.size(); ++i) px.tmp_grad[i] += g;
    });
    double acc = 0.0;
    for (double v : x.values()) acc += v;
    out.data()[0] = acc;
    return out;
}

Tensor add_scalars(const std::vector<Tensor>& xs) {
    if (xs.empty()) throw ShapeError("add_scalars: no terms");
    for (const Tensor& t : xs)
        if (t.numel() != 1) throw ShapeError("add_scalars: non-scalar term " + shape_str(t.shape()));
    Tensor out = make_result({}, "add_scalars", xs, [](Node& self) {
        const double g = self.tmp_grad[0];
        for (auto& p : self.parents)
            if (p->needs_grad) p->tmp_grad[0] += g;
    });
    double acc = 0.0;
    for (const Tensor& t : xs) acc += t.values()[0];
    out.data()[0] = acc;
    return out;
}

Tensor mean_scalars(const std::vector<Tensor>& xs) {
    return affine(add_scalars(xs), 1.0 / double(xs.size()), 0.0);
}

} // namespace e2p
