#include "cmcd/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_set>

namespace cmcd {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

namespace {

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += " x ";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

void check_finite(std::span<const double> v, const char* what) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) {
      throw NumericError(std::string(what) + ": non-finite value at flat index " +
                         std::to_string(i));
    }
  }
}

// Allocates the grad buffer of a parent on first use.
std::vector<double>& grad_of(Node& n) {
  if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
  return n.grad;
}

Tensor make_result(const char* op, Shape shape, std::vector<double> value,
                   std::vector<NodePtr> parents,
                   std::function<void(Node&)> backward_fn) {
  check_finite(value, op);
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  bool any = false;
  for (const auto& p : parents) any = any || p->requires_grad;
  if (any) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward_fn = std::move(backward_fn);
  }
  return Tensor(std::move(node));
}

const Node& N(const Tensor& t) {
  if (!t.defined()) throw GraphError("operation on an undefined tensor");
  return *t.node();
}

void require_2d(const Tensor& t, const char* op) {
  if (N(t).shape.size() != 2) {
    throw DimensionError(std::string(op) + ": expected a 2-d tensor, got " +
                         shape_str(N(t).shape));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (N(a).shape != N(b).shape) {
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         shape_str(N(a).shape) + " vs " + shape_str(N(b).shape));
  }
}

}  // namespace

// ---- Tensor ---------------------------------------------------------------

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad) {
  for (auto d : shape) {
    if (d == 0) throw DimensionError("Tensor: dimension sizes must be positive");
  }
  if (values.size() != shape_numel(shape)) {
    throw DimensionError("Tensor: " + std::to_string(values.size()) +
                         " values for shape " + shape_str(shape));
  }
  check_finite(values, "Tensor");
  node_ = std::make_shared<Node>();
  node_->shape = std::move(shape);
  node_->value = std::move(values);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  return Tensor({}, {v}, requires_grad);
}

Tensor Tensor::from_matrix(const Matrix& m, bool requires_grad) {
  return Tensor({m.rows, m.cols}, m.data, requires_grad);
}

Tensor Tensor::vector(std::vector<double> v, bool requires_grad) {
  auto n = v.size();
  return Tensor({n}, std::move(v), requires_grad);
}

const Shape& Tensor::shape() const { return N(*this).shape; }
std::size_t Tensor::numel() const { return N(*this).value.size(); }

std::size_t Tensor::rows() const {
  require_2d(*this, "rows");
  return shape()[0];
}

std::size_t Tensor::cols() const {
  require_2d(*this, "cols");
  return shape()[1];
}

std::span<const double> Tensor::values() const { return N(*this).value; }

std::span<double> Tensor::mutable_values() {
  if (!node_) throw GraphError("mutable_values on an undefined tensor");
  if (!node_->parents.empty() || node_->backward_fn) {
    throw GraphError("mutable_values is only allowed on leaf tensors");
  }
  return node_->value;
}

double Tensor::item() const {
  if (numel() != 1) {
    throw DimensionError("item: tensor of shape " + shape_str(shape()) +
                         " is not a scalar");
  }
  return N(*this).value[0];
}

double Tensor::at(std::size_t i, std::size_t j) const {
  return N(*this).value[i * cols() + j];
}

Matrix Tensor::to_matrix() const {
  return Matrix(rows(), cols(), N(*this).value);
}

bool Tensor::requires_grad() const { return N(*this).requires_grad; }
bool Tensor::has_grad() const { return !N(*this).grad.empty(); }
std::span<const double> Tensor::grad() const { return N(*this).grad; }

void Tensor::zero_grad() {
  if (!node_) return;
  node_->grad.clear();
  node_->backpropagated = false;
}

Tensor Tensor::detach() const {
  return Tensor(shape(), N(*this).value, false);
}

void Tensor::backward() {
  if (!node_) throw GraphError("backward on an undefined tensor");
  if (node_->value.size() != 1) {
    throw GraphError("backward: loss must be a scalar, got shape " +
                     shape_str(node_->shape));
  }
  if (node_->backpropagated) {
    throw GraphError("backward: graph already backpropagated; zero grads and "
                     "rebuild the forward pass");
  }
  if (!node_->requires_grad) {
    throw GraphError("backward: loss does not depend on any requires_grad tensor");
  }

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  for (Node* n : order) {
    if (n->parents.empty() && !n->grad.empty()) {
      throw GraphError("backward: a leaf still holds a gradient from an earlier "
                       "pass; call zero_grad first");
    }
  }

  node_->grad.assign(1, 1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
  }
  for (Node* n : order) {
    if (n->parents.empty()) {
      if (n->grad.empty()) n->grad.assign(n->value.size(), 0.0);
      check_finite(n->grad, "backward");
    }
  }
  node_->backpropagated = true;
}

// ---- ops ------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_2d(a, "matmul");
  require_2d(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw DimensionError("matmul: inner dimensions differ " +
                         shape_str(a.shape()) + " * " + shape_str(b.shape()));
  }
  const auto& av = N(a).value;
  const auto& bv = N(b).value;
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      const double* brow = bv.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  }
  NodePtr pa = a.node(), pb = b.node();
  return make_result("matmul", {m, n}, std::move(out), {pa, pb},
                     [pa, pb, m, k, n](Node& self) {
    const auto& g = self.grad;
    if (pa->requires_grad) {
      // dA = G * B^T
      auto& ga = grad_of(*pa);
      const auto& bv = pb->value;
      for (std::size_t i = 0; i < m; ++i) {
        const double* grow = g.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double* brow = bv.data() + p * n;
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
          ga[i * k + p] += acc;
        }
      }
    }
    if (pb->requires_grad) {
      // dB = A^T * G
      auto& gb = grad_of(*pb);
      const auto& av = pa->value;
      for (std::size_t i = 0; i < m; ++i) {
        const double* grow = g.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = av[i * k + p];
          double* gbrow = gb.data() + p * n;
          for (std::size_t j = 0; j < n; ++j) gbrow[j] += aip * grow[j];
        }
      }
    }
  });
}

Tensor transpose(const Tensor& a) {
  require_2d(a, "transpose");
  const std::size_t m = a.rows(), n = a.cols();
  const auto& av = N(a).value;
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = av[i * n + j];
  NodePtr pa = a.node();
  return make_result("transpose", {n, m}, std::move(out), {pa},
                     [pa, m, n](Node& self) {
    auto& ga = grad_of(*pa);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += self.grad[j * m + i];
  });
}

namespace {

template <typename F, typename DA, typename DB>
Tensor elementwise2(const char* op, const Tensor& a, const Tensor& b, F f,
                    DA da, DB db) {
  require_same_shape(a, b, op);
  const auto& av = N(a).value;
  const auto& bv = N(b).value;
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(av[i], bv[i]);
  NodePtr pa = a.node(), pb = b.node();
  return make_result(op, a.shape(), std::move(out), {pa, pb},
                     [pa, pb, da, db](Node& self) {
    const std::size_t n = self.grad.size();
    if (pa->requires_grad) {
      auto& ga = grad_of(*pa);
      for (std::size_t i = 0; i < n; ++i)
        ga[i] += self.grad[i] * da(pa->value[i], pb->value[i]);
    }
    if (pb->requires_grad) {
      auto& gb = grad_of(*pb);
      for (std::size_t i = 0; i < n; ++i)
        gb[i] += self.grad[i] * db(pa->value[i], pb->value[i]);
    }
  });
}

// dfdx receives (input, output).
template <typename F, typename D>
Tensor elementwise1(const char* op, const Tensor& a, F f, D dfdx) {
  const auto& av = N(a).value;
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(av[i]);
  NodePtr pa = a.node();
  return make_result(op, a.shape(), std::move(out), {pa},
                     [pa, dfdx](Node& self) {
    auto& ga = grad_of(*pa);
    for (std::size_t i = 0; i < ga.size(); ++i)
      ga[i] += self.grad[i] * dfdx(pa->value[i], self.value[i]);
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return elementwise2(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return elementwise2(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return elementwise2(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double, double y) { return y; }, [](double x, double) { return x; });
}

Tensor scale(const Tensor& a, double c) {
  return elementwise1(
      "scale", a, [c](double x) { return c * x; },
      [c](double, double) { return c; });
}

Tensor add_row_vector(const Tensor& a, const Tensor& v) {
  require_2d(a, "add_row_vector");
  const std::size_t m = a.rows(), n = a.cols();
  if (N(v).value.size() != n || N(v).shape.size() != 1) {
    throw DimensionError("add_row_vector: vector " + shape_str(v.shape()) +
                         " does not match " + shape_str(a.shape()));
  }
  const auto& av = N(a).value;
  const auto& vv = N(v).value;
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = av[i * n + j] + vv[j];
  NodePtr pa = a.node(), pv = v.node();
  return make_result("add_row_vector", {m, n}, std::move(out), {pa, pv},
                     [pa, pv, m, n](Node& self) {
    if (pa->requires_grad) {
      auto& ga = grad_of(*pa);
      for (std::size_t i = 0; i < m * n; ++i) ga[i] += self.grad[i];
    }
    if (pv->requires_grad) {
      auto& gv = grad_of(*pv);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gv[j] += self.grad[i * n + j];
    }
  });
}

Tensor relu(const Tensor& a) {
  // Subgradient at 0 is 0.
  return elementwise1(
      "relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor tanh(const Tensor& a) {
  return elementwise1(
      "tanh", a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor exp(const Tensor& a) {
  return elementwise1(
      "exp", a, [](double x) { return std::exp(x); },
      [](double, double y) { return y; });
}

Tensor square(const Tensor& a) {
  return elementwise1(
      "square", a, [](double x) { return x * x; },
      [](double x, double) { return 2.0 * x; });
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double x : N(a).value) s += x;
  NodePtr pa = a.node();
  return make_result("sum", {}, {s}, {pa}, [pa](Node& self) {
    auto& ga = grad_of(*pa);
    for (auto& g : ga) g += self.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor column_mean(const Tensor& a) {
  require_2d(a, "column_mean");
  const std::size_t m = a.rows(), n = a.cols();
  const auto& av = N(a).value;
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j] += av[i * n + j];
  for (auto& x : out) x /= static_cast<double>(m);
  NodePtr pa = a.node();
  return make_result("column_mean", {n}, std::move(out), {pa},
                     [pa, m, n](Node& self) {
    auto& ga = grad_of(*pa);
    const double inv = 1.0 / static_cast<double>(m);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += self.grad[j] * inv;
  });
}

Tensor normalize_rows(const Tensor& a, double eps) {
  require_2d(a, "normalize_rows");
  const std::size_t m = a.rows(), n = a.cols();
  const auto& av = N(a).value;
  std::vector<double> out(m * n);
  std::vector<double> norms(m);
  for (std::size_t i = 0; i < m; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += av[i * n + j] * av[i * n + j];
    norms[i] = std::sqrt(s);
    const double d = norms[i] + eps;
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = av[i * n + j] / d;
  }
  NodePtr pa = a.node();
  return make_result("normalize_rows", {m, n}, std::move(out), {pa},
                     [pa, m, n, eps, norms = std::move(norms)](Node& self) {
    // y = x / (r + eps), r = |x|:  dx = g / d - x (g . x) / (r d^2)
    auto& ga = grad_of(*pa);
    const auto& x = pa->value;
    for (std::size_t i = 0; i < m; ++i) {
      const double r = norms[i];
      const double d = r + eps;
      double gx = 0.0;
      for (std::size_t j = 0; j < n; ++j) gx += self.grad[i * n + j] * x[i * n + j];
      const double coef = r > 0.0 ? gx / (r * d * d) : 0.0;
      for (std::size_t j = 0; j < n; ++j)
        ga[i * n + j] += self.grad[i * n + j] / d - x[i * n + j] * coef;
    }
  });
}

namespace {

// Generic log-softmax over groups laid out with a stride: group g has entries
// base(g) + t * stride for t in [0, len).
Tensor log_softmax_strided(const char* op, const Tensor& a, bool over_rows) {
  require_2d(a, op);
  const std::size_t m = a.rows(), n = a.cols();
  const std::size_t groups = over_rows ? n : m;
  const std::size_t len = over_rows ? m : n;
  auto index = [=](std::size_t g, std::size_t t) {
    return over_rows ? t * n + g : g * n + t;
  };
  const auto& av = N(a).value;
  std::vector<double> out(m * n);
  for (std::size_t g = 0; g < groups; ++g) {
    double mx = av[index(g, 0)];
    for (std::size_t t = 1; t < len; ++t) mx = std::max(mx, av[index(g, t)]);
    double s = 0.0;
    for (std::size_t t = 0; t < len; ++t) s += std::exp(av[index(g, t)] - mx);
    const double lse = mx + std::log(s);
    for (std::size_t t = 0; t < len; ++t) out[index(g, t)] = av[index(g, t)] - lse;
  }
  NodePtr pa = a.node();
  return make_result(op, {m, n}, std::move(out), {pa},
                     [pa, groups, len, index](Node& self) {
    // dx_t = g_t - softmax_t * sum(g)
    auto& ga = grad_of(*pa);
    for (std::size_t g = 0; g < groups; ++g) {
      double gs = 0.0;
      for (std::size_t t = 0; t < len; ++t) gs += self.grad[index(g, t)];
      for (std::size_t t = 0; t < len; ++t) {
        const auto k = index(g, t);
        ga[k] += self.grad[k] - std::exp(self.value[k]) * gs;
      }
    }
  });
}

}  // namespace

Tensor log_softmax_cols(const Tensor& a) {
  return log_softmax_strided("log_softmax_cols", a, true);
}

Tensor log_softmax_rows(const Tensor& a) {
  return log_softmax_strided("log_softmax_rows", a, false);
}

Tensor diagonal(const Tensor& a) {
  require_2d(a, "diagonal");
  const std::size_t m = a.rows();
  if (a.cols() != m) throw DimensionError("diagonal: matrix is not square");
  std::vector<double> out(m);
  for (std::size_t i = 0; i < m; ++i) out[i] = N(a).value[i * m + i];
  NodePtr pa = a.node();
  return make_result("diagonal", {m}, std::move(out), {pa}, [pa, m](Node& self) {
    auto& ga = grad_of(*pa);
    for (std::size_t i = 0; i < m; ++i) ga[i * m + i] += self.grad[i];
  });
}

Tensor pick_per_row(const Tensor& a, std::span<const int> index) {
  require_2d(a, "pick_per_row");
  const std::size_t m = a.rows(), n = a.cols();
  if (index.size() != m) {
    throw DimensionError("pick_per_row: " + std::to_string(index.size()) +
                         " indices for " + std::to_string(m) + " rows");
  }
  std::vector<std::size_t> idx(m);
  std::vector<double> out(m);
  for (std::size_t i = 0; i < m; ++i) {
    if (index[i] < 0 || static_cast<std::size_t>(index[i]) >= n) {
      throw DimensionError("pick_per_row: index " + std::to_string(index[i]) +
                           " out of range [0, " + std::to_string(n) + ")");
    }
    idx[i] = static_cast<std::size_t>(index[i]);
    out[i] = N(a).value[i * n + idx[i]];
  }
  NodePtr pa = a.node();
  return make_result("pick_per_row", {m}, std::move(out), {pa},
                     [pa, n, idx = std::move(idx)](Node& self) {
    auto& ga = grad_of(*pa);
    for (std::size_t i = 0; i < idx.size(); ++i) ga[i * n + idx[i]] += self.grad[i];
  });
}

}  // namespace cmcd
