#pragma once

// Minimal reverse-mode differentiation over dense row-major double tensors.
//
// A Tensor is a cheap handle onto a graph node. Every operation below records
// its parents and a local backward rule; `Tensor::backward()` walks the
// recorded graph in reverse topological order. The graph is rebuilt on each
// forward pass, so parameters live outside of it (see model.hpp) and enter as
// fresh leaves.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "cmcd/errors.hpp"
#include "cmcd/matrix.hpp"

namespace cmcd {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until populated
  bool requires_grad = false;
  bool backpropagated = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into parents' grads.
  std::function<void(Node&)> backward_fn;
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);
  static Tensor from_matrix(const Matrix& m, bool requires_grad = false);
  static Tensor vector(std::vector<double> v, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const;
  std::size_t ndim() const { return shape().size(); }
  std::size_t numel() const;
  std::size_t rows() const;  // 2-d tensors only
  std::size_t cols() const;  // 2-d tensors only

  std::span<const double> values() const;
  /// Writable view; only valid on leaves (no recorded parents).
  std::span<double> mutable_values();
  double item() const;
  double at(std::size_t i, std::size_t j) const;
  Matrix to_matrix() const;

  bool requires_grad() const;
  bool has_grad() const;
  std::span<const double> grad() const;
  void zero_grad();

  /// Same values, cut from the graph (stop-gradient).
  Tensor detach() const;

  /// Populates grads of every requires_grad tensor reachable from this
  /// scalar. Calling it again on the same graph, or while a reached leaf still
  /// carries a gradient from an earlier pass, throws GraphError.
  void backward();

  // Internal: used by op implementations.
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

// ---- operations -----------------------------------------------------------

/// [m x k] * [k x n] -> [m x n]
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);

/// [m x n] + [n] broadcast over rows.
Tensor add_row_vector(const Tensor& a, const Tensor& v);

Tensor relu(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor square(const Tensor& a);

/// Scalar sum / mean of all entries.
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

/// [m x n] -> [n], mean over the row (batch) axis.
Tensor column_mean(const Tensor& a);

/// Each row divided by (its L2 norm + eps).
Tensor normalize_rows(const Tensor& a, double eps = 1e-12);

/// log-softmax over the first index: column j is normalized over i.
Tensor log_softmax_cols(const Tensor& a);
/// log-softmax over the second index: row i is normalized over j.
Tensor log_softmax_rows(const Tensor& a);

/// [m x m] -> [m], the main diagonal.
Tensor diagonal(const Tensor& a);
/// [m x n] -> [m], entry (i, index[i]) of each row.
Tensor pick_per_row(const Tensor& a, std::span<const int> index);

}  // namespace cmcd
