#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cmcd/matrix.hpp"
#include "cmcd/rng.hpp"
#include "cmcd/tensor.hpp"

namespace cmcd {

enum class Activation { kRelu, kTanh };

const char* to_string(Activation a);
Activation parse_activation(std::string_view s);

/// y = x * weight + bias, weight is [in x out].
struct DenseLayer {
  Matrix weight;
  std::vector<double> bias;

  bool operator==(const DenseLayer&) const = default;
};

/// MLP encoder whose output rows are L2-normalized embeddings, so every
/// pairwise inner product of embeddings lies in [-1, 1].
struct EncoderParams {
  std::vector<DenseLayer> layers;
  Activation activation = Activation::kRelu;

  std::size_t input_dim() const;
  std::size_t output_dim() const;
  /// Flat views in canonical order: w0, b0, w1, b1, ...
  std::vector<std::span<double>> parameter_views();
  std::vector<std::span<const double>> parameter_views() const;

  bool operator==(const EncoderParams&) const = default;
};

/// Linear classifier on embeddings.
struct HeadParams {
  Matrix weight;  // [d_emb x K]
  std::vector<double> bias;

  std::size_t input_dim() const { return weight.rows; }
  std::size_t num_classes() const { return weight.cols; }
  std::vector<std::span<double>> parameter_views();
  std::vector<std::span<const double>> parameter_views() const;

  bool operator==(const HeadParams&) const = default;
};

/// widths = {d_in, h1, ..., d_emb}. Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)),
/// biases zero.
EncoderParams init_encoder(std::span<const std::size_t> widths,
                           Activation activation, Rng& rng);
HeadParams init_head(std::size_t embedding_dim, std::size_t num_classes, Rng& rng);

/// Leaf tensors created for one training step, in first-bind order. Binding
/// the same parameter object again returns the existing leaf, so several
/// forward passes through one model share its gradients.
class ParamBinding {
 public:
  Tensor bind(const Matrix& m);
  Tensor bind(const std::vector<double>& v);
  /// Gradient of every bound leaf; zeros where backward did not reach.
  std::vector<std::vector<double>> gradients() const;
  std::size_t size() const { return leaves_.size(); }

 private:
  const Tensor* find(const void* key) const;

  std::vector<Tensor> leaves_;
  std::vector<const void*> keys_;
};

/// Embeddings for a batch. With `binding`, parameters enter as trainable
/// leaves; without, they are constants (frozen).
Tensor forward_encoder(const EncoderParams& params, const Tensor& x,
                       ParamBinding* binding = nullptr);
Tensor forward_head(const HeadParams& params, const Tensor& z,
                    ParamBinding* binding = nullptr);

/// Graph-free embedding of every row of `x`.
Matrix embed(const EncoderParams& params, const Matrix& x);
/// Graph-free logits.
Matrix predict_logits(const HeadParams& head, const Matrix& z);
/// argmax per row; ties go to the lowest class index.
std::vector<int> argmax_rows(const Matrix& logits);

}  // namespace cmcd
