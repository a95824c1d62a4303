#include "cmcd/model.hpp"

#include <cmath>
#include <string>

namespace cmcd {

const char* to_string(Activation a) {
  return a == Activation::kRelu ? "relu" : "tanh";
}

Activation parse_activation(std::string_view s) {
  if (s == "relu") return Activation::kRelu;
  if (s == "tanh") return Activation::kTanh;
  throw ConfigError("unknown activation '" + std::string(s) + "'");
}

std::size_t EncoderParams::input_dim() const {
  if (layers.empty()) throw DimensionError("encoder has no layers");
  return layers.front().weight.rows;
}

std::size_t EncoderParams::output_dim() const {
  if (layers.empty()) throw DimensionError("encoder has no layers");
  return layers.back().weight.cols;
}

std::vector<std::span<double>> EncoderParams::parameter_views() {
  std::vector<std::span<double>> v;
  for (auto& l : layers) {
    v.emplace_back(l.weight.data);
    v.emplace_back(l.bias);
  }
  return v;
}

std::vector<std::span<const double>> EncoderParams::parameter_views() const {
  std::vector<std::span<const double>> v;
  for (const auto& l : layers) {
    v.emplace_back(l.weight.data);
    v.emplace_back(l.bias);
  }
  return v;
}

std::vector<std::span<double>> HeadParams::parameter_views() {
  return {std::span<double>(weight.data), std::span<double>(bias)};
}

std::vector<std::span<const double>> HeadParams::parameter_views() const {
  return {std::span<const double>(weight.data), std::span<const double>(bias)};
}

namespace {

DenseLayer init_dense(std::size_t in, std::size_t out, Rng& rng) {
  DenseLayer l{Matrix(in, out), std::vector<double>(out, 0.0)};
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  for (auto& w : l.weight.data) w = rng.uniform(-bound, bound);
  return l;
}

Tensor dense_forward(const DenseLayer& l, const Tensor& x, ParamBinding* binding) {
  Tensor w = binding ? binding->bind(l.weight) : Tensor::from_matrix(l.weight);
  Tensor b = binding ? binding->bind(l.bias) : Tensor::vector(l.bias);
  return add_row_vector(matmul(x, w), b);
}

}  // namespace

EncoderParams init_encoder(std::span<const std::size_t> widths,
                           Activation activation, Rng& rng) {
  if (widths.size() < 2) {
    throw ConfigError("encoder widths need at least input and output sizes");
  }
  EncoderParams p;
  p.activation = activation;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    if (widths[i] == 0 || widths[i + 1] == 0) {
      throw ConfigError("encoder widths must be positive");
    }
    p.layers.push_back(init_dense(widths[i], widths[i + 1], rng));
  }
  return p;
}

HeadParams init_head(std::size_t embedding_dim, std::size_t num_classes, Rng& rng) {
  auto l = init_dense(embedding_dim, num_classes, rng);
  return HeadParams{std::move(l.weight), std::move(l.bias)};
}

const Tensor* ParamBinding::find(const void* key) const {
  for (std::size_t i = 0; i < keys_.size(); ++i) {
    if (keys_[i] == key) return &leaves_[i];
  }
  return nullptr;
}

Tensor ParamBinding::bind(const Matrix& m) {
  if (const Tensor* t = find(&m)) return *t;
  leaves_.push_back(Tensor::from_matrix(m, true));
  keys_.push_back(&m);
  return leaves_.back();
}

Tensor ParamBinding::bind(const std::vector<double>& v) {
  if (const Tensor* t = find(&v)) return *t;
  leaves_.push_back(Tensor::vector(v, true));
  keys_.push_back(&v);
  return leaves_.back();
}

std::vector<std::vector<double>> ParamBinding::gradients() const {
  std::vector<std::vector<double>> out;
  out.reserve(leaves_.size());
  for (const auto& t : leaves_) {
    if (t.has_grad()) {
      out.emplace_back(t.grad().begin(), t.grad().end());
    } else {
      out.emplace_back(t.numel(), 0.0);
    }
  }
  return out;
}

Tensor forward_encoder(const EncoderParams& params, const Tensor& x,
                       ParamBinding* binding) {
  if (x.ndim() != 2 || x.cols() != params.input_dim()) {
    throw DimensionError("forward_encoder: input has " +
                         std::to_string(x.ndim() == 2 ? x.cols() : 0) +
                         " columns, encoder expects " +
                         std::to_string(params.input_dim()));
  }
  Tensor h = x;
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    h = dense_forward(params.layers[i], h, binding);
    if (i + 1 < params.layers.size()) {
      h = params.activation == Activation::kRelu ? relu(h) : tanh(h);
    }
  }
  return normalize_rows(h);
}

Tensor forward_head(const HeadParams& params, const Tensor& z,
                    ParamBinding* binding) {
  if (z.ndim() != 2 || z.cols() != params.input_dim()) {
    throw DimensionError("forward_head: embedding width does not match head");
  }
  Tensor w = binding ? binding->bind(params.weight) : Tensor::from_matrix(params.weight);
  Tensor b = binding ? binding->bind(params.bias) : Tensor::vector(params.bias);
  return add_row_vector(matmul(z, w), b);
}

Matrix embed(const EncoderParams& params, const Matrix& x) {
  return forward_encoder(params, Tensor::from_matrix(x)).to_matrix();
}

Matrix predict_logits(const HeadParams& head, const Matrix& z) {
  return forward_head(head, Tensor::from_matrix(z)).to_matrix();
}

std::vector<int> argmax_rows(const Matrix& logits) {
  std::vector<int> out(logits.rows);
  for (std::size_t i = 0; i < logits.rows; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < logits.cols; ++j) {
      if (logits(i, j) > logits(i, best)) best = j;
    }
    out[i] = static_cast<int>(best);
  }
  return out;
}

}  // namespace cmcd
