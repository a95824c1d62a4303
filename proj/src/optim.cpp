#include "cmcd/optim.hpp"

#include <cmath>
#include <string>

#include "cmcd/errors.hpp"

namespace cmcd {

double multistep_lr(const AdamConfig& config, int epoch) {
  double lr = config.lr;
  for (int m : config.milestones) {
    if (m <= epoch) lr *= config.decay_factor;
  }
  return lr;
}

Adam::Adam(AdamConfig config) : config_(std::move(config)) {
  if (!(config_.lr > 0.0)) throw ConfigError("Adam: lr must be positive");
  if (!(config_.beta1 >= 0.0 && config_.beta1 < 1.0) ||
      !(config_.beta2 >= 0.0 && config_.beta2 < 1.0)) {
    throw ConfigError("Adam: betas must lie in [0, 1)");
  }
  for (std::size_t i = 1; i < config_.milestones.size(); ++i) {
    if (config_.milestones[i] < config_.milestones[i - 1]) {
      throw ConfigError("Adam: milestones must be sorted ascending");
    }
  }
}

void Adam::step(std::span<const std::span<double>> params,
                const std::vector<std::vector<double>>& grads, int epoch) {
  if (params.size() != grads.size()) {
    throw DimensionError("Adam: " + std::to_string(params.size()) +
                         " parameters but " + std::to_string(grads.size()) +
                         " gradients");
  }
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.emplace_back(p.size(), 0.0);
      v_.emplace_back(p.size(), 0.0);
    }
  }
  if (m_.size() != params.size()) {
    throw DimensionError("Adam: parameter count changed between steps");
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (params[k].size() != m_[k].size() || grads[k].size() != m_[k].size()) {
      throw DimensionError("Adam: shape of parameter " + std::to_string(k) +
                           " does not match its moments");
    }
    for (std::size_t i = 0; i < grads[k].size(); ++i) {
      if (!std::isfinite(grads[k][i])) {
        throw NumericError("Adam: non-finite gradient in parameter " +
                           std::to_string(k) + " at element " + std::to_string(i) +
                           " (step " + std::to_string(step_ + 1) + ", epoch " +
                           std::to_string(epoch) + ")");
      }
    }
  }

  ++step_;
  const double lr = multistep_lr(config_, epoch);
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto p = params[k];
    const auto& g = grads[k];
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      p[i] -= lr * mhat / (std::sqrt(vhat) + config_.eps);
    }
  }
}

}  // namespace cmcd
