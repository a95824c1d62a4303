#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace cmcd {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::vector<int> milestones{60, 70, 80};  // epochs, ascending
  double decay_factor = 0.1;
};

/// lr * factor^(number of milestones <= epoch)
double multistep_lr(const AdamConfig& config, int epoch);

/// Adam with bias correction and a multi-step learning-rate schedule.
class Adam {
 public:
  explicit Adam(AdamConfig config);

  /// One update of `params` (in the order moments were first sized) using
  /// `grads`. Throws NumericError naming the parameter on a NaN/Inf gradient,
  /// leaving all parameters untouched.
  void step(std::span<const std::span<double>> params,
            const std::vector<std::vector<double>>& grads, int epoch);

  std::size_t steps_taken() const { return step_; }
  const AdamConfig& config() const { return config_; }
  const std::vector<std::vector<double>>& first_moments() const { return m_; }
  const std::vector<std::vector<double>>& second_moments() const { return v_; }

 private:
  AdamConfig config_;
  std::size_t step_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

}  // namespace cmcd
