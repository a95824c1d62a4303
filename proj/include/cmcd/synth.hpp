#pragma once

// Synthetic two-modality data with a tunable modality gap.
//
// Each class is a mixture of modes_per_class prototypes placed at random on
// the sphere of radius class_mean_scale. A sample draws a class y, a mode k,
// a latent z = mu_{y,k} + latent_std * eps, and an independent u ~ N(0, I). The target-modality latent mixes them,
//   z_B = (1 - gap) * z + gap * u,
// so gap = 0 gives both modalities the same latent and gap = 1 leaves x_B
// independent of the class. Observations are x_A = tanh(W_A z) + noise and
// x_B = tanh(W_B z_B) + noise with W_A, W_B fixed per seed.
//
// Every sample has its own RNG stream keyed by (seed, split, index), so x_A
// does not depend on the gap and any sample can be regenerated in isolation.

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "json.hpp"

#include "cmcd/matrix.hpp"

namespace cmcd {

struct GeneratorConfig {
  int num_classes = 10;
  int modes_per_class = 4;
  std::size_t latent_dim = 8;
  std::size_t dim_a = 32;
  std::size_t dim_b = 32;
  double class_mean_scale = 3.0;
  double latent_std = 0.5;
  double noise_std = 0.1;
  double gap = 0.0;
  std::size_t n_source = 20000;
  std::size_t n_paired = 2000;
  std::size_t n_target = 500;
  std::size_t n_test = 2000;
  std::uint64_t seed = 0;

  /// Throws ConfigError naming the offending field.
  void validate() const;
  nlohmann::json to_json() const;
  static GeneratorConfig from_json(const nlohmann::json& j);
  bool operator==(const GeneratorConfig&) const = default;
};

/// Row i of xa is the positive partner of row i of xb.
struct PairedSet {
  Matrix xa;
  Matrix xb;
  // Ground truth, kept for tests only; training code never reads these.
  Matrix latent_a;
  Matrix latent_b;
  std::vector<int> labels;
  std::vector<int> ids;  // generation index of each pair

  std::size_t size() const { return xa.rows; }
};

struct LabeledSet {
  Matrix x;
  std::vector<int> labels;

  std::size_t size() const { return x.rows; }
};

struct DatasetBundle {
  GeneratorConfig config;
  Matrix source;                   // unlabeled x_A
  std::vector<int> source_labels;  // hidden; used only by sanity probes
  PairedSet paired;
  LabeledSet target_labeled;
  LabeledSet target_test;

  bool operator==(const DatasetBundle& o) const;
};

DatasetBundle generate(const GeneratorConfig& config);

/// Recomputes (x_A, x_B) of paired sample `id` from stored latents and the
/// seed-derived noise.
std::pair<std::vector<double>, std::vector<double>> regenerate_pair(
    const GeneratorConfig& config, int id, std::span<const double> latent_a,
    std::span<const double> latent_b);

struct AugmentConfig {
  double noise_std = 0.1;
  double mask_prob = 0.2;
};

/// Additive Gaussian noise plus independent coordinate masking (masked
/// coordinates are exactly zero).
Matrix augment(const Matrix& x, std::uint64_t seed, const AugmentConfig& config = {});

/// Keeps ceil(ratio * m) pairs chosen uniformly without replacement.
DatasetBundle subsample_paired(const DatasetBundle& bundle, double ratio,
                               std::uint64_t seed);

/// Keeps exactly n_per_class labeled target samples per class.
DatasetBundle subsample_labels(const DatasetBundle& bundle, std::size_t n_per_class,
                               std::uint64_t seed);

void save_bundle(const DatasetBundle& bundle, const std::filesystem::path& path);
DatasetBundle load_bundle(const std::filesystem::path& path);

}  // namespace cmcd
