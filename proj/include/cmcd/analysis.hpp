#pragma once

// Diagnostics: restricted total-variation distance between two encoders'
// in-batch Gibbs distributions, the kappa-informativeness ratio, and the
// LE/FT improvement deltas.
//
// The TV estimate is taken over batch support only: for each sampled batch,
// column j of each Gibbs matrix is a distribution over the batch, and the
// estimate is the mean over columns and batches of half the L1 distance
// between the two columns. It is a computable surrogate, not the population
// TV distance.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cmcd/model.hpp"
#include "cmcd/synth.hpp"

namespace cmcd {

struct TvOptions {
  double tau = 0.5;
  std::size_t batch_size = 64;
  std::size_t n_batches = 50;
  std::uint64_t seed = 0;
};

/// 0.5 * sum_i |p[i][j] - q[i][j]| for each column j.
std::vector<double> column_tv(const Matrix& p, const Matrix& q);

/// Encoder `a` sees rows of `xa`, encoder `b` the same rows of `xb`. Batches
/// are drawn without replacement within a batch; the same seed gives the same
/// batches for any pair of encoders.
double estimate_tv(const EncoderParams& a, const Matrix& xa, const EncoderParams& b,
                   const Matrix& xb, const TvOptions& options);
double estimate_tv(const EncoderParams& enc_a, const EncoderParams& enc_b,
                   const PairedSet& paired, const TvOptions& options);

struct KappaOptions {
  double tau = 0.5;
  std::size_t sample_size = 512;
  std::uint64_t seed = 0;
  double floor = 1e-9;
};

struct KappaEstimate {
  double value = 0.0;
  bool undefined = false;  // some denominator hit the floor
  std::size_t argmax = 0;  // sample position attaining the max
  std::size_t samples = 0;
};

/// max over sampled x of CE(psi* o phi(x), y) / mean_{x' != x} CMD on the
/// two-point batch {x, x'} with phi* as teacher and phi as student (sum
/// reduction). A finite-sample lower bound of the informativeness constant.
KappaEstimate estimate_kappa(const EncoderParams& phi, const EncoderParams& phi_star,
                             const HeadParams& psi_star, const LabeledSet& data,
                             const KappaOptions& options);

struct Deltas {
  double le_delta = 0.0;  // acc(CMD+LE) - acc(SSL+LE)
  double ft_delta = 0.0;  // acc(CMD+FT) - acc(SupFT)
};

/// Keys: "CMD+LE", "SSL+LE", "CMD+FT", "SupFT". Throws ConfigError naming a
/// missing key.
Deltas compute_deltas(const std::map<std::string, double>& accuracy);

struct DiagnosticsReport {
  double d_tv_hat = 0.0;
  double kappa_hat = 0.0;
  bool kappa_undefined = false;
  double le_delta = 0.0;
  double ft_delta = 0.0;
  std::size_t batch_size = 0;
  std::size_t n_batches = 0;
  double tau = 0.0;
  std::uint64_t seed = 0;
};

}  // namespace cmcd
