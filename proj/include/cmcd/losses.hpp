#pragma once

// Training objectives over L2-normalized embedding batches.
//
// Conventions shared by every contrastive loss here:
//   * similarities are inner products scaled by 1/tau;
//   * the Gibbs density normalizes over the FIRST index,
//       P[i][j] = exp(<z_i, z_j>/tau) / sum_t exp(<z_t, z_j>/tau),
//     so each column j is a distribution over i;
//   * self-similarity terms stay in every denominator (no diagonal masking).
//
// Reduction::kSum returns the literal double sums; Reduction::kMean divides by
// the batch size m.

#include <span>
#include <vector>

#include "cmcd/matrix.hpp"
#include "cmcd/tensor.hpp"

namespace cmcd {

enum class Reduction { kSum, kMean };

struct LossConfig {
  double tau = 0.5;
  double alpha = 0.0;
  Reduction reduction = Reduction::kMean;
};

/// Column-stochastic Gibbs matrix with its temperature.
struct GibbsMatrix {
  Matrix p;
  double tau = 0.5;
};

GibbsMatrix gibbs_matrix(const Matrix& z1, const Matrix& z2, double tau);
/// Differentiable log of the Gibbs matrix: log_softmax_cols(z1 z2^T / tau).
Tensor log_gibbs(const Tensor& z1, const Tensor& z2, double tau);

/// Positives are (u_i, v_i):  -sum_i log softmax_t(<u_t, v_i>/tau)_i
Tensor info_nce(const Tensor& u, const Tensor& v, double tau,
                Reduction reduction = Reduction::kSum);

/// Cross-entropy from the teacher's Gibbs distribution to the student's:
/// -sum_{i,j} P_A[i][j] log P_B[i][j]. `za` is always treated as frozen.
Tensor cmd_loss(const Tensor& za, const Tensor& zb, double tau,
                Reduction reduction = Reduction::kSum);

/// Symmetric cross-modal contrastive loss. With `freeze_a`, no gradient
/// reaches `za`.
Tensor cmc_loss(const Tensor& za, const Tensor& zb, double tau,
                Reduction reduction = Reduction::kSum, bool freeze_a = true);

/// alpha * cmc + (1 - alpha) * cmd, alpha in [0, 1].
Tensor interpolated_loss(double alpha, const Tensor& za, const Tensor& zb,
                         double tau, Reduction reduction = Reduction::kSum);

/// Mean negative log-softmax of the true class.
Tensor ce_loss(const Tensor& logits, std::span<const int> labels);

/// Mean squared Euclidean distance between paired rows (za frozen).
Tensor l2_align_loss(const Tensor& za, const Tensor& zb);

/// |mean(za) - mean(zb)|^2 + |var(za) - var(zb)|^2 over the batch axis,
/// unbiased variance (za frozen).
Tensor stats_align_loss(const Tensor& za, const Tensor& zb);

/// Column entropies of the teacher Gibbs matrix, summed: sum_j H(P[:, j]).
double gibbs_entropy(const GibbsMatrix& g);

}  // namespace cmcd
