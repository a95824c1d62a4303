#include "cmcd/losses.hpp"

#include <cmath>
#include <string>

#include "cmcd/errors.hpp"

namespace cmcd {

namespace {

void check_tau(double tau) {
  if (!(tau > 0.0) || !std::isfinite(tau)) {
    throw ConfigError("temperature tau must be positive, got " + std::to_string(tau));
  }
}

void check_pair(const Tensor& a, const Tensor& b, const char* op) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": embedding batches must have equal "
                                           "2-d shapes");
  }
}

Tensor reduce(const Tensor& total, std::size_t m, Reduction r) {
  return r == Reduction::kSum ? total : scale(total, 1.0 / static_cast<double>(m));
}

Tensor column_variance(const Tensor& z) {
  const double m = static_cast<double>(z.rows());
  Tensor centered = add_row_vector(z, scale(column_mean(z), -1.0));
  return scale(column_mean(square(centered)), m / (m - 1.0));
}

}  // namespace

Tensor log_gibbs(const Tensor& z1, const Tensor& z2, double tau) {
  check_tau(tau);
  check_pair(z1, z2, "gibbs");
  return log_softmax_cols(scale(matmul(z1, transpose(z2)), 1.0 / tau));
}

GibbsMatrix gibbs_matrix(const Matrix& z1, const Matrix& z2, double tau) {
  Tensor lp = log_gibbs(Tensor::from_matrix(z1), Tensor::from_matrix(z2), tau);
  Matrix p = lp.to_matrix();
  for (auto& x : p.data) x = std::exp(x);
  return {std::move(p), tau};
}

double gibbs_entropy(const GibbsMatrix& g) {
  double h = 0.0;
  for (double x : g.p.data) {
    if (x > 0.0) h -= x * std::log(x);
  }
  return h;
}

Tensor info_nce(const Tensor& u, const Tensor& v, double tau, Reduction reduction) {
  check_pair(u, v, "info_nce");
  if (u.rows() < 2) throw DimensionError("info_nce: needs at least 2 rows (negatives)");
  Tensor lp = log_gibbs(u, v, tau);
  return reduce(scale(sum(diagonal(lp)), -1.0), u.rows(), reduction);
}

Tensor cmd_loss(const Tensor& za, const Tensor& zb, double tau, Reduction reduction) {
  check_pair(za, zb, "cmd_loss");
  Tensor teacher = za.detach();
  Tensor pa = exp(log_gibbs(teacher, teacher, tau));
  Tensor lpb = log_gibbs(zb, zb, tau);
  return reduce(scale(sum(mul(pa, lpb)), -1.0), za.rows(), reduction);
}

Tensor cmc_loss(const Tensor& za, const Tensor& zb, double tau, Reduction reduction,
                bool freeze_a) {
  check_pair(za, zb, "cmc_loss");
  if (za.rows() < 2) throw DimensionError("cmc_loss: needs at least 2 rows");
  Tensor a = freeze_a ? za.detach() : za;
  Tensor total = add(info_nce(a, zb, tau), info_nce(zb, a, tau));
  return reduce(total, za.rows(), reduction);
}

Tensor interpolated_loss(double alpha, const Tensor& za, const Tensor& zb,
                         double tau, Reduction reduction) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw ConfigError("interpolation weight alpha must lie in [0, 1], got " +
                      std::to_string(alpha));
  }
  return add(scale(cmc_loss(za, zb, tau, reduction), alpha),
             scale(cmd_loss(za, zb, tau, reduction), 1.0 - alpha));
}

Tensor ce_loss(const Tensor& logits, std::span<const int> labels) {
  if (logits.ndim() != 2) throw DimensionError("ce_loss: logits must be 2-d");
  Tensor lp = log_softmax_rows(logits);
  return scale(sum(pick_per_row(lp, labels)),
               -1.0 / static_cast<double>(logits.rows()));
}

Tensor l2_align_loss(const Tensor& za, const Tensor& zb) {
  check_pair(za, zb, "l2_align_loss");
  Tensor diff = sub(zb, za.detach());
  return scale(sum(square(diff)), 1.0 / static_cast<double>(za.rows()));
}

Tensor stats_align_loss(const Tensor& za, const Tensor& zb) {
  check_pair(za, zb, "stats_align_loss");
  if (za.rows() < 2) {
    throw DimensionError("stats_align_loss: batch size < 2, variance undefined");
  }
  Tensor a = za.detach();
  Tensor dmean = sub(column_mean(a), column_mean(zb));
  Tensor dvar = sub(column_variance(a), column_variance(zb));
  return add(sum(square(dmean)), sum(square(dvar)));
}

}  // namespace cmcd
