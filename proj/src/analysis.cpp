#include "cmcd/analysis.hpp"

#include <algorithm>
#include <cmath>

#include "cmcd/errors.hpp"
#include "cmcd/losses.hpp"
#include "cmcd/rng.hpp"

namespace cmcd {

std::vector<double> column_tv(const Matrix& p, const Matrix& q) {
  if (p.rows != q.rows || p.cols != q.cols) {
    throw DimensionError("column_tv: matrices differ in shape");
  }
  std::vector<double> tv(p.cols, 0.0);
  for (std::size_t i = 0; i < p.rows; ++i)
    for (std::size_t j = 0; j < p.cols; ++j) tv[j] += std::abs(p(i, j) - q(i, j));
  for (auto& t : tv) t *= 0.5;
  return tv;
}

double estimate_tv(const EncoderParams& a, const Matrix& xa, const EncoderParams& b,
                   const Matrix& xb, const TvOptions& options) {
  if (options.batch_size < 2) throw ConfigError("estimate_tv: batch_size must be >= 2");
  if (options.n_batches == 0) throw ConfigError("estimate_tv: n_batches must be positive");
  if (xa.rows != xb.rows) throw DimensionError("estimate_tv: inputs differ in row count");
  if (xa.rows < 2) throw ConfigError("estimate_tv: need at least 2 rows");
  const Matrix za = embed(a, xa);
  const Matrix zb = embed(b, xb);
  const std::size_t bs = std::min(options.batch_size, xa.rows);
  Rng rng(derive_seed(options.seed, "estimate_tv"));
  double total = 0.0;
  for (std::size_t k = 0; k < options.n_batches; ++k) {
    auto perm = rng.permutation(xa.rows);
    std::span<const std::size_t> idx(perm.data(), bs);
    const Matrix ba = select_rows(za, idx);
    const Matrix bb = select_rows(zb, idx);
    const auto pa = gibbs_matrix(ba, ba, options.tau);
    const auto pb = gibbs_matrix(bb, bb, options.tau);
    double batch = 0.0;
    for (double t : column_tv(pa.p, pb.p)) batch += t;
    total += batch / static_cast<double>(bs);
  }
  return std::clamp(total / static_cast<double>(options.n_batches), 0.0, 1.0);
}

double estimate_tv(const EncoderParams& enc_a, const EncoderParams& enc_b,
                   const PairedSet& paired, const TvOptions& options) {
  return estimate_tv(enc_a, paired.xa, enc_b, paired.xb, options);
}

namespace {

// Column-stochastic Gibbs matrix of a two-point batch, graph-free.
void gibbs2(std::span<const double> z0, std::span<const double> z1, double tau,
            double p[2][2]) {
  auto dot = [](std::span<const double> x, std::span<const double> y) {
    double s = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) s += x[k] * y[k];
    return s;
  };
  const double s00 = dot(z0, z0) / tau, s01 = dot(z0, z1) / tau, s11 = dot(z1, z1) / tau;
  const double s[2][2] = {{s00, s01}, {s01, s11}};
  for (int j = 0; j < 2; ++j) {
    const double mx = std::max(s[0][j], s[1][j]);
    const double e0 = std::exp(s[0][j] - mx), e1 = std::exp(s[1][j] - mx);
    p[0][j] = e0 / (e0 + e1);
    p[1][j] = e1 / (e0 + e1);
  }
}

}  // namespace

KappaEstimate estimate_kappa(const EncoderParams& phi, const EncoderParams& phi_star,
                             const HeadParams& psi_star, const LabeledSet& data,
                             const KappaOptions& options) {
  if (data.size() == 0) throw ConfigError("estimate_kappa: empty sample");
  if (!(options.tau > 0.0)) throw ConfigError("estimate_kappa: tau must be positive");
  const std::size_t n = std::min(options.sample_size, data.size());
  Rng rng(derive_seed(options.seed, "estimate_kappa"));
  auto perm = rng.permutation(data.size());
  std::vector<std::size_t> idx(perm.begin(), perm.begin() + static_cast<long>(n));

  const Matrix x = select_rows(data.x, idx);
  const Matrix z = embed(phi, x);
  const Matrix zs = embed(phi_star, x);
  const Matrix logits = predict_logits(psi_star, z);

  KappaEstimate est;
  est.samples = n;
  est.value = -1.0;
  for (std::size_t i = 0; i < n; ++i) {
    // Numerator: single-sample cross-entropy.
    auto row = logits.row(i);
    const double mx = *std::max_element(row.begin(), row.end());
    double s = 0.0;
    for (double v : row) s += std::exp(v - mx);
    const int y = data.labels[idx[i]];
    const double ce = mx + std::log(s) - row[static_cast<std::size_t>(y)];

    double den = 0.0;
    if (n > 1) {
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        double pa[2][2], pb[2][2];
        gibbs2(zs.row(i), zs.row(j), options.tau, pa);
        gibbs2(z.row(i), z.row(j), options.tau, pb);
        double cmd = 0.0;
        // 0 log 0 = 0: at small tau the off-diagonal mass underflows.
        for (int r = 0; r < 2; ++r)
          for (int c = 0; c < 2; ++c)
            if (pa[r][c] > 0.0) cmd -= pa[r][c] * std::log(pb[r][c]);
        den += cmd;
      }
      den /= static_cast<double>(n - 1);
    }
    if (!(den >= options.floor)) {
      den = options.floor;
      est.undefined = true;
    }
    const double ratio = ce / den;
    if (ratio > est.value) {
      est.value = ratio;
      est.argmax = i;
    }
  }
  return est;
}

Deltas compute_deltas(const std::map<std::string, double>& accuracy) {
  auto get = [&](const char* key) {
    auto it = accuracy.find(key);
    if (it == accuracy.end()) {
      throw ConfigError(std::string("compute_deltas: missing method '") + key + "'");
    }
    return it->second;
  };
  return {get("CMD+LE") - get("SSL+LE"), get("CMD+FT") - get("SupFT")};
}

}  // namespace cmcd
