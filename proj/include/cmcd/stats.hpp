#pragma once

#include <span>
#include <vector>

namespace cmcd {

double mean(std::span<const double> v);
/// Sample standard deviation (n - 1); 0 for fewer than two values.
double sample_std(std::span<const double> v);
/// 1-based ranks; tied values share the average of their ranks.
std::vector<double> ranks(std::span<const double> v);
double pearson(std::span<const double> x, std::span<const double> y);
/// Pearson correlation of the ranks. NaN when either side is constant.
double spearman(std::span<const double> x, std::span<const double> y);

}  // namespace cmcd
