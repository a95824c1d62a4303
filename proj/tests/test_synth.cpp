#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "cmcd/container.hpp"
#include "cmcd/errors.hpp"
#include "cmcd/stats.hpp"
#include "cmcd/synth.hpp"

using namespace cmcd;
namespace fs = std::filesystem;

namespace {

GeneratorConfig small(double gap = 0.0, std::uint64_t seed = 3) {
  GeneratorConfig c;
  c.n_source = 200;
  c.n_paired = 400;
  c.n_target = 50;
  c.n_test = 100;
  c.gap = gap;
  c.seed = seed;
  return c;
}

fs::path temp_file(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "cmcd-test-synth";
  fs::create_directories(dir);
  return dir / name;
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void write_bytes(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  out << s;
}

}  // namespace

TEST(Generate, ZeroGapSharesTheLatent) {
  const auto b = generate(small(0.0));
  EXPECT_EQ(b.paired.latent_a, b.paired.latent_b);
}

TEST(Generate, FullGapDecouplesLabelsFromTarget) {
  auto c = small(1.0);
  c.n_paired = 2000;
  const auto b = generate(c);
  std::vector<double> y(b.paired.labels.begin(), b.paired.labels.end());
  for (std::size_t j = 0; j < b.paired.xb.cols; ++j) {
    std::vector<double> col(b.paired.xb.rows);
    for (std::size_t i = 0; i < col.size(); ++i) col[i] = b.paired.xb(i, j);
    EXPECT_LT(std::fabs(pearson(y, col)), 0.1) << "coordinate " << j;
  }
}

TEST(Generate, SourceLabelsAreInformativeAtAnyGap) {
  // Sanity check on the generator itself: x_A depends on the class.
  const auto b = generate(small(1.0));
  std::vector<double> y(b.paired.labels.begin(), b.paired.labels.end());
  double best = 0.0;
  for (std::size_t j = 0; j < b.paired.xa.cols; ++j) {
    std::vector<double> col(b.paired.xa.rows);
    for (std::size_t i = 0; i < col.size(); ++i) col[i] = b.paired.xa(i, j);
    best = std::max(best, std::fabs(pearson(y, col)));
  }
  EXPECT_GT(best, 0.1);
}

TEST(Generate, SameSeedSameBundle) {
  EXPECT_TRUE(generate(small(0.3)) == generate(small(0.3)));
  EXPECT_FALSE(generate(small(0.3, 3)) == generate(small(0.3, 4)));
}

TEST(Generate, SourceModalityDoesNotDependOnGap) {
  const auto a = generate(small(0.0)), b = generate(small(0.7));
  EXPECT_EQ(a.source, b.source);
  EXPECT_EQ(a.paired.xa, b.paired.xa);
  EXPECT_EQ(a.paired.labels, b.paired.labels);
  EXPECT_NE(a.paired.xb, b.paired.xb);
}

TEST(Generate, PairsRegenerateFromStoredLatents) {
  const auto c = small(0.4);
  const auto b = generate(c);
  for (std::size_t i = 0; i < b.paired.size(); i += 37) {
    const auto [xa, xb] = regenerate_pair(c, b.paired.ids[i], b.paired.latent_a.row(i),
                                          b.paired.latent_b.row(i));
    EXPECT_TRUE(std::equal(xa.begin(), xa.end(), b.paired.xa.row(i).begin())) << i;
    EXPECT_TRUE(std::equal(xb.begin(), xb.end(), b.paired.xb.row(i).begin())) << i;
  }
}

TEST(Generate, TargetLabelsAreBalanced) {
  const auto b = generate(small());
  std::vector<int> count(10, 0);
  for (int y : b.target_labeled.labels) ++count[static_cast<std::size_t>(y)];
  for (int n : count) EXPECT_EQ(n, 5);
}

TEST(Generate, ShapesFollowConfig) {
  const auto b = generate(small());
  EXPECT_EQ(b.source.rows, 200u);
  EXPECT_EQ(b.source.cols, 32u);
  EXPECT_EQ(b.paired.xb.rows, 400u);
  EXPECT_EQ(b.paired.latent_a.cols, 8u);
  EXPECT_EQ(b.target_test.size(), 100u);
}

TEST(Generate, SingleModeRecoversOneClusterPerClass) {
  auto c = small();
  c.modes_per_class = 1;
  c.latent_std = 0.0;
  const auto b = generate(c);
  // Without within-class noise every latent of a class is the class mean.
  std::vector<std::vector<double>> first(10);
  for (std::size_t i = 0; i < b.paired.size(); ++i) {
    auto& f = first[static_cast<std::size_t>(b.paired.labels[i])];
    const auto row = b.paired.latent_a.row(i);
    if (f.empty()) f.assign(row.begin(), row.end());
    else EXPECT_TRUE(std::equal(f.begin(), f.end(), row.begin()));
  }
}

TEST(Generate, InvalidConfigsAreRejected) {
  auto c = small();
  c.gap = 1.5;
  EXPECT_THROW(generate(c), ConfigError);
  c = small();
  c.n_target = 55;
  EXPECT_THROW(generate(c), ConfigError);
  c = small();
  c.modes_per_class = 0;
  EXPECT_THROW(generate(c), ConfigError);
  c = small();
  c.n_paired = 0;
  EXPECT_THROW(generate(c), ConfigError);
}

TEST(Augment, ZeroSettingsAreIdentity) {
  const auto x = generate(small()).target_test.x;
  EXPECT_EQ(augment(x, 1, {0.0, 0.0}), x);
}

TEST(Augment, FullMaskZeroesEverything) {
  const auto x = generate(small()).target_test.x;
  for (double v : augment(x, 1, {0.1, 1.0}).data) EXPECT_EQ(v, 0.0);
}

TEST(Augment, MaskFractionConcentrates) {
  const Matrix x(100, 100, 1.0);
  const auto y = augment(x, 9, {0.0, 0.2});
  const auto zeros = std::count(y.data.begin(), y.data.end(), 0.0);
  EXPECT_GE(zeros, 1800);
  EXPECT_LE(zeros, 2200);
}

TEST(Augment, SeedDeterminesOutput) {
  const auto x = generate(small()).target_test.x;
  EXPECT_EQ(augment(x, 5), augment(x, 5));
  EXPECT_NE(augment(x, 5), augment(x, 6));
}

TEST(SubsamplePaired, SizesAndIdentity) {
  auto c = small();
  c.n_paired = 2000;
  const auto b = generate(c);
  EXPECT_TRUE(subsample_paired(b, 1.0, 1) == b);
  EXPECT_EQ(subsample_paired(b, 0.2, 1).paired.size(), 400u);
  EXPECT_EQ(subsample_paired(b, 0.05, 1).paired.size(), 100u);
  EXPECT_EQ(subsample_paired(b, 0.0001, 1).paired.size(), 1u);
}

TEST(SubsamplePaired, UniformSubsetWithoutReplacement) {
  const auto b = generate(small());
  const auto s = subsample_paired(b, 0.3, 7);
  std::set<int> ids(s.paired.ids.begin(), s.paired.ids.end());
  EXPECT_EQ(ids.size(), s.paired.size());
  for (std::size_t i = 0; i < s.paired.size(); ++i) {
    const auto it = std::find(b.paired.ids.begin(), b.paired.ids.end(), s.paired.ids[i]);
    ASSERT_NE(it, b.paired.ids.end());
    const auto k = static_cast<std::size_t>(it - b.paired.ids.begin());
    EXPECT_TRUE(std::equal(s.paired.xb.row(i).begin(), s.paired.xb.row(i).end(),
                           b.paired.xb.row(k).begin()));
  }
  EXPECT_TRUE(subsample_paired(b, 0.3, 7) == s);
  EXPECT_FALSE(subsample_paired(b, 0.3, 8) == s);
  EXPECT_EQ(s.target_labeled.x, b.target_labeled.x);
}

TEST(SubsamplePaired, RatioOutsideRangeIsRejected) {
  const auto b = generate(small());
  EXPECT_THROW(subsample_paired(b, 0.0, 1), ConfigError);
  EXPECT_THROW(subsample_paired(b, 1.5, 1), ConfigError);
}

TEST(SubsampleLabels, CountsPerClass) {
  const auto b = generate(small());
  for (std::size_t n : {1u, 3u}) {
    const auto s = subsample_labels(b, n, 2);
    EXPECT_EQ(s.target_labeled.size(), 10 * n);
    std::vector<std::size_t> count(10, 0);
    for (int y : s.target_labeled.labels) ++count[static_cast<std::size_t>(y)];
    for (auto k : count) EXPECT_EQ(k, n);
    EXPECT_EQ(s.target_test.x, b.target_test.x);
  }
  EXPECT_TRUE(subsample_labels(b, 5, 2) == b);
  EXPECT_THROW(subsample_labels(b, 6, 2), ConfigError);
  EXPECT_THROW(subsample_labels(b, 0, 2), ConfigError);
}

TEST(Bundle, SaveLoadRoundTrip) {
  const auto b = generate(small(0.25));
  const auto p = temp_file("bundle.bin");
  save_bundle(b, p);
  EXPECT_TRUE(load_bundle(p) == b);
  const auto q = temp_file("bundle2.bin");
  save_bundle(load_bundle(p), q);
  EXPECT_EQ(read_bytes(p), read_bytes(q));
}

TEST(Bundle, TruncatedFileIsAFormatError) {
  const auto p = temp_file("full.bin");
  save_bundle(generate(small()), p);
  const auto bytes = read_bytes(p);
  for (std::size_t cut : {std::size_t{0}, std::size_t{5}, std::size_t{12}, std::size_t{100},
                          bytes.size() - 1}) {
    const auto t = temp_file("cut.bin");
    write_bytes(t, bytes.substr(0, cut));
    EXPECT_THROW(load_bundle(t), FormatError) << "cut at " << cut;
  }
}

TEST(Bundle, MissingFileIsAFormatError) {
  EXPECT_THROW(load_bundle(temp_file("does-not-exist.bin")), FormatError);
}

TEST(Bundle, InconsistentSectionIsADimensionError) {
  const auto b = generate(small());
  const auto p = temp_file("ok.bin");
  save_bundle(b, p);
  const auto c = Container::load(p);
  Container bad(c.kind());
  bad.meta() = c.meta();
  for (const auto& a : c.arrays()) {
    if (a.name == "paired/xb") {
      Matrix m = c.matrix(a.name);
      m.data.resize((m.rows - 1) * m.cols);
      m.rows -= 1;
      bad.add(a.name, m);
    } else if (a.is_integer) {
      bad.add_labels(a.name, c.labels(a.name));
    } else {
      bad.add(a.name, c.matrix(a.name));
    }
  }
  const auto q = temp_file("bad.bin");
  bad.save(q);
  EXPECT_THROW(load_bundle(q), DimensionError);
}

TEST(Bundle, DeclaredShapeDisagreeingWithPayloadIsAShapeError) {
  Container c("dataset");
  c.add("a", Matrix(2, 3, 1.0));
  std::string bytes = c.to_bytes();
  const auto pos = bytes.find("\"shape\"");
  ASSERT_NE(pos, std::string::npos);
  const auto three = bytes.find('3', pos);
  bytes[three] = '4';
  EXPECT_THROW(Container::from_bytes(bytes), DimensionError);
}

TEST(Bundle, WrongKindIsRejected) {
  Container c("encoder");
  const auto p = temp_file("enc.bin");
  c.save(p);
  EXPECT_THROW(load_bundle(p), FormatError);
}
