#include "cmcd/synth.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cmcd/container.hpp"
#include "cmcd/errors.hpp"
#include "cmcd/rng.hpp"

namespace cmcd {

void GeneratorConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw ConfigError("data." + field + ": " + why);
  };
  if (num_classes < 2) fail("num_classes", "must be at least 2");
  if (modes_per_class < 1) fail("modes_per_class", "must be at least 1");
  if (latent_dim == 0) fail("latent_dim", "must be positive");
  if (dim_a == 0) fail("dim_a", "must be positive");
  if (dim_b == 0) fail("dim_b", "must be positive");
  if (!(class_mean_scale >= 0.0)) fail("class_mean_scale", "must be nonnegative");
  if (!(latent_std >= 0.0)) fail("latent_std", "must be nonnegative");
  if (!(noise_std >= 0.0)) fail("noise_std", "must be nonnegative");
  if (!(gap >= 0.0 && gap <= 1.0)) fail("gap", "must lie in [0, 1], got " + std::to_string(gap));
  if (n_source == 0) fail("n_source", "must be positive");
  if (n_paired == 0) fail("n_paired", "must be positive");
  if (n_target == 0) fail("n_target", "must be positive");
  if (n_test == 0) fail("n_test", "must be positive");
  if (n_target % static_cast<std::size_t>(num_classes) != 0) {
    fail("n_target", "must be divisible by num_classes for balanced sampling");
  }
}

nlohmann::json GeneratorConfig::to_json() const {
  return {{"num_classes", num_classes}, {"modes_per_class", modes_per_class},
          {"latent_dim", latent_dim},
          {"dim_a", dim_a},             {"dim_b", dim_b},
          {"class_mean_scale", class_mean_scale},
          {"latent_std", latent_std},   {"noise_std", noise_std},
          {"gap", gap},                 {"n_source", n_source},
          {"n_paired", n_paired},       {"n_target", n_target},
          {"n_test", n_test},           {"seed", seed}};
}

GeneratorConfig GeneratorConfig::from_json(const nlohmann::json& j) {
  GeneratorConfig c;
  c.num_classes = j.at("num_classes").get<int>();
  c.modes_per_class = j.at("modes_per_class").get<int>();
  c.latent_dim = j.at("latent_dim").get<std::size_t>();
  c.dim_a = j.at("dim_a").get<std::size_t>();
  c.dim_b = j.at("dim_b").get<std::size_t>();
  c.class_mean_scale = j.at("class_mean_scale").get<double>();
  c.latent_std = j.at("latent_std").get<double>();
  c.noise_std = j.at("noise_std").get<double>();
  c.gap = j.at("gap").get<double>();
  c.n_source = j.at("n_source").get<std::size_t>();
  c.n_paired = j.at("n_paired").get<std::size_t>();
  c.n_target = j.at("n_target").get<std::size_t>();
  c.n_test = j.at("n_test").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

bool DatasetBundle::operator==(const DatasetBundle& o) const {
  auto same_paired = [](const PairedSet& a, const PairedSet& b) {
    return a.xa == b.xa && a.xb == b.xb && a.latent_a == b.latent_a &&
           a.latent_b == b.latent_b && a.labels == b.labels && a.ids == b.ids;
  };
  auto same_labeled = [](const LabeledSet& a, const LabeledSet& b) {
    return a.x == b.x && a.labels == b.labels;
  };
  return config == o.config && source == o.source &&
         source_labels == o.source_labels && same_paired(paired, o.paired) &&
         same_labeled(target_labeled, o.target_labeled) &&
         same_labeled(target_test, o.target_test);
}

namespace {

struct Structure {
  Matrix class_means;  // [K * modes x d_z], row y * modes + mode
  Matrix mix_a;        // [d_A x d_z]
  Matrix mix_b;        // [d_B x d_z]
};

Structure make_structure(const GeneratorConfig& c) {
  Rng rng(derive_seed(c.seed, "structure"));
  const auto modes = static_cast<std::size_t>(c.num_classes * c.modes_per_class);
  Structure s{Matrix(modes, c.latent_dim), Matrix(c.dim_a, c.latent_dim),
              Matrix(c.dim_b, c.latent_dim)};
  // Mode centers sit on the sphere of radius class_mean_scale.
  for (std::size_t k = 0; k < modes; ++k) {
    auto mu = s.class_means.row(k);
    double norm = 0.0;
    for (auto& x : mu) {
      x = rng.normal();
      norm += x * x;
    }
    norm = std::sqrt(norm);
    for (auto& x : mu) x *= c.class_mean_scale / norm;
  }
  const double wscale = 1.0 / std::sqrt(static_cast<double>(c.latent_dim));
  for (auto& w : s.mix_a.data) w = wscale * rng.normal();
  for (auto& w : s.mix_b.data) w = wscale * rng.normal();
  return s;
}

void observe(const Matrix& mix, std::span<const double> latent,
             std::span<const double> noise, double noise_std, std::span<double> out) {
  for (std::size_t r = 0; r < mix.rows; ++r) {
    double acc = 0.0;
    for (std::size_t k = 0; k < mix.cols; ++k) acc += mix(r, k) * latent[k];
    out[r] = std::tanh(acc) + noise_std * noise[r];
  }
}

struct Draw {
  int label = 0;
  std::vector<double> z, z_b, x_a, x_b;
};

struct Noise {
  std::vector<double> eps, u, eta_a, eta_b;
};

// Fixed draw order per sample: class, mode, eps, u, eta_a, eta_b.
Noise draw_noise(const GeneratorConfig& c, Rng& rng) {
  Noise n{std::vector<double>(c.latent_dim), std::vector<double>(c.latent_dim),
          std::vector<double>(c.dim_a), std::vector<double>(c.dim_b)};
  for (auto* v : {&n.eps, &n.u, &n.eta_a, &n.eta_b}) {
    for (auto& x : *v) x = rng.normal();
  }
  return n;
}

// label < 0 draws the class uniformly from the sample's own stream.
Draw draw_sample(const GeneratorConfig& c, const Structure& s, std::string_view split,
                 std::size_t index, int label) {
  Rng rng(derive_seed(c.seed, split, index));
  const int drawn = static_cast<int>(rng.below(static_cast<std::size_t>(c.num_classes)));
  const int mode = static_cast<int>(rng.below(static_cast<std::size_t>(c.modes_per_class)));
  Draw d;
  d.label = label < 0 ? drawn : label;
  Noise n = draw_noise(c, rng);
  d.z.resize(c.latent_dim);
  d.z_b.resize(c.latent_dim);
  auto mu = s.class_means.row(
      static_cast<std::size_t>(d.label * c.modes_per_class + mode));
  for (std::size_t k = 0; k < c.latent_dim; ++k) {
    d.z[k] = mu[k] + c.latent_std * n.eps[k];
    d.z_b[k] = (1.0 - c.gap) * d.z[k] + c.gap * n.u[k];
  }
  d.x_a.resize(c.dim_a);
  d.x_b.resize(c.dim_b);
  observe(s.mix_a, d.z, n.eta_a, c.noise_std, d.x_a);
  observe(s.mix_b, d.z_b, n.eta_b, c.noise_std, d.x_b);
  return d;
}

void put_row(Matrix& m, std::size_t r, const std::vector<double>& v) {
  std::copy(v.begin(), v.end(), m.row(r).begin());
}

}  // namespace

DatasetBundle generate(const GeneratorConfig& config) {
  config.validate();
  const Structure s = make_structure(config);
  const auto& c = config;
  DatasetBundle b;
  b.config = c;

  b.source = Matrix(c.n_source, c.dim_a);
  b.source_labels.resize(c.n_source);
  for (std::size_t i = 0; i < c.n_source; ++i) {
    auto d = draw_sample(c, s, "source", i, -1);
    put_row(b.source, i, d.x_a);
    b.source_labels[i] = d.label;
  }

  auto& p = b.paired;
  p.xa = Matrix(c.n_paired, c.dim_a);
  p.xb = Matrix(c.n_paired, c.dim_b);
  p.latent_a = Matrix(c.n_paired, c.latent_dim);
  p.latent_b = Matrix(c.n_paired, c.latent_dim);
  p.labels.resize(c.n_paired);
  p.ids.resize(c.n_paired);
  for (std::size_t i = 0; i < c.n_paired; ++i) {
    auto d = draw_sample(c, s, "paired", i, -1);
    put_row(p.xa, i, d.x_a);
    put_row(p.xb, i, d.x_b);
    put_row(p.latent_a, i, d.z);
    put_row(p.latent_b, i, d.z_b);
    p.labels[i] = d.label;
    p.ids[i] = static_cast<int>(i);
  }

  auto fill_labeled = [&](LabeledSet& set, std::string_view split, std::size_t n) {
    set.x = Matrix(n, c.dim_b);
    set.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const int label = static_cast<int>(i % static_cast<std::size_t>(c.num_classes));
      auto d = draw_sample(c, s, split, i, label);
      put_row(set.x, i, d.x_b);
      set.labels[i] = label;
    }
  };
  fill_labeled(b.target_labeled, "target", c.n_target);
  fill_labeled(b.target_test, "test", c.n_test);
  return b;
}

std::pair<std::vector<double>, std::vector<double>> regenerate_pair(
    const GeneratorConfig& config, int id, std::span<const double> latent_a,
    std::span<const double> latent_b) {
  const Structure s = make_structure(config);
  Rng rng(derive_seed(config.seed, "paired", static_cast<std::uint64_t>(id)));
  rng.below(static_cast<std::size_t>(config.num_classes));
  rng.below(static_cast<std::size_t>(config.modes_per_class));
  Noise n = draw_noise(config, rng);
  std::vector<double> xa(config.dim_a), xb(config.dim_b);
  observe(s.mix_a, latent_a, n.eta_a, config.noise_std, xa);
  observe(s.mix_b, latent_b, n.eta_b, config.noise_std, xb);
  return {std::move(xa), std::move(xb)};
}

Matrix augment(const Matrix& x, std::uint64_t seed, const AugmentConfig& config) {
  Rng rng(seed);
  Matrix out = x;
  for (auto& v : out.data) {
    const bool masked = rng.uniform() < config.mask_prob;
    const double noise = rng.normal();
    v = masked ? 0.0 : v + config.noise_std * noise;
  }
  return out;
}

DatasetBundle subsample_paired(const DatasetBundle& bundle, double ratio,
                               std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio <= 1.0)) {
    throw ConfigError("paired ratio must lie in (0, 1], got " + std::to_string(ratio));
  }
  const std::size_t m = bundle.paired.size();
  // The small slack keeps e.g. 0.2 * 2000 at 400 despite binary rounding.
  const auto keep = static_cast<std::size_t>(
      std::ceil(ratio * static_cast<double>(m) - 1e-9));
  if (keep == 0) throw ConfigError("paired ratio keeps 0 pairs");

  Rng rng(derive_seed(seed, "subsample_paired"));
  auto perm = rng.permutation(m);
  std::vector<std::size_t> idx(perm.begin(), perm.begin() + static_cast<long>(keep));
  std::sort(idx.begin(), idx.end());

  DatasetBundle out = bundle;
  const auto& p = bundle.paired;
  auto& q = out.paired;
  q.xa = select_rows(p.xa, idx);
  q.xb = select_rows(p.xb, idx);
  q.latent_a = select_rows(p.latent_a, idx);
  q.latent_b = select_rows(p.latent_b, idx);
  q.labels.clear();
  q.ids.clear();
  for (auto i : idx) {
    q.labels.push_back(p.labels[i]);
    q.ids.push_back(p.ids[i]);
  }
  return out;
}

DatasetBundle subsample_labels(const DatasetBundle& bundle, std::size_t n_per_class,
                               std::uint64_t seed) {
  const auto& t = bundle.target_labeled;
  const int k = bundle.config.num_classes;
  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < t.size(); ++i) {
    by_class[static_cast<std::size_t>(t.labels[i])].push_back(i);
  }
  if (n_per_class == 0) throw ConfigError("n_per_class must be positive");
  Rng rng(derive_seed(seed, "subsample_labels"));
  std::vector<std::size_t> idx;
  for (int cls = 0; cls < k; ++cls) {
    const auto& members = by_class[static_cast<std::size_t>(cls)];
    if (members.size() < n_per_class) {
      throw ConfigError("class " + std::to_string(cls) + " has only " +
                        std::to_string(members.size()) + " labeled samples, " +
                        std::to_string(n_per_class) + " requested");
    }
    auto perm = rng.permutation(members.size());
    for (std::size_t j = 0; j < n_per_class; ++j) idx.push_back(members[perm[j]]);
  }
  std::sort(idx.begin(), idx.end());
  DatasetBundle out = bundle;
  out.target_labeled.x = select_rows(t.x, idx);
  out.target_labeled.labels.clear();
  for (auto i : idx) out.target_labeled.labels.push_back(t.labels[i]);
  return out;
}

void save_bundle(const DatasetBundle& b, const std::filesystem::path& path) {
  Container c("dataset");
  c.meta()["config"] = b.config.to_json();
  c.add("source/x", b.source);
  c.add_labels("source/labels", b.source_labels);
  c.add("paired/xa", b.paired.xa);
  c.add("paired/xb", b.paired.xb);
  c.add("paired/latent_a", b.paired.latent_a);
  c.add("paired/latent_b", b.paired.latent_b);
  c.add_labels("paired/labels", b.paired.labels);
  c.add_labels("paired/ids", b.paired.ids);
  c.add("target/x", b.target_labeled.x);
  c.add_labels("target/labels", b.target_labeled.labels);
  c.add("test/x", b.target_test.x);
  c.add_labels("test/labels", b.target_test.labels);
  c.save(path);
}

DatasetBundle load_bundle(const std::filesystem::path& path) {
  Container c = Container::load(path);
  if (c.kind() != "dataset") {
    throw FormatError("'" + path.string() + "' holds a '" + c.kind() +
                      "' container, expected 'dataset'");
  }
  DatasetBundle b;
  try {
    b.config = GeneratorConfig::from_json(c.meta().at("config"));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed section 'meta/config': ") + e.what());
  }
  b.source = c.matrix("source/x");
  b.source_labels = c.labels("source/labels");
  b.paired.xa = c.matrix("paired/xa");
  b.paired.xb = c.matrix("paired/xb");
  b.paired.latent_a = c.matrix("paired/latent_a");
  b.paired.latent_b = c.matrix("paired/latent_b");
  b.paired.labels = c.labels("paired/labels");
  b.paired.ids = c.labels("paired/ids");
  b.target_labeled.x = c.matrix("target/x");
  b.target_labeled.labels = c.labels("target/labels");
  b.target_test.x = c.matrix("test/x");
  b.target_test.labels = c.labels("test/labels");
  if (b.paired.xa.rows != b.paired.xb.rows || b.paired.labels.size() != b.paired.xa.rows) {
    throw DimensionError("section 'paired': row counts disagree");
  }
  if (b.target_labeled.labels.size() != b.target_labeled.x.rows ||
      b.target_test.labels.size() != b.target_test.x.rows) {
    throw DimensionError("section 'target': label count does not match rows");
  }
  return b;
}

}  // namespace cmcd
