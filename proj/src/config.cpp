#include "cmcd/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "cmcd/container.hpp"
#include "cmcd/errors.hpp"

namespace cmcd {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(std::string_view s) {
  s = trim(s);
  T v{};
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (s.empty() || ec != std::errc() || ptr != end) {
    throw ConfigError("'" + std::string(s) + "' is not a valid number");
  }
  return v;
}

bool parse_bool(std::string_view s) {
  s = trim(s);
  if (s == "true" || s == "on" || s == "1") return true;
  if (s == "false" || s == "off" || s == "0") return false;
  throw ConfigError("'" + std::string(s) + "' is not a boolean (true/false)");
}

template <typename T>
std::vector<T> parse_list(std::string_view s) {
  std::vector<T> out;
  s = trim(s);
  if (s.empty()) return out;
  while (true) {
    const auto comma = s.find(',');
    out.push_back(parse_number<T>(s.substr(0, comma)));
    if (comma == std::string_view::npos) break;
    s.remove_prefix(comma + 1);
  }
  return out;
}

std::string fmt(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

template <typename T>
std::string fmt_num(T v) {
  if constexpr (std::is_floating_point_v<T>) {
    return fmt(v);
  } else {
    return std::to_string(v);
  }
}

template <typename T>
std::string fmt_list(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ", ";
    out += fmt_num(v[i]);
  }
  return out;
}

struct Field {
  std::string key;
  std::function<void(std::string_view)> set;
  std::function<std::string()> get;
};

template <typename T>
Field number(std::string key, T& ref) {
  return {std::move(key), [&ref](std::string_view v) { ref = parse_number<T>(v); },
          [&ref] { return fmt_num(ref); }};
}

template <typename T>
Field list(std::string key, std::vector<T>& ref) {
  return {std::move(key), [&ref](std::string_view v) { ref = parse_list<T>(v); },
          [&ref] { return fmt_list(ref); }};
}

Field boolean(std::string key, bool& ref) {
  return {std::move(key), [&ref](std::string_view v) { ref = parse_bool(v); },
          [&ref] { return std::string(ref ? "true" : "false"); }};
}

void add_train(std::vector<Field>& f, const std::string& s, TrainConfig& t,
               bool contrastive) {
  f.push_back(number(s + ".lr", t.lr));
  f.push_back(number(s + ".beta1", t.beta1));
  f.push_back(number(s + ".beta2", t.beta2));
  f.push_back(number(s + ".epochs", t.epochs));
  f.push_back(number(s + ".batch_size", t.batch_size));
  f.push_back(list(s + ".milestones", t.milestones));
  f.push_back(number(s + ".decay_factor", t.decay_factor));
  if (contrastive) {
    f.push_back(number(s + ".tau", t.tau));
    f.push_back(boolean(s + ".augment", t.augment));
  }
}

std::vector<Field> fields(ExperimentConfig& c) {
  std::vector<Field> f;
  auto& d = c.data;
  f.push_back(number("data.num_classes", d.num_classes));
  f.push_back(number("data.modes_per_class", d.modes_per_class));
  f.push_back(number("data.latent_dim", d.latent_dim));
  f.push_back(number("data.dim_a", d.dim_a));
  f.push_back(number("data.dim_b", d.dim_b));
  f.push_back(number("data.class_mean_scale", d.class_mean_scale));
  f.push_back(number("data.latent_std", d.latent_std));
  f.push_back(number("data.noise_std", d.noise_std));
  f.push_back(number("data.gap", d.gap));
  f.push_back(number("data.n_source", d.n_source));
  f.push_back(number("data.n_paired", d.n_paired));
  f.push_back(number("data.n_target", d.n_target));
  f.push_back(number("data.n_test", d.n_test));
  f.push_back(number("data.seed", d.seed));

  auto& p = c.pipeline;
  f.push_back(list("model.hidden", p.model.hidden));
  f.push_back(number("model.embedding_dim", p.model.embedding_dim));
  f.push_back({"model.activation",
               [&p](std::string_view v) { p.model.activation = parse_activation(trim(v)); },
               [&p] { return std::string(to_string(p.model.activation)); }});
  f.push_back(number("augment.noise_std", p.augmentation.noise_std));
  f.push_back(number("augment.mask_prob", p.augmentation.mask_prob));

  add_train(f, "pretrain", p.pretrain, true);
  add_train(f, "ssl", p.ssl, true);
  add_train(f, "distill", p.distill, true);
  f.push_back({"distill.loss",
               [&p](std::string_view v) { p.distill.loss = parse_loss_kind(trim(v)); },
               [&p] { return std::string(to_string(p.distill.loss)); }});
  f.push_back(number("distill.alpha", p.distill.alpha));
  add_train(f, "linear", p.linear, false);
  add_train(f, "finetune", p.finetune, false);

  f.push_back(number("analysis.tv_batch_size", c.analysis.tv_batch_size));
  f.push_back(number("analysis.tv_batches", c.analysis.tv_batches));
  f.push_back(number("analysis.kappa_samples", c.analysis.kappa_samples));

  f.push_back(list("sweep.gaps", c.sweep.gaps));
  f.push_back(list("sweep.ratios", c.sweep.ratios));
  f.push_back(list("sweep.shots", c.sweep.shots));
  f.push_back(list("sweep.alphas", c.sweep.alphas));
  f.push_back(number("sweep.seeds", c.sweep.seeds));
  f.push_back(number("sweep.jobs", c.sweep.jobs));

  f.push_back({"output.dir", [&c](std::string_view v) { c.output.dir = trim(v); },
               [&c] { return c.output.dir; }});
  f.push_back(boolean("output.plots", c.output.plots));
  f.push_back(boolean("output.timing", c.output.timing));
  return f;
}

Field* find_field(std::vector<Field>& f, std::string_view key) {
  for (auto& x : f) {
    if (x.key == key) return &x;
  }
  return nullptr;
}

void set_field(std::vector<Field>& f, std::string_view key, std::string_view value) {
  Field* field = find_field(f, key);
  if (!field) throw ConfigError("unknown key '" + std::string(key) + "'");
  try {
    field->set(value);
  } catch (const ConfigError& e) {
    throw ConfigError(std::string(key) + ": " + e.what());
  }
}

}  // namespace

void ExperimentConfig::validate() const {
  data.validate();
  pipeline.pretrain.validate("pretrain");
  pipeline.ssl.validate("ssl");
  pipeline.distill.validate("distill");
  pipeline.linear.validate("linear");
  pipeline.finetune.validate("finetune");
  switch (pipeline.distill.loss) {
    case LossKind::kCmd:
    case LossKind::kCmc:
    case LossKind::kInterp:
    case LossKind::kL2:
    case LossKind::kStats:
      break;
    default:
      throw ConfigError(std::string("distill.loss: '") + to_string(pipeline.distill.loss) +
                        "' is not a distillation loss");
  }
  if (pipeline.model.embedding_dim == 0) {
    throw ConfigError("model.embedding_dim: must be positive");
  }
  for (auto w : pipeline.model.hidden) {
    if (w == 0) throw ConfigError("model.hidden: widths must be positive");
  }
  const auto& a = pipeline.augmentation;
  if (!(a.noise_std >= 0.0)) throw ConfigError("augment.noise_std: must be nonnegative");
  if (!(a.mask_prob >= 0.0 && a.mask_prob <= 1.0)) {
    throw ConfigError("augment.mask_prob: must lie in [0, 1]");
  }
  if (analysis.tv_batch_size < 2) throw ConfigError("analysis.tv_batch_size: must be at least 2");
  if (analysis.tv_batches == 0) throw ConfigError("analysis.tv_batches: must be positive");
  if (analysis.kappa_samples < 2) throw ConfigError("analysis.kappa_samples: must be at least 2");
  for (double g : sweep.gaps) {
    if (!(g >= 0.0 && g <= 1.0)) throw ConfigError("sweep.gaps: values must lie in [0, 1]");
  }
  for (double r : sweep.ratios) {
    if (!(r > 0.0 && r <= 1.0)) throw ConfigError("sweep.ratios: values must lie in (0, 1]");
  }
  for (auto n : sweep.shots) {
    if (n == 0) throw ConfigError("sweep.shots: values must be positive");
  }
  for (double al : sweep.alphas) {
    if (!(al >= 0.0 && al <= 1.0)) throw ConfigError("sweep.alphas: values must lie in [0, 1]");
  }
  if (sweep.seeds < 1) throw ConfigError("sweep.seeds: must be at least 1");
  if (sweep.jobs < 1) throw ConfigError("sweep.jobs: must be at least 1");
  if (output.dir.empty()) throw ConfigError("output.dir: must not be empty");
}

std::string ExperimentConfig::to_text() const {
  auto copy = *this;
  std::string out;
  for (const auto& f : fields(copy)) out += f.key + " = " + f.get() + "\n";
  return out;
}

std::string ExperimentConfig::hash() const {
  // Output location and worker count never change results.
  auto copy = *this;
  std::string text;
  for (const auto& f : fields(copy)) {
    if (f.key.rfind("output.", 0) == 0 || f.key == "sweep.jobs") continue;
    text += f.key + " = " + f.get() + "\n";
  }
  return fnv1a_hex(text);
}

ExperimentConfig parse_config(std::string_view text, const std::string& origin) {
  ExperimentConfig c;
  auto f = fields(c);
  std::set<std::string, std::less<>> seen;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line =
        text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    const auto where = origin + ":" + std::to_string(line_no) + ": ";
    if (const auto hash = line.find('#'); hash != std::string_view::npos) {
      line = line.substr(0, hash);
    }
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(where + "expected 'key = value', got '" + std::string(line) + "'");
    }
    const std::string key(trim(line.substr(0, eq)));
    if (seen.count(key)) throw ConfigError(where + "key '" + key + "' set twice");
    seen.insert(key);
    try {
      set_field(f, key, line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(origin + ": " + e.what());
  }
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string());
}

void apply_setting(ExperimentConfig& config, std::string_view key, std::string_view value) {
  auto f = fields(config);
  set_field(f, trim(key), value);
}

std::vector<std::string> config_keys() {
  ExperimentConfig c;
  std::vector<std::string> keys;
  for (const auto& f : fields(c)) keys.push_back(f.key);
  return keys;
}

}  // namespace cmcd
