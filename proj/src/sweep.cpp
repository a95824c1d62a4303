#include "cmcd/sweep.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <thread>

#include "cmcd/analysis.hpp"
#include "cmcd/checkpoint.hpp"
#include "cmcd/container.hpp"
#include "cmcd/errors.hpp"
#include "cmcd/pipeline.hpp"
#include "cmcd/synth.hpp"

namespace cmcd {

const char* to_string(SweepKind k) {
  switch (k) {
    case SweepKind::kGap: return "gap";
    case SweepKind::kPaired: return "paired";
    case SweepKind::kFewShot: return "fewshot";
    case SweepKind::kAlpha: return "alpha";
  }
  return "?";
}

SweepKind parse_sweep_kind(std::string_view s) {
  for (auto k : {SweepKind::kGap, SweepKind::kPaired, SweepKind::kFewShot, SweepKind::kAlpha}) {
    if (s == to_string(k)) return k;
  }
  throw ConfigError("unknown sweep '" + std::string(s) + "'");
}

TeacherCache::TeacherCache(std::optional<std::filesystem::path> dir) : dir_(std::move(dir)) {}

std::string TeacherCache::key(const ExperimentConfig& config, std::uint64_t seed) {
  GeneratorConfig d = config.data;
  d.gap = 0.0;
  d.seed = seed;
  const auto& p = config.pipeline;
  nlohmann::json j = {{"data", d.to_json()},
                      {"model", p.to_json()["model"]},
                      {"augment", p.to_json()["augment"]},
                      {"pretrain", p.pretrain.to_json()}};
  return fnv1a_hex(j.dump()) + "-seed" + std::to_string(seed);
}

EncoderParams TeacherCache::get(const ExperimentConfig& config, std::uint64_t seed) {
  const std::string k = key(config, seed);
  std::shared_ptr<Slot> slot;
  {
    std::lock_guard lock(mutex_);
    auto& s = slots_[k];
    if (!s) s = std::make_shared<Slot>();
    slot = s;
  }
  std::call_once(slot->once, [&] {
    std::optional<std::filesystem::path> file;
    if (dir_) {
      file = *dir_ / ("teacher-" + k + ".ckpt");
      if (std::filesystem::exists(*file)) {
        std::string stored;
        EncoderParams p = load_encoder(*file, &stored);
        if (stored == k) {
          slot->params = std::move(p);
          return;
        }
      }
    }
    GeneratorConfig d = config.data;
    d.seed = seed;
    const DatasetBundle b = generate(d);
    slot->params = pretrain_source(b.source, config.pipeline, seed).encoder;
    if (file) {
      std::filesystem::create_directories(*dir_);
      save_encoder(slot->params, *file, k);
    }
  });
  return slot->params;
}

std::vector<double> sweep_grid(SweepKind kind, const ExperimentConfig& config) {
  const auto& s = config.sweep;
  switch (kind) {
    case SweepKind::kGap: return s.gaps;
    case SweepKind::kPaired: return s.ratios;
    case SweepKind::kFewShot: {
      std::vector<double> v;
      for (auto n : s.shots) v.push_back(static_cast<double>(n));
      return v;
    }
    case SweepKind::kAlpha: return s.alphas;
  }
  return {};
}

void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
  const auto workers = static_cast<std::size_t>(std::max(1, jobs));
  if (workers == 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto work = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next = n;
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < std::min(workers, n); ++w) pool.emplace_back(work);
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
using Clock = std::chrono::steady_clock;

struct Tagged {
  std::size_t point;
  std::size_t seed_index;
  CsvRow row;
};

// Collects the rows of one task; a NumericError inside a method flags that
// method's rows instead of aborting the sweep.
class RowSink {
 public:
  RowSink(SweepKind kind, std::uint64_t seed, std::size_t seed_index, bool timing)
      : var_(to_string(kind)), seed_(seed), seed_index_(seed_index), timing_(timing) {}

  void add(std::size_t point, double value, const std::string& method, EvalMode mode,
           double accuracy, double eps_ab, double eps_b, double wall,
           const std::string& status = "ok") {
    CsvRow r;
    r.sweep_var = var_;
    r.value = value;
    r.method = method;
    r.eval_mode = to_string(mode);
    r.seed = seed_;
    r.accuracy = accuracy;
    r.d_tv_hat = kNaN;
    r.kappa_hat = kNaN;
    r.eps_ab = eps_ab;
    r.eps_b = eps_b;
    r.wall_s = timing_ ? wall : kNaN;
    r.status = status;
    rows.push_back({point, seed_index_, std::move(r)});
  }

  void diverged(std::size_t point, double value, const std::string& method,
                std::initializer_list<EvalMode> modes) {
    for (auto m : modes) add(point, value, method, m, kNaN, kNaN, kNaN, kNaN, "diverged");
  }

  void set_tv(std::size_t point, double tv) {
    for (auto& t : rows) {
      if (t.point == point) t.row.d_tv_hat = tv;
    }
  }

  std::vector<Tagged> rows;

 private:
  std::string var_;
  std::uint64_t seed_;
  std::size_t seed_index_;
  bool timing_;
};

double since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Context {
  const ExperimentConfig& config;
  const PipelineConfig& pc;
  std::uint64_t seed;
  RowSink& sink;
  const std::function<void(const std::string&)>& log;
};

// Distills with `loss`/`alpha` on `bundle.paired`, then evaluates in both
// modes for each labeled subset in `evals` (point index, value, bundle).
struct EvalPoint {
  std::size_t point;
  double value;
  const DatasetBundle* bundle;
};

void distilled_rows(Context& ctx, const DatasetBundle& bundle, LossKind loss, double alpha,
                    const std::string& method, const std::vector<EvalPoint>& evals,
                    const EncoderParams* teacher) {
  const auto t0 = Clock::now();
  if (!teacher) {
    // The source teacher diverged; every distilled row inherits the flag.
    for (const auto& ev : evals) {
      ctx.sink.diverged(ev.point, ev.value, method, {EvalMode::kLinear, EvalMode::kFineTune});
    }
    return;
  }
  PipelineConfig cfg = ctx.pc;
  cfg.distill.loss = loss;
  cfg.distill.alpha = alpha;
  StageResult student;
  try {
    student = distill(*teacher, bundle.paired, cfg, ctx.seed);
  } catch (const NumericError& e) {
    if (ctx.log) ctx.log(std::string("diverged: ") + e.what());
    for (const auto& ev : evals) {
      ctx.sink.diverged(ev.point, ev.value, method, {EvalMode::kLinear, EvalMode::kFineTune});
    }
    return;
  }
  const double distill_wall = since(t0);
  for (const auto& ev : evals) {
    for (auto mode : {EvalMode::kLinear, EvalMode::kFineTune}) {
      const auto t1 = Clock::now();
      try {
        const auto& b = *ev.bundle;
        const EvalResult r = evaluate_target(student.encoder, b.target_labeled, b.target_test,
                                             b.config.num_classes, cfg.stage3(mode), ctx.seed);
        ctx.sink.add(ev.point, ev.value, method, mode, r.accuracy, student.final_loss,
                     r.final_loss, distill_wall + since(t1));
      } catch (const NumericError& e) {
        if (ctx.log) ctx.log(std::string("diverged: ") + e.what());
        ctx.sink.diverged(ev.point, ev.value, method, {mode});
      }
    }
  }
}

void sup_ft_row(Context& ctx, const EvalPoint& ev) {
  try {
    const RunReport r = run_baseline(BaselineKind::kSupFt, *ev.bundle, ctx.pc, ctx.seed);
    ctx.sink.add(ev.point, ev.value, "sup_ft", EvalMode::kFineTune, r.accuracy, kNaN, r.eps_b,
                 r.wall_seconds);
  } catch (const NumericError& e) {
    if (ctx.log) ctx.log(std::string("diverged: ") + e.what());
    ctx.sink.diverged(ev.point, ev.value, "sup_ft", {EvalMode::kFineTune});
  }
}

// SSL on the target modality, evaluated both ways; returns the encoder for
// the TV estimate, or nothing if training diverged.
std::optional<EncoderParams> ssl_rows(Context& ctx, const EvalPoint& ev) {
  const auto t0 = Clock::now();
  const auto& b = *ev.bundle;
  StageResult ssl;
  try {
    ssl = contrastive_pretrain(b.target_labeled.x, ctx.pc.model, ctx.pc.ssl, ctx.pc.augmentation,
                               ctx.seed, nullptr, "ssl");
  } catch (const NumericError& e) {
    if (ctx.log) ctx.log(std::string("diverged: ") + e.what());
    ctx.sink.diverged(ev.point, ev.value, "ssl", {EvalMode::kLinear, EvalMode::kFineTune});
    return std::nullopt;
  }
  const double train_wall = since(t0);
  for (auto mode : {EvalMode::kLinear, EvalMode::kFineTune}) {
    const auto t1 = Clock::now();
    try {
      const EvalResult r = evaluate_target(ssl.encoder, b.target_labeled, b.target_test,
                                           b.config.num_classes, ctx.pc.stage3(mode), ctx.seed);
      ctx.sink.add(ev.point, ev.value, "ssl", mode, r.accuracy, kNaN, r.final_loss,
                   train_wall + since(t1));
    } catch (const NumericError& e) {
      if (ctx.log) ctx.log(std::string("diverged: ") + e.what());
      ctx.sink.diverged(ev.point, ev.value, "ssl", {mode});
    }
  }
  return ssl.encoder;
}

GeneratorConfig data_for(const ExperimentConfig& c, std::uint64_t seed) {
  GeneratorConfig d = c.data;
  d.seed = seed;
  return d;
}

}  // namespace

SweepResult run_sweep(SweepKind kind, const ExperimentConfig& config,
                      const SweepOptions& options, TeacherCache& teachers) {
  config.validate();
  if (options.seeds < 1) throw ConfigError("sweep: at least one seed is required");
  const auto grid = sweep_grid(kind, config);
  if (grid.empty()) throw ConfigError(std::string("sweep.") + to_string(kind) + ": empty grid");
  const auto n_seeds = static_cast<std::size_t>(options.seeds);
  std::mutex log_mutex;
  std::function<void(const std::string&)> log;
  if (options.log) {
    log = [&](const std::string& s) {
      std::lock_guard lock(log_mutex);
      options.log(s);
    };
  }

  // Teachers first, one per seed, so grid tasks never wait on each other.
  std::vector<std::optional<EncoderParams>> teacher(n_seeds);
  std::vector<std::string> teacher_error(n_seeds);
  parallel_for(n_seeds, options.jobs, [&](std::size_t i) {
    const std::uint64_t seed = config.data.seed + i;
    try {
      teacher[i] = teachers.get(config, seed);
      if (log) log("teacher ready for seed " + std::to_string(seed));
    } catch (const NumericError& e) {
      teacher_error[i] = e.what();
      if (log) log("teacher diverged for seed " + std::to_string(seed) + ": " + e.what());
    }
  });

  // Few-shot distills once per seed and reuses the student for every n.
  const bool per_seed = kind == SweepKind::kFewShot;
  const std::size_t n_tasks = per_seed ? n_seeds : grid.size() * n_seeds;
  std::vector<std::vector<Tagged>> results(n_tasks);

  parallel_for(n_tasks, options.jobs, [&](std::size_t task) {
    const std::size_t si = task % n_seeds;
    const std::size_t pi = per_seed ? 0 : task / n_seeds;
    const std::uint64_t seed = config.data.seed + si;
    RowSink sink(kind, seed, si, options.timing);
    Context ctx{config, config.pipeline, seed, sink, log};

    const EncoderParams* t = teacher[si] ? &*teacher[si] : nullptr;

    switch (kind) {
      case SweepKind::kGap: {
        GeneratorConfig d = data_for(config, seed);
        d.gap = grid[pi];
        const DatasetBundle b = generate(d);
        const EvalPoint ev{pi, grid[pi], &b};
        distilled_rows(ctx, b, LossKind::kCmd, 0.0, "cmd", {ev}, t);
        distilled_rows(ctx, b, LossKind::kCmc, 1.0, "cmc", {ev}, t);
        const auto ssl = ssl_rows(ctx, ev);
        sup_ft_row(ctx, ev);
        if (ssl && t) {
          TvOptions o;
          o.tau = config.pipeline.distill.tau;
          o.batch_size = config.analysis.tv_batch_size;
          o.n_batches = config.analysis.tv_batches;
          o.seed = seed;
          sink.set_tv(pi, estimate_tv(*t, *ssl, b.paired, o));
        }
        break;
      }
      case SweepKind::kPaired: {
        const DatasetBundle full = generate(data_for(config, seed));
        const DatasetBundle b = subsample_paired(full, grid[pi], seed);
        const EvalPoint ev{pi, grid[pi], &b};
        distilled_rows(ctx, b, LossKind::kCmd, 0.0, "cmd", {ev}, t);
        distilled_rows(ctx, b, LossKind::kCmc, 1.0, "cmc", {ev}, t);
        break;
      }
      case SweepKind::kFewShot: {
        const DatasetBundle full = generate(data_for(config, seed));
        std::vector<DatasetBundle> subsets;
        subsets.reserve(grid.size());
        for (double n : grid) {
          subsets.push_back(subsample_labels(full, static_cast<std::size_t>(n), seed));
        }
        std::vector<EvalPoint> evs;
        for (std::size_t p = 0; p < grid.size(); ++p) evs.push_back({p, grid[p], &subsets[p]});
        distilled_rows(ctx, full, LossKind::kCmd, 0.0, "cmd", evs, t);
        distilled_rows(ctx, full, LossKind::kCmc, 1.0, "cmc", evs, t);
        for (const auto& ev : evs) sup_ft_row(ctx, ev);
        break;
      }
      case SweepKind::kAlpha: {
        const DatasetBundle b = generate(data_for(config, seed));
        const EvalPoint ev{pi, grid[pi], &b};
        distilled_rows(ctx, b, LossKind::kInterp, grid[pi], "interp", {ev}, t);
        break;
      }
    }
    if (log) {
      log(std::string(to_string(kind)) + ": finished " +
          (per_seed ? std::string("all points") : "point " + std::to_string(pi)) +
          " for seed " + std::to_string(seed));
    }
    results[task] = std::move(sink.rows);
  });

  std::vector<Tagged> all;
  for (auto& r : results) all.insert(all.end(), r.begin(), r.end());
  // Within one (point, seed) the task order is already canonical.
  std::stable_sort(all.begin(), all.end(), [](const Tagged& a, const Tagged& b) {
    return std::tie(a.point, a.seed_index) < std::tie(b.point, b.seed_index);
  });
  SweepResult out;
  for (auto& t : all) {
    if (!t.row.ok()) ++out.diverged;
    out.rows.push_back(std::move(t.row));
  }
  return out;
}

}  // namespace cmcd
