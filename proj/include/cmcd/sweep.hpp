#pragma once

// Factorial sweeps (grid x seeds x methods) over the modality gap, the
// fraction of paired data, the labels per class, and the CMC/CMD mix.
//
// Run seed i uses data.seed + i for both data generation and training. One
// source teacher is trained per seed and shared by every grid point, since
// the source split does not depend on the gap. Rows come out ordered by
// (grid point, seed, method, eval mode) whatever the worker count.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "cmcd/config.hpp"
#include "cmcd/csv.hpp"
#include "cmcd/model.hpp"

namespace cmcd {

enum class SweepKind { kGap, kPaired, kFewShot, kAlpha };

const char* to_string(SweepKind k);  // gap, paired, fewshot, alpha
SweepKind parse_sweep_kind(std::string_view s);

/// Source teachers keyed by (pretraining setup, seed). With a directory the
/// cache also persists checkpoints there and reuses them across processes.
class TeacherCache {
 public:
  explicit TeacherCache(std::optional<std::filesystem::path> dir = std::nullopt);

  /// Trains on first use. Thread-safe; concurrent callers for one key wait
  /// for a single training run.
  EncoderParams get(const ExperimentConfig& config, std::uint64_t seed);

  /// Identifies everything the teacher depends on: source data settings
  /// (not the gap), model, augmentation and pretraining.
  static std::string key(const ExperimentConfig& config, std::uint64_t seed);

 private:
  struct Slot {
    std::once_flag once;
    EncoderParams params;
  };
  std::optional<std::filesystem::path> dir_;
  std::mutex mutex_;
  std::map<std::string, std::shared_ptr<Slot>> slots_;
};

struct SweepOptions {
  int seeds = 5;
  int jobs = 1;
  bool timing = false;
  std::function<void(const std::string&)> log;  // progress lines, may be empty
};

struct SweepResult {
  std::vector<CsvRow> rows;
  std::size_t diverged = 0;  // rows flagged diverged
};

SweepResult run_sweep(SweepKind kind, const ExperimentConfig& config,
                      const SweepOptions& options, TeacherCache& teachers);

/// Grid values of `kind` as listed in the config.
std::vector<double> sweep_grid(SweepKind kind, const ExperimentConfig& config);

/// Applies `fn(i)` for i in [0, n) on up to `jobs` threads. The first
/// exception is rethrown after all workers stop.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn);

}  // namespace cmcd
