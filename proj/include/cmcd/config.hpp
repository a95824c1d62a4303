#pragma once

// Experiment configuration: a flat `section.key = value` text format.
//
//   # comment
//   data.gap = 0.1
//   distill.loss = cmd
//   sweep.gaps = 0, 0.2, 0.4
//
// Every key is optional and defaults as in the structs below. Unknown keys,
// repeated keys and malformed values are errors that carry the line number.
// Lists are comma separated; an empty value is the empty list.

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "cmcd/pipeline.hpp"
#include "cmcd/synth.hpp"

namespace cmcd {

struct AnalysisConfig {
  std::size_t tv_batch_size = 64;
  std::size_t tv_batches = 50;
  std::size_t kappa_samples = 512;
};

struct SweepConfig {
  std::vector<double> gaps{0.0, 0.2, 0.4, 0.6, 0.8};
  std::vector<double> ratios{0.05, 0.2, 0.5, 1.0};
  std::vector<std::size_t> shots{1, 5, 10};
  std::vector<double> alphas{0.0, 0.25, 0.5, 0.75, 1.0};
  int seeds = 5;  // run seeds are data.seed, data.seed + 1, ...
  int jobs = 1;   // worker threads
};

struct OutputConfig {
  std::string dir = "out";
  bool plots = true;
  bool timing = false;  // fill the wall_s CSV column (breaks byte-identity)
};

struct ExperimentConfig {
  GeneratorConfig data;
  PipelineConfig pipeline;
  AnalysisConfig analysis;
  SweepConfig sweep;
  OutputConfig output;

  /// Throws ConfigError naming the offending key.
  void validate() const;
  /// Canonical text: every key, one per line, in a fixed order. Parsing it
  /// yields an equal configuration.
  std::string to_text() const;
  /// FNV-1a of the result-relevant part of to_text() (no output.*, no
  /// sweep.jobs).
  std::string hash() const;
};

/// Parses `text`; errors read "<origin>:<line>: <message>".
ExperimentConfig parse_config(std::string_view text,
                              const std::string& origin = "<config>");
ExperimentConfig load_config(const std::filesystem::path& path);

/// Sets one key, as if it appeared in a config file.
void apply_setting(ExperimentConfig& config, std::string_view key, std::string_view value);

/// All accepted keys in canonical order.
std::vector<std::string> config_keys();

}  // namespace cmcd
