#pragma once

// Aggregation of experiment CSV rows: mean and sample std of accuracy over
// seeds, the LE/FT improvement deltas per sweep point, and for the gap sweep
// the rank correlation between the TV estimate and the LE delta.

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "cmcd/csv.hpp"
#include "cmcd/plot.hpp"

namespace cmcd {

struct AggregateRow {
  std::string sweep_var;
  double value = 0.0;
  std::string method;
  std::string eval_mode;
  std::size_t runs = 0;      // ok rows
  std::size_t diverged = 0;  // flagged rows
  double mean = 0.0;         // accuracy over ok rows; NaN when none
  double std = 0.0;
  double d_tv_mean = 0.0;  // NaN when no row carries an estimate
  std::size_t tv_runs = 0;  // rows contributing to d_tv_mean
};

struct DeltaRow {
  std::string sweep_var;
  double value = 0.0;
  double le_delta = 0.0;  // mean(cmd LE) - mean(ssl LE)
  double ft_delta = 0.0;  // mean(cmd FT) - mean(sup_ft FT)
  double d_tv_mean = 0.0;
};

struct Report {
  std::vector<AggregateRow> aggregates;  // sorted by (sweep_var, value, method, mode)
  std::vector<DeltaRow> deltas;
  std::optional<double> spearman_tv_delta;  // gap sweep: d_tv vs LE delta
  std::optional<double> spearman_tv_gap;    // gap sweep: d_tv vs gap
};

/// Gap-sweep points must carry cmd LE, ssl LE, cmd FT and sup_ft FT rows;
/// other points get deltas only when all four are present. Throws
/// ConfigError naming the first missing method.
Report build_report(const std::vector<CsvRow>& rows);

/// Mean accuracy of `method`/`mode` at one sweep point; nullopt when absent.
std::optional<double> mean_accuracy(const Report& report, const std::string& sweep_var,
                                    double value, const std::string& method,
                                    const std::string& eval_mode);

std::string render_markdown(const Report& report);
nlohmann::json report_json(const Report& report);

/// Mean accuracy against the sweep value, one series per method and mode.
PlotSpec sweep_plot(const Report& report, const std::string& sweep_var);

}  // namespace cmcd
