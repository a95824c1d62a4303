#include "cmcd/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <set>
#include <tuple>

#include "cmcd/errors.hpp"
#include "cmcd/stats.hpp"

namespace cmcd {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

using GroupKey = std::tuple<std::string, double, std::string, std::string>;

std::string fixed(double v, int digits = 2) {
  if (std::isnan(v)) return "n/a";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string label(const std::string& var, double value) {
  return var.empty() ? std::string("single") : var + "=" + format_number(value);
}

struct Need {
  const char* method;
  const char* mode;
};
constexpr Need kDeltaMethods[] = {{"cmd", "LE"}, {"ssl", "LE"}, {"cmd", "FT"}, {"sup_ft", "FT"}};

}  // namespace

Report build_report(const std::vector<CsvRow>& rows) {
  struct Acc {
    std::vector<double> acc, tv;
    std::size_t diverged = 0;
  };
  std::map<GroupKey, Acc> groups;
  for (const auto& r : rows) {
    // Single runs have no sweep value; group them under 0.
    const double v = std::isnan(r.value) ? 0.0 : r.value;
    auto& g = groups[{r.sweep_var, v, r.method, r.eval_mode}];
    if (!r.ok()) {
      ++g.diverged;
      continue;
    }
    if (!std::isnan(r.accuracy)) g.acc.push_back(r.accuracy);
    if (!std::isnan(r.d_tv_hat)) g.tv.push_back(r.d_tv_hat);
  }

  Report rep;
  for (const auto& [k, g] : groups) {
    AggregateRow a;
    std::tie(a.sweep_var, a.value, a.method, a.eval_mode) = k;
    a.runs = g.acc.size();
    a.diverged = g.diverged;
    a.mean = g.acc.empty() ? kNaN : mean(g.acc);
    a.std = g.acc.empty() ? kNaN : sample_std(g.acc);
    a.d_tv_mean = g.tv.empty() ? kNaN : mean(g.tv);
    a.tv_runs = g.tv.size();
    rep.aggregates.push_back(a);
  }

  std::set<std::pair<std::string, double>> points;
  for (const auto& a : rep.aggregates) points.insert({a.sweep_var, a.value});
  for (const auto& [var, value] : points) {
    const bool required = var == "gap";
    double acc[4];
    bool complete = true;
    double tv_sum = 0.0;
    std::size_t tv_n = 0;
    for (int i = 0; i < 4; ++i) {
      const auto m = mean_accuracy(rep, var, value, kDeltaMethods[i].method, kDeltaMethods[i].mode);
      if (!m || std::isnan(*m)) {
        if (required) {
          throw ConfigError(std::string("report: ") + label(var, value) + " lacks method '" +
                            kDeltaMethods[i].method + "' in " + kDeltaMethods[i].mode +
                            " mode, needed for the deltas");
        }
        complete = false;
        break;
      }
      acc[i] = *m;
    }
    if (!complete) continue;
    for (const auto& a : rep.aggregates) {
      if (a.sweep_var == var && a.value == value && !std::isnan(a.d_tv_mean)) {
        tv_sum += a.d_tv_mean * static_cast<double>(a.tv_runs);
        tv_n += a.tv_runs;
      }
    }
    rep.deltas.push_back({var, value, acc[0] - acc[1], acc[2] - acc[3],
                          tv_n ? tv_sum / static_cast<double>(tv_n) : kNaN});
  }

  std::vector<double> gaps, tvs, les;
  for (const auto& d : rep.deltas) {
    if (d.sweep_var != "gap" || std::isnan(d.d_tv_mean)) continue;
    gaps.push_back(d.value);
    tvs.push_back(d.d_tv_mean);
    les.push_back(d.le_delta);
  }
  if (gaps.size() >= 2) {
    rep.spearman_tv_delta = spearman(tvs, les);
    rep.spearman_tv_gap = spearman(tvs, gaps);
  }
  return rep;
}

std::optional<double> mean_accuracy(const Report& report, const std::string& sweep_var,
                                    double value, const std::string& method,
                                    const std::string& eval_mode) {
  for (const auto& a : report.aggregates) {
    if (a.sweep_var == sweep_var && a.value == value && a.method == method &&
        a.eval_mode == eval_mode) {
      return a.mean;
    }
  }
  return std::nullopt;
}

std::string render_markdown(const Report& report) {
  std::string o = "# Experiment report\n\n## Accuracy (mean ± std over seeds)\n\n";
  o += "| sweep | value | method | mode | runs | diverged | accuracy | d_tv |\n";
  o += "|---|---|---|---|---|---|---|---|\n";
  for (const auto& a : report.aggregates) {
    o += "| " + (a.sweep_var.empty() ? std::string("-") : a.sweep_var) + " | " +
         format_number(a.value) + " | " + a.method + " | " + a.eval_mode + " | " +
         std::to_string(a.runs) + " | " + std::to_string(a.diverged) + " | " +
         fixed(a.mean) + " ± " + fixed(a.std) + " | " + fixed(a.d_tv_mean, 4) + " |\n";
  }
  if (!report.deltas.empty()) {
    o += "\n## Improvement deltas\n\n";
    o += "LE(Δ) = cmd LE − ssl LE; FT(Δ) = cmd FT − sup_ft FT.\n\n";
    o += "| sweep | value | LE(Δ) | FT(Δ) | d_tv |\n|---|---|---|---|---|\n";
    for (const auto& d : report.deltas) {
      o += "| " + (d.sweep_var.empty() ? std::string("-") : d.sweep_var) + " | " +
           format_number(d.value) + " | " + fixed(d.le_delta) + " | " + fixed(d.ft_delta) +
           " | " + fixed(d.d_tv_mean, 4) + " |\n";
    }
  }
  if (report.spearman_tv_delta) {
    o += "\n## Gap sweep correlations\n\n";
    o += "- Spearman(d_tv, LE(Δ)) = " + fixed(*report.spearman_tv_delta, 4) + "\n";
    o += "- Spearman(d_tv, gap) = " + fixed(*report.spearman_tv_gap, 4) + "\n";
  }
  return o;
}

nlohmann::json report_json(const Report& report) {
  // NaN is not representable in JSON; it becomes null.
  auto num = [](double v) -> nlohmann::json {
    if (std::isnan(v)) return nullptr;
    return v;
  };
  nlohmann::json j;
  j["aggregates"] = nlohmann::json::array();
  for (const auto& a : report.aggregates) {
    j["aggregates"].push_back({{"sweep_var", a.sweep_var},
                               {"value", a.value},
                               {"method", a.method},
                               {"eval_mode", a.eval_mode},
                               {"runs", a.runs},
                               {"diverged", a.diverged},
                               {"mean", num(a.mean)},
                               {"std", num(a.std)},
                               {"d_tv_mean", num(a.d_tv_mean)}});
  }
  j["deltas"] = nlohmann::json::array();
  for (const auto& d : report.deltas) {
    j["deltas"].push_back({{"sweep_var", d.sweep_var},
                           {"value", d.value},
                           {"le_delta", d.le_delta},
                           {"ft_delta", d.ft_delta},
                           {"d_tv_mean", num(d.d_tv_mean)}});
  }
  j["spearman_tv_delta"] =
      report.spearman_tv_delta ? num(*report.spearman_tv_delta) : nlohmann::json(nullptr);
  j["spearman_tv_gap"] =
      report.spearman_tv_gap ? num(*report.spearman_tv_gap) : nlohmann::json(nullptr);
  return j;
}

PlotSpec sweep_plot(const Report& report, const std::string& sweep_var) {
  PlotSpec p;
  p.title = "accuracy vs " + sweep_var;
  p.x_label = sweep_var;
  p.y_label = "top-1 accuracy (%)";
  std::map<std::string, Series> series;
  for (const auto& a : report.aggregates) {
    if (a.sweep_var != sweep_var) continue;
    auto& s = series[a.method + " " + a.eval_mode];
    s.name = a.method + " " + a.eval_mode;
    s.x.push_back(a.value);
    s.y.push_back(a.mean);
  }
  for (auto& [name, s] : series) p.series.push_back(std::move(s));
  return p;
}

}  // namespace cmcd
