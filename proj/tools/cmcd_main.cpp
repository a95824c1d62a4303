// cmcd: command-line front end for data generation, the three training
// stages, diagnostics, sweeps and reports.
//
// Exit codes: 0 success, 1 divergence (or a sweep with flagged rows),
// 2 configuration or usage error, 3 I/O or file-format error.

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "cmcd/analysis.hpp"
#include "cmcd/checkpoint.hpp"
#include "cmcd/config.hpp"
#include "cmcd/csv.hpp"
#include "cmcd/errors.hpp"
#include "cmcd/pipeline.hpp"
#include "cmcd/plot.hpp"
#include "cmcd/report.hpp"
#include "cmcd/sweep.hpp"
#include "cmcd/synth.hpp"

namespace fs = std::filesystem;
using namespace cmcd;

namespace {

constexpr int kExitDiverged = 1;
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct Common {
  std::string config_path;
  std::vector<std::string> sets;
  std::string out_dir;
  std::string data_path;
  long long seed = -1;
};

ExperimentConfig load(const Common& c) {
  ExperimentConfig cfg = c.config_path.empty() ? ExperimentConfig{} : load_config(c.config_path);
  for (const auto& s : c.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
    apply_setting(cfg, s.substr(0, eq), s.substr(eq + 1));
  }
  if (const char* env = std::getenv("CMCD_OUTPUT_DIR"); env && *env) cfg.output.dir = env;
  if (!c.out_dir.empty()) cfg.output.dir = c.out_dir;
  if (c.seed >= 0) cfg.data.seed = static_cast<std::uint64_t>(c.seed);
  cfg.validate();
  return cfg;
}

DatasetBundle bundle_for(const Common& c, const ExperimentConfig& cfg) {
  if (!c.data_path.empty()) return load_bundle(c.data_path);
  return generate(cfg.data);
}

fs::path out_dir(const ExperimentConfig& cfg) {
  fs::path d = cfg.output.dir;
  fs::create_directories(d);
  return d;
}

CsvRow base_row(const std::string& method, const std::string& mode, std::uint64_t seed) {
  CsvRow r;
  r.value = kNaN;
  r.method = method;
  r.eval_mode = mode;
  r.seed = seed;
  r.accuracy = kNaN;
  r.d_tv_hat = kNaN;
  r.kappa_hat = kNaN;
  r.eps_ab = kNaN;
  r.eps_b = kNaN;
  r.wall_s = kNaN;
  return r;
}

void record(const ExperimentConfig& cfg, const CsvRow& row) {
  append_csv(out_dir(cfg) / "runs.csv", {row});
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw FormatError("write to '" + path.string() + "' failed");
}

void add_common(CLI::App* app, Common& c, bool with_data = true) {
  app->add_option("-c,--config", c.config_path, "experiment config file")
      ->check(CLI::ExistingFile);
  app->add_option("--set", c.sets, "override one config key (key=value), repeatable");
  app->add_option("--out-dir", c.out_dir,
                  "output directory (overrides CMCD_OUTPUT_DIR and output.dir)");
  app->add_option("--seed", c.seed, "training seed (default data.seed)");
  if (with_data) {
    app->add_option("--data", c.data_path, "dataset file (default: generate from config)");
  }
}

void print_bundle(const DatasetBundle& b) {
  std::cout << "source " << b.source.rows << "x" << b.source.cols << ", paired "
            << b.paired.size() << ", target labeled " << b.target_labeled.size()
            << ", test " << b.target_test.size() << ", gap " << b.config.gap << ", seed "
            << b.config.seed << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cross-modality contrastive distillation on synthetic data"};
  app.require_subcommand(1);
  int exit_code = 0;

  // gen-data
  Common gen;
  std::string gen_out;
  auto* gen_cmd = app.add_subcommand("gen-data", "generate a dataset file");
  add_common(gen_cmd, gen, false);
  gen_cmd->add_option("--out", gen_out, "dataset file to write")->required();
  gen_cmd->callback([&] {
    const auto cfg = load(gen);
    const auto b = generate(cfg.data);
    if (fs::path(gen_out).has_parent_path()) fs::create_directories(fs::path(gen_out).parent_path());
    save_bundle(b, gen_out);
    print_bundle(b);
  });

  // pretrain
  Common pre;
  std::string pre_out;
  auto* pre_cmd = app.add_subcommand("pretrain", "step 1: InfoNCE pretraining on the source modality");
  add_common(pre_cmd, pre);
  pre_cmd->add_option("--out", pre_out, "teacher checkpoint (default <out-dir>/teacher.ckpt)");
  pre_cmd->callback([&] {
    const auto cfg = load(pre);
    const auto b = bundle_for(pre, cfg);
    const fs::path dest = pre_out.empty() ? out_dir(cfg) / "teacher.ckpt" : fs::path(pre_out);
    const std::uint64_t seed = cfg.data.seed;
    auto row = base_row("pretrain", "", seed);
    try {
      const auto r = pretrain_source(b.source, cfg.pipeline, seed);
      save_encoder(r.encoder, dest, cfg.hash());
      row.eps_ab = r.final_loss;
      std::cout << "teacher written to " << dest.string() << ", final InfoNCE " << r.final_loss
                << "\n";
    } catch (const NumericError&) {
      row.status = "diverged";
      record(cfg, row);
      throw;
    }
    record(cfg, row);
  });

  // distill
  Common dis;
  std::string dis_teacher, dis_out, dis_loss;
  double dis_alpha = -1.0;
  auto* dis_cmd = app.add_subcommand("distill", "step 2: distill a target encoder from the teacher");
  add_common(dis_cmd, dis);
  dis_cmd->add_option("--teacher", dis_teacher, "teacher checkpoint")->required();
  dis_cmd->add_option("--loss", dis_loss, "cmd | cmc | interp | l2 | stats (default distill.loss)");
  dis_cmd->add_option("--alpha", dis_alpha, "CMC weight for interp (default distill.alpha)");
  dis_cmd->add_option("--out", dis_out, "student checkpoint (default <out-dir>/student-<loss>.ckpt)");
  dis_cmd->callback([&] {
    auto cfg = load(dis);
    if (!dis_loss.empty()) cfg.pipeline.distill.loss = parse_loss_kind(dis_loss);
    if (dis_alpha >= 0.0) cfg.pipeline.distill.alpha = dis_alpha;
    cfg.validate();
    const auto b = bundle_for(dis, cfg);
    const auto teacher = load_encoder(dis_teacher);
    const std::string loss = to_string(cfg.pipeline.distill.loss);
    const fs::path dest =
        dis_out.empty() ? out_dir(cfg) / ("student-" + loss + ".ckpt") : fs::path(dis_out);
    auto row = base_row(loss, "", cfg.data.seed);
    try {
      const auto r = distill(teacher, b.paired, cfg.pipeline, cfg.data.seed);
      save_encoder(r.encoder, dest, cfg.hash());
      row.eps_ab = r.final_loss;
      std::cout << "student written to " << dest.string() << ", final " << loss << " loss "
                << r.final_loss << "\n";
    } catch (const NumericError&) {
      row.status = "diverged";
      record(cfg, row);
      throw;
    }
    record(cfg, row);
  });

  // finetune
  Common fin;
  std::string fin_encoder, fin_mode = "le", fin_out, fin_encoder_out, fin_method = "finetune";
  auto* fin_cmd = app.add_subcommand("finetune", "step 3: train a head (le) or head and encoder (ft)");
  add_common(fin_cmd, fin);
  fin_cmd->add_option("--encoder", fin_encoder, "encoder checkpoint")->required();
  fin_cmd->add_option("--mode", fin_mode, "le | ft")->check(CLI::IsMember({"le", "ft", "LE", "FT"}));
  fin_cmd->add_option("--out", fin_out, "head checkpoint (default <out-dir>/head-<mode>.ckpt)");
  fin_cmd->add_option("--encoder-out", fin_encoder_out,
                      "fine-tuned encoder checkpoint in ft mode (default <out-dir>/encoder-ft.ckpt)");
  fin_cmd->add_option("--method", fin_method, "method label for the CSV row");
  fin_cmd->callback([&] {
    const auto cfg = load(fin);
    const auto b = bundle_for(fin, cfg);
    const auto enc = load_encoder(fin_encoder);
    const EvalMode mode = parse_eval_mode(fin_mode);
    const std::string tag = mode == EvalMode::kLinear ? "le" : "ft";
    const fs::path head_dest =
        fin_out.empty() ? out_dir(cfg) / ("head-" + tag + ".ckpt") : fs::path(fin_out);
    auto row = base_row(fin_method, to_string(mode), cfg.data.seed);
    try {
      const auto r = evaluate_target(enc, b.target_labeled, b.target_test, b.config.num_classes,
                                     cfg.pipeline.stage3(mode), cfg.data.seed);
      save_head(r.head, head_dest, cfg.hash());
      if (mode == EvalMode::kFineTune) {
        const fs::path enc_dest = fin_encoder_out.empty() ? out_dir(cfg) / "encoder-ft.ckpt"
                                                          : fs::path(fin_encoder_out);
        save_encoder(r.encoder, enc_dest, cfg.hash());
      }
      row.accuracy = r.accuracy;
      row.eps_b = r.final_loss;
      std::cout << to_string(mode) << " accuracy " << r.accuracy << "\n";
    } catch (const NumericError&) {
      row.status = "diverged";
      record(cfg, row);
      throw;
    }
    record(cfg, row);
  });

  // eval
  Common ev;
  std::string ev_encoder, ev_head, ev_method = "eval";
  auto* ev_cmd = app.add_subcommand("eval", "top-1 accuracy of encoder + head on the test split");
  add_common(ev_cmd, ev);
  ev_cmd->add_option("--encoder", ev_encoder, "encoder checkpoint")->required();
  ev_cmd->add_option("--head", ev_head, "head checkpoint")->required();
  ev_cmd->add_option("--method", ev_method, "method label for the CSV row");
  ev_cmd->callback([&] {
    const auto cfg = load(ev);
    const auto b = bundle_for(ev, cfg);
    const double acc = accuracy(load_encoder(ev_encoder), load_head(ev_head), b.target_test);
    auto row = base_row(ev_method, "", cfg.data.seed);
    row.accuracy = acc;
    record(cfg, row);
    std::cout << "accuracy " << acc << "\n";
  });

  // tv
  Common tv;
  std::string tv_a, tv_b;
  auto* tv_cmd = app.add_subcommand("tv", "restricted TV distance between two encoders' Gibbs distributions");
  add_common(tv_cmd, tv);
  tv_cmd->add_option("--enc-a", tv_a, "encoder applied to the paired source rows")->required();
  tv_cmd->add_option("--enc-b", tv_b, "encoder applied to the paired target rows")->required();
  tv_cmd->callback([&] {
    const auto cfg = load(tv);
    const auto b = bundle_for(tv, cfg);
    const auto ea = load_encoder(tv_a);
    const auto eb = load_encoder(tv_b);
    TvOptions o;
    o.tau = cfg.pipeline.distill.tau;
    o.batch_size = cfg.analysis.tv_batch_size;
    o.n_batches = cfg.analysis.tv_batches;
    o.seed = cfg.data.seed;
    // An encoder of the source width reads x_A; otherwise x_B.
    const Matrix& xa = ea.input_dim() == b.paired.xa.cols ? b.paired.xa : b.paired.xb;
    const Matrix& xb = (tv_a == tv_b || eb.input_dim() != b.paired.xb.cols) ? xa : b.paired.xb;
    const double d = estimate_tv(ea, xa, eb, xb, o);
    auto row = base_row("tv", "", cfg.data.seed);
    row.d_tv_hat = d;
    record(cfg, row);
    std::cout << std::fixed << std::setprecision(6) << d << "\n";
  });

  // kappa
  Common kap;
  std::string kap_phi, kap_phi_star, kap_psi_star;
  auto* kap_cmd = app.add_subcommand("kappa", "finite-sample estimate of the informativeness constant");
  add_common(kap_cmd, kap);
  kap_cmd->add_option("--encoder", kap_phi, "distilled target encoder (phi)")->required();
  kap_cmd->add_option("--phi-star", kap_phi_star,
                      "reference target encoder (default: SSL on the target modality)");
  kap_cmd->add_option("--psi-star", kap_psi_star,
                      "reference head (default: linear probe on phi-star)");
  kap_cmd->callback([&] {
    const auto cfg = load(kap);
    const auto b = bundle_for(kap, cfg);
    const auto phi = load_encoder(kap_phi);
    const std::uint64_t seed = cfg.data.seed;
    const EncoderParams phi_star =
        kap_phi_star.empty()
            ? contrastive_pretrain(b.paired.xb, cfg.pipeline.model, cfg.pipeline.ssl,
                                   cfg.pipeline.augmentation, seed, nullptr, "ssl")
                  .encoder
            : load_encoder(kap_phi_star);
    const HeadParams psi_star =
        kap_psi_star.empty()
            ? evaluate_target(phi_star, b.target_labeled, b.target_test, b.config.num_classes,
                              cfg.pipeline.stage3(EvalMode::kLinear), seed)
                  .head
            : load_head(kap_psi_star);
    KappaOptions o;
    o.tau = cfg.pipeline.distill.tau;
    o.sample_size = cfg.analysis.kappa_samples;
    o.seed = seed;
    const auto k = estimate_kappa(phi, phi_star, psi_star, b.target_labeled, o);
    auto row = base_row("kappa", "", seed);
    row.kappa_hat = k.value;
    record(cfg, row);
    std::cout << "kappa " << k.value << (k.undefined ? " (undefined: denominator floor hit)" : "")
              << " over " << k.samples << " samples\n";
  });

  // sweeps
  struct SweepArgs {
    Common common;
    int seeds = -1;
    int jobs = -1;
    bool timing = false;
    bool no_plot = false;
  };
  std::vector<std::unique_ptr<SweepArgs>> sweep_args;
  for (auto kind : {SweepKind::kGap, SweepKind::kPaired, SweepKind::kFewShot, SweepKind::kAlpha}) {
    sweep_args.push_back(std::make_unique<SweepArgs>());
    SweepArgs& a = *sweep_args.back();
    const std::string name = std::string("sweep-") + to_string(kind);
    auto* cmd = app.add_subcommand(name, std::string("run the ") + to_string(kind) +
                                             " sweep (grid x seeds x methods)");
    add_common(cmd, a.common, false);
    cmd->add_option("--seeds", a.seeds, "number of seeds (default sweep.seeds)");
    cmd->add_option("--jobs", a.jobs, "worker threads (default sweep.jobs)");
    cmd->add_flag("--timing", a.timing, "fill the wall_s column");
    cmd->add_flag("--no-plot", a.no_plot, "skip the SVG plot");
    cmd->callback([&a, kind, &exit_code] {
      auto cfg = load(a.common);
      if (a.seeds >= 0) cfg.sweep.seeds = a.seeds;
      if (a.jobs >= 0) cfg.sweep.jobs = a.jobs;
      if (a.timing) cfg.output.timing = true;
      if (a.no_plot) cfg.output.plots = false;
      cfg.validate();
      const fs::path dir = out_dir(cfg);
      TeacherCache teachers(dir / "teachers");
      SweepOptions o;
      o.seeds = cfg.sweep.seeds;
      o.jobs = cfg.sweep.jobs;
      o.timing = cfg.output.timing;
      o.log = [](const std::string& s) { std::cerr << s << "\n"; };
      const auto result = run_sweep(kind, cfg, o, teachers);
      const std::string stem = std::string("sweep-") + to_string(kind);
      write_csv(dir / (stem + ".csv"), result.rows);
      if (cfg.output.plots) {
        const auto rep = build_report(result.rows);
        const auto plot = sweep_plot(rep, to_string(kind));
        write_text(dir / (stem + ".svg"), render_svg(plot));
        write_text(dir / (stem + "-series.csv"), series_csv(plot));
      }
      std::cout << result.rows.size() << " rows written to " << (dir / (stem + ".csv")).string();
      if (result.diverged) {
        std::cout << " (" << result.diverged << " flagged diverged)";
        exit_code = kExitDiverged;
      }
      std::cout << "\n";
    });
  }

  // report
  std::vector<std::string> rep_in;
  std::string rep_out;
  auto* rep_cmd = app.add_subcommand("report", "aggregate sweep CSVs into tables and plots");
  rep_cmd->add_option("--in", rep_in, "sweep CSV file(s)")->required()->check(CLI::ExistingFile);
  rep_cmd->add_option("--out", rep_out, "report directory")->required();
  rep_cmd->callback([&] {
    std::vector<CsvRow> rows;
    for (const auto& p : rep_in) {
      auto r = read_csv(fs::path(p));
      rows.insert(rows.end(), r.begin(), r.end());
    }
    const auto rep = build_report(rows);
    fs::create_directories(rep_out);
    write_text(fs::path(rep_out) / "report.md", render_markdown(rep));
    write_text(fs::path(rep_out) / "report.json", report_json(rep).dump(2) + "\n");
    std::set<std::string> vars;
    for (const auto& a : rep.aggregates) {
      if (!a.sweep_var.empty()) vars.insert(a.sweep_var);
    }
    for (const auto& v : vars) {
      const auto plot = sweep_plot(rep, v);
      write_text(fs::path(rep_out) / ("plot-" + v + ".svg"), render_svg(plot));
      write_text(fs::path(rep_out) / ("plot-" + v + "-series.csv"), series_csv(plot));
    }
    std::cout << render_markdown(rep);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitDiverged;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DimensionError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  }
  return exit_code;
}
