#include "cmcd/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <string>

#include "cmcd/errors.hpp"
#include "cmcd/rng.hpp"

namespace cmcd {

const char* to_string(LossKind k) {
  switch (k) {
    case LossKind::kInfoNce: return "infonce";
    case LossKind::kCmd: return "cmd";
    case LossKind::kCmc: return "cmc";
    case LossKind::kInterp: return "interp";
    case LossKind::kL2: return "l2";
    case LossKind::kStats: return "stats";
    case LossKind::kCe: return "ce";
  }
  return "?";
}

LossKind parse_loss_kind(std::string_view s) {
  for (auto k : {LossKind::kInfoNce, LossKind::kCmd, LossKind::kCmc, LossKind::kInterp,
                 LossKind::kL2, LossKind::kStats, LossKind::kCe}) {
    if (s == to_string(k)) return k;
  }
  throw ConfigError("unknown loss kind '" + std::string(s) + "'");
}

const char* to_string(EvalMode m) { return m == EvalMode::kLinear ? "LE" : "FT"; }

EvalMode parse_eval_mode(std::string_view s) {
  if (s == "LE" || s == "le") return EvalMode::kLinear;
  if (s == "FT" || s == "ft") return EvalMode::kFineTune;
  throw ConfigError("unknown eval mode '" + std::string(s) + "' (expected le or ft)");
}

std::vector<std::size_t> ModelConfig::widths(std::size_t input_dim) const {
  std::vector<std::size_t> w{input_dim};
  w.insert(w.end(), hidden.begin(), hidden.end());
  w.push_back(embedding_dim);
  return w;
}

void TrainConfig::validate(const std::string& section) const {
  auto fail = [&](const std::string& field, const std::string& why) {
    throw ConfigError(section + "." + field + ": " + why);
  };
  if (!(lr > 0.0)) fail("lr", "must be positive");
  if (epochs < 0) fail("epochs", "must be nonnegative");
  if (batch_size == 0) fail("batch_size", "must be positive");
  if (!(tau > 0.0)) fail("tau", "must be positive");
  if (!(alpha >= 0.0 && alpha <= 1.0)) fail("alpha", "must lie in [0, 1]");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) fail("beta1", "must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) fail("beta2", "must lie in [0, 1)");
  for (std::size_t i = 1; i < milestones.size(); ++i) {
    if (milestones[i] < milestones[i - 1]) fail("milestones", "must be sorted ascending");
  }
}

AdamConfig TrainConfig::adam() const {
  return AdamConfig{lr, beta1, beta2, 1e-8, milestones, decay_factor};
}

nlohmann::json TrainConfig::to_json() const {
  return {{"lr", lr},
          {"beta1", beta1},
          {"beta2", beta2},
          {"epochs", epochs},
          {"batch_size", batch_size},
          {"milestones", milestones},
          {"decay_factor", decay_factor},
          {"tau", tau},
          {"alpha", alpha},
          {"loss", to_string(loss)},
          {"mode", to_string(eval_mode)},
          {"augment", augment}};
}

PipelineConfig::PipelineConfig() {
  pretrain.loss = LossKind::kInfoNce;
  pretrain.augment = true;
  ssl.loss = LossKind::kInfoNce;
  ssl.augment = true;
  distill.loss = LossKind::kCmc;
  distill.milestones = {};
  linear.loss = LossKind::kCe;
  linear.lr = 1e-2;
  finetune.loss = LossKind::kCe;
  finetune.eval_mode = EvalMode::kFineTune;
}

TrainConfig PipelineConfig::stage3(EvalMode mode) const {
  TrainConfig c = mode == EvalMode::kLinear ? linear : finetune;
  c.eval_mode = mode;
  return c;
}

nlohmann::json PipelineConfig::to_json() const {
  return {{"model",
           {{"hidden", model.hidden},
            {"embedding_dim", model.embedding_dim},
            {"activation", to_string(model.activation)}}},
          {"augment",
           {{"noise_std", augmentation.noise_std}, {"mask_prob", augmentation.mask_prob}}},
          {"pretrain", pretrain.to_json()},
          {"ssl", ssl.to_json()},
          {"distill", distill.to_json()},
          {"linear", linear.to_json()},
          {"finetune", finetune.to_json()}};
}

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Builds the loss of one mini-batch; parameters must be bound through the
// given binding in the same order as the views handed to the optimizer.
using BatchLoss = std::function<Tensor(std::span<const std::size_t>, std::size_t step,
                                       ParamBinding&)>;

std::vector<double> train_loop(std::size_t n, const TrainConfig& config,
                               std::uint64_t seed, std::string_view stream,
                               std::vector<std::span<double>> params,
                               std::size_t min_batch, const BatchLoss& batch_loss) {
  Adam adam(config.adam());
  std::vector<double> curve;
  std::size_t step = 0;
  const std::string shuffle_stream = std::string(stream) + "/shuffle";
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    Rng rng(derive_seed(seed, shuffle_stream, static_cast<std::uint64_t>(epoch)));
    const auto order = rng.permutation(n);
    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t len = std::min(config.batch_size, n - start);
      if (len < min_batch) break;
      std::span<const std::size_t> idx(order.data() + start, len);
      ParamBinding binding;
      Tensor loss;
      try {
        loss = batch_loss(idx, step, binding);
        loss.backward();
        adam.step(params, binding.gradients(), epoch);
      } catch (const NumericError& e) {
        throw NumericError(std::string(stream) + ": diverged at epoch " +
                           std::to_string(epoch) + ", step " + std::to_string(step) +
                           ": " + e.what());
      }
      total += loss.item();
      ++batches;
      ++step;
    }
    if (batches == 0) {
      throw ConfigError(std::string(stream) + ": dataset of " + std::to_string(n) +
                        " rows yields no usable batch");
    }
    curve.push_back(total / static_cast<double>(batches));
  }
  return curve;
}

void concat_views(std::vector<std::span<double>>& out,
                  std::vector<std::span<double>> more) {
  out.insert(out.end(), more.begin(), more.end());
}

}  // namespace

StageResult contrastive_pretrain(const Matrix& x, const ModelConfig& model,
                                 const TrainConfig& config,
                                 const AugmentConfig& augmentation, std::uint64_t seed,
                                 const EncoderParams* init, std::string_view stream) {
  config.validate(std::string(stream));
  StageResult r;
  if (init) {
    r.encoder = *init;
    if (r.encoder.input_dim() != x.cols) {
      throw DimensionError(std::string(stream) + ": initial encoder expects " +
                           std::to_string(r.encoder.input_dim()) + " inputs, data has " +
                           std::to_string(x.cols));
    }
  } else {
    Rng rng(derive_seed(seed, std::string(stream) + "/init"));
    const auto widths = model.widths(x.cols);
    r.encoder = init_encoder(widths, model.activation, rng);
  }
  const std::string aug_stream = std::string(stream) + "/augment";
  EncoderParams& enc = r.encoder;
  const AugmentConfig none{0.0, 0.0};
  const AugmentConfig& aug = config.augment ? augmentation : none;
  r.loss_curve = train_loop(
      x.rows, config, seed, stream, enc.parameter_views(), 2,
      [&](std::span<const std::size_t> idx, std::size_t step, ParamBinding& binding) {
        const Matrix batch = select_rows(x, idx);
        const Matrix v1 = augment(batch, derive_seed(seed, aug_stream, 2 * step), aug);
        const Matrix v2 = augment(batch, derive_seed(seed, aug_stream, 2 * step + 1), aug);
        // Both views share one set of parameter leaves.
        Tensor u = forward_encoder(enc, Tensor::from_matrix(v1), &binding);
        Tensor v = forward_encoder(enc, Tensor::from_matrix(v2), &binding);
        return info_nce(u, v, config.tau, Reduction::kMean);
      });
  r.final_loss = r.loss_curve.empty() ? kNaN : r.loss_curve.back();
  return r;
}

StageResult pretrain_source(const Matrix& source, const PipelineConfig& config,
                            std::uint64_t seed) {
  return contrastive_pretrain(source, config.model, config.pretrain,
                              config.augmentation, seed, nullptr, "pretrain");
}

StageResult distill(const EncoderParams& teacher, const PairedSet& paired,
                    const PipelineConfig& config, std::uint64_t seed) {
  const TrainConfig& tc = config.distill;
  tc.validate("distill");
  switch (tc.loss) {
    case LossKind::kCmd:
    case LossKind::kCmc:
    case LossKind::kInterp:
    case LossKind::kL2:
    case LossKind::kStats:
      break;
    default:
      throw ConfigError(std::string("distill: unsupported loss kind '") +
                        to_string(tc.loss) + "'");
  }
  if (teacher.input_dim() != paired.xa.cols) {
    throw DimensionError("distill: teacher expects " +
                         std::to_string(teacher.input_dim()) +
                         " inputs, paired source rows have " +
                         std::to_string(paired.xa.cols));
  }
  if (teacher.output_dim() != config.model.embedding_dim) {
    throw DimensionError("distill: teacher embedding width differs from model config");
  }

  StageResult r;
  {
    // Student init depends only on the seed, so runs that differ only in the
    // loss start from the same point.
    Rng rng(derive_seed(seed, "distill/init"));
    const auto widths = config.model.widths(paired.xb.cols);
    r.encoder = init_encoder(widths, config.model.activation, rng);
  }
  // The teacher is frozen: without augmentation its embeddings are fixed.
  const Matrix teacher_z = tc.augment ? Matrix{} : embed(teacher, paired.xa);
  EncoderParams& student = r.encoder;
  r.loss_curve = train_loop(
      paired.size(), tc, seed, "distill", student.parameter_views(), 2,
      [&](std::span<const std::size_t> idx, std::size_t step, ParamBinding& binding) {
        Matrix xb = select_rows(paired.xb, idx);
        Tensor za;
        if (tc.augment) {
          const Matrix xa = augment(select_rows(paired.xa, idx),
                                    derive_seed(seed, "distill/augment", 2 * step),
                                    config.augmentation);
          xb = augment(xb, derive_seed(seed, "distill/augment", 2 * step + 1),
                       config.augmentation);
          za = forward_encoder(teacher, Tensor::from_matrix(xa));
        } else {
          za = Tensor::from_matrix(select_rows(teacher_z, idx));
        }
        Tensor zb = forward_encoder(student, Tensor::from_matrix(xb), &binding);
        switch (tc.loss) {
          case LossKind::kCmd: return cmd_loss(za, zb, tc.tau, Reduction::kMean);
          case LossKind::kCmc: return cmc_loss(za, zb, tc.tau, Reduction::kMean);
          case LossKind::kInterp:
            return interpolated_loss(tc.alpha, za, zb, tc.tau, Reduction::kMean);
          case LossKind::kL2: return l2_align_loss(za, zb);
          default: return stats_align_loss(za, zb);
        }
      });
  r.final_loss = r.loss_curve.empty() ? kNaN : r.loss_curve.back();
  return r;
}

EvalResult evaluate_target(const EncoderParams& encoder, const LabeledSet& train,
                           const LabeledSet& test, int num_classes,
                           const TrainConfig& config, std::uint64_t seed) {
  const std::string section = config.eval_mode == EvalMode::kLinear ? "linear" : "finetune";
  config.validate(section);
  if (train.size() == 0) throw ConfigError(section + ": no labeled samples");
  std::vector<int> per_class(static_cast<std::size_t>(num_classes), 0);
  for (int y : train.labels) {
    if (y < 0 || y >= num_classes) {
      throw ConfigError(section + ": label " + std::to_string(y) + " out of range");
    }
    ++per_class[static_cast<std::size_t>(y)];
  }
  for (int c = 0; c < num_classes; ++c) {
    if (per_class[static_cast<std::size_t>(c)] < 1) {
      throw ConfigError(section + ": class " + std::to_string(c) +
                        " has no labeled sample");
    }
  }

  EvalResult r;
  r.encoder = encoder;
  {
    Rng rng(derive_seed(seed, "finetune/head"));
    r.head = init_head(encoder.output_dim(), static_cast<std::size_t>(num_classes), rng);
  }
  HeadParams& head = r.head;
  EncoderParams& enc = r.encoder;

  if (config.eval_mode == EvalMode::kLinear) {
    const Matrix z = embed(encoder, train.x);
    r.loss_curve = train_loop(
        train.size(), config, seed, "finetune", head.parameter_views(), 1,
        [&](std::span<const std::size_t> idx, std::size_t, ParamBinding& binding) {
          std::vector<int> y;
          for (auto i : idx) y.push_back(train.labels[i]);
          Tensor logits = forward_head(head, Tensor::from_matrix(select_rows(z, idx)),
                                       &binding);
          return ce_loss(logits, y);
        });
  } else {
    std::vector<std::span<double>> views = enc.parameter_views();
    concat_views(views, head.parameter_views());
    r.loss_curve = train_loop(
        train.size(), config, seed, "finetune", views, 1,
        [&](std::span<const std::size_t> idx, std::size_t, ParamBinding& binding) {
          std::vector<int> y;
          for (auto i : idx) y.push_back(train.labels[i]);
          Tensor z = forward_encoder(enc, Tensor::from_matrix(select_rows(train.x, idx)),
                                     &binding);
          return ce_loss(forward_head(head, z, &binding), y);
        });
  }
  r.final_loss = r.loss_curve.empty() ? kNaN : r.loss_curve.back();
  r.accuracy = accuracy(r.encoder, r.head, test);
  return r;
}

double accuracy(const EncoderParams& encoder, const HeadParams& head,
                const LabeledSet& data) {
  if (data.size() == 0) throw ConfigError("accuracy: empty evaluation set");
  const auto pred = argmax_rows(predict_logits(head, embed(encoder, data.x)));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == data.labels[i];
  return 100.0 * static_cast<double>(correct) / static_cast<double>(data.size());
}

namespace {

RunReport make_report(std::string method, EvalMode mode, std::uint64_t seed,
                      const PipelineConfig& config) {
  RunReport r;
  r.method = std::move(method);
  r.eval_mode = mode;
  r.seed = seed;
  r.eps_ab = kNaN;
  r.config = config.to_json();
  return r;
}

void fill_eval(RunReport& r, const EvalResult& e) {
  r.eps_b = e.final_loss;
  r.accuracy = e.accuracy;
  r.eval_curve = e.loss_curve;
}

}  // namespace

RunReport run_distilled(const EncoderParams& teacher, const DatasetBundle& bundle,
                        const PipelineConfig& config, LossKind loss, double alpha,
                        EvalMode mode, std::uint64_t seed, StageResult* distilled) {
  const auto t0 = Clock::now();
  PipelineConfig cfg = config;
  cfg.distill.loss = loss;
  cfg.distill.alpha = alpha;
  RunReport r = make_report(to_string(loss), mode, seed, cfg);
  StageResult student = distill(teacher, bundle.paired, cfg, seed);
  r.eps_ab = student.final_loss;
  r.distill_curve = student.loss_curve;
  fill_eval(r, evaluate_target(student.encoder, bundle.target_labeled,
                               bundle.target_test, bundle.config.num_classes,
                               cfg.stage3(mode), seed));
  if (distilled) *distilled = std::move(student);
  r.wall_seconds = seconds_since(t0);
  return r;
}

const char* to_string(BaselineKind k) {
  switch (k) {
    case BaselineKind::kSupFt: return "sup_ft";
    case BaselineKind::kSslLe: return "ssl_le";
    case BaselineKind::kSslFt: return "ssl_ft";
    case BaselineKind::kPreSslLe: return "pressl_le";
    case BaselineKind::kPreSslFt: return "pressl_ft";
    case BaselineKind::kCmst: return "cmst";
    case BaselineKind::kStats: return "stats";
  }
  return "?";
}

BaselineKind parse_baseline_kind(std::string_view s) {
  for (auto k : {BaselineKind::kSupFt, BaselineKind::kSslLe, BaselineKind::kSslFt,
                 BaselineKind::kPreSslLe, BaselineKind::kPreSslFt, BaselineKind::kCmst,
                 BaselineKind::kStats}) {
    if (s == to_string(k)) return k;
  }
  throw ConfigError("unknown baseline '" + std::string(s) + "'");
}

RunReport run_baseline(BaselineKind kind, const DatasetBundle& bundle,
                       const PipelineConfig& config, std::uint64_t seed,
                       const EncoderParams* teacher, EvalMode cmst_mode) {
  const auto t0 = Clock::now();
  const auto& b = bundle;
  const int k = b.config.num_classes;
  auto needs_teacher = [&] {
    if (!teacher) {
      throw ConfigError(std::string("baseline ") + to_string(kind) +
                        " needs a pretrained source encoder");
    }
  };
  RunReport r;
  switch (kind) {
    case BaselineKind::kSupFt: {
      const PipelineConfig& cfg = config;
      r = make_report("sup_ft", EvalMode::kFineTune, seed, cfg);
      Rng rng(derive_seed(seed, "supervised/init"));
      const auto widths = cfg.model.widths(b.target_labeled.x.cols);
      const EncoderParams init = init_encoder(widths, cfg.model.activation, rng);
      fill_eval(r, evaluate_target(init, b.target_labeled, b.target_test, k,
                                   cfg.stage3(EvalMode::kFineTune), seed));
      break;
    }
    case BaselineKind::kSslLe:
    case BaselineKind::kSslFt:
    case BaselineKind::kPreSslLe:
    case BaselineKind::kPreSslFt: {
      const bool pre = kind == BaselineKind::kPreSslLe || kind == BaselineKind::kPreSslFt;
      const EvalMode mode = (kind == BaselineKind::kSslLe || kind == BaselineKind::kPreSslLe)
                                ? EvalMode::kLinear
                                : EvalMode::kFineTune;
      const PipelineConfig& cfg = config;
      r = make_report(pre ? "pressl" : "ssl", mode, seed, cfg);
      const EncoderParams* init = nullptr;
      if (pre) {
        needs_teacher();
        if (teacher->input_dim() != b.paired.xb.cols) {
          throw ConfigError("PreSSL unavailable: source encoder expects " +
                            std::to_string(teacher->input_dim()) +
                            " inputs but the target modality has " +
                            std::to_string(b.paired.xb.cols));
        }
        init = teacher;
      }
      // Target-modality SSL trains on the target split with its labels hidden;
      // the labels come back only for step 3.
      StageResult ssl = contrastive_pretrain(b.target_labeled.x, cfg.model, cfg.ssl,
                                             cfg.augmentation, seed, init,
                                             pre ? "pressl" : "ssl");
      fill_eval(r, evaluate_target(ssl.encoder, b.target_labeled, b.target_test, k,
                                   cfg.stage3(mode), seed));
      break;
    }
    case BaselineKind::kCmst:
    case BaselineKind::kStats: {
      needs_teacher();
      const LossKind loss = kind == BaselineKind::kCmst ? LossKind::kL2 : LossKind::kStats;
      r = run_distilled(*teacher, b, config, loss, config.distill.alpha,
                        cmst_mode, seed);
      r.method = kind == BaselineKind::kCmst ? "cmst" : "stats";
      break;
    }
  }
  r.wall_seconds = seconds_since(t0);
  return r;
}

}  // namespace cmcd
