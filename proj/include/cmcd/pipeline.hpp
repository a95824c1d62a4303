#pragma once

// The three-step transfer procedure and its baselines:
//   1. contrastive pretraining of a source-modality encoder (InfoNCE on
//      augmented view pairs);
//   2. cross-modality distillation of a target-modality student from the
//      frozen source teacher over paired data;
//   3. linear evaluation (head only) or full fine-tuning on labeled target data.

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "cmcd/losses.hpp"
#include "cmcd/model.hpp"
#include "cmcd/optim.hpp"
#include "cmcd/synth.hpp"

namespace cmcd {

enum class LossKind { kInfoNce, kCmd, kCmc, kInterp, kL2, kStats, kCe };
enum class EvalMode { kLinear, kFineTune };

const char* to_string(LossKind k);
LossKind parse_loss_kind(std::string_view s);
const char* to_string(EvalMode m);  // "LE" / "FT"
EvalMode parse_eval_mode(std::string_view s);

struct ModelConfig {
  std::vector<std::size_t> hidden{64, 64};
  std::size_t embedding_dim = 16;
  Activation activation = Activation::kRelu;

  std::vector<std::size_t> widths(std::size_t input_dim) const;
};

struct TrainConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  int epochs = 100;
  std::size_t batch_size = 64;
  std::vector<int> milestones{60, 70, 80};
  double decay_factor = 0.1;
  double tau = 0.5;
  double alpha = 1.0;
  LossKind loss = LossKind::kCmc;
  EvalMode eval_mode = EvalMode::kLinear;
  bool augment = false;

  void validate(const std::string& section) const;
  AdamConfig adam() const;
  nlohmann::json to_json() const;
};

struct PipelineConfig {
  ModelConfig model;
  AugmentConfig augmentation;
  TrainConfig pretrain;  // step 1 (source InfoNCE)
  TrainConfig ssl;       // target-modality SSL for the ssl / pressl baselines
  TrainConfig distill;   // step 2
  TrainConfig linear;    // step 3, LE
  TrainConfig finetune;  // step 3, FT

  PipelineConfig();
  /// The step-3 settings for `mode`, with eval_mode set accordingly.
  TrainConfig stage3(EvalMode mode) const;
  nlohmann::json to_json() const;
};

struct StageResult {
  EncoderParams encoder;
  std::vector<double> loss_curve;  // mean batch loss per epoch
  double final_loss = 0.0;         // NaN when no epoch ran
};

struct EvalResult {
  HeadParams head;
  EncoderParams encoder;  // unchanged in LE mode
  std::vector<double> loss_curve;
  double final_loss = 0.0;
  double accuracy = 0.0;  // top-1, percent
};

struct RunReport {
  std::string method;
  EvalMode eval_mode = EvalMode::kLinear;
  std::uint64_t seed = 0;
  double eps_ab = 0.0;  // achieved step-2 loss (NaN when the method has no step 2)
  double eps_b = 0.0;   // achieved step-3 loss
  double accuracy = 0.0;
  double wall_seconds = 0.0;
  std::vector<double> distill_curve;
  std::vector<double> eval_curve;
  nlohmann::json config;
};

/// InfoNCE training on augmented views of `x`. Starts from `init` when given,
/// otherwise from a fresh initialization; `stream` names the RNG streams.
StageResult contrastive_pretrain(const Matrix& x, const ModelConfig& model,
                                 const TrainConfig& config,
                                 const AugmentConfig& augmentation, std::uint64_t seed,
                                 const EncoderParams* init = nullptr,
                                 std::string_view stream = "pretrain");

/// Step 1: the source teacher.
StageResult pretrain_source(const Matrix& source, const PipelineConfig& config,
                            std::uint64_t seed);

/// Step 2: trains a fresh target encoder against the frozen `teacher` using
/// config.distill.loss (cmd, cmc, interp, l2 or stats).
StageResult distill(const EncoderParams& teacher, const PairedSet& paired,
                    const PipelineConfig& config, std::uint64_t seed);

/// Step 3. LE trains only the head on frozen embeddings; FT trains head and
/// encoder jointly with one learning rate.
EvalResult evaluate_target(const EncoderParams& encoder, const LabeledSet& train,
                           const LabeledSet& test, int num_classes,
                           const TrainConfig& config, std::uint64_t seed);

/// Top-1 accuracy (percent) of head o encoder on `data`.
double accuracy(const EncoderParams& encoder, const HeadParams& head,
                const LabeledSet& data);

/// Distill with `loss` then evaluate in `mode`.
RunReport run_distilled(const EncoderParams& teacher, const DatasetBundle& bundle,
                        const PipelineConfig& config, LossKind loss, double alpha,
                        EvalMode mode, std::uint64_t seed,
                        StageResult* distilled = nullptr);

enum class BaselineKind { kSupFt, kSslLe, kSslFt, kPreSslLe, kPreSslFt, kCmst, kStats };

const char* to_string(BaselineKind k);
BaselineKind parse_baseline_kind(std::string_view s);

/// One baseline under the same evaluation protocol as evaluate_target.
/// `teacher` is required for pressl_*, cmst and stats. cmst and stats are
/// evaluated in `cmst_mode`; the others fix their own. PreSSL needs matching
/// source/target input widths and throws ConfigError otherwise.
RunReport run_baseline(BaselineKind kind, const DatasetBundle& bundle,
                       const PipelineConfig& config, std::uint64_t seed,
                       const EncoderParams* teacher = nullptr,
                       EvalMode cmst_mode = EvalMode::kLinear);

}  // namespace cmcd
