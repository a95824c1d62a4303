#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "cmcd/checkpoint.hpp"
#include "cmcd/errors.hpp"
#include "cmcd/losses.hpp"
#include "cmcd/pipeline.hpp"

using namespace cmcd;
namespace fs = std::filesystem;

namespace {

GeneratorConfig small_data(double gap = 0.0, std::uint64_t seed = 1) {
  GeneratorConfig c;
  c.n_source = 1000;
  c.n_paired = 400;
  c.n_target = 100;
  c.n_test = 400;
  c.gap = gap;
  c.seed = seed;
  return c;
}

PipelineConfig short_pipeline(int epochs = 5) {
  PipelineConfig pc;
  for (TrainConfig* t : {&pc.pretrain, &pc.ssl, &pc.distill, &pc.linear, &pc.finetune}) {
    t->epochs = epochs;
    t->milestones.clear();
  }
  return pc;
}

std::string checkpoint_bytes(const EncoderParams& e) {
  const auto p = fs::temp_directory_path() / "cmcd-test-pipeline-ckpt.bin";
  save_encoder(e, p);
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// Mean over fixed consecutive batches of CMD minus the teacher entropy,
// i.e. the summed column KL(P_A || P_B).
double mean_batch_kl(const EncoderParams& teacher, const EncoderParams& student,
                     const PairedSet& paired, double tau, std::size_t bs) {
  const Matrix za = embed(teacher, paired.xa), zb = embed(student, paired.xb);
  double total = 0.0;
  std::size_t batches = 0;
  for (std::size_t start = 0; start + bs <= paired.size(); start += bs, ++batches) {
    std::vector<std::size_t> idx(bs);
    std::iota(idx.begin(), idx.end(), start);
    const Matrix a = select_rows(za, idx), b = select_rows(zb, idx);
    total += cmd_loss(Tensor::from_matrix(a), Tensor::from_matrix(b), tau).item() -
             gibbs_entropy(gibbs_matrix(a, a, tau));
  }
  return total / static_cast<double>(batches);
}

// InfoNCE of an encoder on fixed augmented view pairs, batched like
// training; the same views before and after training.
double mean_infonce(const EncoderParams& enc, const Matrix& x, const PipelineConfig& pc) {
  double total = 0.0;
  std::size_t batches = 0;
  for (std::size_t start = 0; start + 64 <= x.rows; start += 64, ++batches) {
    std::vector<std::size_t> idx(64);
    std::iota(idx.begin(), idx.end(), start);
    const Matrix batch = select_rows(x, idx);
    const Matrix v1 = augment(batch, 2 * batches, pc.augmentation);
    const Matrix v2 = augment(batch, 2 * batches + 1, pc.augmentation);
    total += info_nce(Tensor::from_matrix(embed(enc, v1)), Tensor::from_matrix(embed(enc, v2)),
                      pc.pretrain.tau, Reduction::kMean)
                 .item();
  }
  return total / static_cast<double>(batches);
}

class SmallPipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    bundle_ = new DatasetBundle(generate(small_data()));
    PipelineConfig pc = short_pipeline(10);
    teacher_ = new EncoderParams(pretrain_source(bundle_->source, pc, 1).encoder);
  }
  static void TearDownTestSuite() {
    delete bundle_;
    delete teacher_;
  }
  static DatasetBundle* bundle_;
  static EncoderParams* teacher_;
};
DatasetBundle* SmallPipeline::bundle_ = nullptr;
EncoderParams* SmallPipeline::teacher_ = nullptr;

}  // namespace

TEST(Pretrain, ZeroEpochsReturnsTheInitialization) {
  const auto b = generate(small_data());
  PipelineConfig pc = short_pipeline(0);
  Rng rng(5);
  const auto init = init_encoder(pc.model.widths(b.source.cols), Activation::kRelu, rng);
  const auto r = contrastive_pretrain(b.source, pc.model, pc.pretrain, pc.augmentation, 1, &init);
  EXPECT_EQ(checkpoint_bytes(r.encoder), checkpoint_bytes(init));
  EXPECT_TRUE(r.loss_curve.empty());
}

TEST(Pretrain, LossDecreasesFromInitialization) {
  const auto b = generate(small_data());
  const auto init = pretrain_source(b.source, short_pipeline(0), 1).encoder;
  const PipelineConfig pc = short_pipeline(15);
  const auto r = pretrain_source(b.source, pc, 1);
  ASSERT_EQ(r.loss_curve.size(), 15u);
  EXPECT_LT(r.loss_curve.back(), r.loss_curve.front());
  EXPECT_LT(mean_infonce(r.encoder, b.source, pc), 0.8 * mean_infonce(init, b.source, pc));
}

TEST(Pretrain, DivergenceIsReported) {
  const auto b = generate(small_data());
  PipelineConfig pc = short_pipeline(3);
  pc.pretrain.lr = 1e300;
  EXPECT_THROW(pretrain_source(b.source, pc, 1), NumericError);
}

TEST(Pretrain, InvalidConfigIsRejected) {
  const auto b = generate(small_data());
  PipelineConfig pc = short_pipeline(3);
  pc.pretrain.batch_size = 0;
  EXPECT_THROW(pretrain_source(b.source, pc, 1), ConfigError);
  pc = short_pipeline(3);
  pc.pretrain.milestones = {5, 2};
  EXPECT_THROW(pretrain_source(b.source, pc, 1), ConfigError);
}

TEST_F(SmallPipeline, DistillLeavesTeacherUntouched) {
  const std::string before = checkpoint_bytes(*teacher_);
  PipelineConfig pc = short_pipeline(3);
  for (auto kind : {LossKind::kCmd, LossKind::kCmc, LossKind::kInterp, LossKind::kL2,
                    LossKind::kStats}) {
    pc.distill.loss = kind;
    pc.distill.alpha = 0.5;
    distill(*teacher_, bundle_->paired, pc, 1);
    EXPECT_EQ(checkpoint_bytes(*teacher_), before) << to_string(kind);
  }
}

TEST_F(SmallPipeline, CmdDistillationHalvesTheKl) {
  PipelineConfig pc = short_pipeline(0);
  pc.distill.loss = LossKind::kCmd;
  const auto init = distill(*teacher_, bundle_->paired, pc, 2).encoder;
  pc.distill.epochs = 40;
  const auto trained = distill(*teacher_, bundle_->paired, pc, 2).encoder;
  const double before = mean_batch_kl(*teacher_, init, bundle_->paired, 0.5, 64);
  const double after = mean_batch_kl(*teacher_, trained, bundle_->paired, 0.5, 64);
  EXPECT_LT(after, 0.5 * before) << before << " -> " << after;
}

TEST_F(SmallPipeline, InterpolationEndpointsReproduceTheirLosses) {
  PipelineConfig pc = short_pipeline(4);
  auto curve = [&](LossKind k, double alpha) {
    pc.distill.loss = k;
    pc.distill.alpha = alpha;
    const auto r = distill(*teacher_, bundle_->paired, pc, 3);
    return std::make_pair(r.loss_curve, checkpoint_bytes(r.encoder));
  };
  EXPECT_EQ(curve(LossKind::kInterp, 0.0), curve(LossKind::kCmd, 0.0));
  EXPECT_EQ(curve(LossKind::kInterp, 1.0), curve(LossKind::kCmc, 1.0));
}

TEST_F(SmallPipeline, DistillRejectsNonCrossModalLosses) {
  PipelineConfig pc = short_pipeline(1);
  pc.distill.loss = LossKind::kCe;
  EXPECT_THROW(distill(*teacher_, bundle_->paired, pc, 1), ConfigError);
  pc.distill.loss = LossKind::kInfoNce;
  EXPECT_THROW(distill(*teacher_, bundle_->paired, pc, 1), ConfigError);
}

TEST_F(SmallPipeline, LinearEvaluationFreezesTheEncoder) {
  const std::string before = checkpoint_bytes(*teacher_);
  auto target = bundle_->target_labeled;
  auto test = bundle_->target_test;
  const auto r = evaluate_target(*teacher_, target, test, 10,
                                 short_pipeline(5).stage3(EvalMode::kLinear), 1);
  EXPECT_EQ(checkpoint_bytes(r.encoder), before);
  EXPECT_EQ(checkpoint_bytes(*teacher_), before);
  EXPECT_GE(r.accuracy, 0.0);
  EXPECT_LE(r.accuracy, 100.0);
}

TEST_F(SmallPipeline, FineTuningChangesTheEncoderButNotItsInput) {
  const std::string before = checkpoint_bytes(*teacher_);
  const auto r = evaluate_target(*teacher_, bundle_->target_labeled, bundle_->target_test, 10,
                                 short_pipeline(5).stage3(EvalMode::kFineTune), 1);
  EXPECT_NE(checkpoint_bytes(r.encoder), before);
  EXPECT_EQ(checkpoint_bytes(*teacher_), before);
}

TEST_F(SmallPipeline, RunsAreDeterministic) {
  const PipelineConfig pc = short_pipeline(3);
  auto once = [&] {
    return run_distilled(*teacher_, *bundle_, pc, LossKind::kCmd, 0.0, EvalMode::kFineTune, 4);
  };
  const auto a = once(), b = once();
  EXPECT_EQ(a.distill_curve, b.distill_curve);
  EXPECT_EQ(a.eval_curve, b.eval_curve);
  EXPECT_EQ(a.accuracy, b.accuracy);
  EXPECT_EQ(a.config, b.config);
  const auto c =
      run_distilled(*teacher_, *bundle_, pc, LossKind::kCmd, 0.0, EvalMode::kFineTune, 5);
  EXPECT_NE(a.distill_curve, c.distill_curve);
}

TEST_F(SmallPipeline, ReportsCarryAchievedLosses) {
  const auto r = run_distilled(*teacher_, *bundle_, short_pipeline(3), LossKind::kCmc, 1.0,
                               EvalMode::kLinear, 1);
  EXPECT_EQ(r.method, "cmc");
  EXPECT_EQ(r.distill_curve.size(), 3u);
  EXPECT_EQ(r.eps_ab, r.distill_curve.back());
  EXPECT_EQ(r.eps_b, r.eval_curve.back());
  EXPECT_TRUE(std::isfinite(r.eps_ab));
}

TEST_F(SmallPipeline, BaselinesRunAndCheckTheirInputs) {
  const PipelineConfig pc = short_pipeline(2);
  const auto sup = run_baseline(BaselineKind::kSupFt, *bundle_, pc, 1);
  EXPECT_EQ(sup.eval_mode, EvalMode::kFineTune);
  EXPECT_TRUE(std::isnan(sup.eps_ab));
  for (auto kind : {BaselineKind::kSslLe, BaselineKind::kSslFt}) {
    const auto r = run_baseline(kind, *bundle_, pc, 1);
    EXPECT_GE(r.accuracy, 0.0);
  }
  EXPECT_THROW(run_baseline(BaselineKind::kCmst, *bundle_, pc, 1), ConfigError);
  EXPECT_THROW(run_baseline(BaselineKind::kPreSslLe, *bundle_, pc, 1), ConfigError);
  const auto cmst = run_baseline(BaselineKind::kCmst, *bundle_, pc, 1, teacher_);
  EXPECT_EQ(cmst.method, "cmst");
  const auto stats = run_baseline(BaselineKind::kStats, *bundle_, pc, 1, teacher_,
                                  EvalMode::kFineTune);
  EXPECT_EQ(stats.eval_mode, EvalMode::kFineTune);
  const auto pressl = run_baseline(BaselineKind::kPreSslFt, *bundle_, pc, 1, teacher_);
  EXPECT_EQ(pressl.method, "pressl");
  EXPECT_THROW(parse_baseline_kind("socket"), ConfigError);
}

TEST(Pipeline, PreSslNeedsMatchingInputWidths) {
  auto c = small_data();
  c.dim_b = 20;
  const auto b = generate(c);
  const PipelineConfig pc = short_pipeline(1);
  const auto teacher = pretrain_source(b.source, pc, 1).encoder;
  EXPECT_THROW(run_baseline(BaselineKind::kPreSslLe, b, pc, 1, &teacher), ConfigError);
  // Distillation itself works across input widths.
  EXPECT_NO_THROW(run_distilled(teacher, b, pc, LossKind::kCmd, 0.0, EvalMode::kLinear, 1));
}

TEST(Pipeline, EvaluationNeedsEveryClass) {
  const auto b = generate(small_data());
  LabeledSet train;
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < b.target_labeled.size(); ++i)
    if (b.target_labeled.labels[i] != 3) idx.push_back(i);
  train.x = select_rows(b.target_labeled.x, idx);
  for (auto i : idx) train.labels.push_back(b.target_labeled.labels[i]);
  Rng rng(1);
  const auto enc = init_encoder(short_pipeline().model.widths(32), Activation::kRelu, rng);
  EXPECT_THROW(evaluate_target(enc, train, b.target_test, 10,
                               short_pipeline().stage3(EvalMode::kLinear), 1),
               ConfigError);
}

TEST(Pipeline, RandomEncoderLinearProbeIsNearChance) {
  // Labels drawn independently of the inputs, so any encoder is at chance.
  double total = 0.0;
  for (std::uint64_t s = 0; s < 5; ++s) {
    auto c = small_data(1.0, 10 + s);
    const auto b = generate(c);
    Rng rng(derive_seed(s, "random-encoder"));
    const auto enc = init_encoder(short_pipeline().model.widths(32), Activation::kRelu, rng);
    total += evaluate_target(enc, b.target_labeled, b.target_test, 10,
                             short_pipeline(20).stage3(EvalMode::kLinear), s)
                 .accuracy;
  }
  const double mean = total / 5.0;
  EXPECT_GE(mean, 5.0);
  EXPECT_LE(mean, 25.0);
}

TEST(Pipeline, StageThreeSectionsAreSeparate) {
  const PipelineConfig pc;
  EXPECT_EQ(pc.stage3(EvalMode::kLinear).lr, 1e-2);
  EXPECT_EQ(pc.stage3(EvalMode::kFineTune).lr, 1e-3);
  EXPECT_EQ(pc.stage3(EvalMode::kFineTune).eval_mode, EvalMode::kFineTune);
  EXPECT_EQ(pc.stage3(EvalMode::kLinear).loss, LossKind::kCe);
}

TEST(Pipeline, NamesRoundTrip) {
  for (auto k : {LossKind::kInfoNce, LossKind::kCmd, LossKind::kCmc, LossKind::kInterp,
                 LossKind::kL2, LossKind::kStats, LossKind::kCe})
    EXPECT_EQ(parse_loss_kind(to_string(k)), k);
  EXPECT_EQ(parse_eval_mode("LE"), EvalMode::kLinear);
  EXPECT_EQ(parse_eval_mode("FT"), EvalMode::kFineTune);
  EXPECT_THROW(parse_loss_kind("kl"), ConfigError);
}

// Full default configuration: about a minute of single-threaded CPU.
TEST(PipelineSlow, SourceTeacherIsInformative) {
  GeneratorConfig c;
  c.seed = 1;
  const auto b = generate(c);
  const PipelineConfig pc;
  const auto teacher = pretrain_source(b.source, pc, 1);
  PipelineConfig none = pc;
  none.pretrain.epochs = 0;
  const auto init = pretrain_source(b.source, none, 1).encoder;
  EXPECT_LT(mean_infonce(teacher.encoder, b.source, pc), 0.8 * mean_infonce(init, b.source, pc));
  LabeledSet train, test;
  std::vector<std::size_t> tr(500), te(2000);
  std::iota(tr.begin(), tr.end(), 0);
  std::iota(te.begin(), te.end(), 0);
  train.x = select_rows(b.paired.xa, tr);
  for (auto i : tr) train.labels.push_back(b.paired.labels[i]);
  test.x = select_rows(b.source, te);
  for (auto i : te) test.labels.push_back(b.source_labels[i]);
  const auto r = evaluate_target(teacher.encoder, train, test, 10, pc.stage3(EvalMode::kLinear), 1);
  EXPECT_GE(r.accuracy, 80.0);
}
