#include <gtest/gtest.h>

#include <cmath>

#include "pddn/synth.hpp"
#include "pddn/training.hpp"
#include "test_support.hpp"

namespace pddn {
namespace {

struct Fixture {
  SynthCohort synth;
  std::vector<Sample> samples;
};

Fixture make_fixture(int n = 12, std::uint64_t seed = 7) {
  SynthConfig c;
  c.n_subjects = n;
  c.dims = Dims{16, 16, 16};
  c.seed = seed;
  Fixture f{generate_cohort(c), {}};
  f.samples = make_samples(f.synth.cohort, f.synth.atlas.atlas, f.synth.atlas.table);
  return f;
}

TrainConfig quick_config(int epochs = 3) {
  TrainConfig t;
  t.epochs = epochs;
  t.seed = 5;
  return t;
}

ModelParams small_model() { return init_model(ModelInit{4, 3, 65.0, 10.0}); }

bool group_equal(const ModelParams& a, const ModelParams& b, ParamGroup g) {
  const auto pa = list_params(a);
  const auto pb = list_params(b);
  for (std::size_t i = 0; i < pa.size(); ++i) {
    if (pa[i].group == g && pa[i].param->value != pb[i].param->value) return false;
  }
  return true;
}

TEST(Train, InvalidStage) {
  auto f = make_fixture(4);
  ModelParams m = small_model();
  EXPECT_PDDN_ERROR(train_stage(4, f.samples, quick_config(), m), Errc::InvalidStage);
  EXPECT_PDDN_ERROR(train_stage(0, f.samples, quick_config(), m), Errc::InvalidStage);
}

TEST(Train, EmptyCohort) {
  ModelParams m = small_model();
  EXPECT_PDDN_ERROR(train_stage(1, {}, quick_config(), m), Errc::EmptyCohort);
}

TEST(Train, StageTwoNeedsHealthySubjects) {
  auto f = make_fixture(8);
  std::vector<Sample> no_healthy;
  for (const auto& s : f.samples) {
    if (!s.is_healthy) no_healthy.push_back(s);
  }
  ModelParams m = small_model();
  EXPECT_PDDN_ERROR(train_stage(2, no_healthy, quick_config(), m), Errc::NoHealthySubjects);
}

TEST(Train, UnlabeledSubjectRejected) {
  auto f = make_fixture(4);
  f.samples[1].label.reset();
  ModelParams m = small_model();
  EXPECT_PDDN_ERROR(train_stage(1, f.samples, quick_config(), m), Errc::InvalidArgument);
}

TEST(Train, InvalidConfig) {
  auto f = make_fixture(4);
  ModelParams m = small_model();
  TrainConfig t = quick_config();
  t.batch = 0;
  EXPECT_PDDN_ERROR(train_stage(1, f.samples, t, m), Errc::InvalidArgument);
}

TEST(Train, StageTwoExactRegressorIsAFixedPoint) {
  SynthConfig c;
  c.n_subjects = 8;
  c.dims = Dims{16, 16, 16};
  c.age_min = c.age_max = 65.0;
  auto synth = generate_cohort(c);
  auto samples = make_samples(synth.cohort, synth.atlas.atlas, synth.atlas.table);
  ModelParams m = small_model();
  for (auto& p : list_params(m)) {
    if (p.group == ParamGroup::Branch2 && p.name.find("head") != std::string::npos) {
      std::fill(p.param->value.begin(), p.param->value.end(), 0.0);
    }
  }
  const ModelParams before = m;
  TrainConfig t = quick_config(2);
  t.lr = 0.0;
  const auto r = train_stage(2, samples, t, m);
  EXPECT_EQ(r.trace.front().loss, 0.0);
  EXPECT_TRUE(params_equal(m, before));
}

TEST(Train, StageOneLossDecreases) {
  auto f = make_fixture(12);
  ModelParams m = small_model();
  const auto r = train_stage(1, f.samples, quick_config(15), m);
  ASSERT_EQ(r.trace.size(), 15u);
  EXPECT_LT(r.trace.back().loss, r.trace.front().loss);
  EXPECT_EQ(r.trace.front().lr, 1e-3);
  for (const auto& e : r.trace) EXPECT_EQ(e.stage, 1);
}

TEST(Train, StageOneFitsNormalization) {
  auto f = make_fixture(6);
  ModelParams m = small_model();
  train_stage(1, f.samples, quick_config(1), m);
  double sum = 0;
  double n = 0;
  for (const auto& s : f.samples) {
    for (double x : s.volume->data) sum += x;
    n += static_cast<double>(s.volume->data.size());
  }
  EXPECT_NEAR(m.encoder.input_center, sum / n, 1e-9);
  double asum = 0;
  for (const auto& s : f.samples) asum += s.agg.mean;
  EXPECT_NEAR(m.fusion.agg_center[0], asum / 6.0, 1e-12);
  EXPECT_GT(m.encoder.input_scale, 0.0);
}

TEST(Train, StageTwoTrainsOnlyBranchTwo) {
  auto f = make_fixture(12);
  ModelParams m = small_model();
  train_stage(1, f.samples, quick_config(1), m);
  const ModelParams before = m;
  train_stage(2, f.samples, quick_config(2), m);
  EXPECT_TRUE(group_equal(m, before, ParamGroup::Encoder));
  EXPECT_TRUE(group_equal(m, before, ParamGroup::Fusion));
  EXPECT_TRUE(group_equal(m, before, ParamGroup::Branch1));
  EXPECT_FALSE(group_equal(m, before, ParamGroup::Branch2));
  EXPECT_EQ(m.encoder.input_center, before.encoder.input_center);
}

TEST(Train, StageThreeTrainsEverything) {
  auto f = make_fixture(12);
  ModelParams m = small_model();
  train_stage(1, f.samples, quick_config(1), m);
  train_stage(2, f.samples, quick_config(1), m);
  const ModelParams before = m;
  const auto r = train_stage(3, f.samples, quick_config(2), m);
  for (auto g : {ParamGroup::Encoder, ParamGroup::Fusion, ParamGroup::Branch1, ParamGroup::Branch2}) {
    EXPECT_FALSE(group_equal(m, before, g)) << group_name(g);
  }
  for (const auto& e : r.trace) EXPECT_NEAR(e.loss, e.age_loss + e.cls_loss, 1e-9);
}

TEST(Train, AblationsHoldTheirParts) {
  auto f = make_fixture(12);
  TrainConfig t = quick_config(2);
  t.options.use_fusion = false;
  t.options.use_age_branch = false;
  ModelParams m = small_model();
  train_stage(1, f.samples, t, m);
  const ModelParams before = m;
  train_stage(3, f.samples, t, m);
  for (const auto& p : list_params(m)) {
    if (p.group == ParamGroup::Fusion) {
      for (double x : p.param->value) EXPECT_EQ(x, 0.0);
    }
  }
  EXPECT_TRUE(group_equal(m, before, ParamGroup::Branch2));
  EXPECT_FALSE(group_equal(m, before, ParamGroup::Branch1));
}

TEST(Train, DeterministicAndThreadCountIndependent) {
  auto f = make_fixture(10);
  ModelParams a = small_model();
  ModelParams b = small_model();
  ModelParams c = small_model();
  TrainConfig t = quick_config(2);
  const auto ra = train_stage(1, f.samples, t, a);
  const auto rb = train_stage(1, f.samples, t, b);
  t.jobs = 3;
  const auto rc = train_stage(1, f.samples, t, c);
  EXPECT_TRUE(params_equal(a, b));
  EXPECT_TRUE(params_equal(a, c));
  EXPECT_EQ(format_loss_trace(ra.trace), format_loss_trace(rb.trace));
  EXPECT_EQ(format_loss_trace(ra.trace), format_loss_trace(rc.trace));
  EXPECT_EQ(ra.optim, rc.optim);
}

TEST(Train, CallbackSeesEveryEpoch) {
  auto f = make_fixture(6);
  ModelParams m = small_model();
  std::vector<int> seen;
  train_stage(1, f.samples, quick_config(3), m, [&](const EpochLog& e) { seen.push_back(e.epoch); });
  EXPECT_EQ(seen, (std::vector<int>{1, 2, 3}));
}

TEST(Train, CosineScheduleAcrossEpochs) {
  auto f = make_fixture(8);
  ModelParams m = small_model();
  const auto r = train_stage(1, f.samples, quick_config(4), m);
  // 8 subjects, batch 4: 2 steps per epoch, 8 steps in total.
  EXPECT_EQ(r.optim.total_steps, 8);
  EXPECT_EQ(r.optim.step, 8);
  EXPECT_NEAR(r.trace[2].lr, 1e-3 * 0.5 * (1 + std::cos(M_PI * 4.0 / 8.0)), 1e-18);
}

TEST(LossTrace, Format) {
  const std::string s = format_loss_trace({{1, 1, 0.5, 0.0, 0.5, 0.001}});
  EXPECT_EQ(s, "stage,epoch,loss,age_loss,cls_loss,lr\n1,1,0.5,0,0.5,0.001\n");
}

TEST(Evaluate, RequiresLabelsAndSubjects) {
  auto f = make_fixture(4);
  const ModelParams m = small_model();
  EXPECT_PDDN_ERROR(evaluate(m, {}, AgingPriorParams()), Errc::EmptyCohort);
  f.samples[0].label.reset();
  try {
    evaluate(m, f.samples, AgingPriorParams());
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::InvalidArgument);
    EXPECT_NE(std::string(e.what()).find("predict"), std::string::npos);
  }
}

TEST(Evaluate, RecordsMatchForwardPass) {
  auto f = make_fixture(6);
  const ModelParams m = small_model();
  const AgingPriorParams prior;
  const auto ev = evaluate(m, f.samples, prior, {}, 2);
  ASSERT_EQ(ev.records.size(), 6u);
  for (std::size_t i = 0; i < 6; ++i) {
    const auto p = predict_subject(m, *f.samples[i].volume, f.samples[i].agg, f.samples[i].age, prior);
    EXPECT_EQ(ev.records[i].subject_id, f.samples[i].id);
    EXPECT_EQ(ev.records[i].p_pd, p.decision.p_pd);
    EXPECT_EQ(ev.records[i].delta, p.delta);
    EXPECT_EQ(ev.records[i].decision, p.decision.label);
  }
  EXPECT_EQ(ev.metrics.counts.total(), 6);
  EXPECT_EQ(predict(m, f.samples, prior), ev.records);
}

TEST(Predict, AgeBranchOffLeavesLogitsUncorrected) {
  auto f = make_fixture(2);
  const ModelParams m = small_model();
  const auto p = predict_subject(m, *f.samples[0].volume, f.samples[0].agg, 60.0, AgingPriorParams(), {true, false});
  EXPECT_EQ(p.corrected, p.logits);
}

}  // namespace
}  // namespace pddn
