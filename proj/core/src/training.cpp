#include "pddn/training.hpp"

#include <algorithm>
#include <array>
#include <tuple>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "pddn/error.hpp"
#include "pddn/synth.hpp"
#include "parallel.hpp"

namespace pddn {

namespace {

using detail::parallel_for;

struct SampleLoss {
  double total = 0.0;
  double age = 0.0;
  double cls = 0.0;
};

bool trains_group(int stage, ParamGroup group, const ModelOptions& options) {
  switch (stage) {
    case 1: return group == ParamGroup::Encoder || group == ParamGroup::Branch1 ||
                   (group == ParamGroup::Fusion && options.use_fusion);
    case 2: return group == ParamGroup::Branch2;
    default:
      if (group == ParamGroup::Fusion) return options.use_fusion;
      if (group == ParamGroup::Branch2) return options.use_age_branch;
      return true;
  }
}

Label require_label(const Sample& s) {
  if (!s.label) throw Error(Errc::InvalidArgument, "subject " + s.id + " has no label");
  return *s.label;
}

DenseFeature forward_fused(const Sample& s, const ModelParams& m, const ModelOptions& options, EncoderTape* tape) {
  DenseFeature dense = encode_dense(*s.volume, m.encoder, tape);
  return options.use_fusion ? upsample_fuse(s.agg, dense, m.fusion) : dense;
}

// Gradient of one sample's objective, accumulated into `work` (whose grads start at zero).
SampleLoss sample_gradient(int stage, const Sample& s, const DenseFeature* cached_fused, const TrainConfig& cfg,
                           ModelParams& work) {
  SampleLoss out;
  if (stage == 2) {
    BranchTape tape;
    const double pred = predict_brain_age(*cached_fused, work.branch2, &tape);
    const double err = pred - s.age;
    out.total = out.age = err * err;
    predict_brain_age_backward(tape, 2.0 * err, work.branch2, nullptr);
    return out;
  }

  const Label label = require_label(s);
  EncoderTape etape;
  const DenseFeature fused = forward_fused(s, work, cfg.options, &etape);
  DenseFeature grad_fused(fused.channels, fused.dims);
  if (stage == 3 && cfg.options.use_age_branch) {
    const LossBreakdown l =
        total_loss_backward(fused, s.age, label, work.branch1, work.branch2, cfg.prior, &grad_fused);
    out = {l.total, l.age, l.cls};
  } else {
    BranchTape tape;
    const Logits z = classify(fused, work.branch1, &tape);
    out.cls = out.total = cls_loss(z, label);
    classify_backward(tape, cls_loss_grad(z, label), work.branch1, &grad_fused);
  }
  if (cfg.options.use_fusion) upsample_fuse_backward(s.agg, grad_fused, work.fusion);
  encode_dense_backward(etape, grad_fused, work.encoder);
  return out;
}

void copy_values(const ModelParams& from, ModelParams& to) {
  const auto src = list_params(from);
  auto dst = list_params(to);
  for (std::size_t i = 0; i < src.size(); ++i) dst[i].param->value = src[i].param->value;
}

}  // namespace

std::vector<Sample> make_samples(Cohort& cohort, const AtlasVolume& atlas, const RelevanceTable& table) {
  load_volumes(cohort);
  std::vector<Sample> out;
  out.reserve(cohort.size());
  for (const auto& s : cohort.subjects) {
    Sample x;
    x.id = s.id;
    x.volume = s.volume;
    x.agg = aggregate_subject(*s.volume, atlas, table);
    x.age = s.age;
    x.label = s.label;
    x.is_healthy = s.is_healthy;
    out.push_back(std::move(x));
  }
  return out;
}

void fit_normalization(ModelParams& model, const std::vector<Sample>& samples) {
  if (samples.empty()) throw Error(Errc::EmptyCohort, "normalization needs at least one subject");
  auto spread = [](double sum, double sq, double n) {
    const double mean = sum / n;
    const double var = std::max(0.0, sq / n - mean * mean);
    const double sd = std::sqrt(var);
    return std::pair{mean, sd > 1e-12 ? sd : 1.0};
  };
  double sum = 0.0;
  double sq = 0.0;
  double count = 0.0;
  std::array<double, 2> agg_sum{};
  std::array<double, 2> agg_sq{};
  for (const auto& s : samples) {
    if (!s.volume) throw Error(Errc::InvalidArgument, "subject " + s.id + " has no volume");
    for (double x : s.volume->data) {
      sum += x;
      sq += x * x;
    }
    count += static_cast<double>(s.volume->data.size());
    agg_sum[0] += s.agg.mean;
    agg_sq[0] += s.agg.mean * s.agg.mean;
    agg_sum[1] += s.agg.std;
    agg_sq[1] += s.agg.std * s.agg.std;
  }
  std::tie(model.encoder.input_center, model.encoder.input_scale) = spread(sum, sq, count);
  const auto n = static_cast<double>(samples.size());
  for (std::size_t k = 0; k < 2; ++k) {
    std::tie(model.fusion.agg_center[k], model.fusion.agg_scale[k]) = spread(agg_sum[k], agg_sq[k], n);
  }
}

void TrainConfig::validate() const {
  if (epochs < 1) throw Error(Errc::InvalidArgument, "epochs must be >= 1");
  if (batch < 1) throw Error(Errc::InvalidArgument, "batch must be >= 1");
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw Error(Errc::InvalidArgument, "lr must be finite and >= 0");
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) {
    throw Error(Errc::InvalidArgument, "weight_decay must be finite and >= 0");
  }
  if (jobs < 1) throw Error(Errc::InvalidArgument, "jobs must be >= 1");
}

StageResult train_stage(int stage, const std::vector<Sample>& samples, const TrainConfig& config, ModelParams& model,
                        const EpochCallback& on_epoch) {
  if (stage < 1 || stage > 3) throw Error(Errc::InvalidStage, "stage must be 1, 2 or 3, got " + std::to_string(stage));
  config.validate();
  if (samples.empty()) throw Error(Errc::EmptyCohort, "stage " + std::to_string(stage) + " has no subjects");

  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Sample& s = samples[i];
    if (!s.volume) throw Error(Errc::InvalidArgument, "subject " + s.id + " has no volume");
    if (stage == 2) {
      if (s.label == Label::Other && s.is_healthy) pool.push_back(i);
    } else {
      require_label(s);
      pool.push_back(i);
    }
  }
  if (pool.empty()) throw Error(Errc::NoHealthySubjects, "stage 2 needs healthy Other subjects");

  if (!config.options.use_fusion) model.fusion.set_zero();
  if (stage == 1) fit_normalization(model, samples);

  // Stage 2 leaves encoder and fusion untouched, so their output is fixed.
  std::vector<DenseFeature> cached(samples.size());
  if (stage == 2) {
    parallel_for(pool.size(), config.jobs, [&](std::size_t k) {
      cached[pool[k]] = forward_fused(samples[pool[k]], model, config.options, nullptr);
    });
  }

  std::vector<Param*> trainable;
  for (auto& p : list_params(model)) {
    if (trains_group(stage, p.group, config.options)) trainable.push_back(p.param);
  }
  std::vector<std::size_t> trainable_index;
  {
    const auto all = list_params(model);
    for (std::size_t i = 0; i < all.size(); ++i) {
      if (trains_group(stage, all[i].group, config.options)) trainable_index.push_back(i);
    }
  }

  const auto batch = static_cast<std::size_t>(config.batch);
  const std::size_t steps_per_epoch = (pool.size() + batch - 1) / batch;
  const auto total_steps = static_cast<std::int64_t>(steps_per_epoch) * config.epochs;
  StageResult result;
  result.optim = OptimState::for_params(trainable, AdamWConfig{config.lr, config.weight_decay}, total_steps);

  std::vector<ModelParams> work(batch, model);
  std::vector<SampleLoss> losses(batch);
  std::int64_t step = 0;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::vector<std::size_t> order = pool;
    std::mt19937_64 rng(mix_seed(config.seed, static_cast<std::uint64_t>(stage) * 100000 + epoch));
    std::shuffle(order.begin(), order.end(), rng);

    EpochLog log;
    log.stage = stage;
    log.epoch = epoch + 1;
    log.lr = cosine_lr(step, total_steps, config.lr);

    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t count = std::min(batch, order.size() - start);
      parallel_for(count, config.jobs, [&](std::size_t k) {
        copy_values(model, work[k]);
        zero_grads(work[k]);
        const std::size_t idx = order[start + k];
        losses[k] = sample_gradient(stage, samples[idx], stage == 2 ? &cached[idx] : nullptr, config, work[k]);
      });

      // Fixed-order merge keeps results independent of the thread count.
      zero_grads(model);
      auto target = list_params(model);
      for (std::size_t k = 0; k < count; ++k) {
        auto src = list_params(work[k]);
        for (std::size_t t : trainable_index) {
          auto& g = target[t].param->grad;
          const auto& w = src[t].param->grad;
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += w[i];
        }
        log.loss += losses[k].total;
        log.age_loss += losses[k].age;
        log.cls_loss += losses[k].cls;
      }
      const double scale = 1.0 / static_cast<double>(count);
      for (Param* p : trainable) {
        for (double& g : p->grad) g *= scale;
      }
      adamw_step(trainable, result.optim, cosine_lr(step, total_steps, config.lr));
      ++step;
    }

    const auto n = static_cast<double>(order.size());
    log.loss /= n;
    log.age_loss /= n;
    log.cls_loss /= n;
    result.trace.push_back(log);
    if (on_epoch) on_epoch(log);
  }
  zero_grads(model);
  return result;
}

std::string format_loss_trace(const std::vector<EpochLog>& trace) {
  std::ostringstream out;
  out << "stage,epoch,loss,age_loss,cls_loss,lr\n";
  for (const auto& e : trace) {
    out << e.stage << ',' << e.epoch << ',' << format_double(e.loss) << ',' << format_double(e.age_loss) << ','
        << format_double(e.cls_loss) << ',' << format_double(e.lr) << '\n';
  }
  return out.str();
}

std::vector<PredictionRecord> predict(const ModelParams& model, const std::vector<Sample>& samples,
                                      const AgingPriorParams& prior, const ModelOptions& options, int jobs) {
  std::vector<PredictionRecord> records(samples.size());
  parallel_for(samples.size(), jobs, [&](std::size_t i) {
    const Sample& s = samples[i];
    if (!s.volume) throw Error(Errc::InvalidArgument, "subject " + s.id + " has no volume");
    const Prediction p = predict_subject(model, *s.volume, s.agg, s.age, prior, options);
    PredictionRecord& r = records[i];
    r.subject_id = s.id;
    r.label = s.label;
    r.p_pd = p.decision.p_pd;
    r.delta = p.delta;
    r.predicted_age = p.predicted_age;
    r.decision = p.decision.label;
  });
  return records;
}

Metrics metrics_from_predictions(const std::vector<PredictionRecord>& records) {
  ConfusionCounts counts;
  std::vector<double> scores;
  // std::vector<bool> has no contiguous storage to span over.
  auto positive = std::make_unique<bool[]>(records.size());
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (!r.label) {
      throw Error(Errc::InvalidArgument, "subject " + r.subject_id + " has no label; use predict for unlabeled data");
    }
    counts.add(*r.label == Label::PD, r.decision == Label::PD);
    scores.push_back(r.p_pd);
    positive[i] = *r.label == Label::PD;
    n_pos += positive[i] ? 1 : 0;
  }
  Metrics m = compute_metrics(counts);
  if (n_pos > 0 && n_pos < records.size()) {
    m.auc = roc_auc(scores, std::span<const bool>(positive.get(), records.size()));
  }
  return m;
}

Evaluation evaluate(const ModelParams& model, const std::vector<Sample>& samples, const AgingPriorParams& prior,
                    const ModelOptions& options, int jobs) {
  if (samples.empty()) throw Error(Errc::EmptyCohort, "evaluate needs at least one subject");
  for (const auto& s : samples) {
    if (!s.label) {
      throw Error(Errc::InvalidArgument, "subject " + s.id + " has no label; use predict for unlabeled data");
    }
  }
  Evaluation ev;
  ev.records = predict(model, samples, prior, options, jobs);
  ev.metrics = metrics_from_predictions(ev.records);
  return ev;
}

}  // namespace pddn
