#pragma once

// Three-stage training:
//   1. encoder + fusion + branch1 on cross entropy of the raw logits
//   2. branch2 alone, squared error against chronological age, healthy Others only
//   3. every parameter on the full calibrated loss

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "pddn/cohort.hpp"
#include "pddn/metrics.hpp"
#include "pddn/model.hpp"
#include "pddn/optim.hpp"

namespace pddn {

/// One subject ready for the model: scan plus its precomputed prior aggregate.
struct Sample {
  std::string id;
  std::shared_ptr<const Volume3D> volume;
  AggregatedFeature agg;
  double age = 0.0;
  std::optional<Label> label;
  bool is_healthy = false;
};

/// Loads missing volumes and aggregates every subject against the atlas.
std::vector<Sample> make_samples(Cohort& cohort, const AtlasVolume& atlas, const RelevanceTable& table);

/// Sets the encoder input and prior-aggregate standardization constants to
/// the mean and standard deviation over `samples`. Stage 1 calls this.
void fit_normalization(ModelParams& model, const std::vector<Sample>& samples);

struct TrainConfig {
  int epochs = 30;
  /// Number of per-sample gradients accumulated per optimizer step.
  int batch = 4;
  double lr = 1e-3;
  double weight_decay = 1e-3;
  std::uint64_t seed = 0;
  /// Worker threads for per-sample passes; results do not depend on it.
  int jobs = 1;
  ModelOptions options;
  AgingPriorParams prior;

  void validate() const;
};

struct EpochLog {
  int stage = 0;
  int epoch = 0;
  /// Mean per-sample objective of the stage.
  double loss = 0.0;
  double age_loss = 0.0;
  double cls_loss = 0.0;
  /// Learning rate of the epoch's first step.
  double lr = 0.0;
};

struct StageResult {
  std::vector<EpochLog> trace;
  OptimState optim;
};

using EpochCallback = std::function<void(const EpochLog&)>;

/// Runs one stage in place on `model`. Throws InvalidStage, EmptyCohort,
/// or NoHealthySubjects (stage 2).
StageResult train_stage(int stage, const std::vector<Sample>& samples, const TrainConfig& config, ModelParams& model,
                        const EpochCallback& on_epoch = {});

/// `stage,epoch,loss,age_loss,cls_loss,lr`
std::string format_loss_trace(const std::vector<EpochLog>& trace);

struct Evaluation {
  Metrics metrics;
  std::vector<PredictionRecord> records;
};

/// Forward pass per sample, in input order.
std::vector<PredictionRecord> predict(const ModelParams& model, const std::vector<Sample>& samples,
                                      const AgingPriorParams& prior, const ModelOptions& options = {}, int jobs = 1);

/// Predictions plus confusion metrics and AUC (undefined when one class is absent).
/// Every sample must be labeled.
Evaluation evaluate(const ModelParams& model, const std::vector<Sample>& samples, const AgingPriorParams& prior,
                    const ModelOptions& options = {}, int jobs = 1);

/// Metrics from already-written predictions (AUC from p_pd).
Metrics metrics_from_predictions(const std::vector<PredictionRecord>& records);

}  // namespace pddn
