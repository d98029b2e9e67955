#include "commands.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <iomanip>
#include <nlohmann/json.hpp>
#include <optional>
#include <ostream>
#include <sstream>

#include "pddn/checkpoint.hpp"
#include "pddn/digest.hpp"
#include "pddn/error.hpp"
#include "pddn/preprocess.hpp"
#include "pddn/synth.hpp"
#include "pddn/training.hpp"

namespace pddn::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

// Flags shared by most subcommands; unset flags leave the config untouched.
struct Overrides {
  std::string config_path;
  std::optional<std::string> cohort;
  std::optional<std::string> atlas;
  std::optional<std::string> relevance;
  std::optional<int> jobs;
  std::optional<std::uint64_t> seed;

  void add_config(CLI::App* app) {
    app->add_option("-c,--config", config_path, "INI configuration file")->check(CLI::ExistingFile);
  }
  void add_data(CLI::App* app) {
    app->add_option("--cohort", cohort, "cohort manifest CSV (data.cohort_manifest)");
    app->add_option("--atlas", atlas, "atlas volume (data.atlas_path)");
    app->add_option("--relevance", relevance, "relevance table CSV (data.relevance_csv)");
  }
  void add_jobs(CLI::App* app) { app->add_option("-j,--jobs", jobs, "worker threads"); }
  void add_seed(CLI::App* app) { app->add_option("--seed", seed, "random seed"); }

  RunConfig resolve() const {
    RunConfig cfg = config_path.empty() ? RunConfig{} : load_config(config_path);
    if (cohort) cfg.data.cohort_manifest = *cohort;
    if (atlas) cfg.data.atlas_path = *atlas;
    if (relevance) cfg.data.relevance_csv = *relevance;
    if (jobs) cfg.train.jobs = *jobs;
    if (seed) cfg.train.seed = *seed;
    return cfg;
  }
};

struct Data {
  Cohort cohort;
  AtlasVolume atlas;
  RelevanceTable table = default_relevance_table();
};

RelevanceTable load_table(const RunConfig& cfg) {
  return cfg.data.relevance_csv.empty() ? default_relevance_table() : load_relevance_table(cfg.data.relevance_csv);
}

Data load_data(const RunConfig& cfg) {
  if (cfg.data.cohort_manifest.empty()) throw Error(Errc::InvalidConfig, "no cohort manifest (--cohort)");
  if (cfg.data.atlas_path.empty()) throw Error(Errc::InvalidConfig, "no atlas volume (--atlas)");
  Data d;
  d.table = load_table(cfg);
  d.atlas = read_atlas(cfg.data.atlas_path, d.table.regions());
  d.cohort = read_cohort_manifest(cfg.data.cohort_manifest);
  return d;
}

std::string opt_json(const std::optional<double>& v) { return v ? format_double(*v) : "null"; }

json opt_value(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json metrics_json(const Metrics& m) {
  return {{"tp", m.counts.tp}, {"tn", m.counts.tn}, {"fp", m.counts.fp}, {"fn", m.counts.fn},
          {"acc", opt_value(m.acc)}, {"tpr", opt_value(m.tpr)}, {"fpr", opt_value(m.fpr)}, {"auc", opt_value(m.auc)}};
}

std::optional<double> mean_delta(const std::vector<PredictionRecord>& records, Label label) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : records) {
    if (r.label == label) {
      sum += r.delta;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

int parse_stage(const std::string& text) {
  if (text == "1" || text == "2" || text == "3") return text[0] - '0';
  if (text == "all") return 0;
  throw Error(Errc::InvalidStage, "stage must be 1, 2, 3 or all, got \"" + text + "\"");
}

std::vector<int> stage_plan(int stage, const ModelOptions& options) {
  if (stage != 0) {
    if (stage == 2 && !options.use_age_branch) {
      throw Error(Errc::InvalidConfig, "stage 2 trains the brain-age branch, which is disabled (model.age_branch)");
    }
    return {stage};
  }
  if (options.use_age_branch) return {1, 2, 3};
  return {1, 3};
}

fs::path stage_checkpoint(const fs::path& dir, int stage) { return dir / ("stage" + std::to_string(stage) + ".ckpt"); }

// Trains the planned stages; returns the final parameters.
ModelParams train_stages(const RunConfig& cfg, const std::vector<Sample>& samples, const fs::path& out_dir,
                         int stage_arg, std::ostream& out) {
  const TrainConfig tc = cfg.train_config();
  const auto plan = stage_plan(stage_arg, tc.options);
  // Only settings that change the numbers are hashed: a stagewise run, a run
  // with more workers or one on a copied cohort directory hash alike.
  RunConfig hashed = cfg;
  hashed.train.stage = "all";
  hashed.train.jobs = 1;
  hashed.data = {};
  hashed.preprocess = {};
  const std::string config_hash = sha256_hex(dump_config(hashed));
  fs::create_directories(out_dir);
  write_file_atomic(out_dir / "config.ini", dump_config(cfg));

  ModelParams model;
  bool have_model = false;
  for (int stage : plan) {
    if (stage == 1) {
      model = init_model(cfg.model_init());
    } else if (!have_model) {
      const int prev = (stage == 3 && !tc.options.use_age_branch) ? 1 : stage - 1;
      const fs::path prereq = stage_checkpoint(out_dir, prev);
      if (!fs::exists(prereq)) {
        throw Error(Errc::InvalidStage, "stage " + std::to_string(stage) + " needs the stage " + std::to_string(prev) +
                                            " checkpoint, missing " + prereq.string());
      }
      model = load_checkpoint(prereq).params;
    }
    have_model = true;

    StageResult result = train_stage(stage, samples, tc, model, [&](const EpochLog& e) {
      out << "stage " << e.stage << " epoch " << e.epoch << " loss " << format_double(e.loss) << '\n';
    });
    Checkpoint ckpt{model, stage, config_hash, tc.options, std::move(result.optim)};
    save_checkpoint(ckpt, stage_checkpoint(out_dir, stage));
    write_file_atomic(out_dir / ("loss_stage" + std::to_string(stage) + ".csv"), format_loss_trace(result.trace));
    out << "wrote " << stage_checkpoint(out_dir, stage).string() << '\n';
  }
  return model;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_file_atomic(path, text);
}

std::string format_roc(const std::vector<RocPoint>& points) {
  std::ostringstream os;
  os << "fpr,tpr,threshold\n";
  for (const auto& p : points) {
    os << format_double(p.fpr) << ',' << format_double(p.tpr) << ',' << format_double(p.threshold) << '\n';
  }
  return os.str();
}

Metrics pooled_and_mean(const std::vector<Metrics>& folds, json& mean) {
  ConfusionCounts pooled;
  for (const auto& m : folds) pooled += m.counts;
  for (const char* key : {"acc", "tpr", "fpr", "auc"}) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& m : folds) {
      const auto& v = std::string(key) == "acc"   ? m.acc
                      : std::string(key) == "tpr" ? m.tpr
                      : std::string(key) == "fpr" ? m.fpr
                                                  : m.auc;
      if (v) {
        sum += *v;
        ++n;
      }
    }
    mean[key] = n ? json(sum / static_cast<double>(n)) : json(nullptr);
  }
  return compute_metrics(pooled);
}

}  // namespace

std::string metrics_document(const Metrics& metrics, const std::vector<PredictionRecord>& records) {
  json doc = metrics_json(metrics);
  doc["n"] = records.size();
  doc["mean_delta_pd"] = opt_value(mean_delta(records, Label::PD));
  doc["mean_delta_other"] = opt_value(mean_delta(records, Label::Other));
  return doc.dump(2) + "\n";
}

std::string confusion_table(const ConfusionCounts& c) {
  std::ostringstream os;
  os << std::setw(14) << "" << std::setw(10) << "pred PD" << std::setw(10) << "pred Other" << '\n'
     << std::setw(14) << "true PD" << std::setw(10) << c.tp << std::setw(10) << c.fn << '\n'
     << std::setw(14) << "true Other" << std::setw(10) << c.fp << std::setw(10) << c.tn << '\n';
  return os.str();
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Prior-guided PD diagnosis pipeline", "pddn"};
  app.require_subcommand(1);

  Overrides common;

  // synth
  auto* synth = app.add_subcommand("synth", "generate a seeded synthetic cohort");
  std::string synth_out;
  std::optional<int> synth_n;
  std::optional<std::string> synth_dims;
  std::optional<double> synth_noise;
  std::optional<double> synth_accel;
  std::optional<double> synth_pd_fraction;
  common.add_config(synth);
  synth->add_option("-o,--out", synth_out, "output directory")->required();
  synth->add_option("-n,--n", synth_n, "number of subjects");
  synth->add_option("--dims", synth_dims, "volume size N or DxHxW (multiples of 4)");
  synth->add_option("--noise", synth_noise, "per-voxel noise standard deviation");
  synth->add_option("--acceleration", synth_accel, "extra years in Strong regions for PD");
  synth->add_option("--pd-fraction", synth_pd_fraction, "fraction of PD subjects");
  common.add_seed(synth);

  // preprocess
  auto* prep = app.add_subcommand("preprocess", "run skull strip, bias correction and registration");
  std::optional<std::string> prep_out;
  bool prep_bypass = false;
  common.add_config(prep);
  common.add_data(prep);
  common.add_jobs(prep);
  prep->add_option("-o,--out", prep_out, "processed cohort manifest (default: <cache_dir>/cohort.csv)");
  prep->add_flag("--bypass", prep_bypass, "inputs are already on the atlas grid; only check and relist them");

  // train
  auto* train = app.add_subcommand("train", "three-stage training");
  std::string train_out = "run";
  std::optional<std::string> train_stage_arg;
  std::optional<int> train_epochs;
  std::optional<int> train_channels;
  std::optional<double> train_lr;
  bool no_fusion = false;
  bool no_age = false;
  common.add_config(train);
  common.add_data(train);
  common.add_jobs(train);
  common.add_seed(train);
  train->add_option("-o,--out", train_out, "run directory for checkpoints and loss traces");
  train->add_option("--stage", train_stage_arg, "1, 2, 3 or all");
  train->add_option("--epochs", train_epochs, "epochs per stage");
  train->add_option("--channels", train_channels, "feature channels");
  train->add_option("--lr", train_lr, "base learning rate");
  train->add_flag("--no-fusion", no_fusion, "hold the prior fusion projection at zero");
  train->add_flag("--no-age-branch", no_age, "train without the brain-age branch");

  // predict
  auto* pred = app.add_subcommand("predict", "write per-subject predictions");
  std::string pred_ckpt;
  std::string pred_out;
  common.add_config(pred);
  common.add_data(pred);
  common.add_jobs(pred);
  pred->add_option("--checkpoint", pred_ckpt, "trained checkpoint")->required()->check(CLI::ExistingFile);
  pred->add_option("-o,--out", pred_out, "predictions CSV")->required();

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "metrics for a labeled cohort or a predictions file");
  std::string eval_ckpt;
  std::string eval_predictions;
  std::string eval_out;
  std::string eval_pred_out;
  common.add_config(eval);
  common.add_data(eval);
  common.add_jobs(eval);
  auto* eval_ckpt_opt = eval->add_option("--checkpoint", eval_ckpt, "trained checkpoint")->check(CLI::ExistingFile);
  eval->add_option("--predictions", eval_predictions, "existing predictions CSV")
      ->check(CLI::ExistingFile)
      ->excludes(eval_ckpt_opt);
  eval->add_option("-o,--out", eval_out, "metrics document (JSON)");
  eval->add_option("--predictions-out", eval_pred_out, "also write the predictions CSV");

  // report
  auto* report = app.add_subcommand("report", "confusion matrix and ROC points, or the effective config");
  std::string report_predictions;
  std::string report_out;
  bool dump = false;
  common.add_config(report);
  common.add_jobs(report);
  common.add_seed(report);
  report->add_option("--predictions", report_predictions, "predictions CSV")->check(CLI::ExistingFile);
  report->add_option("-o,--out", report_out, "directory for confusion.txt and roc.csv");
  report->add_flag("--dump-config", dump, "print the effective configuration and exit");

  // split
  auto* split = app.add_subcommand("split", "stratified k-fold manifests");
  int split_folds = 5;
  std::string split_out;
  common.add_config(split);
  common.add_data(split);
  common.add_seed(split);
  split->add_option("--folds", split_folds, "number of folds");
  split->add_option("-o,--out", split_out, "output directory")->required();

  // crossval
  auto* cv = app.add_subcommand("crossval", "k-fold training and evaluation");
  int cv_folds = 5;
  std::string cv_out = "crossval";
  common.add_config(cv);
  common.add_data(cv);
  common.add_jobs(cv);
  common.add_seed(cv);
  cv->add_option("--folds", cv_folds, "number of folds");
  cv->add_option("-o,--out", cv_out, "output directory");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    RunConfig cfg = common.resolve();

    if (*synth) {
      if (synth_n) cfg.synth.n_subjects = *synth_n;
      if (synth_dims) cfg.synth.dims = parse_dims(*synth_dims);
      if (synth_noise) cfg.synth.noise = *synth_noise;
      if (synth_accel) cfg.synth.acceleration = *synth_accel;
      if (synth_pd_fraction) cfg.synth.pd_fraction = *synth_pd_fraction;
      if (common.seed) cfg.synth.seed = *common.seed;
      cfg.synth.validate();
      if (cfg.synth.acceleration <= cfg.prior.zeta - cfg.prior.tau) {
        err << "warning: acceleration " << cfg.synth.acceleration << " <= zeta - tau; the age hinges conflict\n";
      }
      SynthCohort cohort = generate_cohort(cfg.synth);
      write_synth_cohort(cohort, synth_out);
      out << "cohort    " << (fs::path(synth_out) / "cohort.csv").string() << '\n'
          << "atlas     " << (fs::path(synth_out) / "atlas.nii").string() << '\n'
          << "relevance " << (fs::path(synth_out) / "relevance.csv").string() << '\n'
          << "subjects  " << cohort.cohort.size() << '\n';
      return 0;
    }

    if (*prep) {
      if (common.jobs) cfg.preprocess.jobs = *common.jobs;
      if (cfg.data.cohort_manifest.empty()) throw Error(Errc::InvalidConfig, "no cohort manifest (--cohort)");
      Cohort raw = read_cohort_manifest(cfg.data.cohort_manifest);
      std::optional<Dims> grid;
      if (!cfg.data.atlas_path.empty()) grid = read_atlas(cfg.data.atlas_path, load_table(cfg).regions()).dims;
      const fs::path manifest_out = prep_out ? fs::path(*prep_out) : cfg.preprocess.cache_dir / "cohort.csv";

      Cohort processed;
      int failures = 0;
      if (prep_bypass) {
        for (const auto& s : raw.subjects) {
          if (grid) verify_processed(read_volume(s.path), *grid);
          processed.subjects.push_back(s);
        }
      } else {
        std::vector<RawScan> scans;
        for (const auto& s : raw.subjects) scans.push_back({s.id, s.path});
        const auto records = run_pipeline(scans, cfg.preprocess);
        for (std::size_t i = 0; i < records.size(); ++i) {
          const auto& r = records[i];
          std::string status = r.skipped() ? "skipped" : r.ok() ? "ran" : "failed";
          if (r.ok() && grid) {
            try {
              verify_processed(read_volume(r.output), *grid);
            } catch (const Error& e) {
              status = "failed";
              err << r.subject_id << ": " << e.what() << '\n';
            }
          }
          if (status == "failed") {
            ++failures;
            if (!r.error.empty()) err << r.subject_id << ": " << r.error << '\n';
            continue;
          }
          SubjectRecord s = raw.subjects[i];
          s.path = r.output;
          processed.subjects.push_back(std::move(s));
          out << r.subject_id << ' ' << status << ' ' << r.output.string() << '\n';
        }
      }
      if (manifest_out.has_parent_path()) fs::create_directories(manifest_out.parent_path());
      write_cohort_manifest(processed, manifest_out);
      out << "manifest " << manifest_out.string() << " (" << processed.size() << " subjects, " << failures
          << " failed)\n";
      return failures == 0 ? 0 : 1;
    }

    if (*train) {
      if (train_stage_arg) cfg.train.stage = *train_stage_arg;
      if (train_epochs) cfg.train.epochs = *train_epochs;
      if (train_channels) cfg.model.channels = *train_channels;
      if (train_lr) cfg.train.lr = *train_lr;
      if (no_fusion) cfg.model.fusion = false;
      if (no_age) cfg.model.age_branch = false;
      const int stage = parse_stage(cfg.train.stage);
      stage_plan(stage, cfg.model_options());
      Data data = load_data(cfg);
      const auto samples = make_samples(data.cohort, data.atlas, data.table);
      train_stages(cfg, samples, train_out, stage, out);
      return 0;
    }

    if (*pred) {
      Data data = load_data(cfg);
      const Checkpoint ckpt = load_checkpoint(pred_ckpt);
      const auto samples = make_samples(data.cohort, data.atlas, data.table);
      const auto records = predict(ckpt.params, samples, cfg.prior_params(), ckpt.options, cfg.train.jobs);
      write_text(pred_out, format_predictions_csv(records));
      out << "wrote " << pred_out << " (" << records.size() << " subjects)\n";
      return 0;
    }

    if (*eval) {
      std::vector<PredictionRecord> records;
      if (!eval_predictions.empty()) {
        records = read_predictions_csv(eval_predictions);
      } else {
        if (eval_ckpt.empty()) throw Error(Errc::InvalidArgument, "evaluate needs --checkpoint or --predictions");
        Data data = load_data(cfg);
        if (!data.cohort.fully_labeled()) {
          throw Error(Errc::InvalidArgument, "cohort has unlabeled subjects; use `pddn predict` instead");
        }
        const Checkpoint ckpt = load_checkpoint(eval_ckpt);
        const auto samples = make_samples(data.cohort, data.atlas, data.table);
        records = evaluate(ckpt.params, samples, cfg.prior_params(), ckpt.options, cfg.train.jobs).records;
      }
      for (const auto& r : records) {
        if (!r.label) {
          throw Error(Errc::InvalidArgument,
                      "subject " + r.subject_id + " has no label; use `pddn predict` for unlabeled data");
        }
      }
      const std::string doc = metrics_document(metrics_from_predictions(records), records);
      if (!eval_out.empty()) write_text(eval_out, doc);
      if (!eval_pred_out.empty()) write_text(eval_pred_out, format_predictions_csv(records));
      out << doc;
      return 0;
    }

    if (*report) {
      if (dump) {
        out << dump_config(cfg);
        return 0;
      }
      if (report_predictions.empty()) throw Error(Errc::InvalidArgument, "report needs --predictions or --dump-config");
      const auto records = read_predictions_csv(report_predictions);
      const Metrics m = metrics_from_predictions(records);
      std::vector<double> scores;
      auto positive = std::make_unique<bool[]>(records.size());
      for (std::size_t i = 0; i < records.size(); ++i) {
        scores.push_back(records[i].p_pd);
        positive[i] = records[i].label == Label::PD;
      }
      const std::string table = confusion_table(m.counts);
      out << table;
      out << "acc " << opt_json(m.acc) << "  tpr " << opt_json(m.tpr) << "  fpr " << opt_json(m.fpr) << "  auc "
          << opt_json(m.auc) << '\n';
      if (!report_out.empty()) {
        write_text(fs::path(report_out) / "confusion.txt", table);
        if (m.auc) {
          write_text(fs::path(report_out) / "roc.csv",
                     format_roc(roc_curve(scores, std::span<const bool>(positive.get(), records.size()))));
        }
        out << "wrote " << report_out << '\n';
      }
      return 0;
    }

    if (*split) {
      if (cfg.data.cohort_manifest.empty()) throw Error(Errc::InvalidConfig, "no cohort manifest (--cohort)");
      const Cohort cohort = read_cohort_manifest(cfg.data.cohort_manifest);
      const auto folds = split_cohort(cohort, split_folds, cfg.train.seed);
      for (std::size_t f = 0; f < folds.size(); ++f) {
        const fs::path dir = fs::path(split_out) / ("fold" + std::to_string(f));
        fs::create_directories(dir);
        write_cohort_manifest(cohort.subset(folds[f].train), dir / "train.csv");
        write_cohort_manifest(cohort.subset(folds[f].test), dir / "test.csv");
        out << dir.string() << " train " << folds[f].train.size() << " test " << folds[f].test.size() << '\n';
      }
      return 0;
    }

    if (*cv) {
      Data data = load_data(cfg);
      const auto samples = make_samples(data.cohort, data.atlas, data.table);
      const auto folds = split_cohort(data.cohort, cv_folds, cfg.train.seed);
      std::vector<Metrics> fold_metrics;
      json fold_docs = json::array();
      for (std::size_t f = 0; f < folds.size(); ++f) {
        std::vector<Sample> train_set;
        std::vector<Sample> test_set;
        for (auto i : folds[f].train) train_set.push_back(samples[i]);
        for (auto i : folds[f].test) test_set.push_back(samples[i]);
        const fs::path dir = fs::path(cv_out) / ("fold" + std::to_string(f));
        const ModelParams model = train_stages(cfg, train_set, dir, 0, out);
        const Evaluation ev = evaluate(model, test_set, cfg.prior_params(), cfg.model_options(), cfg.train.jobs);
        write_text(dir / "predictions.csv", format_predictions_csv(ev.records));
        write_text(dir / "metrics.json", metrics_document(ev.metrics, ev.records));
        fold_metrics.push_back(ev.metrics);
        fold_docs.push_back(metrics_json(ev.metrics));
      }
      json mean = json::object();
      const Metrics pooled = pooled_and_mean(fold_metrics, mean);
      json doc = {{"folds", fold_docs}, {"mean_of_folds", mean}, {"pooled", metrics_json(pooled)}};
      write_text(fs::path(cv_out) / "crossval.json", doc.dump(2) + "\n");
      out << doc.dump(2) << '\n';
      return 0;
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  err << app.help();
  return 2;
}

}  // namespace pddn::cli
