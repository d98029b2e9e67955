#pragma once

// Effective run configuration. Precedence: built-in defaults, then the INI
// file given with --config, then command-line flags.

#include <cstdint>
#include <filesystem>
#include <string>

#include "pddn/model.hpp"
#include "pddn/preprocess.hpp"
#include "pddn/priors.hpp"
#include "pddn/synth.hpp"
#include "pddn/training.hpp"

namespace pddn::cli {

struct RunConfig {
  struct {
    double zeta = AgingPriorParams::kDefaultZeta;
    double tau = AgingPriorParams::kDefaultTau;
    double alpha = AgingPriorParams::kDefaultAlpha;
  } prior;
  struct {
    int channels = 8;
    bool fusion = true;
    bool age_branch = true;
    double age_center = 65.0;
    double age_scale = 10.0;
  } model;
  struct {
    std::string stage = "all";
    int epochs = 30;
    int batch = 4;
    double lr = 1e-3;
    double weight_decay = 1e-3;
    std::uint64_t seed = 0;
    int jobs = 1;
  } train;
  struct {
    std::string cohort_manifest;
    std::string atlas_path;
    /// Empty: the built-in 48-region table.
    std::string relevance_csv;
  } data;
  ToolConfig preprocess;
  SynthConfig synth;

  AgingPriorParams prior_params() const;
  ModelOptions model_options() const;
  ModelInit model_init() const;
  TrainConfig train_config() const;
};

/// Reads an INI document over the defaults. Unknown sections or keys and
/// malformed values throw InvalidConfig.
RunConfig parse_config(const std::string& text, RunConfig base = {});
RunConfig load_config(const std::filesystem::path& path, RunConfig base = {});

/// INI text listing every key; parse_config(dump_config(c)) == c.
std::string dump_config(const RunConfig& config);

/// "32" or "32x32x32".
Dims parse_dims(const std::string& text);

}  // namespace pddn::cli
