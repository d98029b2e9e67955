#pragma once

// External-tool preprocessing: skull strip -> bias-field correct -> register.
// Each step is a command template; {input} and {output} are replaced by file
// paths and {template} by the standard-space template volume.

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "pddn/volume_io.hpp"

namespace pddn {

struct ToolConfig {
  std::string strip = "hd-bet -i {input} -o {output}";
  std::string bias = "N4BiasFieldCorrection -d 3 -i {input} -o {output}";
  std::string register_cmd = "ants_syn_register.sh {template} {input} {output}";
  std::filesystem::path template_path;
  std::filesystem::path cache_dir = "preprocessed";
  /// Subjects processed concurrently.
  int jobs = 1;

  /// Throws InvalidConfig if a template lacks a required placeholder.
  void validate() const;
};

enum class StepStatus { Skipped, Ran, Failed, NotRun };

std::string_view step_status_token(StepStatus status) noexcept;

inline constexpr std::array<std::string_view, 3> kStepNames = {"strip", "bias", "register"};

struct RawScan {
  std::string id;
  std::filesystem::path path;
};

struct PipelineRecord {
  std::string subject_id;
  std::filesystem::path input;
  std::array<StepStatus, 3> steps{StepStatus::NotRun, StepStatus::NotRun, StepStatus::NotRun};
  std::filesystem::path output;
  /// SHA-256 of the final volume; empty when the subject failed.
  std::string output_digest;
  /// SHA-256 over the raw input digest and the resolved command strings.
  std::string cache_key;
  std::string error;
  std::string started;
  std::string finished;

  bool ok() const noexcept;
  bool skipped() const noexcept;
};

/// Runs the three steps for every scan whose cached output is missing or
/// stale. Failures are recorded per subject and do not stop the others.
/// The manifest (cache_dir/manifest.jsonl) gains one record per subject and
/// is rewritten atomically after each subject. Throws CommandNotFound before
/// any execution when a step's program cannot be resolved.
std::vector<PipelineRecord> run_pipeline(const std::vector<RawScan>& scans, const ToolConfig& cfg);

/// Final output location for a subject.
std::filesystem::path processed_path(const ToolConfig& cfg, const std::string& subject_id);

std::filesystem::path manifest_path(const ToolConfig& cfg);
std::vector<PipelineRecord> read_pipeline_manifest(const std::filesystem::path& path);

/// Throws DimMismatch (naming both triples) unless the volume is on the expected grid.
void verify_processed(const Volume3D& volume, const Dims& expected);

}  // namespace pddn
