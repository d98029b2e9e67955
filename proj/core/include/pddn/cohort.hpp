#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pddn/diagnoser.hpp"
#include "pddn/volume_io.hpp"

namespace pddn {

std::string_view label_token(Label label) noexcept;
/// "PD" / "Other" (case-insensitive); empty -> nullopt.
std::optional<Label> parse_label(std::string_view token);

struct SubjectRecord {
  std::string id;
  std::filesystem::path path;
  double age = 0.0;
  /// Missing for label-free cohorts (prediction only).
  std::optional<Label> label;
  /// Healthy control; only meaningful for label == Other.
  bool is_healthy = false;
  /// In-memory scan; loaded lazily from `path` when empty.
  std::shared_ptr<const Volume3D> volume;
};

struct Cohort {
  std::vector<SubjectRecord> subjects;

  std::size_t size() const noexcept { return subjects.size(); }
  bool empty() const noexcept { return subjects.empty(); }
  bool fully_labeled() const;
  Cohort subset(const std::vector<std::size_t>& indices) const;
};

/// `subject_id,path,age,label,is_healthy`; relative paths resolve against
/// the manifest's directory.
Cohort read_cohort_manifest(const std::filesystem::path& manifest);
/// Paths are written relative to the manifest's directory when possible.
void write_cohort_manifest(const Cohort& cohort, const std::filesystem::path& manifest);

/// Reads every subject volume that is not yet in memory.
void load_volumes(Cohort& cohort);

struct PredictionRecord {
  std::string subject_id;
  std::optional<Label> label;
  double p_pd = 0.0;
  double delta = 0.0;
  double predicted_age = 0.0;
  Label decision = Label::Other;

  bool operator==(const PredictionRecord&) const = default;
};

/// `subject_id,label,p_pd,delta,predicted_age,decision`
std::string format_predictions_csv(const std::vector<PredictionRecord>& records);
std::vector<PredictionRecord> parse_predictions_csv(std::string_view text);
void write_predictions_csv(const std::vector<PredictionRecord>& records, const std::filesystem::path& path);
std::vector<PredictionRecord> read_predictions_csv(const std::filesystem::path& path);

/// Shortest round-tripping decimal form of a double.
std::string format_double(double value);
double parse_double(std::string_view text);

/// Writes to a sibling temp file, then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

}  // namespace pddn
