#include "pddn/cohort.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "pddn/error.hpp"

namespace pddn {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      return out;
    }
    out.push_back(trim(line.substr(start, pos - start)));
    start = pos + 1;
  }
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoError, "cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

std::vector<std::vector<std::string_view>> csv_rows(std::string_view text, std::string_view expected_header) {
  std::vector<std::vector<std::string_view>> rows;
  bool header_seen = false;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (trim(line).empty()) {
      if (end == text.size()) break;
      continue;
    }
    if (!header_seen) {
      if (trim(line) != expected_header) {
        throw Error(Errc::InvalidArgument, "expected CSV header \"" + std::string(expected_header) + "\"");
      }
      header_seen = true;
      continue;
    }
    rows.push_back(split_commas(line));
    if (end == text.size()) break;
  }
  if (!header_seen) throw Error(Errc::EmptyFile, "CSV has no header");
  return rows;
}

constexpr std::string_view kManifestHeader = "subject_id,path,age,label,is_healthy";
constexpr std::string_view kPredictionHeader = "subject_id,label,p_pd,delta,predicted_age,decision";

}  // namespace

std::string_view label_token(Label label) noexcept { return label == Label::PD ? "PD" : "Other"; }

std::optional<Label> parse_label(std::string_view token) {
  token = trim(token);
  if (token.empty()) return std::nullopt;
  std::string lower;
  for (char c : token) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (lower == "pd") return Label::PD;
  if (lower == "other") return Label::Other;
  throw Error(Errc::InvalidArgument, "unknown label \"" + std::string(token) + "\"");
}

std::string format_double(double value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  if (ec != std::errc{}) throw Error(Errc::InvalidArgument, "cannot format double");
  return std::string(buf, ptr);
}

double parse_double(std::string_view text) {
  text = trim(text);
  if (text == "nan") return std::nan("");
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw Error(Errc::InvalidArgument, "not a number: \"" + std::string(text) + "\"");
  }
  return value;
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::IoError, "cannot create " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.flush();
    if (!out) throw Error(Errc::IoError, "short write on " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(Errc::IoError, "cannot rename " + tmp.string() + ": " + ec.message());
}

bool Cohort::fully_labeled() const {
  return std::all_of(subjects.begin(), subjects.end(), [](const SubjectRecord& s) { return s.label.has_value(); });
}

Cohort Cohort::subset(const std::vector<std::size_t>& indices) const {
  Cohort out;
  out.subjects.reserve(indices.size());
  for (std::size_t i : indices) out.subjects.push_back(subjects.at(i));
  return out;
}

Cohort read_cohort_manifest(const std::filesystem::path& manifest) {
  const std::string text = read_text(manifest);
  const auto base = manifest.parent_path();
  Cohort cohort;
  for (const auto& row : csv_rows(text, kManifestHeader)) {
    if (row.size() != 5) throw Error(Errc::InvalidArgument, "manifest rows need 5 fields");
    SubjectRecord s;
    s.id = std::string(row[0]);
    if (s.id.empty()) throw Error(Errc::InvalidArgument, "empty subject_id in manifest");
    s.path = std::filesystem::path(std::string(row[1]));
    if (s.path.is_relative()) s.path = base / s.path;
    s.age = parse_double(row[2]);
    s.label = parse_label(row[3]);
    s.is_healthy = row[4] == "1" || row[4] == "true";
    if (s.is_healthy && s.label == Label::PD) {
      throw Error(Errc::InvalidArgument, "subject " + s.id + " is marked healthy but labeled PD");
    }
    cohort.subjects.push_back(std::move(s));
  }
  return cohort;
}

void write_cohort_manifest(const Cohort& cohort, const std::filesystem::path& manifest) {
  const auto base = std::filesystem::absolute(manifest).lexically_normal().parent_path();
  std::ostringstream out;
  out << kManifestHeader << '\n';
  for (const auto& s : cohort.subjects) {
    std::filesystem::path p = s.path;
    if (!p.empty()) {
      const auto abs = std::filesystem::absolute(p).lexically_normal();
      const auto rel = abs.lexically_relative(base);
      p = rel.empty() ? abs : rel;
    }
    out << s.id << ',' << p.generic_string() << ',' << format_double(s.age) << ','
        << (s.label ? label_token(*s.label) : "") << ',' << (s.is_healthy ? 1 : 0) << '\n';
  }
  write_file_atomic(manifest, out.str());
}

void load_volumes(Cohort& cohort) {
  for (auto& s : cohort.subjects) {
    if (!s.volume) s.volume = std::make_shared<const Volume3D>(read_volume(s.path));
  }
}

std::string format_predictions_csv(const std::vector<PredictionRecord>& records) {
  std::ostringstream out;
  out << kPredictionHeader << '\n';
  for (const auto& r : records) {
    out << r.subject_id << ',' << (r.label ? label_token(*r.label) : "") << ',' << format_double(r.p_pd) << ','
        << format_double(r.delta) << ',' << format_double(r.predicted_age) << ',' << label_token(r.decision)
        << '\n';
  }
  return out.str();
}

std::vector<PredictionRecord> parse_predictions_csv(std::string_view text) {
  std::vector<PredictionRecord> records;
  for (const auto& row : csv_rows(text, kPredictionHeader)) {
    if (row.size() != 6) throw Error(Errc::InvalidArgument, "prediction rows need 6 fields");
    PredictionRecord r;
    r.subject_id = std::string(row[0]);
    r.label = parse_label(row[1]);
    r.p_pd = parse_double(row[2]);
    r.delta = parse_double(row[3]);
    r.predicted_age = parse_double(row[4]);
    const auto decision = parse_label(row[5]);
    if (!decision) throw Error(Errc::InvalidArgument, "prediction row without decision");
    r.decision = *decision;
    records.push_back(std::move(r));
  }
  return records;
}

void write_predictions_csv(const std::vector<PredictionRecord>& records, const std::filesystem::path& path) {
  write_file_atomic(path, format_predictions_csv(records));
}

std::vector<PredictionRecord> read_predictions_csv(const std::filesystem::path& path) {
  return parse_predictions_csv(read_text(path));
}

}  // namespace pddn
