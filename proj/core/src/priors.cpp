#include "pddn/priors.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "pddn/error.hpp"

namespace pddn {

namespace {

struct DefaultRow {
  const char* name;
  Relevance relevance;
};

constexpr Relevance S = Relevance::Strong;
constexpr Relevance P = Relevance::Potential;
constexpr Relevance N = Relevance::None;

// Row i is region i+1.
constexpr std::array<DefaultRow, 48> kDefaultRows{{
    {"Frontal Pole", N},
    {"Insular Cortex", P},
    {"Superior Frontal Gyrus", S},
    {"Middle Frontal Gyrus", S},
    {"Inferior Frontal Gyrus, Triangular Part", P},
    {"Inferior Frontal Gyrus, Opercular Part", P},
    {"Precentral Gyrus", S},
    {"Temporal Pole", N},
    {"Superior Temporal Gyrus, Anterior Division", N},
    {"Superior Temporal Gyrus, Posterior Division", N},
    {"Middle Temporal Gyrus, Anterior Division", N},
    {"Middle Temporal Gyrus, Posterior Division", N},
    {"Temporooccipital Middle Temporal Gyrus", N},
    {"Inferior Temporal Gyrus, Anterior Division", N},
    {"Inferior Temporal Gyrus, Posterior Division", N},
    {"Temporooccipital Inferior Temporal Gyrus", N},
    {"Postcentral Gyrus", P},
    {"Superior Parietal Lobule", P},
    {"Supramarginal Gyrus, Anterior Division", N},
    {"Supramarginal Gyrus, Posterior Division", N},
    {"Angular Gyrus", P},
    {"Lateral Occipital Cortex, Superior Division", N},
    {"Lateral Occipital Cortex, Inferior Division", N},
    {"Intracalcarine Cortex", N},
    {"Medial Frontal Cortex", P},
    {"Juxtapositional Lobule Cortex (SMA)", S},
    {"Subcallosal Cortex", N},
    {"Paracingulate Gyrus", N},
    {"Anterior Cingulate Gyrus", N},
    {"Posterior Cingulate Gyrus", P},
    {"Precuneous Cortex", P},
    {"Cuneal Cortex", N},
    {"Orbitofrontal Cortex", N},
    {"Parahippocampal Gyrus, Anterior Division", N},
    {"Parahippocampal Gyrus, Posterior Division", N},
    {"Lingual Gyrus", N},
    {"Temporal Fusiform Cortex, Anterior Division", N},
    {"Temporal Fusiform Cortex, Posterior Division", N},
    {"Temporooccipital Fusiform Cortex", N},
    {"Occipital Fusiform Gyrus", N},
    {"Frontal Operculum Cortex", N},
    {"Central Opercular Cortex", N},
    {"Parietal Operculum Cortex", N},
    {"Planum Polare", N},
    {"Heschl’s Gyrus", N},
    {"Planum Temporale", N},
    {"Supracalcarine Cortex", N},
    {"Occipital Pole", N},
}};

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

// RFC 4180 style: fields may be double-quoted, "" escapes a quote.
std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else {
      field.push_back(c);
    }
  }
  fields.push_back(std::move(field));
  return fields;
}

std::string quote_csv(std::string_view s) {
  if (s.find_first_of(",\"\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace

double relevance_weight(Relevance relevance) noexcept {
  switch (relevance) {
    case Relevance::Strong: return 1.0;
    case Relevance::Potential: return 1e-2;
    case Relevance::None: return 1e-3;
  }
  return 1e-3;
}

std::string_view relevance_token(Relevance relevance) noexcept {
  switch (relevance) {
    case Relevance::Strong: return "strong";
    case Relevance::Potential: return "potential";
    case Relevance::None: return "none";
  }
  return "none";
}

Relevance parse_relevance(std::string_view token) {
  std::string lower;
  for (char c : trim(token)) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (lower == "strong") return Relevance::Strong;
  if (lower == "potential") return Relevance::Potential;
  if (lower == "none") return Relevance::None;
  throw Error(Errc::UnknownRelevance, "unknown relevance token \"" + std::string(token) + "\"");
}

RelevanceTable::RelevanceTable(std::vector<RegionEntry> entries) : entries_(std::move(entries)) {
  if (entries_.empty()) throw Error(Errc::EmptyFile, "relevance table has no regions");
  std::sort(entries_.begin(), entries_.end(),
            [](const RegionEntry& a, const RegionEntry& b) { return a.id < b.id; });
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const int expected = static_cast<int>(i) + 1;
    if (i > 0 && entries_[i].id == entries_[i - 1].id) {
      throw Error(Errc::DuplicateId, "region id " + std::to_string(entries_[i].id) + " appears twice");
    }
    if (entries_[i].id != expected) {
      throw Error(Errc::MissingId, "region id " + std::to_string(expected) + " is missing");
    }
  }
  weights_.reserve(entries_.size());
  for (const auto& e : entries_) weights_.push_back(relevance_weight(e.relevance));
}

const RegionEntry& RelevanceTable::entry(int region_id) const {
  if (region_id < 1 || region_id > regions()) {
    throw Error(Errc::InvalidArgument, "region id " + std::to_string(region_id) + " out of range");
  }
  return entries_[static_cast<std::size_t>(region_id - 1)];
}

double RelevanceTable::weight(int region_id) const { return relevance_weight(entry(region_id).relevance); }

RelevanceTable RelevanceTable::with_relevance(int region_id, Relevance relevance) const {
  auto copy = entries_;
  copy.at(static_cast<std::size_t>(entry(region_id).id - 1)).relevance = relevance;
  return RelevanceTable(std::move(copy));
}

RelevanceTable default_relevance_table() {
  std::vector<RegionEntry> entries;
  entries.reserve(kDefaultRows.size());
  for (std::size_t i = 0; i < kDefaultRows.size(); ++i) {
    entries.push_back({static_cast<int>(i) + 1, kDefaultRows[i].name, kDefaultRows[i].relevance});
  }
  return RelevanceTable(std::move(entries));
}

RelevanceTable parse_relevance_csv(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  bool have_header = false;
  std::vector<RegionEntry> entries;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const auto fields = split_csv_line(line);
    if (!have_header) {
      if (fields.size() != 3 || trim(fields[0]) != "region_id" || trim(fields[1]) != "region_name" ||
          trim(fields[2]) != "relevance") {
        throw Error(Errc::InvalidArgument, "expected header region_id,region_name,relevance");
      }
      have_header = true;
      continue;
    }
    if (fields.size() != 3) {
      throw Error(Errc::InvalidArgument, "line " + std::to_string(line_no) + ": expected 3 fields");
    }
    RegionEntry entry;
    const auto id_text = trim(fields[0]);
    const auto [ptr, ec] = std::from_chars(id_text.data(), id_text.data() + id_text.size(), entry.id);
    if (ec != std::errc{} || ptr != id_text.data() + id_text.size()) {
      throw Error(Errc::InvalidArgument, "line " + std::to_string(line_no) + ": bad region id");
    }
    entry.name = std::string(trim(fields[1]));
    entry.relevance = parse_relevance(fields[2]);
    entries.push_back(std::move(entry));
  }
  if (entries.empty()) throw Error(Errc::EmptyFile, "relevance table has no rows");
  return RelevanceTable(std::move(entries));
}

RelevanceTable load_relevance_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoError, "cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_relevance_csv(buffer.str());
}

std::string format_relevance_csv(const RelevanceTable& table) {
  std::ostringstream out;
  out << "region_id,region_name,relevance\n";
  for (const auto& e : table.entries()) {
    out << e.id << ',' << quote_csv(e.name) << ',' << relevance_token(e.relevance) << '\n';
  }
  return out.str();
}

void save_relevance_table(const RelevanceTable& table, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(Errc::IoError, "cannot create " + path.string());
  out << format_relevance_csv(table);
  if (!out) throw Error(Errc::IoError, "short write on " + path.string());
}

AgingPriorParams::AgingPriorParams(double zeta, double tau, double alpha)
    : zeta_(zeta), tau_(tau), alpha_(alpha) {
  if (!std::isfinite(zeta) || !std::isfinite(tau) || !std::isfinite(alpha)) {
    throw Error(Errc::InvalidArgument, "aging prior parameters must be finite");
  }
  if (!(tau >= 0.0)) throw Error(Errc::InvalidArgument, "tau must be >= 0");
  if (!(zeta > tau)) throw Error(Errc::InvalidArgument, "zeta must exceed tau so the hinge zones do not overlap");
  if (!(alpha >= 0.0)) throw Error(Errc::InvalidArgument, "alpha must be >= 0");
}

double age_gap(double predicted_age, double chronological_age) {
  if (!std::isfinite(predicted_age) || !std::isfinite(chronological_age)) {
    throw Error(Errc::NonFinite, "age_gap needs finite ages");
  }
  if (!(chronological_age > 0.0)) throw Error(Errc::InvalidArgument, "chronological age must be positive");
  return predicted_age - chronological_age;
}

}  // namespace pddn
