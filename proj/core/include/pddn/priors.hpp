#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace pddn {

/// Clinical association of a brain region with PD.
enum class Relevance { Strong, Potential, None };

/// Strong -> 1, Potential -> 1e-2, None -> 1e-3.
double relevance_weight(Relevance relevance) noexcept;
std::string_view relevance_token(Relevance relevance) noexcept;
Relevance parse_relevance(std::string_view token);

struct RegionEntry {
  int id = 0;
  std::string name;
  Relevance relevance = Relevance::None;

  bool operator==(const RegionEntry&) const = default;
};

/// Per-region relevance weights. Ids are exactly 1..R; weights are kept
/// unnormalized since the aggregation divides by their sum.
class RelevanceTable {
 public:
  /// Entries may arrive in any order; they are sorted by id and validated.
  explicit RelevanceTable(std::vector<RegionEntry> entries);

  int regions() const noexcept { return static_cast<int>(entries_.size()); }
  const std::vector<RegionEntry>& entries() const noexcept { return entries_; }
  const RegionEntry& entry(int region_id) const;
  /// Theta[r] for r in 1..R, stored at index r-1.
  const std::vector<double>& weights() const noexcept { return weights_; }
  double weight(int region_id) const;

  RelevanceTable with_relevance(int region_id, Relevance relevance) const;

  bool operator==(const RelevanceTable& other) const { return entries_ == other.entries_; }

 private:
  std::vector<RegionEntry> entries_;
  std::vector<double> weights_;
};

/// The 48-region Harvard-Oxford cortical table with its PD relevance.
RelevanceTable default_relevance_table();

/// CSV with header `region_id,region_name,relevance`; names may be quoted.
RelevanceTable load_relevance_table(const std::filesystem::path& path);
RelevanceTable parse_relevance_csv(std::string_view text);
void save_relevance_table(const RelevanceTable& table, const std::filesystem::path& path);
std::string format_relevance_csv(const RelevanceTable& table);

/// Aging-prior margins (years) and calibration strength.
class AgingPriorParams {
 public:
  static constexpr double kDefaultZeta = 9.5;
  static constexpr double kDefaultTau = 4.5;
  static constexpr double kDefaultAlpha = 1.0;

  AgingPriorParams() = default;
  /// Throws InvalidArgument unless zeta > tau >= 0 and alpha >= 0.
  AgingPriorParams(double zeta, double tau, double alpha);

  double zeta() const noexcept { return zeta_; }
  double tau() const noexcept { return tau_; }
  double alpha() const noexcept { return alpha_; }

 private:
  double zeta_ = kDefaultZeta;
  double tau_ = kDefaultTau;
  double alpha_ = kDefaultAlpha;
};

/// Predicted regional brain age minus chronological age.
double age_gap(double predicted_age, double chronological_age);

}  // namespace pddn
