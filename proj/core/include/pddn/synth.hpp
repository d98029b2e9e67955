#pragma once

// Seeded synthetic cohorts. Each labeled region r of subject s gets
//
//   intensity = baseline[r] + gain * effective_age(s, r) + jitter(s, r)
//               + offset(s) * [r not Strong] + noise(voxel)
//
// where effective_age adds `acceleration` years for PD subjects in Strong
// regions and `other_acceleration` years for other-disorder subjects in a
// fixed set of None regions. Background voxels (label 0) hold pure noise.

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "pddn/cohort.hpp"
#include "pddn/priors.hpp"
#include "pddn/volume_io.hpp"

namespace pddn {

struct SynthConfig {
  int n_subjects = 200;
  Dims dims{32, 32, 32};
  int regions = 48;
  /// Voxels of background (label 0) on each face of the volume.
  int background_margin = 0;
  double pd_fraction = 0.5;
  /// Fraction of non-PD subjects with another neurological disorder.
  double other_disorder_fraction = 0.5;
  double age_min = 50.0;
  double age_max = 80.0;
  /// Extra years in Strong regions for PD subjects.
  double acceleration = 12.0;
  /// Extra years in the other-disorder regions for other-disorder subjects.
  double other_acceleration = 12.0;
  /// Intensity units per year of effective age.
  double gain = 0.05;
  double baseline = 1.0;
  /// Per-subject, per-region intensity jitter (standard deviation).
  double region_jitter = 0.05;
  /// Per-subject offset shared by every non-Strong region (standard deviation).
  double offtarget_jitter = 0.6;
  /// Per-voxel noise (standard deviation).
  double noise = 0.5;
  std::uint64_t seed = 7;

  /// Throws InvalidConfig on violations.
  void validate() const;
};

struct SynthAtlas {
  AtlasVolume atlas;
  RelevanceTable table = default_relevance_table();
  /// Baseline intensity per region (index r-1).
  std::vector<double> baseline;
  /// None regions affected by the other-disorder pattern.
  std::vector<int> other_disorder_regions;
};

SynthAtlas make_synth_atlas(const SynthConfig& cfg);

struct SynthSubjectTruth {
  bool other_disorder = false;
  /// Noise-free pooled intensity per region (index r-1).
  std::vector<double> region_means;
};

struct SynthCohort {
  Cohort cohort;
  SynthAtlas atlas;
  std::vector<SynthSubjectTruth> truth;
};

SynthCohort generate_cohort(const SynthConfig& cfg);

/// Writes volumes/<id>.nii (float32), atlas.nii, relevance.csv and
/// cohort.csv under `dir`; subject paths are updated in place.
void write_synth_cohort(SynthCohort& synth, const std::filesystem::path& dir);

struct Fold {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Label-stratified k-fold split. Every class must hold at least `folds`
/// subjects; every subject must be labeled.
std::vector<Fold> split_cohort(const Cohort& cohort, int folds, std::uint64_t seed);

/// splitmix64 finalizer; used to derive independent per-subject streams.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace pddn
