#include "pddn/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

#include "pddn/error.hpp"

namespace pddn {

namespace {

struct BlockGrid {
  int nz = 1;
  int ny = 1;
  int nx = 1;
};

// Most cube-like factorization nz * ny * nx == regions.
BlockGrid factor_blocks(int regions) {
  BlockGrid best{regions, 1, 1};
  int best_spread = regions;
  for (int a = 1; a <= regions; ++a) {
    if (regions % a != 0) continue;
    for (int b = 1; b <= regions / a; ++b) {
      if ((regions / a) % b != 0) continue;
      const int c = regions / a / b;
      const int spread = std::max({a, b, c}) - std::min({a, b, c});
      if (spread < best_spread) {
        best_spread = spread;
        best = {a, b, c};
      }
    }
  }
  return best;
}

// Block index of coordinate `i` when `extent` is cut into `parts` near-equal runs.
int block_of(int i, int extent, int parts) {
  return static_cast<int>((static_cast<long long>(i) * parts) / extent);
}

RelevanceTable proportional_table(int regions) {
  if (regions == 48) return default_relevance_table();
  const int strong = std::max(1, static_cast<int>(std::lround(regions * 4.0 / 48.0)));
  const int potential = std::min(regions - strong, static_cast<int>(std::lround(regions * 9.0 / 48.0)));
  std::vector<RegionEntry> entries;
  for (int r = 1; r <= regions; ++r) entries.push_back({r, "Block " + std::to_string(r), Relevance::None});
  // Spread the classes over the id range.
  std::vector<int> order(static_cast<std::size_t>(regions));
  for (int k = 0; k < regions; ++k) order[static_cast<std::size_t>(k)] = (k * 7) % regions;
  std::vector<bool> used(static_cast<std::size_t>(regions), false);
  int placed = 0;
  for (int idx : order) {
    if (used[static_cast<std::size_t>(idx)]) continue;
    used[static_cast<std::size_t>(idx)] = true;
    auto& e = entries[static_cast<std::size_t>(idx)];
    if (placed < strong) e.relevance = Relevance::Strong;
    else if (placed < strong + potential) e.relevance = Relevance::Potential;
    ++placed;
  }
  return RelevanceTable(std::move(entries));
}

}  // namespace

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

void SynthConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(Errc::InvalidConfig, msg); };
  if (n_subjects < 0) fail("n_subjects must be >= 0");
  if (dims.d < 4 || dims.h < 4 || dims.w < 4 || dims.d % 4 || dims.h % 4 || dims.w % 4) {
    fail("dims " + to_string(dims) + " must be positive multiples of 4");
  }
  if (regions < 1) fail("regions must be >= 1");
  if (background_margin < 0) fail("background_margin must be >= 0");
  const BlockGrid g = factor_blocks(regions);
  const int m2 = 2 * background_margin;
  if (dims.d - m2 < g.nz || dims.h - m2 < g.ny || dims.w - m2 < g.nx) {
    fail("volume interior is too small for " + std::to_string(regions) + " blocks");
  }
  if (!(pd_fraction >= 0.0 && pd_fraction <= 1.0)) fail("pd_fraction must be in [0, 1]");
  if (!(other_disorder_fraction >= 0.0 && other_disorder_fraction <= 1.0)) {
    fail("other_disorder_fraction must be in [0, 1]");
  }
  if (!(age_min > 0.0) || !(age_max >= age_min)) fail("age range must satisfy 0 < age_min <= age_max");
  if (!std::isfinite(gain) || !std::isfinite(baseline) || !std::isfinite(acceleration) ||
      !std::isfinite(other_acceleration)) {
    fail("gain, baseline and accelerations must be finite");
  }
  if (!(noise >= 0.0) || !(region_jitter >= 0.0) || !(offtarget_jitter >= 0.0)) {
    fail("noise, region_jitter and offtarget_jitter must be >= 0");
  }
}

SynthAtlas make_synth_atlas(const SynthConfig& cfg) {
  cfg.validate();
  SynthAtlas out;
  out.table = proportional_table(cfg.regions);
  const BlockGrid g = factor_blocks(cfg.regions);
  const int m = cfg.background_margin;
  const Dims inner{cfg.dims.d - 2 * m, cfg.dims.h - 2 * m, cfg.dims.w - 2 * m};

  out.atlas.dims = cfg.dims;
  out.atlas.regions = cfg.regions;
  out.atlas.labels.assign(cfg.dims.voxels(), 0);
  for (int z = m; z < cfg.dims.d - m; ++z) {
    const int bz = block_of(z - m, inner.d, g.nz);
    for (int y = m; y < cfg.dims.h - m; ++y) {
      const int by = block_of(y - m, inner.h, g.ny);
      for (int x = m; x < cfg.dims.w - m; ++x) {
        const int bx = block_of(x - m, inner.w, g.nx);
        out.atlas.labels[cfg.dims.index(z, y, x)] = (bz * g.ny + by) * g.nx + bx + 1;
      }
    }
  }
  out.atlas.validate();

  out.baseline.resize(static_cast<std::size_t>(cfg.regions));
  for (int r = 1; r <= cfg.regions; ++r) {
    out.baseline[static_cast<std::size_t>(r - 1)] = cfg.baseline * (1.0 + 0.2 * std::sin(2.3 * r));
  }

  std::vector<int> none_ids;
  int strong_count = 0;
  for (const auto& e : out.table.entries()) {
    if (e.relevance == Relevance::None) none_ids.push_back(e.id);
    if (e.relevance == Relevance::Strong) ++strong_count;
  }
  const int picks = std::min<int>(strong_count, static_cast<int>(none_ids.size()));
  for (int k = 0; k < picks; ++k) {
    const auto idx = static_cast<std::size_t>((2 * k + 1) * static_cast<int>(none_ids.size()) / (2 * picks));
    out.other_disorder_regions.push_back(none_ids[idx]);
  }
  return out;
}

SynthCohort generate_cohort(const SynthConfig& cfg) {
  cfg.validate();
  SynthCohort out;
  out.atlas = make_synth_atlas(cfg);
  const int n = cfg.n_subjects;
  const int regions = cfg.regions;

  std::mt19937_64 cohort_rng(mix_seed(cfg.seed, 0));
  const int n_pd = static_cast<int>(std::lround(n * cfg.pd_fraction));
  std::vector<bool> is_pd(static_cast<std::size_t>(n), false);
  std::fill(is_pd.begin(), is_pd.begin() + n_pd, true);
  std::shuffle(is_pd.begin(), is_pd.end(), cohort_rng);

  std::vector<std::size_t> others;
  for (int i = 0; i < n; ++i) {
    if (!is_pd[static_cast<std::size_t>(i)]) others.push_back(static_cast<std::size_t>(i));
  }
  std::shuffle(others.begin(), others.end(), cohort_rng);
  const auto n_disorder =
      static_cast<std::size_t>(std::lround(static_cast<double>(others.size()) * cfg.other_disorder_fraction));
  std::vector<bool> is_disorder(static_cast<std::size_t>(n), false);
  for (std::size_t k = 0; k < n_disorder; ++k) is_disorder[others[k]] = true;

  std::vector<bool> strong(static_cast<std::size_t>(regions) + 1, false);
  std::vector<bool> affected(static_cast<std::size_t>(regions) + 1, false);
  for (const auto& e : out.atlas.table.entries()) {
    strong[static_cast<std::size_t>(e.id)] = e.relevance == Relevance::Strong;
  }
  for (int r : out.atlas.other_disorder_regions) affected[static_cast<std::size_t>(r)] = true;

  const auto& labels = out.atlas.atlas.labels;
  for (int i = 0; i < n; ++i) {
    const auto si = static_cast<std::size_t>(i);
    std::mt19937_64 rng(mix_seed(cfg.seed, si + 1));
    std::uniform_real_distribution<double> age_dist(cfg.age_min, cfg.age_max);
    std::normal_distribution<double> unit(0.0, 1.0);

    SubjectRecord rec;
    char id[32];
    std::snprintf(id, sizeof id, "sub-%04d", i + 1);
    rec.id = id;
    rec.age = cfg.age_min == cfg.age_max ? cfg.age_min : age_dist(rng);
    rec.label = is_pd[si] ? Label::PD : Label::Other;
    rec.is_healthy = !is_pd[si] && !is_disorder[si];

    SynthSubjectTruth truth;
    truth.other_disorder = is_disorder[si];
    truth.region_means.resize(static_cast<std::size_t>(regions));
    std::vector<double> level(static_cast<std::size_t>(regions) + 1, 0.0);
    const double offtarget = cfg.offtarget_jitter > 0.0 ? cfg.offtarget_jitter * unit(rng) : 0.0;
    for (int r = 1; r <= regions; ++r) {
      const auto rr = static_cast<std::size_t>(r);
      double effective_age = rec.age;
      if (is_pd[si] && strong[rr]) effective_age += cfg.acceleration;
      if (is_disorder[si] && affected[rr]) effective_age += cfg.other_acceleration;
      const double clean = out.atlas.baseline[rr - 1] + cfg.gain * effective_age;
      double jitter = cfg.region_jitter > 0.0 ? cfg.region_jitter * unit(rng) : 0.0;
      if (!strong[rr]) jitter += offtarget;
      truth.region_means[rr - 1] = clean + jitter;
      level[rr] = clean + jitter;
    }

    auto vol = std::make_shared<Volume3D>(cfg.dims);
    for (std::size_t v = 0; v < vol->data.size(); ++v) {
      const double noise = cfg.noise > 0.0 ? cfg.noise * unit(rng) : 0.0;
      vol->data[v] = level[static_cast<std::size_t>(labels[v])] + noise;
    }
    rec.volume = std::move(vol);
    out.cohort.subjects.push_back(std::move(rec));
    out.truth.push_back(std::move(truth));
  }
  return out;
}

void write_synth_cohort(SynthCohort& synth, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir / "volumes", ec);
  if (ec) throw Error(Errc::IoError, "cannot create " + (dir / "volumes").string() + ": " + ec.message());
  for (auto& s : synth.cohort.subjects) {
    s.path = dir / "volumes" / (s.id + ".nii");
    if (s.volume) write_volume(*s.volume, s.path, Datatype::Float32);
  }
  write_atlas(synth.atlas.atlas, dir / "atlas.nii");
  save_relevance_table(synth.atlas.table, dir / "relevance.csv");
  write_cohort_manifest(synth.cohort, dir / "cohort.csv");
}

std::vector<Fold> split_cohort(const Cohort& cohort, int folds, std::uint64_t seed) {
  if (folds < 2) throw Error(Errc::InvalidArgument, "need at least 2 folds");
  if (cohort.size() < static_cast<std::size_t>(folds)) {
    throw Error(Errc::InvalidArgument, "cohort of " + std::to_string(cohort.size()) + " is smaller than " +
                                           std::to_string(folds) + " folds");
  }
  std::vector<std::size_t> pd;
  std::vector<std::size_t> other;
  for (std::size_t i = 0; i < cohort.size(); ++i) {
    const auto& label = cohort.subjects[i].label;
    if (!label) throw Error(Errc::InvalidArgument, "subject " + cohort.subjects[i].id + " has no label");
    (*label == Label::PD ? pd : other).push_back(i);
  }
  for (const auto* group : {&pd, &other}) {
    if (!group->empty() && group->size() < static_cast<std::size_t>(folds)) {
      throw Error(Errc::InvalidArgument, "too few subjects per class for " + std::to_string(folds) + " folds");
    }
  }

  std::mt19937_64 rng(mix_seed(seed, 0xf01d));
  std::shuffle(pd.begin(), pd.end(), rng);
  std::shuffle(other.begin(), other.end(), rng);

  std::vector<int> fold_of(cohort.size(), 0);
  std::size_t counter = 0;
  for (const auto* group : {&pd, &other}) {
    for (std::size_t idx : *group) fold_of[idx] = static_cast<int>(counter++ % static_cast<std::size_t>(folds));
  }

  std::vector<Fold> out(static_cast<std::size_t>(folds));
  for (std::size_t i = 0; i < cohort.size(); ++i) {
    for (int f = 0; f < folds; ++f) {
      (fold_of[i] == f ? out[static_cast<std::size_t>(f)].test : out[static_cast<std::size_t>(f)].train).push_back(i);
    }
  }
  return out;
}

}  // namespace pddn
