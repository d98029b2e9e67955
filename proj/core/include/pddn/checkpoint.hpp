#pragma once

// Checkpoint layout:
//   "PDDN0001" | u64 LE metadata length | metadata (UTF-8 JSON) | f64 LE arrays
// The metadata lists every array (name, shape) in storage order, followed by
// the optimizer moments when present.

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pddn/model.hpp"
#include "pddn/optim.hpp"

namespace pddn {

inline constexpr char kCheckpointMagic[8] = {'P', 'D', 'D', 'N', '0', '0', '0', '1'};

struct Checkpoint {
  ModelParams params;
  /// Stage that produced the parameters (0 = freshly initialized).
  int stage = 0;
  /// Digest of the effective run configuration.
  std::string config_hash;
  ModelOptions options;
  std::optional<OptimState> optim;
};

std::vector<std::byte> encode_checkpoint(const Checkpoint& ckpt);
/// Throws BadMagic, TruncatedHeader, TruncatedData or ShapeMismatch.
Checkpoint decode_checkpoint(std::span<const std::byte> bytes);

/// Atomic: writes a sibling temp file and renames it over `path`.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Array shapes of the canonical parameter list for `channels`.
std::vector<std::vector<std::size_t>> param_shapes(int channels);

}  // namespace pddn
