#pragma once

// Minimal NIfTI-1 single-file ("n+1") subset: 3-D volumes stored as uint8,
// int16 or float32. Everything else is rejected.
//
// Axis convention: NIfTI dim[1] is the fastest-varying axis. Here that axis
// is W, dim[2] is H and dim[3] is D, so voxel (d, h, w) lives at linear
// index (d * H + h) * W + w.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace pddn {

inline constexpr std::size_t kNiftiHeaderSize = 348;
inline constexpr std::int64_t kDefaultVoxOffset = 352;

enum class Datatype : std::int16_t { UInt8 = 2, Int16 = 4, Float32 = 16 };
enum class Endian { Little, Big };

struct Dims {
  int d = 0;
  int h = 0;
  int w = 0;

  std::size_t voxels() const noexcept {
    return static_cast<std::size_t>(d) * static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
  }
  std::size_t index(int z, int y, int x) const noexcept {
    return (static_cast<std::size_t>(z) * static_cast<std::size_t>(h) + static_cast<std::size_t>(y)) *
               static_cast<std::size_t>(w) +
           static_cast<std::size_t>(x);
  }
  bool operator==(const Dims&) const = default;
};

std::string to_string(const Dims& dims);

struct VolumeHeader {
  Dims dims;
  Datatype datatype = Datatype::Float32;
  std::int64_t vox_offset = kDefaultVoxOffset;
  Endian endianness = Endian::Little;
  /// pixdim[1..3], i.e. spacing along W, H, D in millimetres.
  std::array<double, 3> voxel_size{1.0, 1.0, 1.0};

  bool operator==(const VolumeHeader&) const = default;
};

struct Volume3D {
  VolumeHeader header;
  std::vector<double> data;

  Volume3D() = default;
  /// Zero-filled float32 volume on the given grid.
  explicit Volume3D(Dims dims);

  const Dims& dims() const noexcept { return header.dims; }
  double& at(int z, int y, int x) { return data[header.dims.index(z, y, x)]; }
  double at(int z, int y, int x) const { return data[header.dims.index(z, y, x)]; }
};

struct AtlasVolume {
  Dims dims;
  std::vector<int> labels;
  int regions = 0;

  /// Throws InvalidAtlas unless every label is in [0, regions] and every
  /// region 1..regions owns at least one voxel.
  void validate() const;
};

/// R channels of D*H*W indicators, channel-major: bits[(r-1) * voxels + v].
struct OneHotAtlas {
  Dims dims;
  int regions = 0;
  std::vector<std::uint8_t> bits;

  std::uint8_t at(int region, std::size_t voxel) const {
    return bits[static_cast<std::size_t>(region - 1) * dims.voxels() + voxel];
  }
};

VolumeHeader parse_header(std::span<const std::byte> bytes);
std::array<std::byte, kNiftiHeaderSize> encode_header(const VolumeHeader& header);

Volume3D read_volume(const std::filesystem::path& path);
void write_volume(const Volume3D& volume, const std::filesystem::path& path,
                  Datatype datatype = Datatype::Float32);

/// Decodes a full in-memory file image (header + payload).
Volume3D decode_volume(std::span<const std::byte> bytes);
std::vector<std::byte> encode_volume(const Volume3D& volume, Datatype datatype);

/// `regions` <= 0 means "use the largest label present".
AtlasVolume atlas_from_volume(const Volume3D& volume, int regions = 0);
AtlasVolume read_atlas(const std::filesystem::path& path, int regions = 0);
void write_atlas(const AtlasVolume& atlas, const std::filesystem::path& path);

OneHotAtlas onehot_atlas(const AtlasVolume& atlas);

}  // namespace pddn
