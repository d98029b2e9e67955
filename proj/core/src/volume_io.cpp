#include "pddn/volume_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "pddn/error.hpp"

namespace pddn {

namespace {

constexpr std::size_t kOffSizeofHdr = 0;
constexpr std::size_t kOffDim = 40;
constexpr std::size_t kOffDatatype = 70;
constexpr std::size_t kOffBitpix = 72;
constexpr std::size_t kOffPixdim = 76;
constexpr std::size_t kOffVoxOffset = 108;
constexpr std::size_t kOffSclSlope = 112;
constexpr std::size_t kOffSclInter = 116;
constexpr std::size_t kOffMagic = 344;

template <typename T>
T byteswap(T value) {
  std::array<std::byte, sizeof(T)> raw;
  std::memcpy(raw.data(), &value, sizeof(T));
  std::reverse(raw.begin(), raw.end());
  std::memcpy(&value, raw.data(), sizeof(T));
  return value;
}

constexpr bool host_is_little() { return std::endian::native == std::endian::little; }

template <typename T>
T load(std::span<const std::byte> bytes, std::size_t offset, Endian endian) {
  T value;
  std::memcpy(&value, bytes.data() + offset, sizeof(T));
  const bool file_little = endian == Endian::Little;
  if (file_little != host_is_little()) value = byteswap(value);
  return value;
}

template <typename T>
void store_le(std::byte* dst, T value) {
  if (!host_is_little()) value = byteswap(value);
  std::memcpy(dst, &value, sizeof(T));
}

int bytes_per_voxel(Datatype dt) {
  switch (dt) {
    case Datatype::UInt8: return 1;
    case Datatype::Int16: return 2;
    case Datatype::Float32: return 4;
  }
  return 0;
}

bool supported_datatype(std::int16_t code) {
  return code == static_cast<std::int16_t>(Datatype::UInt8) ||
         code == static_cast<std::int16_t>(Datatype::Int16) ||
         code == static_cast<std::int16_t>(Datatype::Float32);
}

std::vector<std::byte> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoError, "cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const auto size = in.tellg();
  if (size < 0) throw Error(Errc::IoError, "cannot size " + path.string());
  in.seekg(0, std::ios::beg);
  std::vector<std::byte> buffer(static_cast<std::size_t>(size));
  in.read(reinterpret_cast<char*>(buffer.data()), size);
  if (!in) throw Error(Errc::IoError, "short read on " + path.string());
  return buffer;
}

void spill(const std::filesystem::path& path, std::span<const std::byte> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::IoError, "cannot create " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(Errc::IoError, "short write on " + path.string());
}

}  // namespace

std::string to_string(const Dims& dims) {
  std::ostringstream os;
  os << dims.d << "x" << dims.h << "x" << dims.w;
  return os.str();
}

Volume3D::Volume3D(Dims dims) : data(dims.voxels(), 0.0) { header.dims = dims; }

VolumeHeader parse_header(std::span<const std::byte> bytes) {
  if (bytes.size() < kNiftiHeaderSize) {
    throw Error(Errc::TruncatedHeader,
                "need " + std::to_string(kNiftiHeaderSize) + " bytes, got " + std::to_string(bytes.size()));
  }

  VolumeHeader header;
  if (load<std::int32_t>(bytes, kOffSizeofHdr, Endian::Little) == 348) {
    header.endianness = Endian::Little;
  } else if (load<std::int32_t>(bytes, kOffSizeofHdr, Endian::Big) == 348) {
    header.endianness = Endian::Big;
  } else {
    throw Error(Errc::BadMagic, "sizeof_hdr is not 348 in either byte order");
  }
  const Endian e = header.endianness;

  if (std::memcmp(bytes.data() + kOffMagic, "n+1\0", 4) != 0) {
    throw Error(Errc::BadMagic, "magic is not \"n+1\" (only single-file NIfTI-1 is supported)");
  }

  const auto rank = load<std::int16_t>(bytes, kOffDim, e);
  if (rank != 3) {
    throw Error(Errc::UnsupportedDimensionality, "dim[0] = " + std::to_string(rank) + ", expected 3");
  }
  const auto w = load<std::int16_t>(bytes, kOffDim + 2, e);
  const auto h = load<std::int16_t>(bytes, kOffDim + 4, e);
  const auto d = load<std::int16_t>(bytes, kOffDim + 6, e);
  if (w < 1 || h < 1 || d < 1) {
    throw Error(Errc::UnsupportedDimensionality, "non-positive extent in dim[1..3]");
  }
  header.dims = Dims{d, h, w};

  const auto code = load<std::int16_t>(bytes, kOffDatatype, e);
  if (!supported_datatype(code)) {
    throw Error(Errc::UnsupportedDatatype, "datatype code " + std::to_string(code));
  }
  header.datatype = static_cast<Datatype>(code);

  for (int i = 0; i < 3; ++i) {
    header.voxel_size[static_cast<std::size_t>(i)] =
        load<float>(bytes, kOffPixdim + 4 * static_cast<std::size_t>(i + 1), e);
  }

  const float vox_offset = load<float>(bytes, kOffVoxOffset, e);
  if (!std::isfinite(vox_offset) || vox_offset < static_cast<float>(kNiftiHeaderSize)) {
    throw Error(Errc::TruncatedHeader, "vox_offset below 348");
  }
  header.vox_offset = static_cast<std::int64_t>(vox_offset);
  return header;
}

std::array<std::byte, kNiftiHeaderSize> encode_header(const VolumeHeader& header) {
  std::array<std::byte, kNiftiHeaderSize> out{};
  std::byte* base = out.data();
  store_le<std::int32_t>(base + kOffSizeofHdr, 348);
  const std::array<std::int16_t, 8> dim{3,
                                        static_cast<std::int16_t>(header.dims.w),
                                        static_cast<std::int16_t>(header.dims.h),
                                        static_cast<std::int16_t>(header.dims.d),
                                        1, 1, 1, 1};
  for (std::size_t i = 0; i < dim.size(); ++i) store_le(base + kOffDim + 2 * i, dim[i]);
  store_le(base + kOffDatatype, static_cast<std::int16_t>(header.datatype));
  store_le(base + kOffBitpix, static_cast<std::int16_t>(8 * bytes_per_voxel(header.datatype)));
  store_le(base + kOffPixdim, 1.0f);  // qfac
  for (std::size_t i = 0; i < 3; ++i) {
    store_le(base + kOffPixdim + 4 * (i + 1), static_cast<float>(header.voxel_size[i]));
  }
  store_le(base + kOffVoxOffset, static_cast<float>(header.vox_offset));
  store_le(base + kOffSclSlope, 0.0f);
  store_le(base + kOffSclInter, 0.0f);
  std::memcpy(base + kOffMagic, "n+1\0", 4);
  return out;
}

Volume3D decode_volume(std::span<const std::byte> bytes) {
  Volume3D volume;
  volume.header = parse_header(bytes);
  const VolumeHeader& hdr = volume.header;
  const Endian e = hdr.endianness;

  const std::size_t n = hdr.dims.voxels();
  const auto width = static_cast<std::size_t>(bytes_per_voxel(hdr.datatype));
  const auto start = static_cast<std::size_t>(hdr.vox_offset);
  if (bytes.size() < start || bytes.size() - start < n * width) {
    throw Error(Errc::TruncatedData, "payload holds fewer than " + std::to_string(n) + " voxels");
  }

  double slope = load<float>(bytes, kOffSclSlope, e);
  double inter = load<float>(bytes, kOffSclInter, e);
  const bool scaled = std::isfinite(slope) && slope != 0.0 && !(slope == 1.0 && inter == 0.0);
  if (!scaled) {
    slope = 1.0;
    inter = 0.0;
  }

  volume.data.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t off = start + i * width;
    double value = 0.0;
    switch (hdr.datatype) {
      case Datatype::UInt8: value = static_cast<double>(std::to_integer<std::uint8_t>(bytes[off])); break;
      case Datatype::Int16: value = load<std::int16_t>(bytes, off, e); break;
      case Datatype::Float32: value = static_cast<double>(load<float>(bytes, off, e)); break;
    }
    if (scaled) value = value * slope + inter;
    if (!std::isfinite(value)) {
      throw Error(Errc::NonFinite, "voxel " + std::to_string(i) + " is not finite");
    }
    volume.data[i] = value;
  }
  return volume;
}

Volume3D read_volume(const std::filesystem::path& path) {
  const auto bytes = slurp(path);
  try {
    return decode_volume(bytes);
  } catch (const Error& err) {
    throw Error(err.code(), path.string() + ": " + err.what());
  }
}

std::vector<std::byte> encode_volume(const Volume3D& volume, Datatype datatype) {
  const std::size_t n = volume.dims().voxels();
  if (volume.data.size() != n) {
    throw Error(Errc::LengthMismatch, "data length does not match dims " + to_string(volume.dims()));
  }
  VolumeHeader header = volume.header;
  header.datatype = datatype;
  header.vox_offset = kDefaultVoxOffset;
  header.endianness = Endian::Little;

  const auto width = static_cast<std::size_t>(bytes_per_voxel(datatype));
  std::vector<std::byte> out(static_cast<std::size_t>(kDefaultVoxOffset) + n * width, std::byte{0});
  const auto hdr = encode_header(header);
  std::copy(hdr.begin(), hdr.end(), out.begin());

  std::byte* payload = out.data() + kDefaultVoxOffset;
  for (std::size_t i = 0; i < n; ++i) {
    const double v = volume.data[i];
    switch (datatype) {
      case Datatype::UInt8: {
        if (!(v >= 0.0 && v <= 255.0) || std::nearbyint(v) != v) {
          throw Error(Errc::ValueOutOfRange, "value " + std::to_string(v) + " not representable as uint8");
        }
        payload[i] = static_cast<std::byte>(static_cast<std::uint8_t>(v));
        break;
      }
      case Datatype::Int16: {
        if (!(v >= -32768.0 && v <= 32767.0) || std::nearbyint(v) != v) {
          throw Error(Errc::ValueOutOfRange, "value " + std::to_string(v) + " not representable as int16");
        }
        store_le(payload + 2 * i, static_cast<std::int16_t>(v));
        break;
      }
      case Datatype::Float32: {
        if (!std::isfinite(v) || std::abs(v) > static_cast<double>(std::numeric_limits<float>::max())) {
          throw Error(Errc::ValueOutOfRange, "value " + std::to_string(v) + " not representable as float32");
        }
        store_le(payload + 4 * i, static_cast<float>(v));
        break;
      }
    }
  }
  return out;
}

void write_volume(const Volume3D& volume, const std::filesystem::path& path, Datatype datatype) {
  spill(path, encode_volume(volume, datatype));
}

void AtlasVolume::validate() const {
  if (regions < 1) throw Error(Errc::InvalidAtlas, "atlas must have at least one region");
  if (labels.size() != dims.voxels()) throw Error(Errc::InvalidAtlas, "label count does not match dims");
  std::vector<std::size_t> counts(static_cast<std::size_t>(regions) + 1, 0);
  for (int label : labels) {
    if (label < 0 || label > regions) {
      throw Error(Errc::InvalidAtlas, "label " + std::to_string(label) + " outside [0, " +
                                          std::to_string(regions) + "]");
    }
    ++counts[static_cast<std::size_t>(label)];
  }
  for (int r = 1; r <= regions; ++r) {
    if (counts[static_cast<std::size_t>(r)] == 0) {
      throw Error(Errc::InvalidAtlas, "region " + std::to_string(r) + " has no voxels");
    }
  }
}

AtlasVolume atlas_from_volume(const Volume3D& volume, int regions) {
  if (volume.header.datatype == Datatype::Float32) {
    throw Error(Errc::UnsupportedDatatype, "atlas must use an integer datatype");
  }
  AtlasVolume atlas;
  atlas.dims = volume.dims();
  atlas.labels.reserve(volume.data.size());
  int max_label = 0;
  for (double v : volume.data) {
    const int label = static_cast<int>(v);
    atlas.labels.push_back(label);
    max_label = std::max(max_label, label);
  }
  atlas.regions = regions > 0 ? regions : max_label;
  atlas.validate();
  return atlas;
}

AtlasVolume read_atlas(const std::filesystem::path& path, int regions) {
  return atlas_from_volume(read_volume(path), regions);
}

void write_atlas(const AtlasVolume& atlas, const std::filesystem::path& path) {
  Volume3D vol(atlas.dims);
  std::transform(atlas.labels.begin(), atlas.labels.end(), vol.data.begin(),
                 [](int label) { return static_cast<double>(label); });
  write_volume(vol, path, atlas.regions <= 255 ? Datatype::UInt8 : Datatype::Int16);
}

OneHotAtlas onehot_atlas(const AtlasVolume& atlas) {
  atlas.validate();
  OneHotAtlas out;
  out.dims = atlas.dims;
  out.regions = atlas.regions;
  const std::size_t n = atlas.dims.voxels();
  out.bits.assign(static_cast<std::size_t>(atlas.regions) * n, 0);
  for (std::size_t v = 0; v < n; ++v) {
    const int label = atlas.labels[v];
    if (label > 0) out.bits[static_cast<std::size_t>(label - 1) * n + v] = 1;
  }
  return out;
}

}  // namespace pddn
