#include "pddn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>

#include "pddn/cohort.hpp"
#include "pddn/error.hpp"

namespace pddn {

namespace {

using json = nlohmann::json;

void put_u64(std::vector<std::byte>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(const std::byte* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | static_cast<std::uint64_t>(p[i]);
  return v;
}

void put_array(std::vector<std::byte>& out, const std::vector<double>& values) {
  for (double d : values) put_u64(out, std::bit_cast<std::uint64_t>(d));
}

std::size_t product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (auto s : shape) n *= s;
  return n;
}

class Reader {
 public:
  explicit Reader(std::span<const std::byte> bytes, std::size_t pos) : bytes_(bytes), pos_(pos) {}

  void read_array(std::vector<double>& dst, std::size_t n, const std::string& name) {
    if (bytes_.size() - pos_ < n * 8) throw Error(Errc::TruncatedData, "checkpoint ends inside array " + name);
    dst.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      dst[i] = std::bit_cast<double>(get_u64(bytes_.data() + pos_));
      pos_ += 8;
    }
  }
  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  std::span<const std::byte> bytes_;
  std::size_t pos_;
};

json branch_meta(const BranchParams& b) { return {{"out_scale", b.out_scale}, {"out_offset", b.out_offset}}; }

}  // namespace

std::vector<std::vector<std::size_t>> param_shapes(int channels) {
  const auto c = static_cast<std::size_t>(channels);
  const std::size_t h = c / 2;
  return {
      {h, 1, 3, 3, 3}, {h},     {c, h, 3, 3, 3}, {c},     {c, 2}, {c},
      {c, c, 3, 3, 3}, {c},     {2, c},          {2},     //
      {c, c, 3, 3, 3}, {c},     {1, c},          {1},
  };
}

std::vector<std::byte> encode_checkpoint(const Checkpoint& ckpt) {
  const auto params = list_params(ckpt.params);
  const auto shapes = param_shapes(ckpt.params.channels());
  json arrays = json::array();
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (product(shapes[i]) != params[i].param->size()) {
      throw Error(Errc::ShapeMismatch, params[i].name + " does not match the model's channel count");
    }
    arrays.push_back({{"name", params[i].name}, {"shape", shapes[i]}});
  }
  json meta = {
      {"format", 1},
      {"channels", ckpt.params.channels()},
      {"stage", ckpt.stage},
      {"config_hash", ckpt.config_hash},
      {"options", {{"fusion", ckpt.options.use_fusion}, {"age_branch", ckpt.options.use_age_branch}}},
      {"encoder", {{"input_center", ckpt.params.encoder.input_center},
                   {"input_scale", ckpt.params.encoder.input_scale}}},
      {"fusion", {{"agg_center", ckpt.params.fusion.agg_center}, {"agg_scale", ckpt.params.fusion.agg_scale}}},
      {"branch1", branch_meta(ckpt.params.branch1)},
      {"branch2", branch_meta(ckpt.params.branch2)},
      {"arrays", arrays},
  };
  if (ckpt.optim) {
    const OptimState& s = *ckpt.optim;
    json lengths = json::array();
    for (const auto& m : s.m) lengths.push_back(m.size());
    meta["optim"] = {
        {"step", s.step},
        {"total_steps", s.total_steps},
        {"base_lr", s.config.base_lr},
        {"weight_decay", s.config.weight_decay},
        {"beta1", s.config.beta1},
        {"beta2", s.config.beta2},
        {"eps", s.config.eps},
        {"moment_lengths", lengths},
    };
  }

  const std::string text = meta.dump();
  std::vector<std::byte> out;
  for (char c : kCheckpointMagic) out.push_back(static_cast<std::byte>(c));
  put_u64(out, text.size());
  for (char c : text) out.push_back(static_cast<std::byte>(c));
  for (const auto& p : params) put_array(out, p.param->value);
  if (ckpt.optim) {
    for (const auto& m : ckpt.optim->m) put_array(out, m);
    for (const auto& v : ckpt.optim->v) put_array(out, v);
  }
  return out;
}

Checkpoint decode_checkpoint(std::span<const std::byte> bytes) {
  if (bytes.size() < 16) throw Error(Errc::TruncatedHeader, "checkpoint shorter than its fixed header");
  if (std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0) throw Error(Errc::BadMagic, "not a PDDN0001 checkpoint");
  const std::uint64_t meta_len = get_u64(bytes.data() + 8);
  if (meta_len > bytes.size() - 16) throw Error(Errc::TruncatedHeader, "checkpoint metadata is truncated");

  json meta;
  try {
    meta = json::parse(reinterpret_cast<const char*>(bytes.data() + 16),
                       reinterpret_cast<const char*>(bytes.data() + 16 + meta_len));
  } catch (const json::exception& e) {
    throw Error(Errc::TruncatedHeader, std::string("checkpoint metadata is malformed: ") + e.what());
  }

  Checkpoint ckpt;
  try {
    const int channels = meta.at("channels").get<int>();
    if (channels < 2 || channels % 2 != 0 || channels > 4096) {
      throw Error(Errc::ShapeMismatch, "invalid channel count " + std::to_string(channels));
    }
    ckpt.params = ModelParams(channels);
    ckpt.stage = meta.at("stage").get<int>();
    ckpt.config_hash = meta.at("config_hash").get<std::string>();
    ckpt.options.use_fusion = meta.at("options").at("fusion").get<bool>();
    ckpt.options.use_age_branch = meta.at("options").at("age_branch").get<bool>();
    ckpt.params.encoder.input_center = meta.at("encoder").at("input_center").get<double>();
    ckpt.params.encoder.input_scale = meta.at("encoder").at("input_scale").get<double>();
    ckpt.params.fusion.agg_center = meta.at("fusion").at("agg_center").get<std::array<double, 2>>();
    ckpt.params.fusion.agg_scale = meta.at("fusion").at("agg_scale").get<std::array<double, 2>>();
    ckpt.params.branch1.out_scale = meta.at("branch1").at("out_scale").get<double>();
    ckpt.params.branch1.out_offset = meta.at("branch1").at("out_offset").get<double>();
    ckpt.params.branch2.out_scale = meta.at("branch2").at("out_scale").get<double>();
    ckpt.params.branch2.out_offset = meta.at("branch2").at("out_offset").get<double>();

    Reader reader(bytes, 16 + meta_len);
    auto params = list_params(ckpt.params);
    const auto& arrays = meta.at("arrays");
    if (arrays.size() != params.size()) {
      throw Error(Errc::ShapeMismatch, "checkpoint declares " + std::to_string(arrays.size()) + " arrays, expected " +
                                           std::to_string(params.size()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      const auto name = arrays[i].at("name").get<std::string>();
      const auto shape = arrays[i].at("shape").get<std::vector<std::size_t>>();
      if (name != params[i].name) {
        throw Error(Errc::ShapeMismatch, "array " + std::to_string(i) + " is " + name + ", expected " + params[i].name);
      }
      if (product(shape) != params[i].param->size()) {
        throw Error(Errc::ShapeMismatch, name + " declares " + std::to_string(product(shape)) + " values, model has " +
                                             std::to_string(params[i].param->size()));
      }
      reader.read_array(params[i].param->value, params[i].param->size(), name);
      params[i].param->grad.assign(params[i].param->size(), 0.0);
    }

    if (meta.contains("optim")) {
      const auto& o = meta.at("optim");
      OptimState s;
      s.step = o.at("step").get<std::int64_t>();
      s.total_steps = o.at("total_steps").get<std::int64_t>();
      s.config.base_lr = o.at("base_lr").get<double>();
      s.config.weight_decay = o.at("weight_decay").get<double>();
      s.config.beta1 = o.at("beta1").get<double>();
      s.config.beta2 = o.at("beta2").get<double>();
      s.config.eps = o.at("eps").get<double>();
      const auto lengths = o.at("moment_lengths").get<std::vector<std::size_t>>();
      s.m.resize(lengths.size());
      s.v.resize(lengths.size());
      for (std::size_t k = 0; k < lengths.size(); ++k) reader.read_array(s.m[k], lengths[k], "m" + std::to_string(k));
      for (std::size_t k = 0; k < lengths.size(); ++k) reader.read_array(s.v[k], lengths[k], "v" + std::to_string(k));
      ckpt.optim = std::move(s);
    }
    if (!reader.at_end()) throw Error(Errc::ShapeMismatch, "checkpoint holds more data than its metadata declares");
  } catch (const json::exception& e) {
    throw Error(Errc::ShapeMismatch, std::string("checkpoint metadata is incomplete: ") + e.what());
  }
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(ckpt);
  write_file_atomic(path, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoError, "cannot open checkpoint " + path.string());
  std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(std::as_bytes(std::span(raw.data(), raw.size())));
}

}  // namespace pddn
