#include "config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

#include "pddn/cohort.hpp"
#include "pddn/error.hpp"

namespace pddn::cli {

namespace {

struct Key {
  std::string section;
  std::string name;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const std::string& what) {
  throw Error(Errc::InvalidConfig, key + " = \"" + value + "\": expected " + what);
}

template <typename T>
T parse_integer(const std::string& key, const std::string& value) {
  T out{};
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc{} || ptr != value.data() + value.size()) bad_value(key, value, "an integer");
  return out;
}

double parse_real(const std::string& key, const std::string& value) {
  try {
    return parse_double(value);
  } catch (const Error&) {
    bad_value(key, value, "a number");
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
  if (value == "false" || value == "0" || value == "no" || value == "off") return false;
  bad_value(key, value, "true or false");
}

std::string bool_str(bool b) { return b ? "true" : "false"; }

#define PDDN_REAL(sec, name, field)                                                    \
  Key {                                                                                \
    sec, name, [](const RunConfig& c) { return format_double(c.field); },              \
        [](RunConfig& c, const std::string& v) { c.field = parse_real(sec "." name, v); } \
  }
#define PDDN_INT(sec, name, field, type)                                                         \
  Key {                                                                                          \
    sec, name, [](const RunConfig& c) { return std::to_string(c.field); },                       \
        [](RunConfig& c, const std::string& v) { c.field = parse_integer<type>(sec "." name, v); } \
  }
#define PDDN_BOOL(sec, name, field)                                                    \
  Key {                                                                                \
    sec, name, [](const RunConfig& c) { return bool_str(c.field); },                   \
        [](RunConfig& c, const std::string& v) { c.field = parse_bool(sec "." name, v); } \
  }
#define PDDN_STR(sec, name, field)                                                                              \
  Key {                                                                                                         \
    sec, name, [](const RunConfig& c) { return std::string(c.field); }, [](RunConfig& c, const std::string& v) { \
      c.field = v;                                                                                              \
    }                                                                                                           \
  }

const std::vector<Key>& keys() {
  static const std::vector<Key> table = {
      PDDN_REAL("prior", "zeta", prior.zeta),
      PDDN_REAL("prior", "tau", prior.tau),
      PDDN_REAL("prior", "alpha", prior.alpha),
      PDDN_INT("model", "channels", model.channels, int),
      PDDN_BOOL("model", "fusion", model.fusion),
      PDDN_BOOL("model", "age_branch", model.age_branch),
      PDDN_REAL("model", "age_center", model.age_center),
      PDDN_REAL("model", "age_scale", model.age_scale),
      PDDN_STR("train", "stage", train.stage),
      PDDN_INT("train", "epochs", train.epochs, int),
      PDDN_INT("train", "batch", train.batch, int),
      PDDN_REAL("train", "lr", train.lr),
      PDDN_REAL("train", "weight_decay", train.weight_decay),
      PDDN_INT("train", "seed", train.seed, std::uint64_t),
      PDDN_INT("train", "jobs", train.jobs, int),
      PDDN_STR("data", "cohort_manifest", data.cohort_manifest),
      PDDN_STR("data", "atlas_path", data.atlas_path),
      PDDN_STR("data", "relevance_csv", data.relevance_csv),
      PDDN_STR("preprocess", "strip", preprocess.strip),
      PDDN_STR("preprocess", "bias", preprocess.bias),
      PDDN_STR("preprocess", "register", preprocess.register_cmd),
      Key{"preprocess", "template", [](const RunConfig& c) { return c.preprocess.template_path.string(); },
          [](RunConfig& c, const std::string& v) { c.preprocess.template_path = v; }},
      Key{"preprocess", "cache_dir", [](const RunConfig& c) { return c.preprocess.cache_dir.string(); },
          [](RunConfig& c, const std::string& v) { c.preprocess.cache_dir = v; }},
      PDDN_INT("preprocess", "jobs", preprocess.jobs, int),
      PDDN_INT("synth", "n_subjects", synth.n_subjects, int),
      Key{"synth", "dims", [](const RunConfig& c) { return to_string(c.synth.dims); },
          [](RunConfig& c, const std::string& v) { c.synth.dims = parse_dims(v); }},
      PDDN_INT("synth", "regions", synth.regions, int),
      PDDN_INT("synth", "background_margin", synth.background_margin, int),
      PDDN_REAL("synth", "pd_fraction", synth.pd_fraction),
      PDDN_REAL("synth", "other_disorder_fraction", synth.other_disorder_fraction),
      PDDN_REAL("synth", "age_min", synth.age_min),
      PDDN_REAL("synth", "age_max", synth.age_max),
      PDDN_REAL("synth", "acceleration", synth.acceleration),
      PDDN_REAL("synth", "other_acceleration", synth.other_acceleration),
      PDDN_REAL("synth", "gain", synth.gain),
      PDDN_REAL("synth", "baseline", synth.baseline),
      PDDN_REAL("synth", "region_jitter", synth.region_jitter),
      PDDN_REAL("synth", "offtarget_jitter", synth.offtarget_jitter),
      PDDN_REAL("synth", "noise", synth.noise),
      PDDN_INT("synth", "seed", synth.seed, std::uint64_t),
  };
  return table;
}

#undef PDDN_REAL
#undef PDDN_INT
#undef PDDN_BOOL
#undef PDDN_STR

}  // namespace

AgingPriorParams RunConfig::prior_params() const {
  try {
    return AgingPriorParams(prior.zeta, prior.tau, prior.alpha);
  } catch (const Error& e) {
    throw Error(Errc::InvalidConfig, e.what());
  }
}

ModelOptions RunConfig::model_options() const { return {model.fusion, model.age_branch}; }

ModelInit RunConfig::model_init() const {
  if (model.channels < 2 || model.channels % 2 != 0) {
    throw Error(Errc::InvalidConfig, "model.channels must be even and >= 2");
  }
  ModelInit init;
  init.channels = model.channels;
  init.seed = train.seed;
  init.age_center = model.age_center;
  init.age_scale = model.age_scale;
  return init;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t;
  t.epochs = train.epochs;
  t.batch = train.batch;
  t.lr = train.lr;
  t.weight_decay = train.weight_decay;
  t.seed = train.seed;
  t.jobs = train.jobs;
  t.options = model_options();
  t.prior = prior_params();
  try {
    t.validate();
  } catch (const Error& e) {
    throw Error(Errc::InvalidConfig, e.what());
  }
  return t;
}

Dims parse_dims(const std::string& text) {
  std::vector<int> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = text.find('x', start);
    const std::string piece = text.substr(start, pos == std::string::npos ? std::string::npos : pos - start);
    parts.push_back(parse_integer<int>("dims", piece));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  if (parts.size() == 1) return {parts[0], parts[0], parts[0]};
  if (parts.size() == 3) return {parts[0], parts[1], parts[2]};
  bad_value("dims", text, "N or DxHxW");
}

RunConfig parse_config(const std::string& text, RunConfig base) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw Error(Errc::InvalidConfig, e.what());
  }
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) {
      throw Error(Errc::InvalidConfig, "key \"" + section + "\" outside any section");
    }
    for (const auto& [name, value] : body) {
      const Key* match = nullptr;
      for (const auto& k : keys()) {
        if (k.section == section && k.name == name) match = &k;
      }
      if (!match) throw Error(Errc::InvalidConfig, "unknown config key " + section + "." + name);
      match->set(base, value.data());
    }
  }
  return base;
}

RunConfig load_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::InvalidConfig, "cannot read config " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str(), std::move(base));
}

std::string dump_config(const RunConfig& config) {
  std::ostringstream out;
  std::string section;
  for (const auto& k : keys()) {
    if (k.section != section) {
      if (!section.empty()) out << '\n';
      section = k.section;
      out << '[' << section << "]\n";
    }
    out << k.name << " = " << k.get(config) << '\n';
  }
  return out.str();
}

}  // namespace pddn::cli
