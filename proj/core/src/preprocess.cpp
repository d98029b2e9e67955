#include "pddn/preprocess.hpp"

#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <mutex>
#include <optional>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "parallel.hpp"
#include "pddn/cohort.hpp"
#include "pddn/digest.hpp"
#include "pddn/error.hpp"

extern char** environ;

namespace pddn {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::vector<std::string> split_ws(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  for (std::string tok; in >> tok;) out.push_back(tok);
  return out;
}

void replace_all(std::string& s, std::string_view from, const std::string& to) {
  for (std::size_t pos = 0; (pos = s.find(from, pos)) != std::string::npos; pos += to.size()) {
    s.replace(pos, from.size(), to);
  }
}

std::vector<std::string> expand(const std::string& tmpl, const std::string& input, const std::string& output,
                                const std::string& template_path) {
  std::vector<std::string> argv = split_ws(tmpl);
  for (auto& a : argv) {
    replace_all(a, "{input}", input);
    replace_all(a, "{output}", output);
    replace_all(a, "{template}", template_path);
  }
  return argv;
}

bool is_executable(const fs::path& p) {
  std::error_code ec;
  return fs::is_regular_file(p, ec) && ::access(p.c_str(), X_OK) == 0;
}

bool resolvable(const std::string& program) {
  if (program.find('/') != std::string::npos) return is_executable(program);
  const char* path = std::getenv("PATH");
  std::string dirs = path ? path : "/usr/bin:/bin";
  std::size_t start = 0;
  while (start <= dirs.size()) {
    auto end = dirs.find(':', start);
    if (end == std::string::npos) end = dirs.size();
    const std::string dir = dirs.substr(start, end - start);
    if (is_executable(fs::path(dir.empty() ? "." : dir) / program)) return true;
    start = end + 1;
  }
  return false;
}

void run_command(const std::vector<std::string>& argv) {
  std::vector<char*> args;
  for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
  args.push_back(nullptr);
  pid_t pid = 0;
  const int rc = ::posix_spawnp(&pid, args[0], nullptr, nullptr, args.data(), environ);
  if (rc == ENOENT) throw Error(Errc::CommandNotFound, argv[0]);
  if (rc != 0) throw Error(Errc::CommandFailed, argv[0] + ": spawn failed: " + std::strerror(rc));
  int status = 0;
  while (::waitpid(pid, &status, 0) < 0) {
    if (errno != EINTR) throw Error(Errc::CommandFailed, argv[0] + ": waitpid failed");
  }
  if (WIFSIGNALED(status)) {
    throw Error(Errc::CommandFailed, argv[0] + " killed by signal " + std::to_string(WTERMSIG(status)));
  }
  if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
    throw Error(Errc::CommandFailed, argv[0] + " exited with status " + std::to_string(WEXITSTATUS(status)));
  }
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  ::gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

StepStatus parse_status(const std::string& token) {
  if (token == "skipped") return StepStatus::Skipped;
  if (token == "ran") return StepStatus::Ran;
  if (token == "failed") return StepStatus::Failed;
  if (token == "not_run") return StepStatus::NotRun;
  throw Error(Errc::InvalidArgument, "unknown step status \"" + token + "\"");
}

json to_json(const PipelineRecord& r) {
  json steps = json::object();
  for (std::size_t i = 0; i < 3; ++i) steps[std::string(kStepNames[i])] = step_status_token(r.steps[i]);
  return {{"subject_id", r.subject_id},       {"input", r.input.string()},   {"steps", steps},
          {"output", r.output.string()},      {"output_digest", r.output_digest},
          {"cache_key", r.cache_key},         {"status", r.ok() ? "complete" : "failed"},
          {"error", r.error},                 {"started", r.started},        {"finished", r.finished}};
}

PipelineRecord from_json(const json& j) {
  PipelineRecord r;
  r.subject_id = j.at("subject_id").get<std::string>();
  r.input = j.at("input").get<std::string>();
  for (std::size_t i = 0; i < 3; ++i) {
    r.steps[i] = parse_status(j.at("steps").at(std::string(kStepNames[i])).get<std::string>());
  }
  r.output = j.at("output").get<std::string>();
  r.output_digest = j.at("output_digest").get<std::string>();
  r.cache_key = j.at("cache_key").get<std::string>();
  r.error = j.at("error").get<std::string>();
  r.started = j.at("started").get<std::string>();
  r.finished = j.at("finished").get<std::string>();
  return r;
}

class Manifest {
 public:
  explicit Manifest(fs::path path) : path_(std::move(path)) {
    if (fs::exists(path_)) records_ = read_pipeline_manifest(path_);
  }

  // Latest completed record for the subject under this cache key.
  std::optional<PipelineRecord> find(const std::string& id, const std::string& key) const {
    std::lock_guard lock(mu_);
    for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
      if (it->subject_id == id && it->cache_key == key && it->ok()) return *it;
    }
    return std::nullopt;
  }

  void append(const PipelineRecord& r) {
    std::lock_guard lock(mu_);
    records_.push_back(r);
    std::string text;
    for (const auto& rec : records_) text += to_json(rec).dump() + "\n";
    write_file_atomic(path_, text);
  }

 private:
  fs::path path_;
  std::vector<PipelineRecord> records_;
  mutable std::mutex mu_;
};

PipelineRecord process_subject(const RawScan& scan, const ToolConfig& cfg, const Manifest& manifest) {
  PipelineRecord rec;
  rec.subject_id = scan.id;
  rec.input = scan.path;
  rec.output = processed_path(cfg, scan.id);
  rec.started = utc_now();
  const std::string tpl = cfg.template_path.string();
  std::size_t step = 0;
  try {
    const std::string input_digest = sha256_file(scan.path);
    std::string key_text = input_digest;
    for (const auto* t : {&cfg.strip, &cfg.bias, &cfg.register_cmd}) {
      std::string resolved = *t;
      replace_all(resolved, "{template}", tpl);
      key_text += "\n" + resolved;
    }
    rec.cache_key = sha256_hex(key_text);

    if (const auto hit = manifest.find(scan.id, rec.cache_key)) {
      std::error_code ec;
      if (fs::is_regular_file(hit->output, ec) && sha256_file(hit->output) == hit->output_digest) {
        rec.steps.fill(StepStatus::Skipped);
        rec.output = hit->output;
        rec.output_digest = hit->output_digest;
        rec.finished = utc_now();
        return rec;
      }
    }

    // Leftovers of an interrupted run are discarded.
    const fs::path work = cfg.cache_dir / ".work" / scan.id;
    fs::remove_all(work);
    fs::create_directories(work);
    fs::path current = scan.path;
    const std::array<const std::string*, 3> templates{&cfg.strip, &cfg.bias, &cfg.register_cmd};
    for (step = 0; step < 3; ++step) {
      const fs::path out = work / (std::string(kStepNames[step]) + ".nii");
      run_command(expand(*templates[step], current.string(), out.string(), tpl));
      if (!fs::is_regular_file(out)) {
        throw Error(Errc::OutputMissing, std::string(kStepNames[step]) + " produced no " + out.string());
      }
      rec.steps[step] = StepStatus::Ran;
      current = out;
    }
    fs::rename(current, rec.output);
    rec.output_digest = sha256_file(rec.output);
    fs::remove_all(work);
  } catch (const std::exception& e) {
    if (step < 3) rec.steps[step] = StepStatus::Failed;
    rec.output_digest.clear();
    rec.error = e.what();
  }
  rec.finished = utc_now();
  return rec;
}

}  // namespace

std::string_view step_status_token(StepStatus status) noexcept {
  switch (status) {
    case StepStatus::Skipped: return "skipped";
    case StepStatus::Ran: return "ran";
    case StepStatus::Failed: return "failed";
    case StepStatus::NotRun: return "not_run";
  }
  return "?";
}

bool PipelineRecord::ok() const noexcept {
  for (auto s : steps) {
    if (s != StepStatus::Ran && s != StepStatus::Skipped) return false;
  }
  return error.empty();
}

bool PipelineRecord::skipped() const noexcept {
  for (auto s : steps) {
    if (s != StepStatus::Skipped) return false;
  }
  return true;
}

void ToolConfig::validate() const {
  auto need = [](const std::string& tmpl, std::string_view step, std::string_view placeholder) {
    if (tmpl.find(placeholder) == std::string::npos) {
      throw Error(Errc::InvalidConfig,
                  std::string(step) + " template \"" + tmpl + "\" lacks " + std::string(placeholder));
    }
  };
  for (const auto& [tmpl, step] : {std::pair{&strip, "strip"}, {&bias, "bias"}, {&register_cmd, "register"}}) {
    if (split_ws(*tmpl).empty()) throw Error(Errc::InvalidConfig, std::string(step) + " template is empty");
    need(*tmpl, step, "{input}");
    need(*tmpl, step, "{output}");
  }
  need(register_cmd, "register", "{template}");
  if (template_path.empty()) throw Error(Errc::InvalidConfig, "template path is not set");
  if (cache_dir.empty()) throw Error(Errc::InvalidConfig, "cache directory is not set");
  if (jobs < 1) throw Error(Errc::InvalidConfig, "jobs must be >= 1");
}

fs::path processed_path(const ToolConfig& cfg, const std::string& subject_id) {
  return cfg.cache_dir / (subject_id + ".nii");
}

fs::path manifest_path(const ToolConfig& cfg) { return cfg.cache_dir / "manifest.jsonl"; }

std::vector<PipelineRecord> read_pipeline_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoError, "cannot open " + path.string());
  std::vector<PipelineRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw Error(Errc::InvalidArgument, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

std::vector<PipelineRecord> run_pipeline(const std::vector<RawScan>& scans, const ToolConfig& cfg) {
  cfg.validate();
  std::set<std::string> ids;
  for (const auto& s : scans) {
    if (s.id.empty() || s.id.find('/') != std::string::npos) {
      throw Error(Errc::InvalidArgument, "invalid subject id \"" + s.id + "\"");
    }
    if (!ids.insert(s.id).second) throw Error(Errc::DuplicateId, "subject " + s.id + " listed twice");
  }
  for (const auto* t : {&cfg.strip, &cfg.bias, &cfg.register_cmd}) {
    const std::string program = split_ws(*t).front();
    if (!resolvable(program)) throw Error(Errc::CommandNotFound, program);
  }
  fs::create_directories(cfg.cache_dir);

  Manifest manifest(manifest_path(cfg));
  std::vector<PipelineRecord> records(scans.size());
  detail::parallel_for(scans.size(), cfg.jobs, [&](std::size_t i) {
    records[i] = process_subject(scans[i], cfg, manifest);
    manifest.append(records[i]);
  });
  return records;
}

void verify_processed(const Volume3D& volume, const Dims& expected) {
  if (!(volume.header.dims == expected)) {
    throw Error(Errc::DimMismatch,
                "volume dims " + to_string(volume.header.dims) + " differ from expected " + to_string(expected));
  }
}

}  // namespace pddn
