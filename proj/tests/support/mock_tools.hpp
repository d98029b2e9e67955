#pragma once

// Counting stand-ins for the external preprocessing tools. Every invocation
// appends one line to <dir>/calls.log and copies its input to its output.

#include <sys/stat.h>

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "pddn/preprocess.hpp"
#include "pddn/volume_io.hpp"

namespace pddn::test {

inline void write_script(const std::filesystem::path& path, const std::string& body) {
  std::ofstream(path) << "#!/bin/sh\n" << body;
  ::chmod(path.c_str(), 0755);
}

struct MockTools {
  std::filesystem::path dir;

  explicit MockTools(std::filesystem::path d) : dir(std::move(d)) {
    std::filesystem::create_directories(dir);
    const std::string log = (dir / "calls.log").string();
    write_script(dir / "copy_tool", "echo \"$(basename $0) $1\" >> '" + log + "'\ncp \"$1\" \"$2\"\n");
    write_script(dir / "fail_tool", "echo \"$(basename $0) $1\" >> '" + log + "'\nexit 3\n");
    write_script(dir / "silent_tool", "echo \"$(basename $0) $1\" >> '" + log + "'\nexit 0\n");
    // Copies like copy_tool, but on its `n`-th call SIGKILLs the process that spawned it.
    write_script(dir / "kill_tool",
                 "echo \"$(basename $0) $1\" >> '" + log + "'\n"
                 "n=$(cat '" + (dir / "kill_count").string() + "' 2>/dev/null || echo 0)\n"
                 "n=$((n + 1))\necho $n > '" + (dir / "kill_count").string() + "'\n"
                 "if [ \"$n\" -eq \"$(cat '" + (dir / "kill_at").string() + "')\" ]; then kill -9 $PPID; exit 1; fi\n"
                 "cp \"$1\" \"$2\"\n");
    std::ofstream(dir / "template.nii") << "template";
  }

  std::string tool(const std::string& name) const { return (dir / name).string(); }

  ToolConfig config(const std::filesystem::path& cache) const {
    ToolConfig c;
    c.strip = tool("copy_tool") + " {input} {output}";
    c.bias = tool("copy_tool") + " {input} {output}";
    c.register_cmd = tool("copy_tool") + " {input} {output} {template}";
    c.template_path = dir / "template.nii";
    c.cache_dir = cache;
    return c;
  }

  int calls() const {
    std::ifstream in(dir / "calls.log");
    int n = 0;
    for (std::string line; std::getline(in, line);) ++n;
    return n;
  }

  void reset_calls() const { std::filesystem::remove(dir / "calls.log"); }
};

// One small raw scan per subject, each with distinct content.
inline std::vector<RawScan> make_raw_scans(const std::filesystem::path& dir, int n) {
  std::filesystem::create_directories(dir);
  std::vector<RawScan> scans;
  for (int i = 0; i < n; ++i) {
    Volume3D v(Dims{4, 4, 4});
    for (std::size_t k = 0; k < v.data.size(); ++k) v.data[k] = static_cast<double>(i * 100 + static_cast<int>(k));
    const auto p = dir / ("raw" + std::to_string(i) + ".nii");
    write_volume(v, p);
    scans.push_back({"sub-" + std::to_string(i + 1), p});
  }
  return scans;
}

}  // namespace pddn::test
