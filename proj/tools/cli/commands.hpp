#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "config.hpp"
#include "pddn/metrics.hpp"
#include "pddn/cohort.hpp"

namespace pddn::cli {

/// Entry point shared by the binary and the tests. `args` excludes the
/// program name. Returns the process exit code: 0 on success, 1 when the
/// command failed, 2 on usage errors.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Key/value metrics document (JSON); undefined ratios are null.
std::string metrics_document(const Metrics& metrics, const std::vector<PredictionRecord>& records);

/// Fixed-width 2x2 confusion matrix, rows = truth, columns = prediction.
std::string confusion_table(const ConfusionCounts& counts);

}  // namespace pddn::cli
