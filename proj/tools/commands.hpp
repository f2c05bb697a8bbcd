#pragma once

#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "lotn/config.hpp"
#include "lotn/gradcheck.hpp"

namespace lotn::cli {

enum ExitCode : int { kOk = 0, kInternalError = 1, kUsageError = 2, kDataError = 3, kCheckFailed = 4 };

// Unreadable or inconsistent input data.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Parses arguments, runs one subcommand and maps failures to exit codes.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int cmd_pretrain(const RunConfig& config, std::ostream& out);
int cmd_train(const RunConfig& config, std::ostream& out);
int cmd_evaluate(const RunConfig& config, std::ostream& out);
int cmd_predict(const RunConfig& config, std::ostream& out);
int cmd_inspect_transform(const RunConfig& config, std::ostream& out);
int cmd_gradcheck(const RunConfig& config, std::ostream& out);
int cmd_lambda_sweep(const RunConfig& config, std::ostream& out);

struct GradcheckRow {
  std::string model;
  ag::GradCheckResult result;
  bool passed = false;
};

// Gradient checks of the classifier and the four transfer variants on the
// built-in two-sentence fixture.
std::vector<GradcheckRow> run_gradchecks(const RunConfig& config);

// FNV-1a 64-bit hash of a file's bytes, as 16 hex digits.
std::string fingerprint(const std::filesystem::path& path);

}  // namespace lotn::cli
