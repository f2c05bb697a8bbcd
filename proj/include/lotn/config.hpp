#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace lotn {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Every setting a command may read. Files use flat "key = value" lines with
/// '#' comments; later assignments (command-line overrides) win.
struct RunConfig {
  // Inputs and artifacts. Empty means "not given".
  std::string reviews_train;
  std::string reviews_dev;
  std::string towe_train;
  std::string towe_dev;
  std::string towe_test;
  std::string embeddings;
  std::string sentiment_checkpoint;
  std::string model_checkpoint;
  std::string compare_predictions;
  std::string out_dir = "runs";

  // Model.
  std::string variant = "lotn";
  std::size_t word_dim = 300;
  std::size_t pos_dim = 300;
  std::size_t hidden = 200;
  std::size_t max_position = 100;
  std::size_t review_max_length = 100;
  double dropout = 0.5;
  double lambda = 0.2;
  double init_scale = 0.01;

  // Optimization.
  double lr = 0.001;
  std::size_t batch = 25;
  std::size_t pretrain_epochs = 30;
  std::size_t pretrain_patience = 3;
  std::size_t epochs = 100;
  std::size_t patience = 5;
  double dev_fraction = 0.2;
  std::uint64_t seed = 1;

  // Sweeps, checks and statistics.
  std::vector<std::uint64_t> seeds;  // empty: just `seed`
  double lambda_start = 0.05;
  double lambda_stop = 0.95;
  double lambda_step = 0.05;
  std::size_t shuffles = 10000;
  double gradcheck_step = 1e-5;
  double gradcheck_tolerance = 1e-4;
  std::size_t gradcheck_samples = 0;  // 0: every coordinate
  double gradcheck_init_scale = 0.5;

  // Assigns one key from its text form; throws ConfigError on unknown keys or bad values.
  void set(const std::string& key, const std::string& value);
  // "key=value" as given on the command line.
  void set_assignment(const std::string& assignment);
  void load_file(const std::filesystem::path& path);
  // Range and consistency checks that do not touch the file system.
  void validate() const;

  bool is_set(const std::string& key) const { return explicit_keys_.count(key) != 0; }
  // Resolved value of every key in declaration order.
  std::vector<std::pair<std::string, std::string>> echo() const;
  std::string to_text() const;

  std::vector<std::uint64_t> seed_list() const;
  // The lambda grid, strictly increasing, every value inside (0, 1).
  std::vector<double> lambda_grid() const;

  static const std::vector<std::string>& keys();

 private:
  std::set<std::string> explicit_keys_;
};

}  // namespace lotn
