#include "lotn/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <type_traits>
#include <fstream>
#include <functional>
#include <sstream>

namespace lotn {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  // Prefer the shortest text that reads back to the same value.
  for (int precision = 1; precision <= 17; ++precision) {
    char shorter[64];
    std::snprintf(shorter, sizeof shorter, "%.*g", precision, v);
    if (std::strtod(shorter, nullptr) == v) return shorter;
  }
  return buf;
}

template <class T>
T parse_unsigned(const std::string& key, const std::string& text) {
  T value{};
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (text.empty() || ec != std::errc() || ptr != end)
    throw ConfigError("config key '" + key + "': expected a non-negative integer, got '" + text + "'");
  return value;
}

double parse_real(const std::string& key, const std::string& text) {
  double value = 0.0;
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (text.empty() || ec != std::errc() || ptr != end || !std::isfinite(value))
    throw ConfigError("config key '" + key + "': expected a finite number, got '" + text + "'");
  return value;
}

struct Field {
  std::string name;
  std::function<void(RunConfig&, const std::string&)> assign;
  std::function<std::string(const RunConfig&)> show;
};

template <class M>
Field field(const char* name, M RunConfig::*member) {
  using T = std::remove_cvref_t<decltype(std::declval<RunConfig>().*member)>;
  Field f;
  f.name = name;
  if constexpr (std::is_same_v<T, std::string>) {
    f.assign = [member](RunConfig& c, const std::string& v) { c.*member = v; };
    f.show = [member](const RunConfig& c) { return c.*member; };
  } else if constexpr (std::is_same_v<T, double>) {
    f.assign = [member, n = f.name](RunConfig& c, const std::string& v) { c.*member = parse_real(n, v); };
    f.show = [member](const RunConfig& c) { return format_double(c.*member); };
  } else if constexpr (std::is_same_v<T, std::vector<std::uint64_t>>) {
    f.assign = [member, n = f.name](RunConfig& c, const std::string& v) {
      std::vector<std::uint64_t> out;
      std::stringstream ss(v);
      std::string item;
      while (std::getline(ss, item, ',')) out.push_back(parse_unsigned<std::uint64_t>(n, trim(item)));
      c.*member = std::move(out);
    };
    f.show = [member](const RunConfig& c) {
      std::string out;
      for (auto s : c.*member) out += (out.empty() ? "" : ",") + std::to_string(s);
      return out;
    };
  } else {
    f.assign = [member, n = f.name](RunConfig& c, const std::string& v) { c.*member = parse_unsigned<T>(n, v); };
    f.show = [member](const RunConfig& c) { return std::to_string(c.*member); };
  }
  return f;
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      field("reviews_train", &RunConfig::reviews_train),
      field("reviews_dev", &RunConfig::reviews_dev),
      field("towe_train", &RunConfig::towe_train),
      field("towe_dev", &RunConfig::towe_dev),
      field("towe_test", &RunConfig::towe_test),
      field("embeddings", &RunConfig::embeddings),
      field("sentiment_checkpoint", &RunConfig::sentiment_checkpoint),
      field("model_checkpoint", &RunConfig::model_checkpoint),
      field("compare_predictions", &RunConfig::compare_predictions),
      field("out_dir", &RunConfig::out_dir),
      field("variant", &RunConfig::variant),
      field("word_dim", &RunConfig::word_dim),
      field("pos_dim", &RunConfig::pos_dim),
      field("hidden", &RunConfig::hidden),
      field("max_position", &RunConfig::max_position),
      field("review_max_length", &RunConfig::review_max_length),
      field("dropout", &RunConfig::dropout),
      field("lambda", &RunConfig::lambda),
      field("init_scale", &RunConfig::init_scale),
      field("lr", &RunConfig::lr),
      field("batch", &RunConfig::batch),
      field("pretrain_epochs", &RunConfig::pretrain_epochs),
      field("pretrain_patience", &RunConfig::pretrain_patience),
      field("epochs", &RunConfig::epochs),
      field("patience", &RunConfig::patience),
      field("dev_fraction", &RunConfig::dev_fraction),
      field("seed", &RunConfig::seed),
      field("seeds", &RunConfig::seeds),
      field("lambda_start", &RunConfig::lambda_start),
      field("lambda_stop", &RunConfig::lambda_stop),
      field("lambda_step", &RunConfig::lambda_step),
      field("shuffles", &RunConfig::shuffles),
      field("gradcheck_step", &RunConfig::gradcheck_step),
      field("gradcheck_tolerance", &RunConfig::gradcheck_tolerance),
      field("gradcheck_samples", &RunConfig::gradcheck_samples),
      field("gradcheck_init_scale", &RunConfig::gradcheck_init_scale),
  };
  return table;
}

const Field* find_field(const std::string& key) {
  for (const auto& f : fields())
    if (f.name == key) return &f;
  return nullptr;
}

}  // namespace

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& f : fields()) out.push_back(f.name);
    return out;
  }();
  return names;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const Field* f = find_field(key);
  if (!f) throw ConfigError("unknown config key '" + key + "'");
  f->assign(*this, value);
  explicit_keys_.insert(key);
}

void RunConfig::set_assignment(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + assignment + "'");
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void RunConfig::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    try {
      set_assignment(line);
    } catch (const ConfigError& e) {
      throw ConfigError(path.string() + ":" + std::to_string(number) + ": " + e.what());
    }
  }
}

void RunConfig::validate() const {
  auto require = [](bool ok, const std::string& message) {
    if (!ok) throw ConfigError(message);
  };
  static const std::set<std::string> variants = {"base", "encoder", "auxiliary", "lotn", "lstm", "bilstm"};
  require(variants.count(variant) != 0,
          "variant must be one of base, encoder, auxiliary, lotn, lstm, bilstm (got '" + variant + "')");
  require(word_dim > 0 && pos_dim > 0 && hidden > 0, "word_dim, pos_dim and hidden must be positive");
  require(max_position > 0, "max_position must be positive");
  require(review_max_length > 0, "review_max_length must be positive");
  require(dropout >= 0.0 && dropout < 1.0, "dropout must be in [0, 1)");
  require(lambda >= 0.0, "lambda must be non-negative");
  require(init_scale > 0.0, "init_scale must be positive");
  require(lr > 0.0, "lr must be positive");
  require(batch > 0, "batch must be positive");
  require(pretrain_epochs > 0 && epochs > 0, "epoch caps must be positive");
  require(pretrain_patience > 0 && patience > 0, "patience must be positive");
  require(dev_fraction > 0.0 && dev_fraction < 1.0, "dev_fraction must be in (0, 1)");
  require(shuffles >= 1000, "shuffles must be at least 1000");
  require(gradcheck_step > 0.0, "gradcheck_step must be positive");
  require(gradcheck_tolerance > 0.0, "gradcheck_tolerance must be positive");
  require(gradcheck_init_scale > 0.0, "gradcheck_init_scale must be positive");
  require(out_dir != "", "out_dir must not be empty");
  lambda_grid();
}

std::vector<std::pair<std::string, std::string>> RunConfig::echo() const {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& f : fields()) out.emplace_back(f.name, f.show(*this));
  return out;
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& [k, v] : echo()) out += k + " = " + v + "\n";
  return out;
}

std::vector<std::uint64_t> RunConfig::seed_list() const {
  return seeds.empty() ? std::vector<std::uint64_t>{seed} : seeds;
}

std::vector<double> RunConfig::lambda_grid() const {
  if (!(lambda_step > 0.0)) throw ConfigError("lambda_step must be positive");
  if (!(lambda_start > 0.0 && lambda_stop < 1.0 && lambda_start <= lambda_stop))
    throw ConfigError("lambda grid must satisfy 0 < lambda_start <= lambda_stop < 1");
  // Values are start + k * step, rounded to 12 decimals so 0.05 steps stay exact in print.
  std::vector<double> grid;
  const auto count = static_cast<std::size_t>(std::floor((lambda_stop - lambda_start) / lambda_step + 1e-9)) + 1;
  for (std::size_t k = 0; k < count; ++k)
    grid.push_back(std::round((lambda_start + static_cast<double>(k) * lambda_step) * 1e12) / 1e12);
  return grid;
}

}  // namespace lotn
