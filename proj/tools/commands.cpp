#include "commands.hpp"

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdio>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "lotn/checkpoint.hpp"
#include "lotn/corpus.hpp"
#include "lotn/eval.hpp"
#include "lotn/sentiment.hpp"
#include "lotn/tagger.hpp"
#include "lotn/transform.hpp"

namespace lotn::cli {
namespace {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;
using corpus::ToweExample;
using SharedVocab = std::shared_ptr<const corpus::Vocab>;
using SharedSentiment = std::shared_ptr<const sentiment::SentimentClassifier>;

class CheckFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

const std::string& require_file(const std::string& key, const std::string& path) {
  if (path.empty()) throw ConfigError("missing required setting '" + key + "'");
  if (!fs::is_regular_file(path)) throw ConfigError(key + ": file not found: " + path);
  return path;
}

void check_optional_file(const std::string& key, const std::string& path) {
  if (!path.empty()) require_file(key, path);
}

class Manifest {
 public:
  Manifest(const std::string& command, const RunConfig& config) {
    doc_["command"] = command;
    doc_["seed"] = config.seed;
    Json echo = Json::object();
    for (const auto& [k, v] : config.echo()) echo[k] = v;
    doc_["config"] = std::move(echo);
    doc_["datasets"] = Json::object();
    doc_["history"] = Json::array();
    doc_["metrics"] = Json::object();
    doc_["artifacts"] = Json::object();
  }

  void dataset(const std::string& key, const std::string& path) {
    if (path.empty()) return;
    doc_["datasets"][key] = {{"path", path}, {"fnv1a64", fingerprint(path)}};
  }
  void history(Json row) { doc_["history"].push_back(std::move(row)); }
  Json& metrics() { return doc_["metrics"]; }
  void artifact(const std::string& key, const fs::path& path) { doc_["artifacts"][key] = path.string(); }

  void write(const fs::path& path) const { io::write_file_atomic(path, doc_.dump(2) + "\n"); }

 private:
  Json doc_;
};

fs::path output_dir(const RunConfig& config) {
  fs::path dir(config.out_dir);
  fs::create_directories(dir);
  return dir;
}

SharedVocab build_vocab(const RunConfig& config, const std::set<std::string>& tokens, Rng& rng) {
  if (!config.embeddings.empty())
    return std::make_shared<const corpus::Vocab>(
        corpus::Vocab::load_embeddings(config.embeddings, config.word_dim, tokens, rng));
  spdlog::warn("no embeddings file configured; drawing random word vectors for {} tokens", tokens.size());
  return std::make_shared<const corpus::Vocab>(corpus::Vocab::random(tokens, config.word_dim, rng));
}

SharedSentiment load_sentiment(const RunConfig& config) {
  if (config.sentiment_checkpoint.empty()) return nullptr;
  auto model = std::make_shared<const sentiment::SentimentClassifier>(
      sentiment::SentimentClassifier::from_checkpoint(io::load_checkpoint(config.sentiment_checkpoint)));
  if (config.is_set("word_dim") && model->vocab().dim() != config.word_dim)
    throw ConfigError("word_dim " + std::to_string(config.word_dim) + " disagrees with the sentiment checkpoint (" +
                      std::to_string(model->vocab().dim()) + ")");
  return model;
}

struct ToweData {
  std::vector<ToweExample> train;
  std::vector<ToweExample> dev;
  std::vector<ToweExample> test;
  bool dev_split = false;
};

ToweData load_towe(const RunConfig& config) {
  corpus::ToweParseOptions options;
  options.max_position = config.max_position;
  ToweData data;
  data.train = corpus::parse_towe_file(config.towe_train, options);
  if (data.train.empty()) throw DataError("towe_train has no examples: " + config.towe_train);
  if (!config.towe_dev.empty()) {
    data.dev = corpus::parse_towe_file(config.towe_dev, options);
  } else {
    auto [train, dev] = corpus::split_validation(data.train, config.dev_fraction, config.seed);
    data.train = std::move(train);
    data.dev = std::move(dev);
    data.dev_split = true;
  }
  if (data.dev.empty() || data.train.empty()) throw DataError("need at least two TOWE training examples");
  if (!config.towe_test.empty()) data.test = corpus::parse_towe_file(config.towe_test, options);
  return data;
}

void check_towe_paths(const RunConfig& config) {
  require_file("towe_train", config.towe_train);
  check_optional_file("towe_dev", config.towe_dev);
  check_optional_file("towe_test", config.towe_test);
  check_optional_file("embeddings", config.embeddings);
}

bool bitwise_equal(const std::map<std::string, std::vector<double>>& a,
                   const std::map<std::string, std::vector<double>>& b) {
  if (a.size() != b.size()) return false;
  for (const auto& [name, values] : a) {
    auto it = b.find(name);
    if (it == b.end() || it->second.size() != values.size()) return false;
    if (std::memcmp(values.data(), it->second.data(), values.size() * sizeof(double)) != 0) return false;
  }
  return true;
}

std::map<std::string, std::vector<double>> frozen_state(const sentiment::SentimentClassifier& model) {
  auto state = model.parameters().snapshot();
  auto words = model.vocab().vectors().values();
  state["embed/words"] = std::vector<double>(words.begin(), words.end());
  return state;
}

tagger::TaggerConfig tagger_config(const RunConfig& config, double lambda) {
  tagger::TaggerConfig tc;
  tc.variant = tagger::parse_variant(config.variant);
  tc.hidden = config.hidden;
  tc.position_dim = config.pos_dim;
  tc.max_position = config.max_position;
  tc.dropout = config.dropout;
  tc.lambda = lambda;
  tc.init_scale = config.init_scale;
  return tc;
}

tagger::TrainConfig train_config(const RunConfig& config, std::uint64_t seed) {
  tagger::TrainConfig tc;
  tc.lr = config.lr;
  tc.batch_size = config.batch;
  tc.max_epochs = config.epochs;
  tc.patience = config.patience;
  tc.seed = seed;
  return tc;
}

struct TrainRun {
  std::optional<tagger::Tagger> model;
  tagger::TrainResult result;
  std::optional<eval::EvalReport> test;
  bool frozen_unchanged = true;
};

TrainRun train_once(const RunConfig& config, const ToweData& data, const SharedVocab& vocab,
                    const SharedSentiment& sc, double lambda, std::uint64_t seed) {
  Rng init(seed);
  TrainRun run;
  run.model.emplace(tagger_config(config, lambda), vocab, sc, init);
  std::optional<std::map<std::string, std::vector<double>>> before;
  if (sc) before = frozen_state(*sc);
  run.result = tagger::train(*run.model, data.train, data.dev, train_config(config, seed));
  if (sc) run.frozen_unchanged = bitwise_equal(*before, frozen_state(*sc));
  if (!data.test.empty()) run.test = tagger::evaluate(*run.model, data.test, config.batch);
  return run;
}

// Vocabulary shared by every model of a run: the classifier's when one is given.
SharedVocab towe_vocab(const RunConfig& config, const ToweData& data, const SharedSentiment& sc) {
  if (sc) return sc->shared_vocab();
  Rng rng(config.seed);
  std::vector<ToweExample> all = data.train;
  all.insert(all.end(), data.dev.begin(), data.dev.end());
  all.insert(all.end(), data.test.begin(), data.test.end());
  return build_vocab(config, corpus::token_set(all, {}), rng);
}

Json report_json(const eval::EvalReport& r) {
  return {{"precision", r.precision}, {"recall", r.recall}, {"f1", r.f1},
          {"n_gold", r.n_gold},       {"n_pred", r.n_pred}, {"n_correct", r.n_correct}};
}

std::vector<eval::TargetPrediction> prediction_rows(const std::vector<ToweExample>& examples,
                                                    const std::vector<SpanSet>& predicted) {
  std::vector<eval::TargetPrediction> rows;
  rows.reserve(examples.size());
  for (std::size_t i = 0; i < examples.size(); ++i) {
    eval::TargetPrediction row;
    row.example_id = i;
    row.target = examples[i].target;
    row.predicted = predicted[i];
    if (examples[i].has_gold) row.gold = examples[i].gold_spans();
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_predictions_file(const fs::path& path, const std::vector<eval::TargetPrediction>& rows) {
  std::ostringstream text;
  eval::write_predictions(text, rows);
  io::write_file_atomic(path, text.str());
}

void check_checkpoint_shapes(const RunConfig& config, const io::Checkpoint& ck) {
  const std::pair<const char*, const char*> pairs[] = {
      {"hidden", "hidden"}, {"pos_dim", "position_dim"}, {"max_position", "max_position"},
      {"word_dim", "word_dim"}, {"variant", "variant"}};
  for (const auto& [key, meta] : pairs) {
    if (!config.is_set(key)) continue;
    std::string expected;
    for (const auto& [k, v] : config.echo())
      if (k == key) expected = v;
    if (ck.meta_value(meta) != expected)
      throw ConfigError(std::string(key) + " = " + expected + " disagrees with the checkpoint (" +
                        ck.meta_value(meta) + ")");
  }
}

}  // namespace

std::string fingerprint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::uint64_t hash = 14695981039346656037ULL;
  char buf[1 << 16];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      hash ^= static_cast<unsigned char>(buf[i]);
      hash *= 1099511628211ULL;
    }
  }
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(hash));
  return hex;
}

int cmd_pretrain(const RunConfig& config, std::ostream& out) {
  config.validate();
  require_file("reviews_train", config.reviews_train);
  check_optional_file("reviews_dev", config.reviews_dev);
  check_optional_file("embeddings", config.embeddings);
  for (const auto& [key, path] : {std::pair{"towe_train", config.towe_train}, std::pair{"towe_dev", config.towe_dev},
                                  std::pair{"towe_test", config.towe_test}})
    check_optional_file(key, path);

  auto train = corpus::parse_review_file(config.reviews_train, config.review_max_length);
  std::vector<corpus::ReviewExample> dev;
  if (!config.reviews_dev.empty()) {
    dev = corpus::parse_review_file(config.reviews_dev, config.review_max_length);
  } else {
    std::tie(train, dev) = corpus::split_validation(train, config.dev_fraction, config.seed);
  }
  if (train.empty() || dev.empty()) throw DataError("need at least two reviews for pretraining");

  // The vocabulary also covers the TOWE corpora so downstream taggers can share it.
  std::vector<ToweExample> towe;
  corpus::ToweParseOptions options;
  options.max_position = config.max_position;
  for (const auto& path : {config.towe_train, config.towe_dev, config.towe_test}) {
    if (path.empty()) continue;
    auto part = corpus::parse_towe_file(path, options);
    towe.insert(towe.end(), part.begin(), part.end());
  }
  std::vector<corpus::ReviewExample> all_reviews = train;
  all_reviews.insert(all_reviews.end(), dev.begin(), dev.end());

  Rng rng(config.seed);
  auto vocab = build_vocab(config, corpus::token_set(towe, all_reviews), rng);
  sentiment::SentimentConfig sc_config{config.hidden, config.dropout, config.init_scale};
  sentiment::SentimentClassifier model(vocab, sc_config, rng);
  spdlog::info("pretraining on {} reviews ({} dev), vocabulary {}", train.size(), dev.size(), vocab->size());

  sentiment::PretrainConfig pc;
  pc.lr = config.lr;
  pc.batch_size = config.batch;
  pc.max_epochs = config.pretrain_epochs;
  pc.patience = config.pretrain_patience;
  pc.seed = config.seed;
  auto result = sentiment::pretrain(model, train, dev, pc);

  const fs::path dir = output_dir(config);
  const fs::path ckpt = dir / "sentiment.ckpt";
  io::save_checkpoint(model.to_checkpoint(), ckpt);

  Manifest manifest("pretrain", config);
  manifest.dataset("reviews_train", config.reviews_train);
  manifest.dataset("reviews_dev", config.reviews_dev);
  manifest.dataset("embeddings", config.embeddings);
  manifest.history({{"epoch", 0}, {"dev_accuracy", result.initial_dev_accuracy}});
  for (const auto& e : result.history)
    manifest.history({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"dev_accuracy", e.dev_accuracy}});
  manifest.metrics() = {{"best_dev_accuracy", result.best_dev_accuracy},
                        {"best_epoch", result.best_epoch},
                        {"train_reviews", train.size()},
                        {"dev_reviews", dev.size()},
                        {"vocabulary", vocab->size()}};
  manifest.artifact("checkpoint", ckpt);
  manifest.write(dir / "pretrain_manifest.json");

  out << "best dev accuracy " << fmt_double(result.best_dev_accuracy) << " at epoch " << result.best_epoch << "\n"
      << "checkpoint " << ckpt.string() << "\n";
  return kOk;
}

int cmd_train(const RunConfig& config, std::ostream& out) {
  config.validate();
  check_towe_paths(config);
  check_optional_file("sentiment_checkpoint", config.sentiment_checkpoint);
  const auto variant = tagger::parse_variant(config.variant);
  if (tagger::needs_sentiment(variant) && config.sentiment_checkpoint.empty())
    throw ConfigError("variant '" + config.variant + "' needs sentiment_checkpoint");

  auto sc = load_sentiment(config);
  const ToweData data = load_towe(config);
  auto vocab = towe_vocab(config, data, sc);
  spdlog::info("training variant {} (lambda {}) on {} examples, {} dev{}", config.variant, config.lambda,
               data.train.size(), data.dev.size(), data.dev_split ? " (split from train)" : "");
  if (const auto overlaps = corpus::count_target_overlaps(data.train))
    spdlog::info("{} training examples have a gold opinion span overlapping the target", overlaps);

  TrainRun run = train_once(config, data, vocab, sc, config.lambda, config.seed);
  if (!run.frozen_unchanged) throw CheckFailure("frozen sentiment parameters changed during training");

  const fs::path dir = output_dir(config);
  const fs::path ckpt = dir / "model.ckpt";
  io::save_checkpoint(run.model->to_checkpoint(), ckpt);

  Manifest manifest("train", config);
  for (const auto& [key, path] :
       {std::pair{"towe_train", config.towe_train}, std::pair{"towe_dev", config.towe_dev},
        std::pair{"towe_test", config.towe_test}, std::pair{"embeddings", config.embeddings},
        std::pair{"sentiment_checkpoint", config.sentiment_checkpoint}})
    manifest.dataset(key, path);
  bool j_equals_lt = true;
  for (const auto& e : run.result.history) {
    manifest.history({{"epoch", e.epoch},
                      {"J", e.total_loss},
                      {"L_t", e.tagging_loss},
                      {"L_a", e.auxiliary_loss},
                      {"dev_f1", e.dev_f1}});
    j_equals_lt = j_equals_lt && e.total_loss == e.tagging_loss;
  }
  if (tagger::has_auxiliary(variant) && config.lambda == 0.0)
    spdlog::info("lambda = 0: J {} L_t in every epoch", j_equals_lt ? "equals" : "DIFFERS FROM");
  auto& metrics = manifest.metrics();
  metrics["best_dev_f1"] = run.result.best_dev_f1;
  metrics["best_epoch"] = run.result.best_epoch;
  metrics["train_examples"] = data.train.size();
  metrics["dev_examples"] = data.dev.size();
  metrics["train_target_overlaps"] = corpus::count_target_overlaps(data.train);
  metrics["frozen_unchanged"] = run.frozen_unchanged;
  out << "best dev F1 " << fmt_double(run.result.best_dev_f1) << " at epoch " << run.result.best_epoch << "\n";
  if (run.test) {
    metrics["test"] = report_json(*run.test);
    const fs::path preds = dir / "test_predictions.tsv";
    write_predictions_file(preds, prediction_rows(data.test, tagger::predicted_spans(*run.model, data.test)));
    manifest.artifact("test_predictions", preds);
    out << "test F1 " << fmt_double(run.test->f1) << "\n";
  }
  manifest.artifact("checkpoint", ckpt);
  manifest.write(dir / "train_manifest.json");
  out << "checkpoint " << ckpt.string() << "\n";
  return kOk;
}

int cmd_evaluate(const RunConfig& config, std::ostream& out) {
  config.validate();
  require_file("model_checkpoint", config.model_checkpoint);
  require_file("towe_test", config.towe_test);
  check_optional_file("compare_predictions", config.compare_predictions);

  const auto ck = io::load_checkpoint(config.model_checkpoint);
  if (ck.kind != "tagger") throw ConfigError("model_checkpoint is a '" + ck.kind + "' checkpoint, not a tagger");
  check_checkpoint_shapes(config, ck);
  const auto model = tagger::Tagger::from_checkpoint(ck);
  corpus::ToweParseOptions options;
  options.max_position = model.config().max_position;
  const auto test = corpus::parse_towe_file(config.towe_test, options);

  const auto predicted = tagger::predicted_spans(model, test, config.batch);
  std::vector<SpanSet> gold;
  for (const auto& ex : test) gold.push_back(ex.gold_spans());
  const auto report = eval::exact_match_prf(predicted, gold);
  const auto errors = eval::error_categorize(predicted, gold);

  const fs::path dir = output_dir(config);
  io::write_file_atomic(dir / "eval_report.txt", eval::format_report(report, errors));
  io::write_file_atomic(dir / "eval_records.tsv", eval::format_report_records(report, errors));
  write_predictions_file(dir / "eval_predictions.tsv", prediction_rows(test, predicted));

  Manifest manifest("evaluate", config);
  manifest.dataset("model_checkpoint", config.model_checkpoint);
  manifest.dataset("towe_test", config.towe_test);
  auto& metrics = manifest.metrics();
  metrics["test"] = report_json(report);
  metrics["targets"] = test.size();
  metrics["errors"] = {{"NULL", errors.null_prediction},
                       {"under_extracted", errors.under_extracted},
                       {"over_extracted", errors.over_extracted},
                       {"others", errors.others}};
  out << "targets " << test.size() << "\n" << eval::format_report(report, errors);

  if (!config.compare_predictions.empty()) {
    manifest.dataset("compare_predictions", config.compare_predictions);
    std::ifstream in(config.compare_predictions);
    const auto other = eval::read_predictions(in, config.compare_predictions);
    std::map<std::pair<std::size_t, Span>, const SpanSet*> lookup;
    for (const auto& row : other) lookup[{row.example_id, row.target}] = &row.predicted;
    std::vector<double> ours, theirs;
    for (std::size_t i = 0; i < test.size(); ++i) {
      auto it = lookup.find({i, test[i].target});
      if (it == lookup.end())
        throw DataError("compare_predictions has no row for example " + std::to_string(i) + " target " +
                        format_span(test[i].target));
      ours.push_back(eval::target_f1(predicted[i], gold[i]));
      theirs.push_back(eval::target_f1(*it->second, gold[i]));
    }
    const double p = eval::significance(ours, theirs, config.shuffles, config.seed);
    metrics["significance_p"] = p;
    out << "significance p-value " << fmt_double(p) << " (" << config.shuffles << " shuffles)\n";
  }
  manifest.artifact("report", dir / "eval_report.txt");
  manifest.artifact("records", dir / "eval_records.tsv");
  manifest.artifact("predictions", dir / "eval_predictions.tsv");
  manifest.write(dir / "evaluate_manifest.json");
  return kOk;
}

int cmd_predict(const RunConfig& config, std::ostream& out) {
  config.validate();
  require_file("model_checkpoint", config.model_checkpoint);
  require_file("towe_test", config.towe_test);
  const auto model = tagger::Tagger::from_checkpoint(io::load_checkpoint(config.model_checkpoint));
  corpus::ToweParseOptions options;
  options.max_position = model.config().max_position;
  options.allow_missing_gold = true;
  const auto input = corpus::parse_towe_file(config.towe_test, options);

  std::vector<SpanSet> predicted;
  if (!input.empty()) predicted = tagger::predicted_spans(model, input, config.batch);
  const fs::path dir = output_dir(config);
  const fs::path path = dir / "predictions.tsv";
  write_predictions_file(path, prediction_rows(input, predicted));

  Manifest manifest("predict", config);
  manifest.dataset("model_checkpoint", config.model_checkpoint);
  manifest.dataset("towe_test", config.towe_test);
  manifest.metrics()["targets"] = input.size();
  manifest.artifact("predictions", path);
  manifest.write(dir / "predict_manifest.json");
  out << "predicted " << input.size() << " targets into " << path.string() << "\n";
  return kOk;
}

int cmd_inspect_transform(const RunConfig& config, std::ostream& out) {
  config.validate();
  require_file("sentiment_checkpoint", config.sentiment_checkpoint);
  require_file("towe_test", config.towe_test);
  const auto sc = load_sentiment(config);
  corpus::ToweParseOptions options;
  options.max_position = config.max_position;
  options.allow_missing_gold = true;
  const auto input = corpus::parse_towe_file(config.towe_test, options);

  std::ostringstream dump;
  std::size_t violations = 0;
  double worst_sum_error = 0.0;
  for (std::size_t i = 0; i < input.size(); ++i) {
    const auto& ex = input[i];
    const auto alpha = sc->encode_frozen(ex.tokens).alpha;
    const auto labels = transform::transform(alpha, ex.target, ex.size());
    transform::write_dump(dump, i, ex, alpha, labels);
    double total = 0.0;
    int positives = 0;
    for (std::size_t t = 0; t < ex.size(); ++t) {
      total += labels.beta[t];
      positives += labels.labels[t];
    }
    worst_sum_error = std::max(worst_sum_error, std::abs(total - 1.0));
    if (std::abs(total - 1.0) > 1e-9 || positives == 0) {
      ++violations;
      spdlog::error("example {}: beta sums to {} with {} positive labels", i, fmt_double(total), positives);
    }
  }
  const fs::path dir = output_dir(config);
  const fs::path path = dir / "transform_dump.tsv";
  io::write_file_atomic(path, dump.str());
  Manifest manifest("inspect-transform", config);
  manifest.dataset("sentiment_checkpoint", config.sentiment_checkpoint);
  manifest.dataset("towe_test", config.towe_test);
  manifest.metrics() = {{"sentences", input.size()}, {"max_beta_sum_error", worst_sum_error},
                        {"violations", violations}};
  manifest.artifact("dump", path);
  manifest.write(dir / "inspect_transform_manifest.json");
  out << "transformed " << input.size() << " sentences into " << path.string() << "; max |sum(beta) - 1| "
      << fmt_double(worst_sum_error) << "\n";
  if (violations != 0) throw CheckFailure(std::to_string(violations) + " sentences violate the label invariants");
  return kOk;
}

std::vector<GradcheckRow> run_gradchecks(const RunConfig& config) {
  // Small dimensions keep an every-coordinate check cheap.
  constexpr std::size_t kWordDim = 6, kPosDim = 4, kHidden = 3, kMaxPosition = 8;
  const std::vector<std::string> lines = {
      "the sushi was fresh but the service was slow\tO B O O O O O O O\tO O O B O O O O O\tDT NN VBD JJ CC DT NN VBD JJ",
      "great food\tO B\tB O\tJJ NN",
  };
  corpus::ToweParseOptions options;
  options.max_position = kMaxPosition;
  std::vector<ToweExample> examples;
  for (std::size_t i = 0; i < lines.size(); ++i)
    examples.push_back(corpus::parse_towe_line(lines[i], i + 1, options, "<gradcheck fixture>"));
  std::vector<corpus::ReviewExample> reviews;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    std::vector<std::string> tokens;
    for (const auto& t : examples[i].tokens) tokens.push_back(corpus::lowercase(t));
    reviews.push_back({tokens, static_cast<int>(i % 2 == 0)});
  }

  Rng rng(config.seed);
  auto vocab = std::make_shared<const corpus::Vocab>(
      corpus::Vocab::random(corpus::token_set(examples, {}), kWordDim, rng));
  const std::size_t samples =
      config.gradcheck_samples == 0 ? std::numeric_limits<std::size_t>::max() : config.gradcheck_samples;
  Rng unused;
  std::vector<GradcheckRow> rows;
  auto record = [&](const std::string& name, const ag::LossFn& fn, ag::ParameterStore& store) {
    Rng sample_rng(config.seed);
    GradcheckRow row{name, ag::gradient_check(fn, store, config.gradcheck_step, samples, sample_rng), false};
    row.passed = row.result.max_relative_error < config.gradcheck_tolerance;
    rows.push_back(row);
  };

  auto sc = std::make_shared<sentiment::SentimentClassifier>(
      vocab, sentiment::SentimentConfig{kHidden, config.dropout, config.gradcheck_init_scale}, rng);
  const auto review_batch = corpus::make_review_batches(reviews, *vocab, reviews.size()).front();
  record("sentiment", [&](ag::Tape& tape) { return sc->loss(tape, review_batch, false, unused); },
         sc->parameters());
  sc->freeze();

  const auto batch = corpus::make_batches(examples, *vocab, examples.size()).front();
  for (auto variant : {tagger::Variant::Base, tagger::Variant::Encoder, tagger::Variant::Auxiliary,
                       tagger::Variant::Lotn}) {
    tagger::TaggerConfig tc;
    tc.variant = variant;
    tc.hidden = kHidden;
    tc.position_dim = kPosDim;
    tc.max_position = kMaxPosition;
    tc.dropout = config.dropout;
    tc.lambda = config.lambda;
    tc.init_scale = config.gradcheck_init_scale;
    tagger::Tagger model(tc, vocab, sc, rng);
    std::optional<tagger::PseudoLabels> pseudo;
    if (tagger::has_auxiliary(variant)) pseudo = model.pseudo_labels(examples);
    record(tagger::to_string(variant),
           [&](ag::Tape& tape) { return model.loss(tape, batch, pseudo ? &*pseudo : nullptr, false, unused).total; },
           model.parameters());
  }
  return rows;
}

int cmd_gradcheck(const RunConfig& config, std::ostream& out) {
  config.validate();
  const auto rows = run_gradchecks(config);
  bool ok = true;
  Manifest manifest("gradcheck", config);
  out << std::left << std::setw(10) << "model" << std::setw(26) << "max_relative_error" << std::setw(13)
      << "coordinates" << std::setw(13) << "below_floor"
      << "worst\n";
  for (const auto& row : rows) {
    const auto& r = row.result;
    out << std::setw(10) << row.model << std::setw(26) << fmt_double(r.max_relative_error) << std::setw(13)
        << r.coordinates << std::setw(13) << r.below_floor << r.worst_parameter << "[" << r.worst_index << "] " << (row.passed ? "PASS" : "FAIL")
        << "\n";
    manifest.metrics()[row.model] = {{"max_relative_error", r.max_relative_error},
                                     {"coordinates", r.coordinates},
                                     {"below_floor", r.below_floor},
                                     {"worst_parameter", r.worst_parameter},
                                     {"worst_index", r.worst_index},
                                     {"analytic", r.worst_analytic},
                                     {"numeric", r.worst_numeric},
                                     {"passed", row.passed}};
    ok = ok && row.passed;
  }
  const fs::path dir = output_dir(config);
  manifest.write(dir / "gradcheck_manifest.json");
  out << (ok ? "all gradient checks passed" : "gradient check FAILED") << " (tolerance "
      << fmt_double(config.gradcheck_tolerance) << ")\n";
  return ok ? kOk : kCheckFailed;
}

int cmd_lambda_sweep(const RunConfig& config, std::ostream& out) {
  config.validate();
  check_towe_paths(config);
  require_file("sentiment_checkpoint", config.sentiment_checkpoint);
  if (config.variant != "lotn" && config.variant != "auxiliary")
    throw ConfigError("lambda-sweep needs variant lotn or auxiliary, got '" + config.variant + "'");
  const auto grid = config.lambda_grid();
  const auto seeds = config.seed_list();
  auto sc = load_sentiment(config);
  const ToweData data = load_towe(config);
  auto vocab = towe_vocab(config, data, sc);

  Manifest manifest("lambda-sweep", config);
  manifest.dataset("towe_train", config.towe_train);
  manifest.dataset("towe_dev", config.towe_dev);
  manifest.dataset("towe_test", config.towe_test);
  manifest.dataset("sentiment_checkpoint", config.sentiment_checkpoint);

  std::ostringstream table;
  table << "lambda\tdev_f1_mean\ttest_f1_mean\tseeds\n";
  for (double lambda : grid) {
    double dev_sum = 0.0, test_sum = 0.0;
    for (auto seed : seeds) {
      TrainRun run = train_once(config, data, vocab, sc, lambda, seed);
      if (!run.frozen_unchanged) throw CheckFailure("frozen sentiment parameters changed during training");
      dev_sum += run.result.best_dev_f1;
      if (run.test) test_sum += run.test->f1;
      manifest.history({{"lambda", lambda},
                        {"seed", seed},
                        {"dev_f1", run.result.best_dev_f1},
                        {"test_f1", run.test ? Json(run.test->f1) : Json(nullptr)}});
    }
    const double n = static_cast<double>(seeds.size());
    char line[160];
    if (data.test.empty())
      std::snprintf(line, sizeof line, "%.2f\t%.6f\t-\t%zu\n", lambda, dev_sum / n, seeds.size());
    else
      std::snprintf(line, sizeof line, "%.2f\t%.6f\t%.6f\t%zu\n", lambda, dev_sum / n, test_sum / n, seeds.size());
    table << line;
    out << line << std::flush;
  }
  const fs::path dir = output_dir(config);
  io::write_file_atomic(dir / "lambda_sweep.tsv", table.str());
  manifest.metrics()["rows"] = grid.size();
  manifest.artifact("table", dir / "lambda_sweep.tsv");
  manifest.write(dir / "lambda_sweep_manifest.json");
  return kOk;
}

namespace {

struct Flag {
  const char* name;
  const char* key;
  const char* help;
};

const std::vector<Flag> kTrainingFlags = {
    {"--lr", "lr", "Adam learning rate"},
    {"--batch", "batch", "mini-batch size"},
    {"--hidden", "hidden", "LSTM hidden size per direction"},
    {"--word-dim", "word_dim", "word vector width"},
    {"--embeddings", "embeddings", "word vectors, one 'token v1 ... vd' line each"},
};

const std::map<std::string, std::vector<Flag>> kCommandFlags = {
    {"pretrain",
     {{"--reviews-train", "reviews_train", "review file, 'label TAB text' per line"},
      {"--reviews-dev", "reviews_dev", "held-out reviews (default: split from train)"},
      {"--towe-train", "towe_train", "TOWE file whose words join the vocabulary"},
      {"--towe-dev", "towe_dev", "TOWE file whose words join the vocabulary"},
      {"--towe-test", "towe_test", "TOWE file whose words join the vocabulary"},
      {"--epochs", "pretrain_epochs", "epoch cap"},
      {"--patience", "pretrain_patience", "early-stopping patience"}}},
    {"train",
     {{"--variant", "variant", "base, encoder, auxiliary, lotn, lstm or bilstm"},
      {"--lambda", "lambda", "weight of the latent-opinion loss"},
      {"--towe-train", "towe_train", "training file"},
      {"--towe-dev", "towe_dev", "dev file (default: split from train)"},
      {"--towe-test", "towe_test", "test file evaluated after training"},
      {"--sentiment-checkpoint", "sentiment_checkpoint", "frozen classifier from pretrain"},
      {"--pos-dim", "pos_dim", "position embedding width"},
      {"--max-position", "max_position", "position table size"},
      {"--epochs", "epochs", "epoch cap"},
      {"--patience", "patience", "early-stopping patience"}}},
    {"evaluate",
     {{"--model", "model_checkpoint", "tagger checkpoint"},
      {"--test", "towe_test", "TOWE file with gold tags"},
      {"--compare", "compare_predictions", "prediction dump of another run for a significance test"},
      {"--shuffles", "shuffles", "randomization rounds"}}},
    {"predict",
     {{"--model", "model_checkpoint", "tagger checkpoint"},
      {"--input", "towe_test", "TOWE file; the gold column is optional"}}},
    {"inspect-transform",
     {{"--sentiment-checkpoint", "sentiment_checkpoint", "frozen classifier from pretrain"},
      {"--input", "towe_test", "TOWE file; the gold column is optional"}}},
    {"gradcheck",
     {{"--step", "gradcheck_step", "finite-difference step"},
      {"--tolerance", "gradcheck_tolerance", "largest accepted relative error"},
      {"--samples", "gradcheck_samples", "coordinates per parameter (0: all)"},
      {"--init-scale", "gradcheck_init_scale", "uniform init range of the fixture models"}}},
    {"lambda-sweep",
     {{"--towe-train", "towe_train", "training file"},
      {"--towe-dev", "towe_dev", "dev file (default: split from train)"},
      {"--towe-test", "towe_test", "test file"},
      {"--sentiment-checkpoint", "sentiment_checkpoint", "frozen classifier from pretrain"},
      {"--seeds", "seeds", "comma-separated seeds averaged per row"},
      {"--lambda-start", "lambda_start", "first grid value"},
      {"--lambda-stop", "lambda_stop", "last grid value"},
      {"--lambda-step", "lambda_step", "grid step"},
      {"--epochs", "epochs", "epoch cap"},
      {"--patience", "patience", "early-stopping patience"}}},
};

const std::map<std::string, std::string> kDescriptions = {
    {"pretrain", "Pretrain the review sentiment classifier and freeze it"},
    {"train", "Train an opinion-word tagger"},
    {"evaluate", "Score a tagger on a gold TOWE file"},
    {"predict", "Write span predictions for a TOWE file"},
    {"inspect-transform", "Dump attention, distance weights and latent-opinion labels"},
    {"gradcheck", "Compare analytic and numeric gradients on a built-in fixture"},
    {"lambda-sweep", "Train LOTN over a grid of lambda values"},
};

using Handler = int (*)(const RunConfig&, std::ostream&);
const std::map<std::string, Handler> kHandlers = {
    {"pretrain", cmd_pretrain},   {"train", cmd_train},
    {"evaluate", cmd_evaluate},   {"predict", cmd_predict},
    {"inspect-transform", cmd_inspect_transform},
    {"gradcheck", cmd_gradcheck}, {"lambda-sweep", cmd_lambda_sweep},
};

void configure_logging(const std::string& level) {
  auto logger = spdlog::get("lotn");
  if (!logger) logger = spdlog::stderr_color_mt("lotn");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::from_str(level));
}

int report(std::ostream& err, const char* kind, const std::exception& e, int code) {
  err << "lotn: " << kind << ": " << e.what() << "\n";
  return code;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Opinion-word extraction with transferred sentiment knowledge", "lotn"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Expand all help");

  struct Parsed {
    std::string config_file;
    std::vector<std::string> assignments;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
    std::string log_level = "info";
    std::map<std::string, std::string> flags;
  };
  std::map<std::string, Parsed> parsed;
  for (const auto& [name, description] : kDescriptions) {
    CLI::App* sub = app.add_subcommand(name, description);
    Parsed& p = parsed[name];
    sub->add_option("--config", p.config_file, "flat key=value config file")->check(CLI::ExistingFile);
    sub->add_option("--set", p.assignments, "override one config key (key=value), repeatable");
    sub->add_option("--seed", p.seed, "random seed");
    sub->add_option("--out-dir", p.out_dir, "directory for artifacts");
    sub->add_option("--log-level", p.log_level, "trace, debug, info, warn, error or off");
    std::vector<Flag> flags = kCommandFlags.at(name);
    if (name == "pretrain" || name == "train" || name == "lambda-sweep")
      flags.insert(flags.end(), kTrainingFlags.begin(), kTrainingFlags.end());
    for (const auto& f : flags) sub->add_option(f.name, p.flags[f.key], f.help);
  }

  std::vector<const char*> argv;
  argv.push_back("lotn");
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsageError;
  }

  const std::string name = app.get_subcommands().front()->get_name();
  const Parsed& p = parsed.at(name);
  CLI::App* sub = app.get_subcommand(name);
  try {
    configure_logging(p.log_level);
    RunConfig config;
    if (!p.config_file.empty()) config.load_file(p.config_file);
    for (const auto& a : p.assignments) config.set_assignment(a);
    for (const auto& [key, value] : p.flags) {
      const Flag* flag = nullptr;
      for (const auto* list : {&kCommandFlags.at(name), &kTrainingFlags})
        for (const auto& f : *list)
          if (f.key == key) flag = &f;
      if (flag && sub->get_option(flag->name)->count() > 0) config.set(key, value);
    }
    if (p.seed) config.set("seed", std::to_string(*p.seed));
    if (p.out_dir) config.set("out_dir", *p.out_dir);
    return kHandlers.at(name)(config, out);
  } catch (const ConfigError& e) {
    return report(err, "configuration error", e, kUsageError);
  } catch (const corpus::ParseError& e) {
    return report(err, "data error", e, kDataError);
  } catch (const DataError& e) {
    return report(err, "data error", e, kDataError);
  } catch (const io::CheckpointError& e) {
    return report(err, "checkpoint error", e, kDataError);
  } catch (const transform::DegenerateInputError& e) {
    return report(err, "data error", e, kDataError);
  } catch (const CheckFailure& e) {
    return report(err, "check failed", e, kCheckFailed);
  } catch (const fs::filesystem_error& e) {
    return report(err, "file error", e, kDataError);
  } catch (const spdlog::spdlog_ex& e) {
    return report(err, "configuration error", e, kUsageError);
  } catch (const std::invalid_argument& e) {
    return report(err, "configuration error", e, kUsageError);
  } catch (const std::exception& e) {
    return report(err, "internal error", e, kInternalError);
  }
}

}  // namespace lotn::cli
