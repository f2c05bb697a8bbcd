#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lotn/checkpoint.hpp"
#include "lotn/corpus.hpp"
#include "lotn/eval.hpp"
#include "lotn/lstm.hpp"
#include "lotn/optim.hpp"
#include "lotn/sentiment.hpp"

namespace lotn::tagger {

/// Model variants. The first four form the ablation ladder; Lstm and BiLstm
/// are word-only baselines without position embeddings.
enum class Variant { Base, Encoder, Auxiliary, Lotn, Lstm, BiLstm };

std::string to_string(Variant variant);
Variant parse_variant(const std::string& name);  // throws std::invalid_argument

bool uses_positions(Variant variant);
bool fuses_encoder(Variant variant);   // concatenates the frozen sentiment states
bool has_auxiliary(Variant variant);   // trains the latent-opinion head
inline bool needs_sentiment(Variant v) { return fuses_encoder(v) || has_auxiliary(v); }

struct TaggerConfig {
  Variant variant = Variant::Lotn;
  std::size_t hidden = 200;
  std::size_t position_dim = 300;
  std::size_t max_position = corpus::kDefaultMaxPosition;
  double dropout = 0.5;
  double lambda = 0.2;
  double init_scale = 0.01;
};

// Latent-opinion labels per example, indexed like the example vector.
using PseudoLabels = std::vector<std::vector<int>>;

struct LossTerms {
  ag::Tensor total;        // J = L_t + lambda * L_a
  double tagging = 0.0;    // L_t
  double auxiliary = 0.0;  // L_a, 0 when not computed
};

class Tagger {
 public:
  // `sentiment` must be given, frozen, and share `vocab` for variants that use it.
  Tagger(TaggerConfig config, std::shared_ptr<const corpus::Vocab> vocab,
         std::shared_ptr<const sentiment::SentimentClassifier> sentiment, Rng& rng);

  static Tagger from_checkpoint(const io::Checkpoint& checkpoint);
  io::Checkpoint to_checkpoint() const;

  const TaggerConfig& config() const { return config_; }
  Variant variant() const { return config_.variant; }
  const corpus::Vocab& vocab() const { return *vocab_; }
  const sentiment::SentimentClassifier* sentiment() const { return sentiment_.get(); }
  ag::ParameterStore& parameters() { return params_; }
  const ag::ParameterStore& parameters() const { return params_; }

  // Pseudo-labels from the frozen classifier's attention.
  PseudoLabels pseudo_labels(const std::vector<corpus::ToweExample>& examples) const;

  struct Output {
    ag::Tensor tag_probs;  // [steps*batch x 3], time-major
    ag::Tensor aux_probs;  // [steps*batch x 2], undefined without the auxiliary head
  };
  Output forward(ag::Tape& tape, const corpus::Batch& batch, bool train, Rng& rng) const;

  // Per-token sums within each sentence, averaged over the batch. `pseudo`
  // may be null only when lambda is 0 or the variant has no auxiliary head.
  LossTerms loss(ag::Tape& tape, const corpus::Batch& batch, const PseudoLabels* pseudo, bool train,
                 Rng& rng) const;

  std::vector<TagSequence> predict(const std::vector<corpus::ToweExample>& examples,
                                   std::size_t batch_size = 25) const;

  void set_meta(const std::string& key, const std::string& value) { meta_.emplace_back(key, value); }

 private:
  Tagger(TaggerConfig config, std::shared_ptr<const corpus::Vocab> vocab,
         std::shared_ptr<const sentiment::SentimentClassifier> sentiment);
  void bind();
  std::size_t encoder_dim() const;
  std::size_t fused_dim() const;

  TaggerConfig config_;
  std::shared_ptr<const corpus::Vocab> vocab_;
  std::shared_ptr<const sentiment::SentimentClassifier> sentiment_;
  ag::ParameterStore params_;
  ag::Tensor position_table_;
  ag::BiLstmWeights encoder_;  // Lstm uses only the forward direction
  ag::Tensor tag_weight_, tag_bias_;
  ag::Tensor aux_weight_, aux_bias_;
  std::vector<std::pair<std::string, std::string>> meta_;
};

// Argmax per row of an [n x 3] probability block; ties go to the lower tag id.
TagSequence decode(std::span<const double> probs, std::size_t n);

// Spans predicted for each example, with I-after-O repaired into span starts.
std::vector<SpanSet> predicted_spans(const Tagger& tagger, const std::vector<corpus::ToweExample>& examples,
                                     std::size_t batch_size = 25);
eval::EvalReport evaluate(const Tagger& tagger, const std::vector<corpus::ToweExample>& examples,
                          std::size_t batch_size = 25);

struct TrainConfig {
  double lr = 0.001;
  std::size_t batch_size = 25;
  std::size_t max_epochs = 100;
  std::size_t patience = 5;
  std::uint64_t seed = 1;
};

struct TrainEpoch {
  std::size_t epoch = 0;
  double total_loss = 0.0;
  double tagging_loss = 0.0;
  double auxiliary_loss = 0.0;
  double dev_f1 = 0.0;
};

struct TrainResult {
  double best_dev_f1 = 0.0;
  std::size_t best_epoch = 0;
  std::vector<TrainEpoch> history;
};

using EpochCallback = std::function<void(const TrainEpoch&)>;

/// Adam training with early stopping on dev span F1; the untrained model is
/// epoch 0. The best epoch's parameters are restored at the end.
TrainResult train(Tagger& tagger, const std::vector<corpus::ToweExample>& train_set,
                  const std::vector<corpus::ToweExample>& dev_set, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

}  // namespace lotn::tagger
