#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "lotn/checkpoint.hpp"
#include "lotn/corpus.hpp"
#include "lotn/lstm.hpp"
#include "lotn/optim.hpp"

namespace lotn::sentiment {

struct SentimentConfig {
  std::size_t hidden = 200;
  double dropout = 0.5;
  double init_scale = 0.01;
};

struct Attention {
  ag::Tensor context;  // [1 x D]
  ag::Tensor weights;  // [1 x n]
};

/// Bilinear global attention. Scores are u_i = h_i . W . h_avg + b with h_avg
/// the mean of the unmasked rows; weights are the masked softmax of the
/// scores and the context is their weighted sum of rows.
Attention attend(ag::Tape& tape, const ag::Tensor& hidden, ag::Mask mask, const ag::Tensor& bilinear,
                 const ag::Tensor& bias);

/// Output of the frozen encoder for one sentence.
struct FrozenEncoding {
  ag::Tensor hidden;          // [n x 2H]
  std::vector<double> alpha;  // attention over the n tokens
};

class SentimentClassifier {
 public:
  SentimentClassifier(std::shared_ptr<const corpus::Vocab> vocab, SentimentConfig config, Rng& rng);

  // Restores a frozen classifier.
  static SentimentClassifier from_checkpoint(const io::Checkpoint& checkpoint);
  io::Checkpoint to_checkpoint() const;

  const corpus::Vocab& vocab() const { return *vocab_; }
  std::shared_ptr<const corpus::Vocab> shared_vocab() const { return vocab_; }
  const SentimentConfig& config() const { return config_; }
  ag::ParameterStore& parameters() { return params_; }
  const ag::ParameterStore& parameters() const { return params_; }
  std::size_t output_dim() const { return 2 * config_.hidden; }

  // Time-major BiLSTM states [steps*batch x 2H] for the batch.
  ag::Tensor encode(ag::Tape& tape, const corpus::Batch& batch, bool train, Rng& rng) const;

  struct Output {
    ag::Tensor probs;                // [batch x 2]
    std::vector<ag::Tensor> alphas;  // one [1 x n_i] row per review
  };
  Output forward(ag::Tape& tape, const corpus::Batch& batch, bool train, Rng& rng) const;

  // Cross-entropy summed per review, averaged over the batch.
  ag::Tensor loss(ag::Tape& tape, const corpus::Batch& batch, bool train, Rng& rng) const;

  std::array<double, 2> classify(const std::vector<std::string>& tokens) const;
  double accuracy(const std::vector<corpus::ReviewExample>& reviews, std::size_t batch_size = 25) const;

  void freeze();
  bool frozen() const { return frozen_; }
  FrozenEncoding encode_frozen(const std::vector<std::string>& tokens) const;

  void set_meta(const std::string& key, const std::string& value) { meta_.emplace_back(key, value); }
  const std::vector<std::pair<std::string, std::string>>& meta() const { return meta_; }

 private:
  SentimentClassifier(std::shared_ptr<const corpus::Vocab> vocab, SentimentConfig config);
  void bind();

  std::shared_ptr<const corpus::Vocab> vocab_;
  SentimentConfig config_;
  ag::ParameterStore params_;
  ag::BiLstmWeights encoder_;
  ag::Tensor attention_weight_;
  ag::Tensor attention_bias_;
  ag::Tensor output_weight_;
  ag::Tensor output_bias_;
  bool frozen_ = false;
  std::vector<std::pair<std::string, std::string>> meta_;
};

struct PretrainConfig {
  double lr = 0.001;
  std::size_t batch_size = 25;
  std::size_t max_epochs = 30;
  std::size_t patience = 3;
  std::uint64_t seed = 1;
};

struct PretrainEpoch {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double dev_accuracy = 0.0;
};

struct PretrainResult {
  double best_dev_accuracy = 0.0;
  std::size_t best_epoch = 0;
  double initial_dev_accuracy = 0.0;
  std::vector<PretrainEpoch> history;
};

/// Adam training with early stopping on dev accuracy. The untrained model
/// counts as epoch 0. The best epoch's parameters are restored and frozen.
PretrainResult pretrain(SentimentClassifier& model, const std::vector<corpus::ReviewExample>& train,
                        const std::vector<corpus::ReviewExample>& dev, const PretrainConfig& config);

// Time-major id list for a batch: entry t * batch + i.
std::vector<int> time_major_ids(const corpus::Batch& batch);
ag::SequenceLayout layout_of(const corpus::Batch& batch);

}  // namespace lotn::sentiment
