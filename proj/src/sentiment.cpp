#include "lotn/sentiment.hpp"

#include <spdlog/spdlog.h>

#include <stdexcept>

namespace lotn::sentiment {

std::vector<int> time_major_ids(const corpus::Batch& batch) {
  std::vector<int> ids(batch.steps * batch.size());
  for (std::size_t t = 0; t < batch.steps; ++t)
    for (std::size_t i = 0; i < batch.size(); ++i) ids[t * batch.size() + i] = batch.token_ids[batch.cell(i, t)];
  return ids;
}

ag::SequenceLayout layout_of(const corpus::Batch& batch) { return ag::SequenceLayout::from_lengths(batch.lengths); }

Attention attend(ag::Tape& tape, const ag::Tensor& hidden, ag::Mask mask, const ag::Tensor& bilinear,
                 const ag::Tensor& bias) {
  const std::size_t n = hidden.rows();
  if (!mask.empty() && mask.size() != n)
    throw ag::DimensionError("attend: mask of " + std::to_string(mask.size()) + " for " + std::to_string(n) +
                             " states");
  std::size_t valid = 0;
  for (std::size_t i = 0; i < n; ++i) valid += mask.empty() || mask[i] ? 1 : 0;
  if (valid == 0) throw ag::InvalidMaskError("attend: every state is masked");

  std::vector<double> mean_weights(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    if (mask.empty() || mask[i]) mean_weights[i] = 1.0 / static_cast<double>(valid);
  ag::Tensor average = ag::matmul(tape, ag::Tensor({1, n}, std::move(mean_weights)), hidden);
  ag::Tensor projected = ag::matmul(tape, bilinear, ag::transpose(tape, average));   // [D x 1]
  ag::Tensor scores = ag::add_bias(tape, ag::matmul(tape, hidden, projected), bias);  // [n x 1]
  ag::Tensor weights = ag::softmax_rows(tape, ag::transpose(tape, scores), mask);
  return {ag::matmul(tape, weights, hidden), weights};
}

SentimentClassifier::SentimentClassifier(std::shared_ptr<const corpus::Vocab> vocab, SentimentConfig config)
    : vocab_(std::move(vocab)), config_(config) {
  if (!vocab_ || vocab_->size() == 0) throw std::invalid_argument("sentiment classifier: empty vocabulary");
  if (config_.hidden == 0) throw std::invalid_argument("sentiment classifier: hidden size must be positive");
}

SentimentClassifier::SentimentClassifier(std::shared_ptr<const corpus::Vocab> vocab, SentimentConfig config, Rng& rng)
    : SentimentClassifier(std::move(vocab), config) {
  const std::size_t d = output_dim();
  const double s = config_.init_scale;
  ag::BiLstmWeights::create(params_, "sc/encoder", vocab_->dim(), config_.hidden, rng, s);
  params_.create("sc/attention/weight", {d, d}, rng, s);
  params_.create("sc/attention/bias", {1}, rng, s);
  params_.create("sc/output/weight", {d, 2}, rng, s);
  params_.create("sc/output/bias", {2}, rng, s);
  bind();
}

void SentimentClassifier::bind() {
  encoder_ = ag::BiLstmWeights::bind(params_, "sc/encoder");
  attention_weight_ = params_.get("sc/attention/weight");
  attention_bias_ = params_.get("sc/attention/bias");
  output_weight_ = params_.get("sc/output/weight");
  output_bias_ = params_.get("sc/output/bias");
  const std::size_t d = output_dim();
  if (encoder_.forward.input_dim() != vocab_->dim() || encoder_.forward.hidden() != config_.hidden ||
      attention_weight_.shape() != ag::Shape{d, d} || output_weight_.shape() != ag::Shape{d, 2})
    throw ag::DimensionError("sentiment classifier: parameter shapes disagree with configuration");
}

SentimentClassifier SentimentClassifier::from_checkpoint(const io::Checkpoint& ck) {
  if (ck.kind != "sentiment") throw io::CheckpointError("expected a sentiment checkpoint, found '" + ck.kind + "'");
  auto vocab = std::make_shared<const corpus::Vocab>(ck.vocab, ck.tensor("embed/words"));
  SentimentConfig config;
  config.hidden = std::stoul(ck.meta_value("hidden"));
  config.dropout = std::stod(ck.meta_value("dropout"));
  SentimentClassifier model(std::move(vocab), config);
  for (const auto& [name, t] : ck.tensors)
    if (name.rfind("sc/", 0) == 0) model.params_.add(name, t);
  model.bind();
  for (const auto& kv : ck.meta) model.meta_.push_back(kv);
  model.freeze();
  return model;
}

io::Checkpoint SentimentClassifier::to_checkpoint() const {
  io::Checkpoint ck;
  ck.kind = "sentiment";
  ck.set_meta("hidden", std::to_string(config_.hidden));
  ck.set_meta("word_dim", std::to_string(vocab_->dim()));
  ck.set_meta("dropout", std::to_string(config_.dropout));
  for (const auto& [k, v] : meta_) ck.set_meta(k, v);
  ck.vocab = vocab_->tokens();
  ck.tensors.emplace_back("embed/words", vocab_->vectors());
  for (const auto& e : params_.entries()) ck.tensors.emplace_back(e.name, e.param);
  return ck;
}

ag::Tensor SentimentClassifier::encode(ag::Tape& tape, const corpus::Batch& batch, bool train, Rng& rng) const {
  auto ids = time_major_ids(batch);
  ag::Tensor words = ag::embedding_gather(tape, vocab_->vectors(), ids);
  words = ag::dropout(tape, words, config_.dropout, train, rng);
  return ag::bilstm(tape, words, layout_of(batch), encoder_);
}

SentimentClassifier::Output SentimentClassifier::forward(ag::Tape& tape, const corpus::Batch& batch, bool train,
                                                         Rng& rng) const {
  ag::Tensor hidden = encode(tape, batch, train, rng);
  Output out;
  std::vector<ag::Tensor> contexts;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    std::vector<std::size_t> rows(batch.lengths[i]);
    for (std::size_t t = 0; t < rows.size(); ++t) rows[t] = t * batch.size() + i;
    Attention att = attend(tape, ag::gather_rows(tape, hidden, rows), {}, attention_weight_, attention_bias_);
    contexts.push_back(att.context);
    out.alphas.push_back(att.weights);
  }
  ag::Tensor logits =
      ag::add_bias(tape, ag::matmul(tape, ag::concat_rows(tape, contexts), output_weight_), output_bias_);
  out.probs = ag::softmax_rows(tape, logits);
  return out;
}

ag::Tensor SentimentClassifier::loss(ag::Tape& tape, const corpus::Batch& batch, bool train, Rng& rng) const {
  if (batch.polarities.size() != batch.size())
    throw std::invalid_argument("sentiment loss: batch carries no polarity labels");
  Output out = forward(tape, batch, train, rng);
  ag::Tensor total = ag::cross_entropy_masked(tape, out.probs, batch.polarities);
  return ag::scale(tape, total, 1.0 / static_cast<double>(batch.size()));
}

std::array<double, 2> SentimentClassifier::classify(const std::vector<std::string>& tokens) const {
  corpus::ReviewExample review{tokens, 0};
  auto batches = corpus::make_review_batches({review}, *vocab_, 1);
  ag::Tape tape;
  Rng unused;
  auto out = forward(tape, batches.front(), false, unused);
  return {out.probs.values()[0], out.probs.values()[1]};
}

double SentimentClassifier::accuracy(const std::vector<corpus::ReviewExample>& reviews,
                                     std::size_t batch_size) const {
  if (reviews.empty()) return 0.0;
  std::size_t correct = 0;
  Rng unused;
  for (const auto& batch : corpus::make_review_batches(reviews, *vocab_, batch_size)) {
    ag::Tape tape;
    auto out = forward(tape, batch, false, unused);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const int predicted = out.probs.at(i, 1) > out.probs.at(i, 0) ? 1 : 0;
      correct += predicted == batch.polarities[i] ? 1 : 0;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(reviews.size());
}

void SentimentClassifier::freeze() {
  params_.freeze();
  frozen_ = true;
}

FrozenEncoding SentimentClassifier::encode_frozen(const std::vector<std::string>& tokens) const {
  if (!frozen_) throw std::logic_error("encode_frozen: classifier has not been frozen");
  if (tokens.empty()) throw std::invalid_argument("encode_frozen: empty sentence");
  corpus::ReviewExample sentence{tokens, 0};
  auto batch = corpus::make_review_batches({sentence}, *vocab_, 1).front();
  ag::Tape tape;
  Rng unused;
  ag::Tensor hidden = encode(tape, batch, false, unused);
  Attention att = attend(tape, hidden, {}, attention_weight_, attention_bias_);
  return {hidden, std::vector<double>(att.weights.values().begin(), att.weights.values().end())};
}

PretrainResult pretrain(SentimentClassifier& model, const std::vector<corpus::ReviewExample>& train,
                        const std::vector<corpus::ReviewExample>& dev, const PretrainConfig& config) {
  if (train.empty() || dev.empty()) throw std::invalid_argument("pretrain: empty train or dev set");
  if (model.frozen()) throw std::logic_error("pretrain: classifier is already frozen");
  ag::Adam adam;
  adam.lr = config.lr;
  Rng dropout_rng(config.seed);

  PretrainResult result;
  result.initial_dev_accuracy = model.accuracy(dev, config.batch_size);
  result.best_dev_accuracy = result.initial_dev_accuracy;
  auto best = model.parameters().snapshot();
  spdlog::info("pretrain epoch 0: dev accuracy {:.4f}", result.initial_dev_accuracy);

  std::size_t since_best = 0;
  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    double total = 0.0;
    auto batches = corpus::make_review_batches(train, model.vocab(), config.batch_size, config.seed + epoch);
    for (const auto& batch : batches) {
      ag::Tape tape;
      ag::Tensor loss = model.loss(tape, batch, true, dropout_rng);
      tape.backward(loss);
      adam.step(model.parameters());
      total += loss.item() * static_cast<double>(batch.size());
    }
    PretrainEpoch record{epoch, total / static_cast<double>(train.size()), model.accuracy(dev, config.batch_size)};
    result.history.push_back(record);
    spdlog::info("pretrain epoch {}: train loss {:.5f}, dev accuracy {:.4f}", epoch, record.train_loss,
                 record.dev_accuracy);
    if (record.dev_accuracy > result.best_dev_accuracy) {
      result.best_dev_accuracy = record.dev_accuracy;
      result.best_epoch = epoch;
      best = model.parameters().snapshot();
      since_best = 0;
    } else if (++since_best >= config.patience) {
      break;
    }
  }
  model.parameters().restore(best);
  model.set_meta("dev_accuracy", std::to_string(result.best_dev_accuracy));
  model.set_meta("best_epoch", std::to_string(result.best_epoch));
  model.freeze();
  return result;
}

}  // namespace lotn::sentiment
