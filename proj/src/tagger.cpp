#include "lotn/tagger.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "lotn/transform.hpp"

namespace lotn::tagger {
namespace {

constexpr const char* kSentimentPrefix = "sc/";

std::vector<std::uint8_t> time_major_mask(const corpus::Batch& batch) {
  std::vector<std::uint8_t> out(batch.steps * batch.size());
  for (std::size_t t = 0; t < batch.steps; ++t)
    for (std::size_t i = 0; i < batch.size(); ++i) out[t * batch.size() + i] = batch.mask[batch.cell(i, t)];
  return out;
}

std::vector<int> time_major(const corpus::Batch& batch, const std::vector<int>& batch_major) {
  std::vector<int> out(batch.steps * batch.size());
  for (std::size_t t = 0; t < batch.steps; ++t)
    for (std::size_t i = 0; i < batch.size(); ++i) out[t * batch.size() + i] = batch_major[batch.cell(i, t)];
  return out;
}

ag::Tensor classify_rows(ag::Tape& tape, const ag::Tensor& features, const ag::Tensor& weight,
                         const ag::Tensor& bias) {
  return ag::softmax_rows(tape, ag::add_bias(tape, ag::matmul(tape, features, weight), bias));
}

}  // namespace

std::string to_string(Variant variant) {
  switch (variant) {
    case Variant::Base: return "base";
    case Variant::Encoder: return "encoder";
    case Variant::Auxiliary: return "auxiliary";
    case Variant::Lotn: return "lotn";
    case Variant::Lstm: return "lstm";
    case Variant::BiLstm: return "bilstm";
  }
  return "?";
}

Variant parse_variant(const std::string& name) {
  for (Variant v : {Variant::Base, Variant::Encoder, Variant::Auxiliary, Variant::Lotn, Variant::Lstm,
                    Variant::BiLstm})
    if (to_string(v) == name) return v;
  throw std::invalid_argument("unknown variant '" + name +
                              "' (expected base, encoder, auxiliary, lotn, lstm or bilstm)");
}

bool uses_positions(Variant v) { return v != Variant::Lstm && v != Variant::BiLstm; }
bool fuses_encoder(Variant v) { return v == Variant::Encoder || v == Variant::Lotn; }
bool has_auxiliary(Variant v) { return v == Variant::Auxiliary || v == Variant::Lotn; }

Tagger::Tagger(TaggerConfig config, std::shared_ptr<const corpus::Vocab> vocab,
               std::shared_ptr<const sentiment::SentimentClassifier> sentiment)
    : config_(config), vocab_(std::move(vocab)), sentiment_(std::move(sentiment)) {
  if (!vocab_ || vocab_->size() == 0) throw std::invalid_argument("tagger: empty vocabulary");
  if (config_.hidden == 0) throw std::invalid_argument("tagger: hidden size must be positive");
  if (uses_positions(config_.variant) && (config_.position_dim == 0 || config_.max_position == 0))
    throw std::invalid_argument("tagger: position table needs positive size and width");
  if (!(config_.lambda >= 0.0) || !std::isfinite(config_.lambda))
    throw std::invalid_argument("tagger: lambda must be a finite non-negative number");
  if (needs_sentiment(config_.variant)) {
    if (!sentiment_)
      throw std::invalid_argument("tagger: variant '" + to_string(config_.variant) +
                                  "' needs a pretrained sentiment checkpoint");
    if (!sentiment_->frozen()) throw std::invalid_argument("tagger: sentiment classifier must be frozen");
    if (sentiment_->shared_vocab() != vocab_ && sentiment_->vocab().tokens() != vocab_->tokens())
      throw std::invalid_argument("tagger: sentiment classifier uses a different vocabulary");
  } else {
    sentiment_.reset();
  }
}

Tagger::Tagger(TaggerConfig config, std::shared_ptr<const corpus::Vocab> vocab,
               std::shared_ptr<const sentiment::SentimentClassifier> sentiment, Rng& rng)
    : Tagger(config, std::move(vocab), std::move(sentiment)) {
  const double s = config_.init_scale;
  std::size_t input_dim = vocab_->dim();
  if (uses_positions(config_.variant)) {
    params_.create("towe/position", {config_.max_position, config_.position_dim}, rng, s);
    input_dim += config_.position_dim;
  }
  if (config_.variant == Variant::Lstm)
    ag::LstmWeights::create(params_, "towe/encoder/fwd", input_dim, config_.hidden, rng, s);
  else
    ag::BiLstmWeights::create(params_, "towe/encoder", input_dim, config_.hidden, rng, s);
  params_.create("towe/tag/weight", {fused_dim(), kTagCount}, rng, s);
  params_.create("towe/tag/bias", {kTagCount}, rng, s);
  if (has_auxiliary(config_.variant)) {
    const std::size_t aux_in = config_.variant == Variant::Lotn ? fused_dim() : encoder_dim();
    params_.create("towe/aux/weight", {aux_in, 2}, rng, s);
    params_.create("towe/aux/bias", {2}, rng, s);
  }
  bind();
}

std::size_t Tagger::encoder_dim() const {
  return config_.variant == Variant::Lstm ? config_.hidden : 2 * config_.hidden;
}

std::size_t Tagger::fused_dim() const {
  return encoder_dim() + (fuses_encoder(config_.variant) ? sentiment_->output_dim() : 0);
}

void Tagger::bind() {
  std::size_t input_dim = vocab_->dim();
  if (uses_positions(config_.variant)) {
    position_table_ = params_.get("towe/position");
    input_dim += config_.position_dim;
    if (position_table_.shape() != ag::Shape{config_.max_position, config_.position_dim})
      throw ag::DimensionError("tagger: position table shape " + ag::to_string(position_table_.shape()));
  }
  if (config_.variant == Variant::Lstm)
    encoder_.forward = ag::LstmWeights::bind(params_, "towe/encoder/fwd");
  else
    encoder_ = ag::BiLstmWeights::bind(params_, "towe/encoder");
  tag_weight_ = params_.get("towe/tag/weight");
  tag_bias_ = params_.get("towe/tag/bias");
  if (has_auxiliary(config_.variant)) {
    aux_weight_ = params_.get("towe/aux/weight");
    aux_bias_ = params_.get("towe/aux/bias");
  }
  if (encoder_.forward.input_dim() != input_dim || encoder_.forward.hidden() != config_.hidden ||
      tag_weight_.shape() != ag::Shape{fused_dim(), kTagCount})
    throw ag::DimensionError("tagger: parameter shapes disagree with configuration");
}

io::Checkpoint Tagger::to_checkpoint() const {
  io::Checkpoint ck;
  ck.kind = "tagger";
  ck.set_meta("variant", to_string(config_.variant));
  ck.set_meta("hidden", std::to_string(config_.hidden));
  ck.set_meta("position_dim", std::to_string(config_.position_dim));
  ck.set_meta("max_position", std::to_string(config_.max_position));
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", config_.lambda);
  ck.set_meta("lambda", buf);
  std::snprintf(buf, sizeof buf, "%.17g", config_.dropout);
  ck.set_meta("dropout", buf);
  ck.set_meta("word_dim", std::to_string(vocab_->dim()));
  if (sentiment_) {
    ck.set_meta("sc_hidden", std::to_string(sentiment_->config().hidden));
    ck.set_meta("sc_dropout", std::to_string(sentiment_->config().dropout));
  }
  for (const auto& [k, v] : meta_) ck.set_meta(k, v);
  ck.vocab = vocab_->tokens();
  ck.tensors.emplace_back("embed/words", vocab_->vectors());
  for (const auto& e : params_.entries()) ck.tensors.emplace_back(e.name, e.param);
  if (sentiment_)
    for (const auto& e : sentiment_->parameters().entries()) ck.tensors.emplace_back(e.name, e.param);
  return ck;
}

Tagger Tagger::from_checkpoint(const io::Checkpoint& ck) {
  if (ck.kind != "tagger") throw io::CheckpointError("expected a tagger checkpoint, found '" + ck.kind + "'");
  TaggerConfig config;
  try {
    config.variant = parse_variant(ck.meta_value("variant"));
    config.hidden = std::stoul(ck.meta_value("hidden"));
    config.position_dim = std::stoul(ck.meta_value("position_dim"));
    config.max_position = std::stoul(ck.meta_value("max_position"));
    config.lambda = std::stod(ck.meta_value("lambda"));
    config.dropout = std::stod(ck.meta_value("dropout"));
  } catch (const std::invalid_argument& e) {
    throw io::CheckpointError(std::string("tagger checkpoint metadata: ") + e.what());
  }
  auto vocab = std::make_shared<const corpus::Vocab>(ck.vocab, ck.tensor("embed/words"));

  std::shared_ptr<const sentiment::SentimentClassifier> sc;
  if (needs_sentiment(config.variant)) {
    io::Checkpoint sub;
    sub.kind = "sentiment";
    sub.set_meta("hidden", ck.meta_value("sc_hidden"));
    sub.set_meta("dropout", ck.meta_value("sc_dropout"));
    sub.vocab = ck.vocab;
    for (const auto& [name, t] : ck.tensors)
      if (name == "embed/words" || name.rfind(kSentimentPrefix, 0) == 0) sub.tensors.emplace_back(name, t);
    auto restored = std::make_shared<sentiment::SentimentClassifier>(sentiment::SentimentClassifier::from_checkpoint(sub));
    sc = restored;
    vocab = restored->shared_vocab();
  }

  Tagger model(config, std::move(vocab), std::move(sc));
  for (const auto& [name, t] : ck.tensors)
    if (name.rfind("towe/", 0) == 0) model.params_.add(name, t);
  model.bind();
  for (const auto& kv : ck.meta) model.meta_.push_back(kv);
  return model;
}

PseudoLabels Tagger::pseudo_labels(const std::vector<corpus::ToweExample>& examples) const {
  if (!sentiment_) throw std::logic_error("pseudo_labels: tagger has no sentiment classifier");
  PseudoLabels out;
  out.reserve(examples.size());
  for (const auto& ex : examples) {
    auto enc = sentiment_->encode_frozen(ex.tokens);
    out.push_back(transform::transform(enc.alpha, ex.target, ex.size()).labels);
  }
  return out;
}

Tagger::Output Tagger::forward(ag::Tape& tape, const corpus::Batch& batch, bool train, Rng& rng) const {
  const auto layout = sentiment::layout_of(batch);
  const auto ids = sentiment::time_major_ids(batch);
  ag::Tensor x = ag::embedding_gather(tape, vocab_->vectors(), ids);
  if (uses_positions(config_.variant)) {
    const auto pos = time_major(batch, batch.positions);
    x = ag::concat_cols(tape, {x, ag::embedding_gather(tape, position_table_, pos)});
  }
  x = ag::dropout(tape, x, config_.dropout, train, rng);

  ag::Tensor h = config_.variant == Variant::Lstm ? ag::lstm_sequence(tape, x, layout, encoder_.forward, false)
                                                  : ag::bilstm(tape, x, layout, encoder_);
  ag::Tensor r = h;
  if (fuses_encoder(config_.variant)) {
    ag::Tape frozen;  // parameters are frozen, nothing is recorded
    Rng unused;
    r = ag::concat_cols(tape, {h, sentiment_->encode(frozen, batch, false, unused)});
  }
  Output out;
  out.tag_probs = classify_rows(tape, r, tag_weight_, tag_bias_);
  if (has_auxiliary(config_.variant))
    out.aux_probs = classify_rows(tape, config_.variant == Variant::Lotn ? r : h, aux_weight_, aux_bias_);
  return out;
}

LossTerms Tagger::loss(ag::Tape& tape, const corpus::Batch& batch, const PseudoLabels* pseudo, bool train,
                       Rng& rng) const {
  const double inv_batch = 1.0 / static_cast<double>(batch.size());
  const auto mask = time_major_mask(batch);
  Output out = forward(tape, batch, train, rng);

  const auto labels = time_major(batch, batch.labels);
  std::vector<std::uint8_t> gold_mask(mask.size());
  for (std::size_t k = 0; k < mask.size(); ++k) gold_mask[k] = mask[k] && labels[k] != corpus::kIgnoreLabel;
  LossTerms terms;
  terms.total = ag::scale(tape, ag::cross_entropy_masked(tape, out.tag_probs, labels, gold_mask), inv_batch);
  terms.tagging = terms.total.item();
  if (!has_auxiliary(config_.variant)) return terms;

  if (!pseudo) {
    if (config_.lambda != 0.0) throw std::invalid_argument("tagger loss: lambda > 0 but no latent-opinion labels");
    // The unused head still needs a (zero) gradient for the optimizer.
    for (ag::Tensor head : {aux_weight_, aux_bias_}) head.grad_mut();
    return terms;
  }
  std::vector<int> aux_labels(mask.size(), corpus::kIgnoreLabel);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const std::size_t ex = batch.example_indices[i];
    if (ex >= pseudo->size() || (*pseudo)[ex].size() != batch.lengths[i])
      throw std::invalid_argument("tagger loss: latent-opinion labels do not match example " + std::to_string(ex));
    for (std::size_t t = 0; t < batch.lengths[i]; ++t) aux_labels[t * batch.size() + i] = (*pseudo)[ex][t];
  }
  ag::Tensor aux = ag::scale(tape, ag::cross_entropy_masked(tape, out.aux_probs, aux_labels, mask), inv_batch);
  terms.auxiliary = aux.item();
  terms.total = ag::add(tape, terms.total, ag::scale(tape, aux, config_.lambda));
  return terms;
}

std::vector<TagSequence> Tagger::predict(const std::vector<corpus::ToweExample>& examples,
                                         std::size_t batch_size) const {
  std::vector<TagSequence> out(examples.size());
  Rng unused;
  for (const auto& batch : corpus::make_batches(examples, *vocab_, batch_size)) {
    ag::Tape tape;
    Output o = forward(tape, batch, false, unused);
    const auto probs = o.tag_probs.values();
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const std::size_t n = batch.lengths[i];
      std::vector<double> rows(n * kTagCount);
      for (std::size_t t = 0; t < n; ++t)
        for (std::size_t k = 0; k < kTagCount; ++k)
          rows[t * kTagCount + k] = probs[(t * batch.size() + i) * kTagCount + k];
      out[batch.example_indices[i]] = decode(rows, n);
    }
  }
  return out;
}

TagSequence decode(std::span<const double> probs, std::size_t n) {
  if (probs.size() != n * kTagCount)
    throw ag::DimensionError("decode: " + std::to_string(probs.size()) + " values for " + std::to_string(n) +
                             " tokens");
  TagSequence tags(n);
  for (std::size_t t = 0; t < n; ++t) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < kTagCount; ++k)
      if (probs[t * kTagCount + k] > probs[t * kTagCount + best]) best = k;
    tags[t] = static_cast<Tag>(best);
  }
  return tags;
}

std::vector<SpanSet> predicted_spans(const Tagger& tagger, const std::vector<corpus::ToweExample>& examples,
                                     std::size_t batch_size) {
  std::vector<SpanSet> out;
  out.reserve(examples.size());
  for (const auto& tags : tagger.predict(examples, batch_size)) out.push_back(extract_spans(tags));
  return out;
}

eval::EvalReport evaluate(const Tagger& tagger, const std::vector<corpus::ToweExample>& examples,
                          std::size_t batch_size) {
  std::vector<SpanSet> gold;
  gold.reserve(examples.size());
  for (const auto& ex : examples) {
    if (!ex.has_gold) throw std::invalid_argument("evaluate: example without gold opinion tags");
    gold.push_back(ex.gold_spans());
  }
  return eval::exact_match_prf(predicted_spans(tagger, examples, batch_size), gold);
}

TrainResult train(Tagger& tagger, const std::vector<corpus::ToweExample>& train_set,
                  const std::vector<corpus::ToweExample>& dev_set, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
  if (train_set.empty() || dev_set.empty()) throw std::invalid_argument("train: empty train or dev set");
  std::optional<PseudoLabels> pseudo;
  if (has_auxiliary(tagger.variant())) pseudo = tagger.pseudo_labels(train_set);

  ag::Adam adam;
  adam.lr = config.lr;
  Rng dropout_rng(config.seed);

  TrainResult result;
  result.best_dev_f1 = evaluate(tagger, dev_set, config.batch_size).f1;
  auto best = tagger.parameters().snapshot();
  TrainEpoch initial{0, 0.0, 0.0, 0.0, result.best_dev_f1};
  result.history.push_back(initial);
  spdlog::info("train epoch 0: dev F1 {:.4f}", initial.dev_f1);
  if (on_epoch) on_epoch(initial);

  const double n = static_cast<double>(train_set.size());
  std::size_t since_best = 0;
  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    TrainEpoch record;
    record.epoch = epoch;
    for (const auto& batch : corpus::make_batches(train_set, tagger.vocab(), config.batch_size, config.seed + epoch)) {
      ag::Tape tape;
      LossTerms terms = tagger.loss(tape, batch, pseudo ? &*pseudo : nullptr, true, dropout_rng);
      tape.backward(terms.total);
      adam.step(tagger.parameters());
      const double w = static_cast<double>(batch.size()) / n;
      record.total_loss += terms.total.item() * w;
      record.tagging_loss += terms.tagging * w;
      record.auxiliary_loss += terms.auxiliary * w;
    }
    record.dev_f1 = evaluate(tagger, dev_set, config.batch_size).f1;
    result.history.push_back(record);
    spdlog::info("train epoch {}: J {:.5f}, L_t {:.5f}, L_a {:.5f}, dev F1 {:.4f}", epoch, record.total_loss,
                 record.tagging_loss, record.auxiliary_loss, record.dev_f1);
    if (on_epoch) on_epoch(record);
    if (record.dev_f1 > result.best_dev_f1) {
      result.best_dev_f1 = record.dev_f1;
      result.best_epoch = epoch;
      best = tagger.parameters().snapshot();
      since_best = 0;
    } else if (++since_best >= config.patience) {
      break;
    }
  }
  tagger.parameters().restore(best);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", result.best_dev_f1);
  tagger.set_meta("dev_f1", buf);
  tagger.set_meta("best_epoch", std::to_string(result.best_epoch));
  return result;
}

}  // namespace lotn::tagger
