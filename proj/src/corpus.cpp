#include "lotn/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "lotn/rng.hpp"

namespace lotn::corpus {
namespace {

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::stringstream in(text);
  while (std::getline(in, item, sep)) out.push_back(item);
  if (!text.empty() && text.back() == sep) out.emplace_back();
  return out;
}

std::vector<std::string> split_tokens(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string token;
  while (in >> token) out.push_back(token);
  return out;
}

std::string strip_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ' ';
    out += items[i];
  }
  return out;
}

}  // namespace

ParseError::ParseError(const std::string& source, std::size_t line, const std::string& what)
    : std::runtime_error(source + (line ? ":" + std::to_string(line) : std::string()) + ": " + what), line_(line) {}

SpanSet ToweExample::gold_spans() const { return extract_spans(labels); }

std::vector<int> positions(std::size_t n, Span target, std::size_t max_position) {
  if (max_position == 0) throw std::invalid_argument("positions: max_position must be positive");
  if (target.start > target.end || target.end >= n)
    throw std::out_of_range("positions: target " + format_span(target) + " outside sentence of " +
                            std::to_string(n) + " tokens");
  std::vector<int> out(n);
  const std::size_t cap = max_position - 1;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t d = i < target.start ? target.start - i : (i > target.end ? i - target.end : 0);
    out[i] = static_cast<int>(std::min(d, cap));
  }
  return out;
}

ToweExample parse_towe_line(const std::string& raw, std::size_t line_number, const ToweParseOptions& options,
                            const std::string& source) {
  const std::string line = strip_cr(raw);
  auto fields = split(line, '\t');
  const bool no_gold = fields.size() == 2 && options.allow_missing_gold;
  if (!no_gold && fields.size() != 3 && fields.size() != 4)
    throw ParseError(source, line_number,
                     "expected 3 tab-separated fields (tokens, target tags, opinion tags), found " +
                         std::to_string(fields.size()));
  ToweExample ex;
  ex.has_gold = !no_gold;
  ex.tokens = split_tokens(fields[0]);
  if (ex.tokens.empty()) throw ParseError(source, line_number, "empty token field");
  const std::size_t n = ex.tokens.size();

  auto parse_tags = [&](const std::string& field, const char* what) {
    auto raw_tags = split_tokens(field);
    if (raw_tags.size() != n)
      throw ParseError(source, line_number,
                       std::string(what) + " has " + std::to_string(raw_tags.size()) + " tags for " +
                           std::to_string(n) + " tokens");
    TagSequence tags;
    for (const auto& t : raw_tags) {
      try {
        tags.push_back(tag_from_string(t));
      } catch (const std::invalid_argument& e) {
        throw ParseError(source, line_number, std::string(what) + ": " + e.what());
      }
    }
    return tags;
  };

  TagSequence target_tags = parse_tags(fields[1], "target tags");
  auto target_spans = extract_spans(target_tags);
  if (target_spans.size() != 1)
    throw ParseError(source, line_number,
                     "target tags must form exactly one B I* group, found " + std::to_string(target_spans.size()));
  if (target_tags[target_spans[0].start] != Tag::B)
    throw ParseError(source, line_number, "target group must begin with B");
  ex.target = target_spans[0];

  if (ex.has_gold) {
    ex.labels = parse_tags(fields[2], "opinion tags");
    for (std::size_t i = 0; i < n; ++i)
      if (ex.labels[i] == Tag::I && (i == 0 || ex.labels[i - 1] == Tag::O))
        throw ParseError(source, line_number, "opinion tag I at token " + std::to_string(i) + " follows O");
  }
  if (fields.size() == 4) {
    ex.pos_tags = split_tokens(fields[3]);
    if (ex.pos_tags.size() != n)
      throw ParseError(source, line_number,
                       "pos tags has " + std::to_string(ex.pos_tags.size()) + " tags for " + std::to_string(n) +
                           " tokens");
  }
  ex.positions = positions(n, ex.target, options.max_position);
  return ex;
}

std::vector<ToweExample> parse_towe_file(const std::filesystem::path& path, const ToweParseOptions& options) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<ToweExample> out;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (strip_cr(line).empty()) continue;
    out.push_back(parse_towe_line(line, line_number, options, path.string()));
  }
  return out;
}

std::string to_line(const ToweExample& example) {
  auto tag_field = [](const TagSequence& tags) {
    std::string out;
    for (std::size_t i = 0; i < tags.size(); ++i) {
      if (i) out += ' ';
      out += tag_char(tags[i]);
    }
    return out;
  };
  std::string line = join(example.tokens) + '\t' + tag_field(tags_from_spans(example.size(), {example.target}));
  if (example.has_gold) line += '\t' + tag_field(example.labels);
  if (!example.pos_tags.empty()) line += '\t' + join(example.pos_tags);
  return line;
}

std::vector<ReviewExample> parse_review_file(const std::filesystem::path& path, std::size_t max_length) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<ReviewExample> out;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    line = strip_cr(line);
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos) throw ParseError(path.string(), line_number, "expected 'label<TAB>text'");
    const std::string label = line.substr(0, tab);
    if (label != "0" && label != "1")
      throw ParseError(path.string(), line_number, "label must be 0 or 1, found '" + label + "'");
    ReviewExample review;
    review.polarity = label == "1" ? 1 : 0;
    for (auto& t : split_tokens(line.substr(tab + 1))) {
      if (review.tokens.size() == max_length) break;
      review.tokens.push_back(lowercase(t));
    }
    if (review.tokens.empty()) throw ParseError(path.string(), line_number, "empty review text");
    out.push_back(std::move(review));
  }
  return out;
}

std::set<std::string> token_set(const std::vector<ToweExample>& towe, const std::vector<ReviewExample>& reviews) {
  std::set<std::string> out;
  for (const auto& ex : towe)
    for (const auto& t : ex.tokens) out.insert(lowercase(t));
  for (const auto& r : reviews)
    for (const auto& t : r.tokens) out.insert(lowercase(t));
  return out;
}

std::size_t count_target_overlaps(const std::vector<ToweExample>& examples) {
  std::size_t n = 0;
  for (const auto& ex : examples) {
    for (const auto& s : ex.gold_spans()) {
      if (s.start <= ex.target.end && ex.target.start <= s.end) {
        ++n;
        break;
      }
    }
  }
  return n;
}

namespace {

template <class Item, class Fill>
std::vector<Batch> batch_up(const std::vector<Item>& items, std::size_t batch_size,
                            std::optional<std::uint64_t> shuffle_seed, Fill fill) {
  if (batch_size == 0) throw std::invalid_argument("make_batches: batch size must be at least 1");
  std::vector<std::size_t> order(items.size());
  std::iota(order.begin(), order.end(), 0);
  if (shuffle_seed) {
    Rng rng(*shuffle_seed);
    rng.shuffle(order);
  }
  std::vector<Batch> batches;
  for (std::size_t begin = 0; begin < order.size(); begin += batch_size) {
    const std::size_t end = std::min(order.size(), begin + batch_size);
    Batch batch;
    for (std::size_t k = begin; k < end; ++k) {
      batch.example_indices.push_back(order[k]);
      batch.lengths.push_back(items[order[k]].tokens.size());
    }
    batch.steps = *std::max_element(batch.lengths.begin(), batch.lengths.end());
    const std::size_t cells = batch.size() * batch.steps;
    batch.token_ids.assign(cells, Vocab::kPad);
    batch.mask.assign(cells, 0);
    batch.positions.assign(cells, 0);
    batch.labels.assign(cells, kIgnoreLabel);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const auto& item = items[batch.example_indices[i]];
      for (std::size_t t = 0; t < batch.lengths[i]; ++t) batch.mask[batch.cell(i, t)] = 1;
      fill(batch, i, item);
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

}  // namespace

std::vector<Batch> make_batches(const std::vector<ToweExample>& examples, const Vocab& vocab, std::size_t batch_size,
                                std::optional<std::uint64_t> shuffle_seed) {
  return batch_up(examples, batch_size, shuffle_seed, [&vocab](Batch& batch, std::size_t i, const ToweExample& ex) {
    for (std::size_t t = 0; t < ex.size(); ++t) {
      const auto cell = batch.cell(i, t);
      batch.token_ids[cell] = vocab.id(ex.tokens[t]);
      batch.positions[cell] = ex.positions[t];
      if (ex.has_gold) batch.labels[cell] = static_cast<int>(ex.labels[t]);
    }
    batch.targets.push_back(ex.target);
  });
}

std::vector<Batch> make_review_batches(const std::vector<ReviewExample>& reviews, const Vocab& vocab,
                                       std::size_t batch_size, std::optional<std::uint64_t> shuffle_seed) {
  return batch_up(reviews, batch_size, shuffle_seed,
                  [&vocab](Batch& batch, std::size_t i, const ReviewExample& review) {
                    for (std::size_t t = 0; t < review.tokens.size(); ++t)
                      batch.token_ids[batch.cell(i, t)] = vocab.id(review.tokens[t]);
                    batch.polarities.push_back(review.polarity);
                  });
}

std::vector<std::size_t> split_indices(std::size_t n, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0))
    throw std::invalid_argument("split_validation: fraction must lie in (0, 1)");
  std::size_t dev = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  if (n >= 2) dev = std::clamp<std::size_t>(dev, 1, n - 1);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order);
  order.resize(std::min(dev, n));
  std::sort(order.begin(), order.end());
  return order;
}

}  // namespace lotn::corpus
