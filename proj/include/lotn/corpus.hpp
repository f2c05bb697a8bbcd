#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "lotn/span.hpp"
#include "lotn/vocab.hpp"

namespace lotn::corpus {

inline constexpr std::size_t kDefaultMaxPosition = 100;
inline constexpr std::size_t kDefaultReviewLength = 100;
inline constexpr int kIgnoreLabel = -1;

/// A malformed input line. line() is 1-based; 0 means "not line specific".
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// One (sentence, target) pair of the opinion-word extraction task.
struct ToweExample {
  std::vector<std::string> tokens;  // original casing
  Span target;
  TagSequence labels;               // gold opinion tags; empty when has_gold is false
  std::vector<int> positions;       // distance to the target, clipped
  std::vector<std::string> pos_tags;
  bool has_gold = true;

  std::size_t size() const { return tokens.size(); }
  SpanSet gold_spans() const;
  bool operator==(const ToweExample&) const = default;
};

struct ReviewExample {
  std::vector<std::string> tokens;  // lowercased
  int polarity = 0;                 // 0 negative, 1 positive
};

// Distance of each token to the nearest target token (0 inside the target),
// clipped to max_position - 1.
std::vector<int> positions(std::size_t n, Span target, std::size_t max_position = kDefaultMaxPosition);

struct ToweParseOptions {
  std::size_t max_position = kDefaultMaxPosition;
  // Accept "tokens TAB target-tags" lines without gold opinion tags.
  bool allow_missing_gold = false;
};

/// Line format: tokens TAB target-tags TAB opinion-tags [TAB pos-tags],
/// each field space separated and aligned with the tokens.
ToweExample parse_towe_line(const std::string& line, std::size_t line_number, const ToweParseOptions& options = {},
                            const std::string& source = "<input>");
std::vector<ToweExample> parse_towe_file(const std::filesystem::path& path, const ToweParseOptions& options = {});
std::string to_line(const ToweExample& example);

/// Line format: "0|1 TAB text". Tokens are lowercased and truncated.
std::vector<ReviewExample> parse_review_file(const std::filesystem::path& path,
                                             std::size_t max_length = kDefaultReviewLength);

// Lowercased token set over all given corpora, for restricting embeddings.
std::set<std::string> token_set(const std::vector<ToweExample>& towe, const std::vector<ReviewExample>& reviews);

// Number of examples whose gold opinion spans overlap the target span.
std::size_t count_target_overlaps(const std::vector<ToweExample>& examples);

/// A padded mini-batch, stored batch-major ([size x steps]).
struct Batch {
  std::size_t steps = 0;
  std::vector<std::size_t> lengths;
  std::vector<int> token_ids;         // PAD-filled
  std::vector<std::uint8_t> mask;
  std::vector<int> positions;         // 0 at padding
  std::vector<int> labels;            // kIgnoreLabel at padding or without gold
  std::vector<Span> targets;
  std::vector<int> polarities;        // review batches only
  std::vector<std::size_t> example_indices;

  std::size_t size() const { return lengths.size(); }
  std::size_t cell(std::size_t i, std::size_t t) const { return i * steps + t; }
};

std::vector<Batch> make_batches(const std::vector<ToweExample>& examples, const Vocab& vocab,
                                std::size_t batch_size, std::optional<std::uint64_t> shuffle_seed = std::nullopt);
std::vector<Batch> make_review_batches(const std::vector<ReviewExample>& reviews, const Vocab& vocab,
                                       std::size_t batch_size,
                                       std::optional<std::uint64_t> shuffle_seed = std::nullopt);

/// Deterministic disjoint split; dev receives round(fraction * n) items
/// (at least one of each side when n >= 2). Both parts keep input order.
template <class T>
std::pair<std::vector<T>, std::vector<T>> split_validation(const std::vector<T>& items, double fraction,
                                                           std::uint64_t seed);

std::vector<std::size_t> split_indices(std::size_t n, double fraction, std::uint64_t seed);

template <class T>
std::pair<std::vector<T>, std::vector<T>> split_validation(const std::vector<T>& items, double fraction,
                                                           std::uint64_t seed) {
  auto dev_index = split_indices(items.size(), fraction, seed);
  std::vector<std::uint8_t> in_dev(items.size(), 0);
  for (auto i : dev_index) in_dev[i] = 1;
  std::pair<std::vector<T>, std::vector<T>> out;
  for (std::size_t i = 0; i < items.size(); ++i) (in_dev[i] ? out.second : out.first).push_back(items[i]);
  return out;
}

}  // namespace lotn::corpus
