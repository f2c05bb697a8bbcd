#pragma once

#include <filesystem>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "lotn/rng.hpp"
#include "lotn/tensor.hpp"

namespace lotn::corpus {

std::string lowercase(std::string_view text);

/// Lowercased token table with a frozen word-vector matrix.
///
/// Ids 0 and 1 are reserved for padding and unknown words. Lookups lowercase
/// their argument, so callers can keep original casing for display.
class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr const char* kPadToken = "<pad>";
  static constexpr const char* kUnkToken = "<unk>";

  Vocab() = default;
  // tokens[0] and tokens[1] must be the reserved entries; vectors is [size x dim].
  Vocab(std::vector<std::string> tokens, ag::Tensor vectors);

  /// Reads "token v1 ... v_dim" lines, keeping only tokens in `keep` (already
  /// lowercased). The first occurrence of a token wins. PAD and UNK vectors
  /// are drawn from U(-0.01, 0.01).
  static Vocab load_embeddings(const std::filesystem::path& path, std::size_t dim,
                               const std::set<std::string>& keep, Rng& rng);

  /// Stand-in table when no pretrained vectors are available: every token in
  /// `tokens` gets a vector from U(-scale, scale).
  static Vocab random(const std::set<std::string>& tokens, std::size_t dim, Rng& rng, double scale = 0.5);

  int id(std::string_view token) const;
  std::vector<int> ids(const std::vector<std::string>& tokens) const;
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  bool contains(std::string_view token) const;

  std::size_t size() const { return tokens_.size(); }
  std::size_t dim() const { return vectors_.defined() ? vectors_.cols() : 0; }
  const std::vector<std::string>& tokens() const { return tokens_; }
  const ag::Tensor& vectors() const { return vectors_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
  ag::Tensor vectors_;
};

}  // namespace lotn::corpus
