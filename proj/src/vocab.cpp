#include "lotn/vocab.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <stdexcept>

#include "lotn/corpus.hpp"

namespace lotn::corpus {
namespace {

std::vector<std::string_view> split_spaces(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

}  // namespace

std::string lowercase(std::string_view text) {
  std::string out(text);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

Vocab::Vocab(std::vector<std::string> tokens, ag::Tensor vectors) : tokens_(std::move(tokens)), vectors_(vectors) {
  if (tokens_.size() < 2 || tokens_[kPad] != kPadToken || tokens_[kUnk] != kUnkToken)
    throw std::invalid_argument("vocab: reserved <pad>/<unk> entries missing");
  if (!vectors_.defined() || vectors_.rank() != 2 || vectors_.rows() != tokens_.size())
    throw ag::DimensionError("vocab: vector table does not match " + std::to_string(tokens_.size()) + " tokens");
  vectors_.set_requires_grad(false);
  for (std::size_t i = 0; i < tokens_.size(); ++i)
    if (!index_.emplace(tokens_[i], static_cast<int>(i)).second)
      throw std::invalid_argument("vocab: duplicate token " + tokens_[i]);
}

Vocab Vocab::load_embeddings(const std::filesystem::path& path, std::size_t dim, const std::set<std::string>& keep,
                             Rng& rng) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open embedding file " + path.string());
  std::vector<std::string> tokens{kPadToken, kUnkToken};
  std::vector<double> values(2 * dim);
  rng.fill_uniform(values, -0.01, 0.01);
  std::set<std::string> seen;
  std::string line;
  std::size_t line_number = 0;
  std::size_t duplicates = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.empty() || line == "\r") continue;
    auto fields = split_spaces(line);
    if (fields.size() != dim + 1)
      throw ParseError(path.string(), line_number,
                       "expected token and " + std::to_string(dim) + " values, found " +
                           std::to_string(fields.size()) + " columns");
    std::string token = lowercase(fields[0]);
    if (!keep.count(token)) continue;
    if (!seen.insert(token).second) {
      ++duplicates;
      spdlog::warn("{}:{}: duplicate embedding for '{}' ignored (first occurrence wins)", path.string(),
                   line_number, token);
      continue;
    }
    for (std::size_t k = 1; k <= dim; ++k) {
      double v = 0.0;
      auto f = fields[k];
      auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
      if (ec != std::errc() || ptr != f.data() + f.size())
        throw ParseError(path.string(), line_number, "bad number '" + std::string(f) + "'");
      values.push_back(v);
    }
    tokens.push_back(std::move(token));
  }
  spdlog::info("loaded {} of {} wanted word vectors from {} ({} duplicates)", tokens.size() - 2, keep.size(),
               path.string(), duplicates);
  const std::size_t rows = tokens.size();
  return Vocab(std::move(tokens), ag::Tensor({rows, dim}, std::move(values)));
}

Vocab Vocab::random(const std::set<std::string>& tokens, std::size_t dim, Rng& rng, double scale) {
  std::vector<std::string> all{kPadToken, kUnkToken};
  std::vector<double> values(2 * dim);
  rng.fill_uniform(values, -0.01, 0.01);
  std::set<std::string> lowered;
  for (const auto& t : tokens) lowered.insert(lowercase(t));
  for (const auto& token : lowered) {
    if (token == kPadToken || token == kUnkToken) continue;
    all.push_back(token);
    for (std::size_t k = 0; k < dim; ++k) values.push_back(rng.uniform(-scale, scale));
  }
  const std::size_t rows = all.size();
  return Vocab(std::move(all), ag::Tensor({rows, dim}, std::move(values)));
}

int Vocab::id(std::string_view token) const {
  auto it = index_.find(lowercase(token));
  return it == index_.end() ? kUnk : it->second;
}

std::vector<int> Vocab::ids(const std::vector<std::string>& tokens) const {
  std::vector<int> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(id(t));
  return out;
}

bool Vocab::contains(std::string_view token) const { return index_.count(lowercase(token)) != 0; }

}  // namespace lotn::corpus
