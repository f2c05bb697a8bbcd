#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <vector>

#include "lotn/corpus.hpp"
#include "lotn/span.hpp"

namespace lotn::transform {

class DegenerateInputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Target-dependent pseudo-labels derived from global attention.
struct LatentOpinionLabels {
  std::vector<double> weights;  // c_i, distance weights
  std::vector<double> beta;     // renormalized target-weighted attention
  std::vector<int> labels;      // 1 where beta_i >= threshold
  double threshold = 0.0;       // 1/n
};

// c_i = 1 - d_i / n with d_i the distance to the nearest target token.
std::vector<double> distance_weights(std::size_t n, Span target);

// beta_i = c_i alpha_i / sum_j c_j alpha_j.
std::vector<double> reweight_and_normalize(std::span<const double> alpha, std::span<const double> weights);

// 1 where beta_i >= 1/n. The comparison is exact, so ties are labeled 1.
std::vector<int> binarize(std::span<const double> beta, std::size_t n);

// alpha must cover exactly the n real tokens of the sentence.
LatentOpinionLabels transform(std::span<const double> alpha, Span target, std::size_t n);

/// Writes one block per sentence: a "# example ID target S-E" header, then
/// token, alpha, c, beta, y^a and gold tag per line (TAB separated), then a
/// blank line.
void write_dump(std::ostream& out, std::size_t example_id, const corpus::ToweExample& example,
                std::span<const double> alpha, const LatentOpinionLabels& labels);

}  // namespace lotn::transform
