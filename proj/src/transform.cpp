#include "lotn/transform.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>

namespace lotn::transform {

std::vector<double> distance_weights(std::size_t n, Span target) {
  if (n == 0) throw std::invalid_argument("distance_weights: empty sentence");
  if (target.start > target.end || target.end >= n)
    throw std::out_of_range("distance_weights: target " + format_span(target) + " outside " + std::to_string(n) +
                            " tokens");
  std::vector<double> c(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t d = i < target.start ? target.start - i : (i > target.end ? i - target.end : 0);
    c[i] = 1.0 - static_cast<double>(d) / static_cast<double>(n);
  }
  return c;
}

std::vector<double> reweight_and_normalize(std::span<const double> alpha, std::span<const double> weights) {
  if (alpha.size() != weights.size() || alpha.empty())
    throw std::invalid_argument("reweight_and_normalize: " + std::to_string(alpha.size()) + " attention weights for " +
                                std::to_string(weights.size()) + " distance weights");
  double alpha_total = 0.0;
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    if (!(alpha[i] >= 0.0)) throw std::invalid_argument("reweight_and_normalize: negative attention weight");
    if (!(weights[i] > 0.0)) throw std::invalid_argument("reweight_and_normalize: non-positive distance weight");
    alpha_total += alpha[i];
  }
  if (std::abs(alpha_total - 1.0) > 1e-6)
    throw std::invalid_argument("reweight_and_normalize: attention sums to " + std::to_string(alpha_total));
  std::vector<double> beta(alpha.size());
  double total = 0.0;
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    beta[i] = weights[i] * alpha[i];
    total += beta[i];
  }
  if (!(total > 0.0)) throw DegenerateInputError("reweight_and_normalize: reweighted attention sums to zero");
  for (auto& b : beta) b /= total;
  return beta;
}

std::vector<int> binarize(std::span<const double> beta, std::size_t n) {
  if (beta.size() != n) throw std::invalid_argument("binarize: distribution length differs from n");
  const double threshold = 1.0 / static_cast<double>(n);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = beta[i] >= threshold ? 1 : 0;
  return labels;
}

LatentOpinionLabels transform(std::span<const double> alpha, Span target, std::size_t n) {
  if (alpha.size() != n)
    throw std::invalid_argument("transform: " + std::to_string(alpha.size()) + " attention weights for " +
                                std::to_string(n) + " tokens");
  LatentOpinionLabels out;
  out.weights = distance_weights(n, target);
  out.beta = reweight_and_normalize(alpha, out.weights);
  out.labels = binarize(out.beta, n);
  out.threshold = 1.0 / static_cast<double>(n);
  return out;
}

void write_dump(std::ostream& out, std::size_t example_id, const corpus::ToweExample& example,
                std::span<const double> alpha, const LatentOpinionLabels& labels) {
  out << "# example " << example_id << " target " << format_span(example.target) << '\n';
  char buffer[128];
  for (std::size_t i = 0; i < example.size(); ++i) {
    std::snprintf(buffer, sizeof buffer, "%.17g\t%.17g\t%.17g\t%d", alpha[i], labels.weights[i], labels.beta[i],
                  labels.labels[i]);
    out << example.tokens[i] << '\t' << buffer << '\t'
        << (example.has_gold ? tag_char(example.labels[i]) : '-') << '\n';
  }
  out << '\n';
}

}  // namespace lotn::transform
