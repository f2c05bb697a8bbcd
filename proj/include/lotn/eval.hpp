#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lotn/corpus.hpp"
#include "lotn/span.hpp"

namespace lotn::eval {

/// Exact-match span counts, aggregated over all targets.
struct EvalReport {
  std::size_t n_gold = 0;
  std::size_t n_pred = 0;
  std::size_t n_correct = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// A predicted span is correct when both boundaries match a gold span of the
// same target. pred[k] and gold[k] belong to the same target.
EvalReport exact_match_prf(const std::vector<SpanSet>& pred, const std::vector<SpanSet>& gold);

enum class ErrorType { Null, UnderExtracted, OverExtracted, Others };
const char* to_string(ErrorType type);

struct ErrorBreakdown {
  std::size_t null_prediction = 0;
  std::size_t under_extracted = 0;
  std::size_t over_extracted = 0;
  std::size_t others = 0;

  std::size_t total() const { return null_prediction + under_extracted + over_extracted + others; }
};

// Category of an incorrect target prediction, by comparing covered token sets.
ErrorType categorize(const SpanSet& pred, const SpanSet& gold);

// Counts categories over targets whose predicted span set differs from gold.
ErrorBreakdown error_categorize(const std::vector<SpanSet>& pred, const std::vector<SpanSet>& gold);

// Per-target F1 of the span sets (1 when both are empty).
double target_f1(const SpanSet& pred, const SpanSet& gold);

/// Paired approximate-randomization test on the mean difference. Each shuffle
/// swaps every pair with probability 1/2; the two-sided p-value is
/// (hits + 1) / (shuffles + 1).
double significance(std::span<const double> a, std::span<const double> b, std::size_t shuffles,
                    std::uint64_t seed);

/// Nearest adjective (POS starting with "JJ") outside the target, as a
/// one-token span. Ties go to the left token; no adjective gives no span.
SpanSet distance_rule(const corpus::ToweExample& example);

/// One row of the per-target prediction dump.
struct TargetPrediction {
  std::size_t example_id = 0;
  Span target;
  SpanSet predicted;
  std::optional<SpanSet> gold;
};

// "id TAB target TAB predicted [TAB gold]" per line, spans as formatted by format_spans.
void write_predictions(std::ostream& out, const std::vector<TargetPrediction>& rows);
std::vector<TargetPrediction> read_predictions(std::istream& in, const std::string& source = "<predictions>");

std::string format_report(const EvalReport& report, const ErrorBreakdown& errors);
// "key TAB value" records for scripts.
std::string format_report_records(const EvalReport& report, const ErrorBreakdown& errors);

}  // namespace lotn::eval
