#include "lotn/eval.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "lotn/rng.hpp"

namespace lotn::eval {
namespace {

SpanSet normalized(SpanSet spans) {
  std::sort(spans.begin(), spans.end());
  spans.erase(std::unique(spans.begin(), spans.end()), spans.end());
  return spans;
}

std::set<std::size_t> covered_tokens(const SpanSet& spans) {
  std::set<std::size_t> out;
  for (const auto& s : spans)
    for (std::size_t i = s.start; i <= s.end; ++i) out.insert(i);
  return out;
}

bool proper_subset(const std::set<std::size_t>& a, const std::set<std::size_t>& b) {
  return a.size() < b.size() && std::includes(b.begin(), b.end(), a.begin(), a.end());
}

std::size_t matched(const SpanSet& pred, const SpanSet& gold) {
  std::size_t n = 0;
  for (const auto& s : pred) n += std::binary_search(gold.begin(), gold.end(), s) ? 1 : 0;
  return n;
}

double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

double harmonic(double p, double r) { return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r); }

}  // namespace

EvalReport exact_match_prf(const std::vector<SpanSet>& pred, const std::vector<SpanSet>& gold) {
  if (pred.size() != gold.size())
    throw std::invalid_argument("exact_match_prf: " + std::to_string(pred.size()) + " predicted targets vs " +
                                std::to_string(gold.size()) + " gold targets");
  EvalReport r;
  for (std::size_t k = 0; k < pred.size(); ++k) {
    SpanSet p = normalized(pred[k]);
    SpanSet g = normalized(gold[k]);
    r.n_pred += p.size();
    r.n_gold += g.size();
    r.n_correct += matched(p, g);
  }
  r.precision = ratio(r.n_correct, r.n_pred);
  r.recall = ratio(r.n_correct, r.n_gold);
  r.f1 = harmonic(r.precision, r.recall);
  return r;
}

const char* to_string(ErrorType type) {
  switch (type) {
    case ErrorType::Null: return "NULL";
    case ErrorType::UnderExtracted: return "under_extracted";
    case ErrorType::OverExtracted: return "over_extracted";
    case ErrorType::Others: return "others";
  }
  return "?";
}

ErrorType categorize(const SpanSet& pred, const SpanSet& gold) {
  auto p = covered_tokens(pred);
  auto g = covered_tokens(gold);
  if (p.empty() && !g.empty()) return ErrorType::Null;
  if (!p.empty() && proper_subset(p, g)) return ErrorType::UnderExtracted;
  if (proper_subset(g, p)) return ErrorType::OverExtracted;
  return ErrorType::Others;
}

ErrorBreakdown error_categorize(const std::vector<SpanSet>& pred, const std::vector<SpanSet>& gold) {
  if (pred.size() != gold.size()) throw std::invalid_argument("error_categorize: misaligned targets");
  ErrorBreakdown out;
  for (std::size_t k = 0; k < pred.size(); ++k) {
    if (normalized(pred[k]) == normalized(gold[k])) continue;
    switch (categorize(pred[k], gold[k])) {
      case ErrorType::Null: ++out.null_prediction; break;
      case ErrorType::UnderExtracted: ++out.under_extracted; break;
      case ErrorType::OverExtracted: ++out.over_extracted; break;
      case ErrorType::Others: ++out.others; break;
    }
  }
  return out;
}

double target_f1(const SpanSet& pred, const SpanSet& gold) {
  SpanSet p = normalized(pred), g = normalized(gold);
  if (p.empty() && g.empty()) return 1.0;
  const std::size_t c = matched(p, g);
  return harmonic(ratio(c, p.size()), ratio(c, g.size()));
}

double significance(std::span<const double> a, std::span<const double> b, std::size_t shuffles,
                    std::uint64_t seed) {
  if (a.size() != b.size())
    throw std::invalid_argument("significance: score vectors differ in length (" + std::to_string(a.size()) +
                                " vs " + std::to_string(b.size()) + ")");
  if (shuffles == 0) throw std::invalid_argument("significance: need at least one shuffle");
  std::vector<double> diff(a.size());
  double observed = 0.0, magnitude = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff[i] = a[i] - b[i];
    observed += diff[i];
    magnitude += std::abs(diff[i]);
  }
  observed = std::abs(observed);
  // Sums that agree up to rounding count as ties.
  const double slack = 1e-9 * std::max(1.0, magnitude);
  Rng rng(seed);
  std::size_t hits = 0;
  for (std::size_t s = 0; s < shuffles; ++s) {
    double total = 0.0;
    for (double d : diff) total += rng.bernoulli(0.5) ? -d : d;
    if (std::abs(total) >= observed - slack) ++hits;
  }
  return static_cast<double>(hits + 1) / static_cast<double>(shuffles + 1);
}

SpanSet distance_rule(const corpus::ToweExample& example) {
  if (example.pos_tags.size() != example.size())
    throw std::invalid_argument("distance_rule: example has no part-of-speech tags");
  std::optional<std::size_t> best;
  std::size_t best_distance = 0;
  for (std::size_t i = 0; i < example.size(); ++i) {
    if (example.target.contains(i) || example.pos_tags[i].rfind("JJ", 0) != 0) continue;
    const std::size_t d = i < example.target.start ? example.target.start - i : i - example.target.end;
    if (!best || d < best_distance) {
      best = i;
      best_distance = d;
    }
  }
  if (!best) return {};
  return {Span{*best, *best}};
}

void write_predictions(std::ostream& out, const std::vector<TargetPrediction>& rows) {
  for (const auto& r : rows) {
    out << r.example_id << '\t' << format_span(r.target) << '\t' << format_spans(normalized(r.predicted));
    if (r.gold) out << '\t' << format_spans(normalized(*r.gold));
    out << '\n';
  }
}

std::vector<TargetPrediction> read_predictions(std::istream& in, const std::string& source) {
  std::vector<TargetPrediction> rows;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, '\t')) fields.push_back(f);
    if (fields.size() != 3 && fields.size() != 4)
      throw corpus::ParseError(source, line_number, "expected 3 or 4 tab-separated fields");
    try {
      TargetPrediction row;
      row.example_id = std::stoul(fields[0]);
      auto target = parse_spans(fields[1]);
      if (target.size() != 1) throw std::invalid_argument("target must be one span");
      row.target = target.front();
      row.predicted = parse_spans(fields[2]);
      if (fields.size() == 4) row.gold = parse_spans(fields[3]);
      rows.push_back(std::move(row));
    } catch (const std::logic_error& e) {
      throw corpus::ParseError(source, line_number, e.what());
    }
  }
  return rows;
}

std::string format_report(const EvalReport& r, const ErrorBreakdown& e) {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "precision %.4f  recall %.4f  f1 %.4f\n"
                "spans: gold %zu  predicted %zu  correct %zu\n"
                "errors: NULL %zu  under-extracted %zu  over-extracted %zu  others %zu  total %zu\n",
                r.precision, r.recall, r.f1, r.n_gold, r.n_pred, r.n_correct, e.null_prediction, e.under_extracted,
                e.over_extracted, e.others, e.total());
  return buf;
}

std::string format_report_records(const EvalReport& r, const ErrorBreakdown& e) {
  std::ostringstream out;
  out.precision(17);
  out << "precision\t" << r.precision << '\n'
      << "recall\t" << r.recall << '\n'
      << "f1\t" << r.f1 << '\n'
      << "n_gold\t" << r.n_gold << '\n'
      << "n_pred\t" << r.n_pred << '\n'
      << "n_correct\t" << r.n_correct << '\n'
      << "error_null\t" << e.null_prediction << '\n'
      << "error_under_extracted\t" << e.under_extracted << '\n'
      << "error_over_extracted\t" << e.over_extracted << '\n'
      << "error_others\t" << e.others << '\n'
      << "error_total\t" << e.total() << '\n';
  return out.str();
}

}  // namespace lotn::eval
