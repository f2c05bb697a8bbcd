#include <cmath>
#include <sstream>

#include "doctest.h"
#include "lotn/corpus.hpp"
#include "lotn/eval.hpp"
#include "lotn/rng.hpp"

using namespace lotn;
using namespace lotn::eval;

namespace {

// Exact two-sided sign-flip p-value over all 2^n assignments.
double exhaustive_p(const std::vector<double>& a, const std::vector<double>& b) {
  const std::size_t n = a.size();
  double observed = 0.0;
  for (std::size_t i = 0; i < n; ++i) observed += a[i] - b[i];
  observed = std::abs(observed);
  std::size_t hits = 0;
  for (std::size_t mask = 0; mask < (std::size_t{1} << n); ++mask) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += (mask >> i & 1) ? b[i] - a[i] : a[i] - b[i];
    if (std::abs(total) >= observed - 1e-12) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(std::size_t{1} << n);
}

}  // namespace

TEST_CASE("exact match counts per span") {
  auto perfect = exact_match_prf({{{1, 2}}, {{0, 0}, {4, 5}}}, {{{1, 2}}, {{0, 0}, {4, 5}}});
  CHECK(perfect.precision == 1.0);
  CHECK(perfect.recall == 1.0);
  CHECK(perfect.f1 == 1.0);

  auto boundary = exact_match_prf({{{3, 5}}}, {{{3, 6}}});
  CHECK(boundary.n_correct == 0);
  CHECK(boundary.f1 == 0.0);

  auto half = exact_match_prf({{{1, 1}}}, {{{1, 1}, {4, 4}}});
  CHECK(half.precision == 1.0);
  CHECK(half.recall == 0.5);
  CHECK(half.f1 == doctest::Approx(2.0 / 3.0));

  auto nothing = exact_match_prf({{}}, {{}});
  CHECK(nothing.precision == 0.0);
  CHECK(nothing.f1 == 0.0);

  // A span correct for one target does not count for another.
  auto crossed = exact_match_prf({{{2, 2}}, {}}, {{}, {{2, 2}}});
  CHECK(crossed.n_correct == 0);
  CHECK_THROWS_AS(exact_match_prf({{}}, {}), std::invalid_argument);
}

TEST_CASE("swapping prediction and gold swaps precision and recall") {
  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<SpanSet> a(5), b(5);
    for (auto* side : {&a, &b})
      for (auto& set : *side)
        for (std::size_t s = 0; s < 6; ++s)
          if (rng.bernoulli(0.3)) set.push_back({s, s + rng.index(2)});
    auto ab = exact_match_prf(a, b), ba = exact_match_prf(b, a);
    CHECK(ab.precision == ba.recall);
    CHECK(ab.recall == ba.precision);
    CHECK(ab.f1 == doctest::Approx(ba.f1));
  }
}

TEST_CASE("error categories follow the token-set rules") {
  CHECK(categorize({{3, 4}}, {{3, 6}}) == ErrorType::UnderExtracted);
  CHECK(categorize({}, {{1, 1}}) == ErrorType::Null);
  CHECK(categorize({{5, 5}}, {{2, 2}}) == ErrorType::Others);
  CHECK(categorize({{1, 4}}, {{2, 3}}) == ErrorType::OverExtracted);
  CHECK(categorize({{2, 4}}, {{3, 5}}) == ErrorType::Others);
  // Same tokens, different segmentation: neither a strict subset nor empty.
  CHECK(categorize({{1, 1}, {2, 2}}, {{1, 2}}) == ErrorType::Others);
  CHECK(categorize({{1, 1}}, {}) == ErrorType::OverExtracted);
  CHECK(std::string(to_string(ErrorType::Null)) == "NULL");
}

TEST_CASE("breakdown counts each incorrect target exactly once") {
  std::vector<SpanSet> gold = {{{1, 1}}, {{3, 6}}, {{2, 2}}, {{1, 2}}, {{0, 0}}};
  std::vector<SpanSet> pred = {{}, {{3, 4}}, {{5, 5}}, {{0, 3}}, {{0, 0}}};
  auto e = error_categorize(pred, gold);
  CHECK(e.null_prediction == 1);
  CHECK(e.under_extracted == 1);
  CHECK(e.others == 1);
  CHECK(e.over_extracted == 1);
  CHECK(e.total() == 4);

  Rng rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<SpanSet> p(4), g(4);
    for (auto* side : {&p, &g})
      for (auto& set : *side)
        if (rng.bernoulli(0.7)) set.push_back({rng.index(3), 3 + rng.index(3)});
    std::size_t wrong = 0;
    for (std::size_t k = 0; k < 4; ++k) wrong += p[k] != g[k];
    CHECK(error_categorize(p, g).total() == wrong);
  }
}

TEST_CASE("per-target F1") {
  CHECK(target_f1({}, {}) == 1.0);
  CHECK(target_f1({}, {{1, 1}}) == 0.0);
  CHECK(target_f1({{1, 1}}, {{1, 1}, {3, 3}}) == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("significance test behaves like a randomization test") {
  std::vector<double> a(100), b(100);
  Rng rng(2);
  for (std::size_t i = 0; i < 100; ++i) {
    b[i] = rng.uniform(0.0, 0.5);
    a[i] = b[i] + 0.3;
  }
  CHECK(significance(a, a, 1000, 1) == 1.0);
  CHECK(significance(a, b, 10000, 1) < 0.01);
  CHECK(significance(a, b, 500, 7) == significance(a, b, 500, 7));

  std::vector<double> mixed_a(30), mixed_b(30);
  for (std::size_t i = 0; i < 30; ++i) {
    mixed_a[i] = rng.uniform();
    mixed_b[i] = rng.uniform();
  }
  const double p = significance(mixed_a, mixed_b, 2000, 3);
  CHECK(p > 0.0);
  CHECK(p <= 1.0);
  std::vector<double> shifted_a = mixed_a, shifted_b = mixed_b;
  for (std::size_t i = 0; i < 30; ++i) {
    shifted_a[i] += 0.25;
    shifted_b[i] += 0.25;
  }
  CHECK(significance(shifted_a, shifted_b, 2000, 3) == p);

  CHECK_THROWS_AS(significance(a, std::vector<double>(3), 100, 1), std::invalid_argument);
  CHECK_THROWS_AS(significance(a, b, 0, 1), std::invalid_argument);
}

TEST_CASE("sampled p-values agree with exhaustive enumeration on small inputs") {
  Rng rng(12);
  for (std::size_t n = 1; n <= 10; ++n) {
    std::vector<double> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = rng.uniform();
      b[i] = rng.uniform() * 0.8;
    }
    const double exact = exhaustive_p(a, b);
    const double sampled = significance(a, b, 20000, n);
    INFO("n = " << n);
    CHECK(std::abs(sampled - exact) < 0.02);
  }
}

TEST_CASE("distance rule picks the nearest adjective") {
  auto ex = corpus::parse_towe_line("nice big food here was really tasty\tO O B O O O O\tO O O O O O O\tJJ JJ NN RB VBD RB JJ",
                                    1);
  CHECK(distance_rule(ex) == SpanSet{{1, 1}});

  auto tie = corpus::parse_towe_line("hot soup cold\tO B O\tO O O\tJJ NN JJR", 1);
  CHECK(distance_rule(tie) == SpanSet{{0, 0}});

  auto none = corpus::parse_towe_line("the soup\tO B\tO O\tDT NN", 1);
  CHECK(distance_rule(none).empty());
  CHECK(categorize(distance_rule(none), none.gold_spans().empty() ? SpanSet{{0, 0}} : none.gold_spans()) ==
        ErrorType::Null);

  auto notch = corpus::parse_towe_line("The pizza here is absolutely top notch .\tO B O O O O O O\tO O O O O B I O\t"
                                       "DT NN RB VBZ RB JJ NN .",
                                       1);
  auto rule = distance_rule(notch);
  CHECK(rule == SpanSet{{5, 5}});
  CHECK(exact_match_prf({rule}, {notch.gold_spans()}).n_correct == 0);

  auto bare = corpus::parse_towe_line("the soup\tO B\tO O", 1);
  CHECK_THROWS_AS(distance_rule(bare), std::invalid_argument);
}

TEST_CASE("prediction dump round trips and reports bad rows") {
  std::vector<TargetPrediction> rows = {{0, {1, 1}, {{3, 3}}, SpanSet{{3, 4}}}, {2, {0, 1}, {}, std::nullopt}};
  std::ostringstream out;
  write_predictions(out, rows);
  CHECK(out.str() == "0\t1-1\t3-3\t3-4\n2\t0-1\t-\n");
  std::istringstream in(out.str());
  auto back = read_predictions(in);
  REQUIRE(back.size() == 2);
  CHECK(back[0].predicted == rows[0].predicted);
  CHECK(back[0].gold == rows[0].gold);
  CHECK_FALSE(back[1].gold.has_value());

  std::istringstream bad("0\t1-1\t3-3\nx\t1-1\t-\n");
  try {
    read_predictions(bad, "dump.tsv");
    FAIL("expected ParseError");
  } catch (const corpus::ParseError& e) {
    CHECK(e.line() == 2);
  }
}

TEST_CASE("reports list metrics and error counts") {
  auto report = exact_match_prf({{{1, 1}}}, {{{1, 1}, {4, 4}}});
  ErrorBreakdown errors;
  errors.under_extracted = 1;
  const std::string records = format_report_records(report, errors);
  CHECK(records.find("precision\t1\n") != std::string::npos);
  CHECK(records.find("n_gold\t2\n") != std::string::npos);
  CHECK(records.find("error_under_extracted\t1\n") != std::string::npos);
  CHECK(records.find("error_total\t1\n") != std::string::npos);
  CHECK(format_report(report, errors).find("under-extracted 1") != std::string::npos);
}
