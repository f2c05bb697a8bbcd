#include <stdexcept>

#include "doctest.h"
#include "lotn/rng.hpp"
#include "lotn/span.hpp"

using namespace lotn;

namespace {

TagSequence tags(const std::string& s) {
  TagSequence out;
  for (char c : s) out.push_back(tag_from_string(std::string(1, c)));
  return out;
}

}  // namespace

TEST_CASE("extract_spans reads maximal B I* runs") {
  CHECK(extract_spans(tags("OBIIOBO")) == SpanSet{{1, 3}, {5, 5}});
  CHECK(extract_spans(tags("BB")) == SpanSet{{0, 0}, {1, 1}});
  CHECK(extract_spans(tags("OOO")).empty());
  CHECK(extract_spans(tags("IIOI")) == SpanSet{{0, 1}, {3, 3}});
}

TEST_CASE("tags_from_spans inverts extraction") {
  CHECK(tags_from_spans(5, {{1, 2}, {4, 4}}) == tags("OBIOB"));
  Rng rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.index(12);
    TagSequence seq(n);
    for (auto& t : seq) t = static_cast<Tag>(rng.index(3));
    if (!seq.empty() && seq[0] == Tag::I) seq[0] = Tag::B;
    for (std::size_t i = 1; i < n; ++i)
      if (seq[i] == Tag::I && seq[i - 1] == Tag::O) seq[i] = Tag::B;
    CHECK(tags_from_spans(n, extract_spans(seq)) == seq);
  }
}

TEST_CASE("span text round trips and rejects garbage") {
  CHECK(format_span({3, 5}) == "3-5");
  CHECK(format_spans({}) == "-");
  CHECK(format_spans({{0, 0}, {3, 5}}) == "0-0,3-5");
  CHECK(parse_spans("0-0,3-5") == SpanSet{{0, 0}, {3, 5}});
  CHECK(parse_spans("-").empty());
  CHECK_THROWS_AS(parse_spans("3"), std::invalid_argument);
  CHECK_THROWS_AS(parse_spans("5-3"), std::invalid_argument);
  CHECK_THROWS_AS(parse_spans("a-b"), std::invalid_argument);
  CHECK_THROWS_AS(tag_from_string("X"), std::invalid_argument);
  CHECK(tag_char(Tag::I) == 'I');
}

TEST_CASE("span helpers") {
  Span s{2, 4};
  CHECK(s.length() == 3);
  CHECK(s.contains(2));
  CHECK_FALSE(s.contains(5));
  CHECK(Span{1, 2} < Span{1, 3});
}
