#pragma once

#include <compare>
#include <cstddef>
#include <string>
#include <vector>

namespace lotn {

/// Inclusive token range [start, end].
struct Span {
  std::size_t start = 0;
  std::size_t end = 0;

  std::size_t length() const { return end - start + 1; }
  bool contains(std::size_t i) const { return start <= i && i <= end; }
  auto operator<=>(const Span&) const = default;
};

// Sorted, duplicate-free.
using SpanSet = std::vector<Span>;

/// BIO tags with the label ids used by the tagging heads.
enum class Tag : int { O = 0, B = 1, I = 2 };
using TagSequence = std::vector<Tag>;

inline constexpr int kTagCount = 3;

char tag_char(Tag tag);
Tag tag_from_string(const std::string& s);  // throws std::invalid_argument

std::string format_span(const Span& span);         // "3-5"
std::string format_spans(const SpanSet& spans);    // "3-5,7-7" or "-" when empty
SpanSet parse_spans(const std::string& text);      // inverse of format_spans

/// Maximal runs B I* become spans. An I that follows O (or opens the
/// sequence) starts a new span, the same repair decoding applies.
SpanSet extract_spans(const TagSequence& tags);

// Inverse of extract_spans for non-overlapping, non-adjacent-merged spans.
TagSequence tags_from_spans(std::size_t n, const SpanSet& spans);

}  // namespace lotn
