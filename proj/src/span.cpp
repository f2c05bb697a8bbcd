#include "lotn/span.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

namespace lotn {

char tag_char(Tag tag) {
  switch (tag) {
    case Tag::O: return 'O';
    case Tag::B: return 'B';
    case Tag::I: return 'I';
  }
  return '?';
}

Tag tag_from_string(const std::string& s) {
  if (s == "O") return Tag::O;
  if (s == "B") return Tag::B;
  if (s == "I") return Tag::I;
  throw std::invalid_argument("unknown tag '" + s + "'");
}

std::string format_span(const Span& span) { return std::to_string(span.start) + "-" + std::to_string(span.end); }

std::string format_spans(const SpanSet& spans) {
  if (spans.empty()) return "-";
  std::string out;
  for (const auto& s : spans) {
    if (!out.empty()) out += ",";
    out += format_span(s);
  }
  return out;
}

SpanSet parse_spans(const std::string& text) {
  SpanSet out;
  if (text == "-") return out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    auto dash = item.find('-');
    if (dash == std::string::npos || dash == 0 || dash + 1 == item.size())
      throw std::invalid_argument("malformed span '" + item + "'");
    std::size_t used_a = 0, used_b = 0;
    Span s;
    try {
      s.start = std::stoul(item.substr(0, dash), &used_a);
      s.end = std::stoul(item.substr(dash + 1), &used_b);
    } catch (const std::logic_error&) {
      throw std::invalid_argument("malformed span '" + item + "'");
    }
    if (used_a != dash || used_b != item.size() - dash - 1 || s.end < s.start)
      throw std::invalid_argument("malformed span '" + item + "'");
    out.push_back(s);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

SpanSet extract_spans(const TagSequence& tags) {
  SpanSet out;
  bool open = false;
  for (std::size_t i = 0; i < tags.size(); ++i) {
    switch (tags[i]) {
      case Tag::O:
        open = false;
        break;
      case Tag::B:
        out.push_back({i, i});
        open = true;
        break;
      case Tag::I:
        if (open) {
          out.back().end = i;
        } else {
          out.push_back({i, i});
          open = true;
        }
        break;
    }
  }
  return out;
}

TagSequence tags_from_spans(std::size_t n, const SpanSet& spans) {
  TagSequence tags(n, Tag::O);
  for (const auto& s : spans) {
    if (s.end >= n || s.start > s.end) throw std::out_of_range("span " + format_span(s) + " outside sequence");
    tags[s.start] = Tag::B;
    for (std::size_t i = s.start + 1; i <= s.end; ++i) tags[i] = Tag::I;
  }
  return tags;
}

}  // namespace lotn
