#include "hybridscope/layer_pattern.hpp"

#include <cctype>

#include "hybridscope/error.hpp"

namespace hybridscope {
namespace {

class PatternParser {
 public:
  explicit PatternParser(std::string_view text) : text_(text) {}

  LayerPattern parse() {
    LayerPattern out;
    out.kinds = parse_list();
    skip_space();
    if (pos_ != text_.size()) fail("unexpected character");
    if (out.kinds.empty()) fail("empty layer pattern");
    return out;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError("layer pattern: " + what, pos_);
  }

  void skip_space() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool peek(char c) {
    skip_space();
    return pos_ < text_.size() && text_[pos_] == c;
  }

  // Returns -1 when no digits are present.
  long parse_count() {
    skip_space();
    const std::size_t start = pos_;
    long value = 0;
    while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
      value = value * 10 + (text_[pos_] - '0');
      if (value > 100000) fail("count too large");
      ++pos_;
    }
    if (pos_ == start) return -1;
    if (value == 0) {
      pos_ = start;
      fail("zero count");
    }
    return value;
  }

  std::vector<LayerKind> parse_list() {
    std::vector<LayerKind> out;
    while (true) {
      auto item = parse_item();
      out.insert(out.end(), item.begin(), item.end());
      if (!peek(',')) break;
      ++pos_;
    }
    return out;
  }

  std::vector<LayerKind> parse_item() {
    if (peek('(')) {
      ++pos_;
      auto inner = parse_list();
      if (!peek(')')) fail("expected ')'");
      ++pos_;
      skip_space();
      if (pos_ >= text_.size() || (text_[pos_] != 'x' && text_[pos_] != 'X')) {
        fail("expected 'x' after group");
      }
      ++pos_;
      const long reps = parse_count();
      if (reps < 0) fail("expected repetition count");
      std::vector<LayerKind> out;
      for (long i = 0; i < reps; ++i) out.insert(out.end(), inner.begin(), inner.end());
      return out;
    }
    long count = parse_count();
    if (count < 0) count = 1;
    skip_space();
    if (pos_ >= text_.size()) fail("expected layer kind");
    LayerKind kind;
    switch (text_[pos_]) {
      case 'S':
      case 's':
        kind = LayerKind::kSsm;
        break;
      case 'A':
      case 'a':
        kind = LayerKind::kAttention;
        break;
      default:
        fail("expected layer kind 'S' or 'A'");
    }
    ++pos_;
    return std::vector<LayerKind>(static_cast<std::size_t>(count), kind);
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<int> LayerPattern::attention_indices() const {
  std::vector<int> out;
  for (std::size_t i = 0; i < kinds.size(); ++i) {
    if (kinds[i] == LayerKind::kAttention) out.push_back(static_cast<int>(i));
  }
  return out;
}

std::string LayerPattern::to_string() const {
  std::string out;
  for (std::size_t i = 0; i < kinds.size(); ++i) {
    if (i) out += ',';
    out += kinds[i] == LayerKind::kSsm ? 'S' : 'A';
  }
  return out;
}

LayerPattern parse_layer_pattern(std::string_view spec) {
  LayerPattern pattern = PatternParser(spec).parse();
  if (pattern.attention_indices().empty()) {
    throw ParseError("layer pattern has no attention layer", 0);
  }
  return pattern;
}

}  // namespace hybridscope
