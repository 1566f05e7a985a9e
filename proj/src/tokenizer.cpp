#include "hybridscope/tokenizer.hpp"

#include <algorithm>
#include <set>

#include "hybridscope/error.hpp"

namespace hybridscope {
namespace {

bool is_space(unsigned char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

bool is_word(unsigned char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '\'' || c >= 0x80;
}

}  // namespace

std::vector<std::string> Tokenizer::split(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  const std::size_t n = text.size();
  auto skip_space = [&](std::size_t p) {
    while (p < n && is_space(static_cast<unsigned char>(text[p]))) ++p;
    return p;
  };
  if (n && is_space(static_cast<unsigned char>(text[0]))) {
    i = skip_space(0);
    out.emplace_back(text.substr(0, i));
  }
  while (i < n) {
    const std::size_t start = i;
    if (is_word(static_cast<unsigned char>(text[i]))) {
      while (i < n && is_word(static_cast<unsigned char>(text[i]))) ++i;
    } else {
      ++i;
    }
    i = skip_space(i);
    out.emplace_back(text.substr(start, i - start));
  }
  return out;
}

Tokenizer::Tokenizer(std::vector<std::string> pieces) {
  pieces_ = {"<unk>", "<bos>"};
  std::sort(pieces.begin(), pieces.end());
  pieces.erase(std::unique(pieces.begin(), pieces.end()), pieces.end());
  for (std::string& p : pieces) {
    if (p.empty()) throw InvalidInput("empty tokenizer piece");
    pieces_.push_back(std::move(p));
  }
  for (std::size_t i = 2; i < pieces_.size(); ++i) index_.emplace(pieces_[i], static_cast<int>(i));
}

Tokenizer Tokenizer::from_texts(std::span<const std::string> texts) {
  std::set<std::string> all;
  for (const std::string& t : texts) {
    for (std::string& p : split(t)) all.insert(std::move(p));
  }
  return Tokenizer(std::vector<std::string>(all.begin(), all.end()));
}

std::vector<int> Tokenizer::encode(std::string_view text) const {
  std::vector<int> ids;
  for (const std::string& p : split(text)) ids.push_back(id(p).value_or(kUnkToken));
  return ids;
}

std::string Tokenizer::decode(std::span<const int> ids) const {
  std::string out;
  for (int i : ids) {
    if (i >= 2 && i < size()) out += pieces_[static_cast<std::size_t>(i)];
  }
  return out;
}

std::optional<int> Tokenizer::id(std::string_view piece) const {
  auto it = index_.find(piece);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

}  // namespace hybridscope
