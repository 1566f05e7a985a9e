#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace hybridscope {

inline constexpr int kUnkToken = 0;
inline constexpr int kBosToken = 1;

/// Reversible word-level tokenizer. A piece is a core (a run of word
/// characters, or one other character) plus the whitespace run after it;
/// leading whitespace of a text is a piece of its own. Concatenating the
/// pieces gives back the text exactly.
class Tokenizer {
 public:
  /// Word characters: ASCII letters and digits, apostrophe, bytes >= 0x80.
  static std::vector<std::string> split(std::string_view text);
  static int count(std::string_view text) { return static_cast<int>(split(text).size()); }

  Tokenizer() = default;
  /// Vocabulary: <unk>, <bos>, then the sorted distinct pieces.
  explicit Tokenizer(std::vector<std::string> pieces);
  static Tokenizer from_texts(std::span<const std::string> texts);

  int size() const { return static_cast<int>(pieces_.size()); }
  /// Unknown pieces map to kUnkToken.
  std::vector<int> encode(std::string_view text) const;
  /// Specials and ids outside the vocabulary decode to "".
  std::string decode(std::span<const int> ids) const;
  std::optional<int> id(std::string_view piece) const;
  const std::string& piece(int id) const { return pieces_.at(static_cast<std::size_t>(id)); }
  const std::vector<std::string>& pieces() const { return pieces_; }

 private:
  std::vector<std::string> pieces_;
  std::map<std::string, int, std::less<>> index_;
};

}  // namespace hybridscope
