#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace hybridscope {

/// Keyword rubric for one needle. Matching is case-sensitive substring
/// search on the generated text.
struct ScoreRubric {
  std::vector<std::pair<std::string, double>> additive;  // keyword, points
  double additive_cap = 3.0;
  std::string set4;  // a close paraphrase scores 4
  std::string set5;  // the exact needle scores 5

  /// Full match beats the paraphrase, which beats the capped keyword sum.
  double score(std::string_view output) const;
};

/// Needle sentence, the question that asks for it, and its rubric.
struct NeedleSpec {
  std::string needle;
  std::string question;
  ScoreRubric rubric;
};

/// The San Francisco needle and its standard keyword table.
NeedleSpec default_needle();

/// Tab-separated lines: "points<TAB>keyword", "SET4<TAB>text",
/// "SET5<TAB>needle" and optionally "QUESTION<TAB>text" (defaults to the
/// standard question). Blank lines and '#' comments are skipped.
/// Throws ParseError with the line number.
NeedleSpec parse_needle_file(std::string_view text);
NeedleSpec load_needle_file(const std::string& path);

}  // namespace hybridscope
