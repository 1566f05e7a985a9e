#include "hybridscope/rubric.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "hybridscope/error.hpp"

namespace hybridscope {
namespace {

constexpr const char* kNeedle =
    "The best thing to do in San Francisco is eat a sandwich and sit in Dolores Park on a sunny day";
constexpr const char* kQuestion = "What is the best thing to do in San Francisco?";

bool contains(std::string_view hay, const std::string& needle) {
  return !needle.empty() && hay.find(needle) != std::string_view::npos;
}

}  // namespace

double ScoreRubric::score(std::string_view output) const {
  if (contains(output, set5)) return 5.0;
  if (contains(output, set4)) return 4.0;
  double total = 0.0;
  for (const auto& [keyword, points] : additive) {
    if (contains(output, keyword)) total += points;
  }
  return std::min(total, additive_cap);
}

NeedleSpec default_needle() {
  NeedleSpec s;
  s.needle = kNeedle;
  s.question = kQuestion;
  s.rubric.additive = {{"eat a sandwich", 1.0}, {"Dolores Park", 0.5}, {"sit in Dolores Park", 0.5}, {"sunny day", 1.0}};
  s.rubric.set4 = "is to eat a sandwich and sit in Dolores Park on a sunny day";
  s.rubric.set5 = kNeedle;
  return s;
}

NeedleSpec parse_needle_file(std::string_view text) {
  NeedleSpec s;
  s.question = kQuestion;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const std::size_t tab = line.find('\t');
    if (tab == std::string::npos) throw ParseError("expected <key><TAB><text>", lineno);
    const std::string key = line.substr(0, tab);
    std::string value = line.substr(tab + 1);
    if (value.empty()) throw ParseError("empty rule text", lineno);
    if (key == "SET4") {
      s.rubric.set4 = std::move(value);
    } else if (key == "SET5") {
      s.rubric.set5 = value;
      s.needle = std::move(value);
    } else if (key == "QUESTION") {
      s.question = std::move(value);
    } else {
      double points = 0.0;
      const auto [end, ec] = std::from_chars(key.data(), key.data() + key.size(), points);
      if (ec != std::errc() || end != key.data() + key.size() || points < 0.0) {
        throw ParseError("bad points value '" + key + "'", lineno);
      }
      s.rubric.additive.emplace_back(std::move(value), points);
    }
  }
  if (s.needle.empty()) throw ParseError("needle file has no SET5 line", lineno);
  return s;
}

NeedleSpec load_needle_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open needle file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_needle_file(buf.str());
}

}  // namespace hybridscope
