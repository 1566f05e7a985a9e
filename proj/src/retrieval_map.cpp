#include "hybridscope/retrieval_map.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>

#include "hybridscope/error.hpp"

namespace hybridscope {
namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

double parse_double(const std::string& field, std::size_t lineno) {
  try {
    std::size_t used = 0;
    const double v = std::stod(field, &used);
    if (used != field.size() || !std::isfinite(v)) throw std::invalid_argument(field);
    return v;
  } catch (const std::exception&) {
    throw ParseError("bad number '" + field + "'", lineno);
  }
}

std::string escape_xml(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

double RetrievalMap::accuracy() const {
  if (cells.empty()) return 0.0;
  double sum = 0.0;
  for (const MapCell& c : cells) sum += c.score;
  return sum / (5.0 * static_cast<double>(cells.size()));
}

bool RetrievalMap::operator==(const RetrievalMap& other) const {
  if (cells.size() != other.cells.size()) return false;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const MapCell& a = cells[i];
    const MapCell& b = other.cells[i];
    if (a.length_tokens != b.length_tokens || a.score != b.score) return false;
    if (std::abs(a.depth_fraction - b.depth_fraction) > 1e-9) return false;
  }
  return true;
}

double depth_percent(double depth_fraction) { return 100.0 * (1.0 - depth_fraction); }

std::string map_to_csv(const RetrievalMap& map) {
  std::string out = "length_tokens,depth_pct,score\n";
  for (const MapCell& c : map.cells) {
    out += std::to_string(c.length_tokens) + "," + num(depth_percent(c.depth_fraction)) + "," + num(c.score) + "\n";
  }
  return out;
}

RetrievalMap parse_map_csv(std::string_view text) {
  RetrievalMap map;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (!header) {
      if (line != "length_tokens,depth_pct,score") throw ParseError("expected header length_tokens,depth_pct,score", lineno);
      header = true;
      continue;
    }
    std::vector<std::string> f;
    std::stringstream row(line);
    std::string field;
    while (std::getline(row, field, ',')) f.push_back(field);
    if (f.size() != 3) throw ParseError("expected 3 fields", lineno);
    const double len = parse_double(f[0], lineno);
    if (len < 1 || len != std::floor(len)) throw ParseError("length must be a positive integer", lineno);
    const double pct = parse_double(f[1], lineno);
    const double score = parse_double(f[2], lineno);
    if (pct < 0 || pct > 100) throw ParseError("depth_pct outside [0, 100]", lineno);
    if (score < 0 || score > 5) throw ParseError("score outside [0, 5]", lineno);
    map.cells.push_back({static_cast<int>(len), 1.0 - pct / 100.0, score});
  }
  if (!header) throw ParseError("empty CSV", lineno);
  return map;
}

std::string render_heatmap_svg(const RetrievalMap& map, std::string_view title) {
  std::vector<int> lengths;
  std::vector<double> depths;
  for (const MapCell& c : map.cells) {
    lengths.push_back(c.length_tokens);
    depths.push_back(depth_percent(c.depth_fraction));
  }
  std::sort(lengths.begin(), lengths.end());
  lengths.erase(std::unique(lengths.begin(), lengths.end()), lengths.end());
  std::sort(depths.begin(), depths.end());
  depths.erase(std::unique(depths.begin(), depths.end(), [](double a, double b) { return std::abs(a - b) < 1e-9; }),
               depths.end());

  const int cell = 40, left = 70, top = 40;
  const int width = left + cell * static_cast<int>(lengths.size()) + 20;
  const int height = top + cell * static_cast<int>(depths.size()) + 50;
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
    << "\" font-family=\"sans-serif\" font-size=\"10\">\n";
  s << "<text x=\"" << left << "\" y=\"20\" font-size=\"13\">" << escape_xml(title) << " accuracy "
    << num(std::round(map.accuracy() * 1000.0) / 10.0) << "%</text>\n";
  for (const MapCell& c : map.cells) {
    const auto xi = std::lower_bound(lengths.begin(), lengths.end(), c.length_tokens) - lengths.begin();
    const double pct = depth_percent(c.depth_fraction);
    const auto yi = std::lower_bound(depths.begin(), depths.end(), pct - 1e-9) - depths.begin();
    const double t = std::clamp(c.score / 5.0, 0.0, 1.0);
    const int r = static_cast<int>(std::lround(215.0 * (1.0 - t) + 26.0 * t));
    const int g = static_cast<int>(std::lround(48.0 * (1.0 - t) + 150.0 * t));
    const int b = static_cast<int>(std::lround(39.0 * (1.0 - t) + 65.0 * t));
    s << "<rect x=\"" << left + cell * xi << "\" y=\"" << top + cell * yi << "\" width=\"" << cell << "\" height=\""
      << cell << "\" fill=\"rgb(" << r << "," << g << "," << b << ")\"><title>" << c.length_tokens << " tokens, "
      << num(pct) << "%: " << num(c.score) << "</title></rect>\n";
  }
  for (std::size_t i = 0; i < lengths.size(); ++i) {
    s << "<text x=\"" << left + cell * static_cast<int>(i) + cell / 2 << "\" y=\""
      << top + cell * static_cast<int>(depths.size()) + 14 << "\" text-anchor=\"middle\">" << lengths[i] << "</text>\n";
  }
  for (std::size_t i = 0; i < depths.size(); ++i) {
    s << "<text x=\"" << left - 6 << "\" y=\"" << top + cell * static_cast<int>(i) + cell / 2 + 4
      << "\" text-anchor=\"end\">" << num(std::round(depths[i] * 10.0) / 10.0) << "%</text>\n";
  }
  s << "<text x=\"" << left + cell * static_cast<int>(lengths.size()) / 2 << "\" y=\"" << height - 12
    << "\" text-anchor=\"middle\">context length (tokens)</text>\n";
  s << "</svg>\n";
  return s.str();
}

void render_heatmap(const RetrievalMap& map, const std::string& path, std::string_view title) {
  write_text_file(path, render_heatmap_svg(map, title));
}

void write_text_file(const std::string& path, std::string_view text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + path);
  f.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!f) throw IoError("failed writing " + path);
}

std::string read_text_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read " + path);
  return std::string(std::istreambuf_iterator<char>(f), {});
}

}  // namespace hybridscope
