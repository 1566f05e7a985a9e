#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace hybridscope {

struct MapCell {
  int length_tokens = 0;
  double depth_fraction = 0.0;  // share of the haystack before the needle
  double score = 0.0;           // 0..5
};

/// Scores over a (length, depth) grid.
struct RetrievalMap {
  std::vector<MapCell> cells;

  /// Mean score over the maximum of 5; 0 for an empty map.
  double accuracy() const;
  /// Depth compared within 1e-9, everything else exactly.
  bool operator==(const RetrievalMap& other) const;
};

/// Presentation depth: 100 when the needle opens the haystack, 0 when it
/// closes it.
double depth_percent(double depth_fraction);

/// "length_tokens,depth_pct,score" plus one row per cell.
std::string map_to_csv(const RetrievalMap& map);
/// Throws ParseError with the 1-based line number.
RetrievalMap parse_map_csv(std::string_view text);

/// One rect per cell, lengths along x and depth percent along y; colour
/// runs from red (0) to green (5).
std::string render_heatmap_svg(const RetrievalMap& map, std::string_view title = {});
/// Throws IoError when the file cannot be written.
void render_heatmap(const RetrievalMap& map, const std::string& path, std::string_view title = {});

void write_text_file(const std::string& path, std::string_view text);
std::string read_text_file(const std::string& path);

}  // namespace hybridscope
