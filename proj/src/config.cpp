#include "hybridscope/config.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

#include "hybridscope/error.hpp"

namespace hybridscope {
namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

int parse_int(std::string_view value, std::size_t line) {
  int out = 0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw ParseError("config: expected integer, got '" + std::string(value) + "'", line);
  }
  return out;
}

bool parse_bool(std::string_view value, std::size_t line) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ParseError("config: expected true/false, got '" + std::string(value) + "'", line);
}

}  // namespace

void ModelConfig::validate() const {
  if (vocab_size < 1) throw InvalidInput("vocab_size must be positive");
  if (n_heads < 1 || head_dim < 1) throw InvalidInput("n_heads and head_dim must be positive");
  if (n_heads * head_dim != d_model) throw InvalidInput("n_heads * head_dim must equal d_model");
  if (window && *window < 1) throw InvalidInput("window must be at least 1");
  if (layer_pattern.kinds.empty()) throw InvalidInput("layer pattern is empty");
  if (layer_pattern.attention_indices().empty()) {
    throw InvalidInput("layer pattern needs at least one attention layer");
  }
  if (max_seq_len < 1) throw InvalidInput("max_seq_len must be positive");
}

ModelConfig parse_model_config(std::string_view text) {
  std::map<std::string, std::pair<std::string, std::size_t>> entries;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    ++line_no;
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError("config: expected key = value", line_no);
    std::string key(trim(line.substr(0, eq)));
    std::string value(trim(line.substr(eq + 1)));
    if (!entries.emplace(key, std::make_pair(value, line_no)).second) {
      throw ParseError("config: duplicate key '" + key + "'", line_no);
    }
  }

  static const char* kKeys[] = {"vocab_size", "d_model",      "n_heads",      "head_dim",
                                "window",     "layer_pattern", "use_kv_cache", "max_seq_len"};
  for (const auto& [key, value] : entries) {
    bool known = false;
    for (const char* k : kKeys) known = known || key == k;
    if (!known) throw ParseError("config: unknown key '" + key + "'", value.second);
  }
  for (const char* k : kKeys) {
    if (!entries.count(k)) throw ParseError(std::string("config: missing key '") + k + "'", line_no);
  }

  auto get = [&](const char* k) -> const std::pair<std::string, std::size_t>& { return entries.at(k); };
  ModelConfig c;
  c.vocab_size = parse_int(get("vocab_size").first, get("vocab_size").second);
  c.d_model = parse_int(get("d_model").first, get("d_model").second);
  c.n_heads = parse_int(get("n_heads").first, get("n_heads").second);
  c.head_dim = parse_int(get("head_dim").first, get("head_dim").second);
  const auto& window = get("window");
  if (window.first != "global") c.window = parse_int(window.first, window.second);
  c.layer_pattern_spec = get("layer_pattern").first;
  try {
    c.layer_pattern = parse_layer_pattern(c.layer_pattern_spec);
  } catch (const ParseError& e) {
    throw ParseError(std::string("config: ") + e.what(), get("layer_pattern").second);
  }
  c.use_kv_cache = parse_bool(get("use_kv_cache").first, get("use_kv_cache").second);
  c.max_seq_len = parse_int(get("max_seq_len").first, get("max_seq_len").second);
  try {
    c.validate();
  } catch (const InvalidInput& e) {
    throw ParseError(std::string("config: ") + e.what(), 0);
  }
  return c;
}

ModelConfig load_model_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read model config " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_model_config(buf.str());
}

std::string format_model_config(const ModelConfig& c) {
  std::ostringstream out;
  out << "vocab_size = " << c.vocab_size << '\n'
      << "d_model = " << c.d_model << '\n'
      << "n_heads = " << c.n_heads << '\n'
      << "head_dim = " << c.head_dim << '\n'
      << "window = " << (c.window ? std::to_string(*c.window) : std::string("global")) << '\n'
      << "layer_pattern = " << c.layer_pattern_spec << '\n'
      << "use_kv_cache = " << (c.use_kv_cache ? "true" : "false") << '\n'
      << "max_seq_len = " << c.max_seq_len << '\n';
  return out.str();
}

ModelConfig make_config(int vocab_size, int n_heads, int head_dim, std::optional<int> window,
                        std::string_view pattern, bool use_kv_cache, int max_seq_len) {
  ModelConfig c;
  c.vocab_size = vocab_size;
  c.n_heads = n_heads;
  c.head_dim = head_dim;
  c.d_model = n_heads * head_dim;
  c.window = window;
  c.layer_pattern_spec = std::string(pattern);
  c.layer_pattern = parse_layer_pattern(pattern);
  c.use_kv_cache = use_kv_cache;
  c.max_seq_len = max_seq_len;
  c.validate();
  return c;
}

ModelConfig rg2b_toy_config() {
  return make_config(64, 10, 8, 64, "(2S,1A)x8,2S", true, 1024);
}

ModelConfig jamba_toy_config() {
  return make_config(64, 32, 4, std::nullopt, "(3S,1A,4S)x4", false, 1024);
}

}  // namespace hybridscope
