#include "hybridscope/weights_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <optional>
#include <sstream>

#include "hybridscope/config.hpp"
#include "hybridscope/error.hpp"

static_assert(std::endian::native == std::endian::little, "weight files assume a little-endian host");

namespace hybridscope {
namespace {

constexpr char kMagic[4] = {'H', 'Y', 'P', 'M'};

struct Tensor {
  std::vector<std::uint64_t> dims;
  std::vector<double> data;
};

template <typename T>
void put(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

void put_tensor(std::string& out, const std::string& name, std::vector<std::uint64_t> dims, const double* data) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
  out += name;
  put<std::uint32_t>(out, static_cast<std::uint32_t>(dims.size()));
  std::uint64_t count = 1;
  for (std::uint64_t d : dims) {
    put<std::uint64_t>(out, d);
    count *= d;
  }
  out.append(reinterpret_cast<const char*>(data), count * sizeof(double));
}

void put_matrix(std::string& out, const std::string& name, const Eigen::MatrixXd& m) {
  const RowMatrix rm = m;
  put_tensor(out, name, {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())}, rm.data());
}

class Reader {
 public:
  explicit Reader(std::string bytes) : bytes_(std::move(bytes)) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }
  std::string get_bytes(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (remaining() < n) throw FormatError("weight file truncated at byte " + std::to_string(pos_));
  }
  std::string bytes_;
  std::size_t pos_ = 0;
};

std::map<std::string, Tensor> read_table(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open weight file: " + path);
  Reader r(std::string(std::istreambuf_iterator<char>(in), {}));
  if (r.get_bytes(4) != std::string(kMagic, 4)) throw FormatError("bad magic in " + path);
  const auto version = r.get<std::uint32_t>();
  if (version != kWeightFileVersion) throw FormatError("unsupported weight file version " + std::to_string(version));
  const auto count = r.get<std::uint32_t>();
  if (count == 0) throw FormatError("weight file has no tensors");
  std::map<std::string, Tensor> table;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = r.get<std::uint32_t>();
    std::string name = r.get_bytes(name_len);
    const auto rank = r.get<std::uint32_t>();
    if (rank > 2) throw FormatError(name + ": rank " + std::to_string(rank) + " not supported");
    Tensor t;
    std::uint64_t n = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      t.dims.push_back(r.get<std::uint64_t>());
      if (t.dims.back() == 0) throw FormatError(name + ": zero-sized dimension");
      if (t.dims.back() > r.remaining() / sizeof(double) / n + 1) throw FormatError(name + ": shape exceeds file size");
      n *= t.dims.back();
    }
    if (n > r.remaining() / sizeof(double)) throw FormatError("weight file truncated in tensor " + name);
    t.data.resize(n);
    const std::string raw = r.get_bytes(n * sizeof(double));
    std::memcpy(t.data.data(), raw.data(), raw.size());
    if (!table.emplace(name, std::move(t)).second) throw FormatError("duplicate tensor " + name);
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes after tensor table");
  return table;
}

const Tensor& take(const std::map<std::string, Tensor>& table, const std::string& name) {
  auto it = table.find(name);
  if (it == table.end()) throw FormatError("missing tensor " + name);
  return it->second;
}

Eigen::MatrixXd as_matrix(const Tensor& t, const std::string& name) {
  if (t.dims.size() != 2) throw FormatError(name + ": expected a matrix");
  const auto rows = static_cast<Eigen::Index>(t.dims[0]);
  const auto cols = static_cast<Eigen::Index>(t.dims[1]);
  return Eigen::Map<const RowMatrix>(t.data.data(), rows, cols);
}

Eigen::VectorXd as_vector(const Tensor& t, const std::string& name) {
  if (t.dims.size() != 1) throw FormatError(name + ": expected a vector");
  return Eigen::Map<const Eigen::VectorXd>(t.data.data(), static_cast<Eigen::Index>(t.dims[0]));
}

double as_scalar(const Tensor& t, const std::string& name) {
  if (!t.dims.empty()) throw FormatError(name + ": expected a scalar");
  return t.data.at(0);
}

std::string layer_name(std::size_t i, const char* rest) { return "layers." + std::to_string(i) + "." + rest; }

std::string pattern_spec(const std::vector<LayerKind>& kinds) {
  std::ostringstream s;
  for (std::size_t i = 0; i < kinds.size();) {
    std::size_t j = i;
    while (j < kinds.size() && kinds[j] == kinds[i]) ++j;
    if (i) s << ',';
    s << (j - i) << (kinds[i] == LayerKind::kSsm ? 'S' : 'A');
    i = j;
  }
  return s.str();
}

ModelConfig infer_config(const std::map<std::string, Tensor>& table) {
  const Eigen::MatrixXd embed = as_matrix(take(table, "embed"), "embed");
  std::vector<LayerKind> kinds;
  std::optional<Eigen::Index> heads, max_len;
  for (std::size_t i = 0;; ++i) {
    const bool ssm = table.count(layer_name(i, "ssm.decay")) > 0;
    const bool attn = table.count(layer_name(i, "attn.rel_bias")) > 0;
    if (!ssm && !attn) break;
    if (ssm && attn) throw FormatError("layer " + std::to_string(i) + " is both ssm and attention");
    kinds.push_back(ssm ? LayerKind::kSsm : LayerKind::kAttention);
    if (attn && !heads) {
      const Tensor& rb = take(table, layer_name(i, "attn.rel_bias"));
      if (rb.dims.size() != 2) throw FormatError("rel_bias must be a matrix");
      heads = static_cast<Eigen::Index>(rb.dims[0]);
      max_len = static_cast<Eigen::Index>(rb.dims[1]);
    }
  }
  if (kinds.empty() || !heads) throw FormatError("weight file has no attention layer");
  if (embed.cols() % *heads != 0) throw FormatError("d_model is not a multiple of the head count");
  const double window = as_scalar(take(table, "meta.window"), "meta.window");
  const double kv = as_scalar(take(table, "meta.use_kv_cache"), "meta.use_kv_cache");
  try {
    return make_config(static_cast<int>(embed.rows()), static_cast<int>(*heads),
                       static_cast<int>(embed.cols() / *heads),
                       window < 0 ? std::nullopt : std::optional<int>(static_cast<int>(window)),
                       pattern_spec(kinds), kv != 0.0, static_cast<int>(*max_len));
  } catch (const InvalidInput& e) {
    throw FormatError(std::string("inconsistent weight file: ") + e.what());
  }
}

HybridModel build(const std::map<std::string, Tensor>& table, const ModelConfig& config) {
  std::size_t expected = 4 + config.layer_pattern.size();
  ModelWeights w;
  w.embed = as_matrix(take(table, "embed"), "embed");
  w.unembed = as_matrix(take(table, "unembed"), "unembed");
  for (std::size_t i = 0; i < config.layer_pattern.size(); ++i) {
    LayerWeights lw;
    lw.kind = config.layer_pattern.kinds[i];
    if (lw.kind == LayerKind::kSsm) {
      lw.ssm.decay = as_vector(take(table, layer_name(i, "ssm.decay")), layer_name(i, "ssm.decay"));
      lw.ssm.w_in = as_matrix(take(table, layer_name(i, "ssm.w_in")), layer_name(i, "ssm.w_in"));
      lw.ssm.w_out = as_matrix(take(table, layer_name(i, "ssm.w_out")), layer_name(i, "ssm.w_out"));
      expected += 2;
    } else {
      lw.attn.w_q = as_matrix(take(table, layer_name(i, "attn.w_q")), layer_name(i, "attn.w_q"));
      lw.attn.w_k = as_matrix(take(table, layer_name(i, "attn.w_k")), layer_name(i, "attn.w_k"));
      lw.attn.w_v = as_matrix(take(table, layer_name(i, "attn.w_v")), layer_name(i, "attn.w_v"));
      lw.attn.w_o = as_matrix(take(table, layer_name(i, "attn.w_o")), layer_name(i, "attn.w_o"));
      lw.attn.rel_bias = as_matrix(take(table, layer_name(i, "attn.rel_bias")), layer_name(i, "attn.rel_bias"));
      expected += 4;
    }
    w.layers.push_back(std::move(lw));
  }
  if (table.size() != expected) throw FormatError("unexpected tensors in weight file");
  try {
    return HybridModel(config, w);
  } catch (const InvalidInput& e) {
    throw FormatError(std::string("shape table does not match config: ") + e.what());
  }
}

}  // namespace

void save_weights(const HybridModel& model, const std::string& path) {
  const ModelConfig& cfg = model.config();
  const ModelWeights w = model.export_weights();
  std::uint32_t count = 4;
  std::string body;
  put_matrix(body, "embed", w.embed);
  put_matrix(body, "unembed", w.unembed);
  for (std::size_t i = 0; i < w.layers.size(); ++i) {
    const LayerWeights& lw = w.layers[i];
    if (lw.kind == LayerKind::kSsm) {
      put_tensor(body, layer_name(i, "ssm.decay"), {static_cast<std::uint64_t>(lw.ssm.decay.size())},
                 lw.ssm.decay.data());
      put_matrix(body, layer_name(i, "ssm.w_in"), lw.ssm.w_in);
      put_matrix(body, layer_name(i, "ssm.w_out"), lw.ssm.w_out);
      count += 3;
    } else {
      put_matrix(body, layer_name(i, "attn.w_q"), lw.attn.w_q);
      put_matrix(body, layer_name(i, "attn.w_k"), lw.attn.w_k);
      put_matrix(body, layer_name(i, "attn.w_v"), lw.attn.w_v);
      put_matrix(body, layer_name(i, "attn.w_o"), lw.attn.w_o);
      put_matrix(body, layer_name(i, "attn.rel_bias"), lw.attn.rel_bias);
      count += 5;
    }
  }
  const double window = cfg.window ? static_cast<double>(*cfg.window) : -1.0;
  const double kv = cfg.use_kv_cache ? 1.0 : 0.0;
  put_tensor(body, "meta.window", {}, &window);
  put_tensor(body, "meta.use_kv_cache", {}, &kv);

  std::string out(kMagic, 4);
  put<std::uint32_t>(out, kWeightFileVersion);
  put<std::uint32_t>(out, count);
  out += body;
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write weight file: " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("failed writing weight file: " + path);
}

HybridModel load_weights(const std::string& path) {
  const auto table = read_table(path);
  return build(table, infer_config(table));
}

HybridModel load_weights(const std::string& path, const ModelConfig& config) {
  config.validate();
  return build(read_table(path), config);
}

}  // namespace hybridscope
