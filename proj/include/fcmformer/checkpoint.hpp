#pragma once

// Checkpoint container for trained models.
//
// Layout (all integers little-endian):
//   magic "FCMF"
//   u16  format version (currently 1)
//   u32  config block length, then that many bytes of key=value lines
//   per parameter, in ModelParams::named_parameters() order:
//     u32 name length, name bytes
//     u32 rank, u32 extent per axis
//     f32 values, little-endian, row-major
// No trailing bytes.

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "fcmformer/errors.hpp"
#include "fcmformer/model.hpp"

namespace fcmformer {

inline constexpr std::uint16_t kCheckpointVersion = 1;

namespace detail {

inline void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_f32(std::vector<std::uint8_t>& out, float v) {
  put_u32(out, std::bit_cast<std::uint32_t>(v));
}

struct ByteReader {
  const std::vector<std::uint8_t>& bytes;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > bytes.size()) {
      throw CheckpointError("checkpoint truncated at byte " + std::to_string(pos));
    }
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = static_cast<std::uint16_t>(bytes[pos] | (bytes[pos + 1] << 8));
    pos += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(bytes[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes.data()) + pos, n);
    pos += n;
    return s;
  }
};

}  // namespace detail

inline std::string checkpoint_config_text(const ModelConfig& cfg) {
  std::ostringstream os;
  os << "n_features=" << cfg.n_features << '\n'
     << "dim=" << cfg.dim << '\n'
     << "n_inducing=" << cfg.n_inducing << '\n'
     << "n_heads=" << cfg.n_heads << '\n'
     << "n_layers=" << cfg.n_layers << '\n'
     << "n_classes=" << cfg.n_classes << '\n'
     << "readout=" << readout_name(cfg.readout) << '\n'
     << "subsample_cap="
     << (cfg.subsample_cap ? std::to_string(*cfg.subsample_cap) : std::string("none")) << '\n'
     << "seed=" << cfg.seed << '\n';
  return os.str();
}

inline ModelConfig parse_checkpoint_config(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw CheckpointError("checkpoint config: malformed line '" + line + "'");
    }
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto get = [&kv](const std::string& key) -> std::string {
    auto it = kv.find(key);
    if (it == kv.end()) throw CheckpointError("checkpoint config: missing key " + key);
    return it->second;
  };
  ModelConfig cfg;
  cfg.n_features = std::stoull(get("n_features"));
  cfg.dim = std::stoull(get("dim"));
  cfg.n_inducing = std::stoull(get("n_inducing"));
  cfg.n_heads = std::stoull(get("n_heads"));
  cfg.n_layers = std::stoull(get("n_layers"));
  cfg.n_classes = std::stoull(get("n_classes"));
  const std::string readout = get("readout");
  const auto r = readout_from_name(readout);
  if (!r) throw CheckpointError("checkpoint config: unknown readout '" + readout + "'");
  cfg.readout = *r;
  const std::string cap = get("subsample_cap");
  cfg.subsample_cap =
      cap == "none" ? std::nullopt : std::optional<std::size_t>(std::stoull(cap));
  cfg.seed = std::stoull(get("seed"));
  cfg.validate();
  return cfg;
}

inline std::vector<std::uint8_t> serialize_checkpoint(const ModelParams<float>& params) {
  std::vector<std::uint8_t> out;
  out.insert(out.end(), {'F', 'C', 'M', 'F'});
  detail::put_u16(out, kCheckpointVersion);
  const std::string cfg = checkpoint_config_text(params.config);
  detail::put_u32(out, static_cast<std::uint32_t>(cfg.size()));
  out.insert(out.end(), cfg.begin(), cfg.end());
  for (const auto& np : params.named_parameters()) {
    detail::put_u32(out, static_cast<std::uint32_t>(np.name.size()));
    out.insert(out.end(), np.name.begin(), np.name.end());
    detail::put_u32(out, static_cast<std::uint32_t>(np.tensor.rank()));
    for (std::size_t e : np.tensor.shape()) {
      detail::put_u32(out, static_cast<std::uint32_t>(e));
    }
    for (float v : np.tensor.values()) detail::put_f32(out, v);
  }
  return out;
}

inline ModelParams<float> deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
  detail::ByteReader r{bytes};
  if (r.str(4) != "FCMF") {
    throw CheckpointError("not a model checkpoint (bad magic)");
  }
  const std::uint16_t version = r.u16();
  if (version != kCheckpointVersion) {
    throw CheckpointError("incompatible checkpoint format version " + std::to_string(version) +
                          " (supported: " + std::to_string(kCheckpointVersion) + ")");
  }
  const std::uint32_t cfg_len = r.u32();
  const ModelConfig cfg = parse_checkpoint_config(r.str(cfg_len));
  ModelParams<float> params = ModelParams<float>::init(cfg);
  for (auto& np : params.named_parameters()) {
    const std::uint32_t name_len = r.u32();
    const std::string name = r.str(name_len);
    if (name != np.name) {
      throw CheckpointError("checkpoint parameter order mismatch: expected '" + np.name +
                            "', found '" + name + "'");
    }
    const std::uint32_t rank = r.u32();
    Shape shape(rank);
    for (auto& e : shape) e = r.u32();
    if (shape != np.tensor.shape()) {
      throw CheckpointError("checkpoint shape mismatch for '" + name + "': expected " +
                            shape_to_string(np.tensor.shape()) + ", found " +
                            shape_to_string(shape));
    }
    Tensor<float> t = np.tensor;
    for (float& v : t.values()) v = r.f32();
  }
  if (r.pos != bytes.size()) {
    throw CheckpointError("checkpoint holds " + std::to_string(bytes.size() - r.pos) +
                          " trailing bytes");
  }
  return params;
}

inline void save_checkpoint(const std::filesystem::path& path, const ModelParams<float>& params) {
  const std::vector<std::uint8_t> bytes = serialize_checkpoint(params);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("short write to '" + path.string() + "'");
}

inline ModelParams<float> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

}  // namespace fcmformer
