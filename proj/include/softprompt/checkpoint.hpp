#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "softprompt/errors.hpp"
#include "softprompt/matrix.hpp"

namespace softprompt {

// Checkpoint container: an 8-byte magic, a JSON header (format, version,
// kind, model config, tensor manifest), then raw little-endian float32 tensor
// data in manifest order. Both the language model and the prompt agent use
// this container with a different "kind".
namespace checkpoint {

inline constexpr char kMagic[8] = {'S', 'P', 'C', 'K', 'P', 'T', '0', '1'};
inline constexpr int kVersion = 1;

inline void write_u32_le(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline uint32_t read_u32_le(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

inline void write_f32_le(std::ostream& os, float f) {
  uint32_t v;
  std::memcpy(&v, &f, 4);
  write_u32_le(os, v);
}

inline float read_f32_le(std::istream& is) {
  const uint32_t v = read_u32_le(is);
  float f;
  std::memcpy(&f, &v, 4);
  return f;
}

template <class R>
void save(const std::string& path, const std::string& kind, const nlohmann::json& config,
          const std::vector<std::pair<std::string, const Matrix<R>*>>& tensors) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open checkpoint for writing: " + path);

  nlohmann::json header;
  header["format"] = "softprompt.checkpoint";
  header["version"] = kVersion;
  header["kind"] = kind;
  header["config"] = config;
  nlohmann::json manifest = nlohmann::json::array();
  for (const auto& [name, m] : tensors)
    manifest.push_back({{"name", name}, {"rows", m->rows}, {"cols", m->cols}});
  header["tensors"] = manifest;

  const std::string hs = header.dump();
  os.write(kMagic, 8);
  write_u32_le(os, static_cast<uint32_t>(hs.size()));
  os.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (const auto& [name, m] : tensors) {
    (void)name;
    for (R v : m->data) write_f32_le(os, static_cast<float>(v));
  }
  if (!os) throw IoError("checkpoint write failed: " + path);
}

struct Loaded {
  std::string kind;
  nlohmann::json config;
  std::vector<std::string> order;
  std::map<std::string, Matrix<float>> tensors;
};

inline Loaded load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0)
    throw IoError("not a checkpoint file (bad magic): " + path);
  const uint32_t hlen = read_u32_le(is);
  std::string hs(hlen, '\0');
  is.read(hs.data(), hlen);
  if (!is) throw IoError("truncated checkpoint header: " + path);

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(hs);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("corrupt checkpoint header: ") + e.what());
  }
  if (header.value("format", "") != "softprompt.checkpoint")
    throw IoError("unrecognized checkpoint format: " + path);
  if (header.value("version", -1) != kVersion)
    throw CompatibilityError("unsupported checkpoint version in " + path);

  Loaded out;
  out.kind = header.value("kind", "");
  out.config = header.value("config", nlohmann::json::object());
  for (const auto& t : header.at("tensors")) {
    const std::string name = t.at("name").get<std::string>();
    const int rows = t.at("rows").get<int>();
    const int cols = t.at("cols").get<int>();
    Matrix<float> m(rows, cols);
    for (auto& v : m.data) v = read_f32_le(is);
    if (!is) throw IoError("truncated checkpoint tensor data: " + path);
    out.order.push_back(name);
    out.tensors.emplace(name, std::move(m));
  }
  return out;
}

// Copies a loaded float tensor into a destination matrix, checking shape.
template <class R>
void assign_tensor(const Loaded& ck, const std::string& name, Matrix<R>& dst) {
  auto it = ck.tensors.find(name);
  if (it == ck.tensors.end())
    throw CompatibilityError("checkpoint is missing tensor: " + name);
  const Matrix<float>& src = it->second;
  if (src.rows != dst.rows || src.cols != dst.cols)
    throw CompatibilityError("checkpoint tensor shape mismatch for " + name);
  for (size_t i = 0; i < src.data.size(); ++i) dst.data[i] = static_cast<R>(src.data[i]);
}

}  // namespace checkpoint
}  // namespace softprompt
