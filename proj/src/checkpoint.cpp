#include "murax/checkpoint.h"

#include <zlib.h>

#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

using nlohmann::json;

namespace murax {

namespace {

constexpr char kMagic[4] = {'M', 'U', 'R', 'X'};
constexpr uint32_t kVersion = 1;

void put_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<char*>(b), 4);
}

uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

json config_to_json(const DenseNetConfig& c) {
  return {{"block_layers", c.block_layers},
          {"growth_rate", c.growth_rate},
          {"init_features", c.init_features},
          {"compression", c.compression},
          {"bottleneck", c.bottleneck},
          {"input_side", c.input_side},
          {"stem", c.stem == StemKind::Full ? "full" : "tiny"}};
}

DenseNetConfig config_from_json(const json& j) {
  DenseNetConfig c;
  c.block_layers = j.at("block_layers").get<std::vector<int>>();
  c.growth_rate = j.at("growth_rate");
  c.init_features = j.at("init_features");
  c.compression = j.at("compression");
  c.bottleneck = j.at("bottleneck");
  c.input_side = j.at("input_side");
  c.stem = j.at("stem") == "full" ? StemKind::Full : StemKind::Tiny;
  return c;
}

}  // namespace

void save_checkpoint(const ModelParams& params, const std::string& path) {
  json header;
  header["config"] = config_to_json(params.config);
  header["manifest"] = json::array();
  uint64_t offset = 0;
  for (const auto& name : params.order) {
    const Tensor<float>& t = params.at(name);
    header["manifest"].push_back({{"name", name},
                                  {"shape", t.shape()},
                                  {"offset", offset},
                                  {"count", t.size()}});
    offset += static_cast<uint64_t>(t.size()) * sizeof(float);
  }
  const std::string hs = header.dump();

  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write checkpoint: " + path);
  os.write(kMagic, 4);
  put_u32(os, kVersion);
  put_u32(os, static_cast<uint32_t>(hs.size()));
  os.write(hs.data(), static_cast<std::streamsize>(hs.size()));

  uLong crc = crc32(0L, Z_NULL, 0);
  for (const auto& name : params.order) {
    const Tensor<float>& t = params.at(name);
    // little-endian host assumed; asserted at configure time for x86-64
    os.write(reinterpret_cast<const char*>(t.data()),
             static_cast<std::streamsize>(t.size() * sizeof(float)));
    crc = crc32(crc, reinterpret_cast<const Bytef*>(t.data()),
                static_cast<uInt>(t.size() * sizeof(float)));
  }
  put_u32(os, static_cast<uint32_t>(crc));
  if (!os) throw std::runtime_error("write failed: " + path);
}

ModelParams load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("not a checkpoint file (bad magic): " + path);
  const uint32_t version = get_u32(is);
  if (version != kVersion)
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version) +
                             " in " + path);
  const uint32_t header_len = get_u32(is);
  std::string hs(header_len, '\0');
  is.read(hs.data(), header_len);
  if (!is) throw std::runtime_error("truncated checkpoint header: " + path);
  json header = json::parse(hs);

  ModelParams params;
  params.config = config_from_json(header.at("config"));

  uLong crc = crc32(0L, Z_NULL, 0);
  for (const auto& entry : header.at("manifest")) {
    const std::string name = entry.at("name");
    const std::vector<int> shape = entry.at("shape").get<std::vector<int>>();
    const int64_t count = entry.at("count");
    Tensor<float> t = Tensor<float>::zeros(shape);
    if (t.size() != count)
      throw std::runtime_error("manifest count mismatch for " + name + " in " + path);
    is.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(count * sizeof(float)));
    if (!is) throw std::runtime_error("truncated checkpoint payload at " + name + ": " + path);
    crc = crc32(crc, reinterpret_cast<const Bytef*>(t.data()),
                static_cast<uInt>(count * sizeof(float)));
    params.order.push_back(name);
    params.tensors.emplace(name, std::move(t));
  }
  const uint32_t stored_crc = get_u32(is);
  if (!is) throw std::runtime_error("missing checkpoint CRC: " + path);
  if (stored_crc != static_cast<uint32_t>(crc))
    throw std::runtime_error("checkpoint CRC mismatch (corrupted file): " + path);
  return params;
}

}  // namespace murax
