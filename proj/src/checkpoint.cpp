#include "boolattn/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <set>
#include <stdexcept>

#include <json.hpp>

namespace boolattn {

using nlohmann::json;

namespace {
constexpr std::uint32_t kMagic = 0x4C4F4F42;  // "BOOL"
constexpr std::uint32_t kVersion = 1;
}  // namespace

void save_checkpoint(const std::string& path, const ParamMap& params,
                     const std::map<std::string, std::string>& config) {
  json manifest = json::array();
  std::uint64_t offset = 0;
  std::set<std::string> seen;
  for (const auto& [name, t] : params) {
    if (!seen.insert(name).second)
      throw std::runtime_error("checkpoint: duplicate parameter name '" + name + "'");
    manifest.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}});
    offset += static_cast<std::uint64_t>(t.size()) * sizeof(float);
  }
  json header{{"version", kVersion}, {"config", config}, {"manifest", manifest}};
  std::string header_str = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot write '" + path + "'");
  std::uint64_t header_len = header_str.size();
  out.write(reinterpret_cast<const char*>(&kMagic), sizeof(kMagic));
  out.write(reinterpret_cast<const char*>(&kVersion), sizeof(kVersion));
  out.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
  out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
  for (const auto& [name, t] : params)
    out.write(reinterpret_cast<const char*>(t.data().data()),
              static_cast<std::streamsize>(t.size() * sizeof(float)));
  if (!out) throw std::runtime_error("checkpoint: write failed for '" + path + "'");
}

RawCheckpoint read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open '" + path + "'");
  std::uint32_t magic = 0, version = 0;
  std::uint64_t header_len = 0;
  in.read(reinterpret_cast<char*>(&magic), sizeof(magic));
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  in.read(reinterpret_cast<char*>(&header_len), sizeof(header_len));
  if (!in || magic != kMagic)
    throw std::runtime_error("checkpoint: '" + path + "' is not a checkpoint (bad magic)");
  if (version != kVersion)
    throw std::runtime_error("checkpoint: unsupported format version " + std::to_string(version));
  std::string header_str(header_len, '\0');
  in.read(header_str.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw std::runtime_error("checkpoint: truncated header in '" + path + "'");

  json header = json::parse(header_str);
  RawCheckpoint raw;
  for (auto& [k, v] : header.at("config").items()) raw.config[k] = v.get<std::string>();

  std::uint64_t expected_offset = 0;
  std::set<std::string> seen;
  for (const auto& entry : header.at("manifest")) {
    std::string name = entry.at("name").get<std::string>();
    if (!seen.insert(name).second)
      throw std::runtime_error("checkpoint: corrupt manifest, duplicate name '" + name + "'");
    Shape shape = entry.at("shape").get<Shape>();
    std::uint64_t offset = entry.at("offset").get<std::uint64_t>();
    if (offset != expected_offset)
      throw std::runtime_error("checkpoint: corrupt manifest, offset mismatch at '" + name + "'");
    std::vector<float> data(numel(shape));
    in.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(float)));
    if (!in) throw std::runtime_error("checkpoint: truncated payload at '" + name + "'");
    expected_offset += data.size() * sizeof(float);
    raw.tensors.emplace_back(std::move(name), std::move(shape), std::move(data));
  }
  return raw;
}

void load_into(const RawCheckpoint& raw, ParamMap& params) {
  std::map<std::string, Tensor> by_name;
  for (auto& [name, t] : params) by_name.emplace(name, t);
  for (const auto& [name, shape, data] : raw.tensors) {
    auto it = by_name.find(name);
    if (it == by_name.end())
      throw std::runtime_error("checkpoint: parameter '" + name + "' not present in model");
    if (it->second.shape() != shape)
      throw std::runtime_error("checkpoint: shape mismatch for '" + name + "': model " +
                               shape_str(it->second.shape()) + " vs file " + shape_str(shape));
    it->second.data() = data;
  }
}

ParamMap with_prefix(const std::string& prefix, const ParamMap& params) {
  ParamMap out;
  out.reserve(params.size());
  for (const auto& [name, t] : params) out.emplace_back(prefix + name, t);
  return out;
}

}  // namespace boolattn
