#pragma once

#include <map>
#include <string>

#include "boolattn/modules.hpp"

namespace boolattn {

/// Binary checkpoint: fixed magic + version, a JSON header carrying the
/// config snapshot and a named-parameter manifest (name, shape, byte offset),
/// then the concatenated little-endian float payload. Round-trips are
/// bit-exact.
void save_checkpoint(const std::string& path, const ParamMap& params,
                     const std::map<std::string, std::string>& config);

struct RawCheckpoint {
  std::map<std::string, std::string> config;
  // name -> (shape, data), insertion-ordered
  std::vector<std::tuple<std::string, Shape, std::vector<float>>> tensors;
};

/// Reads and validates a checkpoint; throws on magic/manifest/offset
/// mismatches or duplicate names.
RawCheckpoint read_checkpoint(const std::string& path);

/// Copies raw tensors into an existing parameter map by name; throws on
/// missing names or shape mismatches.
void load_into(const RawCheckpoint& raw, ParamMap& params);

/// Prefixes every name in a parameter map (e.g. "query." / "doc.").
ParamMap with_prefix(const std::string& prefix, const ParamMap& params);

}  // namespace boolattn
