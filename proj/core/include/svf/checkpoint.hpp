#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "svf/params.hpp"

namespace svf {

// A checkpoint is one file: an 8-byte magic, a u64 little-endian manifest
// length, a JSON manifest, then tightly packed little-endian blobs. Parameter
// values and Adam moments round-trip exactly (f64 bits); extra blobs carry
// non-parameter state such as occupancy bits and per-voxel beta.
struct ExtraBlob {
  std::string name;
  std::string dtype; // "f64" or "u8"
  std::vector<int64_t> shape;
  std::vector<uint8_t> bytes;
};

struct CheckpointMeta {
  int64_t step = 0;
  std::string meta_json; // free-form JSON object serialized as text
};

void save_checkpoint(const std::string& path, const ParameterStore& store,
                     const std::vector<ExtraBlob>& extras, const CheckpointMeta& meta);

// Loads tensors by name into an already-built store (shapes must match).
// Returns meta and the extra blobs keyed by name.
CheckpointMeta load_checkpoint(const std::string& path, ParameterStore& store,
                               std::map<std::string, ExtraBlob>& extras_out);

// Reads only the manifest (cheap format/shape inspection).
std::string read_checkpoint_manifest(const std::string& path);

} // namespace svf
