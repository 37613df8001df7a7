#pragma once

// Versioned binary checkpoint.
//
//   offset 0   8 bytes   magic "GLGATCKP"
//   offset 8   u32 LE    format version (currently 1)
//   offset 12  u64 LE    header length L in bytes
//   offset 20  L bytes   UTF-8 JSON header:
//                          {"meta": {...}, "tensors": [{"name", "shape"}, ...]}
//   then                 every tensor's values as IEEE-754 binary64 LE, in
//                        header order, row-major, no padding
//
// The header is written with sorted keys so identical checkpoints are
// byte-identical.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "glgat/tensor.hpp"

namespace glgat {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointTensor {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

struct Checkpoint {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<CheckpointTensor> tensors;

  const CheckpointTensor& get(const std::string& name) const;
  bool contains(const std::string& name) const;
};

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::string& bytes);

void write_checkpoint(const std::filesystem::path& file, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& file);

}  // namespace glgat
