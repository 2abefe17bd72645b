#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "m2slt/numkit.hpp"

namespace m2slt {

// Named tensors in the `M2SW` layout:
//   "M2SW", u32 count, then per tensor
//   u16 name length, name bytes, u32 rows, u32 cols, rows*cols f32 (little-endian).
// Values are narrowed to f32 on write.
struct Checkpoint {
  std::vector<std::pair<std::string, Matrix>> tensors;

  void put(const std::string& name, const Matrix& m);
  const Matrix* find(const std::string& name) const;
  // Throws ConfigError if the tensor is missing or its shape differs.
  const Matrix& require(const std::string& name, std::size_t rows, std::size_t cols) const;
};

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

Checkpoint checkpoint_from_params(const ParamList& params);
// Copies every registered parameter from the checkpoint, checking shapes.
void load_params(const Checkpoint& ckpt, const ParamList& params);

}  // namespace m2slt
