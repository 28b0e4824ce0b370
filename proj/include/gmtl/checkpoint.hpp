#pragma once

#include <string>
#include <vector>

#include "gmtl/tensor.hpp"

namespace gmtl {

// Checkpoint byte layout (all integers little-endian):
//
//   magic      8 bytes  "GMTLCKPT"
//   version    u32      kCheckpointVersion
//   meta_len   u64      length of the metadata blob
//   meta       bytes    UTF-8 JSON describing the model configuration
//   count      u32      number of tensors
//   per tensor:
//     name_len u32, name bytes (UTF-8)
//     rank     u32, dims u64 x rank
//     flags    u8       bit 0 = frozen
//     data     f64 x product(dims), IEEE-754 little-endian
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

struct Checkpoint {
  std::string meta_json;
  std::vector<NamedTensor> tensors;
};

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace gmtl
