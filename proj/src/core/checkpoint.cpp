#include "gmtl/checkpoint.hpp"

#include <array>
#include <fstream>

#include "binio.hpp"
#include "gmtl/error.hpp"

namespace gmtl {

namespace {
constexpr std::array<char, 8> kMagic = {'G', 'M', 'T', 'L', 'C', 'K', 'P', 'T'};
}

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorCode::kIo, "cannot open checkpoint for writing: " + path);
  out.write(kMagic.data(), kMagic.size());
  binio::put(out, kCheckpointVersion);
  binio::put(out, static_cast<std::uint64_t>(checkpoint.meta_json.size()));
  out.write(checkpoint.meta_json.data(), static_cast<std::streamsize>(checkpoint.meta_json.size()));
  binio::put(out, static_cast<std::uint32_t>(checkpoint.tensors.size()));
  for (const auto& [name, tensor] : checkpoint.tensors) {
    binio::put_string(out, name);
    binio::put(out, static_cast<std::uint32_t>(tensor.rank()));
    for (std::size_t extent : tensor.shape()) binio::put(out, static_cast<std::uint64_t>(extent));
    binio::put(out, static_cast<std::uint8_t>(tensor.frozen() ? 1 : 0));
    for (double v : tensor.data()) binio::put_f64(out, v);
  }
  require(static_cast<bool>(out), ErrorCode::kIo, "failed writing checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::kNotFound, "checkpoint not found: " + path);
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  require(static_cast<bool>(in) && magic == kMagic, ErrorCode::kFormat,
          "not a checkpoint file: " + path);
  const auto version = binio::get<std::uint32_t>(in, "checkpoint version");
  require(version == kCheckpointVersion, ErrorCode::kSchemaVersion,
          "checkpoint version " + std::to_string(version) + " unsupported (expected " +
              std::to_string(kCheckpointVersion) + ")");
  Checkpoint ckpt;
  const auto meta_len = binio::get<std::uint64_t>(in, "metadata length");
  require(meta_len < (1ull << 30), ErrorCode::kFormat, "implausible checkpoint metadata length");
  ckpt.meta_json.resize(meta_len);
  in.read(ckpt.meta_json.data(), static_cast<std::streamsize>(meta_len));
  require(static_cast<bool>(in), ErrorCode::kFormat, "truncated checkpoint metadata");
  const auto count = binio::get<std::uint32_t>(in, "tensor count");
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor entry;
    entry.name = binio::get_string(in, "tensor name");
    const auto rank = binio::get<std::uint32_t>(in, "tensor rank");
    require(rank >= 1 && rank <= 8, ErrorCode::kFormat, "bad tensor rank in checkpoint");
    Shape shape(rank);
    for (auto& extent : shape) extent = binio::get<std::uint64_t>(in, "tensor dims");
    const auto flags = binio::get<std::uint8_t>(in, "tensor flags");
    std::vector<double> values(shape_numel(shape));
    for (double& v : values) v = binio::get_f64(in, "tensor data");
    entry.tensor = Tensor::from(std::move(shape), std::move(values));
    entry.tensor.set_frozen((flags & 1u) != 0);
    ckpt.tensors.push_back(std::move(entry));
  }
  return ckpt;
}

}  // namespace gmtl
