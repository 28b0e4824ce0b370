#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "gmtl/tensor.hpp"

namespace gmtl {

class Rng;

// One unordered set of item feature vectors, stored row-major.
struct Gallery {
  std::size_t dim = 0;
  std::vector<double> items;

  std::size_t length() const { return dim == 0 ? 0 : items.size() / dim; }
  std::span<const double> item(std::size_t i) const {
    return std::span<const double>(items).subspan(i * dim, dim);
  }
};

// Galleries padded to the longest member. items is [B, N_max, item_dim],
// mask is [B, N_max] with 1 for real items; padded slots hold zeros.
struct GalleryBatch {
  Tensor items;
  Tensor mask;
  std::vector<std::size_t> lengths;

  std::size_t size() const { return lengths.size(); }
};

GalleryBatch make_batch(std::span<const Gallery* const> galleries);
GalleryBatch make_batch(std::span<const Gallery> galleries);

struct EncoderConfig {
  std::size_t item_dim = 0;
  std::vector<std::size_t> hidden_dims;  // per-item layer widths; last is the embedding
  std::size_t embed_dim = 0;
  std::size_t frozen_prefix = 0;

  void validate() const;
};

// Fully-connected layer: y = x W + b with W stored [in, out].
struct DenseLayer {
  Tensor weight;
  Tensor bias;

  std::size_t in_dim() const { return weight.dim(0); }
  std::size_t out_dim() const { return weight.dim(1); }
  std::size_t parameter_count() const { return weight.numel() + bias.numel(); }
  Tensor forward(const Tensor& x) const { return ops::add_bias(ops::matmul(x, weight), bias); }
};

// He-style uniform fan-in initialization: W ~ U(-sqrt(6/in), sqrt(6/in)), b = 0.
DenseLayer make_dense(std::size_t in, std::size_t out, Rng& rng);

// Shared per-item MLP (ReLU after every layer) followed by masked mean pooling.
class Encoder {
 public:
  Encoder(EncoderConfig config, std::uint64_t seed);
  Encoder(EncoderConfig config, std::vector<DenseLayer> layers);

  const EncoderConfig& config() const { return config_; }
  std::size_t layer_count() const { return layers_.size(); }
  std::vector<DenseLayer>& layers() { return layers_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }

  // [n, item_dim] -> [n, embed_dim]
  Tensor encode_items(const Tensor& items) const;
  // [B, embed_dim]; row b is the mean of encode_items over gallery b's real items.
  Tensor encode(const GalleryBatch& batch) const;

  // Marks the first k layers frozen (the rest trainable); returns the
  // resulting trainable parameter count.
  std::size_t set_frozen_prefix(std::size_t k);
  std::size_t trainable_parameter_count() const;
  std::size_t parameter_count() const;

  // weight, bias per layer in order.
  std::vector<Tensor> parameters() const;

  Encoder clone() const;

 private:
  EncoderConfig config_;
  std::vector<DenseLayer> layers_;
};

inline Tensor encode_gallery(const GalleryBatch& batch, const Encoder& encoder) {
  return encoder.encode(batch);
}

}  // namespace gmtl
