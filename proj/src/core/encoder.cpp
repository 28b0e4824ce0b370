#include "gmtl/encoder.hpp"

#include <algorithm>
#include <cmath>

#include "gmtl/error.hpp"
#include "gmtl/rng.hpp"

namespace gmtl {

GalleryBatch make_batch(std::span<const Gallery* const> galleries) {
  require(!galleries.empty(), ErrorCode::kInvalidArgument, "make_batch: empty batch");
  const std::size_t dim = galleries.front()->dim;
  require(dim > 0, ErrorCode::kInvalidArgument, "make_batch: item dimension is zero");
  std::size_t n_max = 0;
  for (std::size_t b = 0; b < galleries.size(); ++b) {
    const Gallery& g = *galleries[b];
    require(g.dim == dim, ErrorCode::kShape,
            "make_batch: gallery " + std::to_string(b) + " has item dim " + std::to_string(g.dim) +
                ", expected " + std::to_string(dim));
    require(g.items.size() % dim == 0, ErrorCode::kShape, "make_batch: ragged gallery storage");
    require(g.length() >= 1, ErrorCode::kInvalidArgument,
            "make_batch: gallery " + std::to_string(b) + " has zero items");
    n_max = std::max(n_max, g.length());
  }
  const std::size_t batch = galleries.size();
  std::vector<double> items(batch * n_max * dim, 0.0);
  std::vector<double> mask(batch * n_max, 0.0);
  GalleryBatch out;
  out.lengths.reserve(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    const Gallery& g = *galleries[b];
    std::copy(g.items.begin(), g.items.end(), items.begin() + static_cast<std::ptrdiff_t>(b * n_max * dim));
    std::fill_n(mask.begin() + static_cast<std::ptrdiff_t>(b * n_max), g.length(), 1.0);
    out.lengths.push_back(g.length());
  }
  out.items = Tensor::from({batch, n_max, dim}, std::move(items));
  out.mask = Tensor::from({batch, n_max}, std::move(mask));
  return out;
}

GalleryBatch make_batch(std::span<const Gallery> galleries) {
  std::vector<const Gallery*> ptrs;
  ptrs.reserve(galleries.size());
  for (const Gallery& g : galleries) ptrs.push_back(&g);
  return make_batch(std::span<const Gallery* const>(ptrs));
}

void EncoderConfig::validate() const {
  require(item_dim > 0, ErrorCode::kConfig, "encoder: item_dim must be positive");
  require(!hidden_dims.empty(), ErrorCode::kConfig, "encoder: at least one layer is required");
  for (std::size_t w : hidden_dims) require(w > 0, ErrorCode::kConfig, "encoder: layer widths must be positive");
  require(embed_dim == hidden_dims.back(), ErrorCode::kConfig,
          "encoder: embed_dim " + std::to_string(embed_dim) + " must equal the last layer width " +
              std::to_string(hidden_dims.back()));
  require(frozen_prefix <= hidden_dims.size(), ErrorCode::kConfig,
          "encoder: frozen_prefix exceeds layer count");
}

DenseLayer make_dense(std::size_t in, std::size_t out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(in));
  std::vector<double> w(in * out);
  for (double& v : w) v = rng.uniform(-limit, limit);
  return DenseLayer{Tensor::from({in, out}, std::move(w), true), Tensor::zeros({out}, true)};
}

Encoder::Encoder(EncoderConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  Rng rng(seed);
  std::size_t in = config_.item_dim;
  for (std::size_t width : config_.hidden_dims) {
    layers_.push_back(make_dense(in, width, rng));
    in = width;
  }
  set_frozen_prefix(config_.frozen_prefix);
}

Encoder::Encoder(EncoderConfig config, std::vector<DenseLayer> layers)
    : config_(std::move(config)), layers_(std::move(layers)) {
  config_.validate();
  require(layers_.size() == config_.hidden_dims.size(), ErrorCode::kShape,
          "encoder: layer count does not match configuration");
  std::size_t in = config_.item_dim;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const DenseLayer& layer = layers_[i];
    require(layer.weight.rank() == 2 && layer.in_dim() == in &&
                layer.out_dim() == config_.hidden_dims[i] && layer.bias.rank() == 1 &&
                layer.bias.dim(0) == layer.out_dim(),
            ErrorCode::kShape, "encoder: layer " + std::to_string(i) + " has unexpected shape");
    layers_[i].weight.set_requires_grad(true);
    layers_[i].bias.set_requires_grad(true);
    in = layer.out_dim();
  }
  set_frozen_prefix(config_.frozen_prefix);
}

Tensor Encoder::encode_items(const Tensor& items) const {
  if (items.rank() != 2 || items.dim(1) != config_.item_dim) {
    fail(ErrorCode::kShape, "encode_items: expected [n," + std::to_string(config_.item_dim) +
                                "], got " + shape_str(items.shape()));
  }
  Tensor h = items;
  for (const DenseLayer& layer : layers_) h = ops::relu(layer.forward(h));
  return h;
}

Tensor Encoder::encode(const GalleryBatch& batch) const {
  const Tensor& items = batch.items;
  if (items.rank() != 3 || items.dim(2) != config_.item_dim) {
    fail(ErrorCode::kShape, "encode_gallery: expected [B,N," + std::to_string(config_.item_dim) +
                                "], got " + shape_str(items.shape()));
  }
  const std::size_t b = items.dim(0), n = items.dim(1);
  Tensor flat = ops::reshape(items, {b * n, config_.item_dim});
  Tensor per_item = encode_items(flat);
  return ops::masked_mean(ops::reshape(per_item, {b, n, config_.embed_dim}), batch.mask);
}

std::size_t Encoder::set_frozen_prefix(std::size_t k) {
  require(k <= layers_.size(), ErrorCode::kInvalidArgument,
          "set_frozen_prefix: k=" + std::to_string(k) + " exceeds layer count " +
              std::to_string(layers_.size()));
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    layers_[i].weight.set_frozen(i < k);
    layers_[i].bias.set_frozen(i < k);
  }
  config_.frozen_prefix = k;
  return trainable_parameter_count();
}

std::size_t Encoder::trainable_parameter_count() const {
  std::size_t n = 0;
  for (const DenseLayer& layer : layers_) {
    if (!layer.weight.frozen()) n += layer.weight.numel();
    if (!layer.bias.frozen()) n += layer.bias.numel();
  }
  return n;
}

std::size_t Encoder::parameter_count() const {
  std::size_t n = 0;
  for (const DenseLayer& layer : layers_) n += layer.parameter_count();
  return n;
}

std::vector<Tensor> Encoder::parameters() const {
  std::vector<Tensor> out;
  for (const DenseLayer& layer : layers_) {
    out.push_back(layer.weight);
    out.push_back(layer.bias);
  }
  return out;
}

Encoder Encoder::clone() const {
  std::vector<DenseLayer> copies;
  for (const DenseLayer& layer : layers_) copies.push_back({layer.weight.clone(), layer.bias.clone()});
  return Encoder(config_, std::move(copies));
}

}  // namespace gmtl
