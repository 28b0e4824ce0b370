#include "gmtl/retrieval.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numeric>

#include "binio.hpp"
#include "gmtl/error.hpp"
#include "gmtl/rng.hpp"

namespace gmtl {

namespace {

constexpr std::array<char, 8> kMagic = {'G', 'M', 'T', 'L', 'L', 'S', 'H', '\0'};
constexpr std::size_t kWidthSample = 1000;

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

}  // namespace

double default_bucket_width(std::span<const double> points, std::size_t dim, std::uint64_t seed) {
  require(dim >= 1 && points.size() % dim == 0, ErrorCode::kShape,
          "bucket width: point buffer is not a whole number of rows");
  const std::size_t n = points.size() / dim;
  if (n < 2) return 1.0;
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), 0);
  const std::size_t take = std::min(n, kWidthSample);
  Rng rng(seed);
  for (std::size_t i = 0; i < take; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
    std::swap(rows[i], rows[j]);
  }
  std::vector<double> distances;
  distances.reserve(take * (take - 1) / 2);
  for (std::size_t i = 0; i < take; ++i) {
    for (std::size_t j = i + 1; j < take; ++j) {
      distances.push_back(std::sqrt(squared_distance(points.subspan(rows[i] * dim, dim),
                                                     points.subspan(rows[j] * dim, dim))));
    }
  }
  const std::size_t mid = distances.size() / 2;
  std::nth_element(distances.begin(), distances.begin() + static_cast<std::ptrdiff_t>(mid), distances.end());
  double median = distances[mid];
  if (distances.size() % 2 == 0) {
    const double lower = *std::max_element(distances.begin(), distances.begin() + static_cast<std::ptrdiff_t>(mid));
    median = 0.5 * (median + lower);
  }
  // Identical points give a zero median; any positive width buckets them together.
  return median > 0.0 ? median / 4.0 : 1.0;
}

LshIndex LshIndex::build(std::vector<std::string> ids, std::vector<double> embeddings,
                         std::size_t dim, const LshParams& params) {
  require(params.tables >= 1 && params.hashes >= 1, ErrorCode::kInvalidArgument,
          "lsh: tables and hashes must be >= 1");
  require(dim >= 1, ErrorCode::kInvalidArgument, "lsh: dimension must be >= 1");
  require(embeddings.size() == ids.size() * dim, ErrorCode::kShape,
          "lsh: expected " + std::to_string(ids.size()) + " vectors of dimension " +
              std::to_string(dim) + ", got " + std::to_string(embeddings.size()) + " values");
  for (double v : embeddings) {
    require(std::isfinite(v), ErrorCode::kNumeric, "lsh: embeddings contain a non-finite value");
  }
  LshIndex index;
  index.dim_ = dim;
  index.tables_ = params.tables;
  index.hashes_ = params.hashes;
  index.seed_ = params.seed;
  index.width_ = params.width > 0.0 ? params.width : default_bucket_width(embeddings, dim, params.seed);
  require(std::isfinite(index.width_), ErrorCode::kInvalidArgument, "lsh: bucket width must be finite");

  Rng rng(params.seed ^ 0xA5A5A5A5ULL);
  const std::size_t functions = params.tables * params.hashes;
  index.projections_.resize(functions * dim);
  index.offsets_.resize(functions);
  for (std::size_t f = 0; f < functions; ++f) {
    for (std::size_t d = 0; d < dim; ++d) index.projections_[f * dim + d] = rng.normal();
    index.offsets_[f] = rng.uniform(0.0, index.width_);
  }
  index.ids_ = std::move(ids);
  index.data_ = std::move(embeddings);
  index.rebuild_buckets();
  return index;
}

void LshIndex::rebuild_buckets() {
  row_of_.clear();
  for (std::size_t r = 0; r < ids_.size(); ++r) {
    require(row_of_.emplace(ids_[r], r).second, ErrorCode::kInvalidArgument,
            "lsh: duplicate id '" + ids_[r] + "'");
  }
  buckets_.assign(tables_, {});
  for (std::size_t t = 0; t < tables_; ++t) {
    for (std::size_t r = 0; r < ids_.size(); ++r) buckets_[t][bucket_key(t, embedding(r))].push_back(r);
  }
}

std::span<const double> LshIndex::embedding(std::size_t row) const {
  return std::span<const double>(data_).subspan(row * dim_, dim_);
}

std::optional<std::size_t> LshIndex::find(const std::string& id) const {
  const auto it = row_of_.find(id);
  if (it == row_of_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::int64_t> LshIndex::hash_key(std::size_t table, std::span<const double> x) const {
  require(table < tables_, ErrorCode::kInvalidArgument, "lsh: table index out of range");
  require(x.size() == dim_, ErrorCode::kShape,
          "lsh: query has dimension " + std::to_string(x.size()) + ", index has " + std::to_string(dim_));
  std::vector<std::int64_t> key(hashes_);
  for (std::size_t j = 0; j < hashes_; ++j) {
    const std::size_t f = table * hashes_ + j;
    double proj = offsets_[f];
    const double* v = projections_.data() + f * dim_;
    for (std::size_t d = 0; d < dim_; ++d) proj += x[d] * v[d];
    key[j] = static_cast<std::int64_t>(std::floor(proj / width_));
  }
  return key;
}

std::string LshIndex::bucket_key(std::size_t table, std::span<const double> x) const {
  const auto key = hash_key(table, x);
  return std::string(reinterpret_cast<const char*>(key.data()), key.size() * sizeof(std::int64_t));
}

std::size_t LshIndex::bucket_entries(std::size_t table) const {
  std::size_t n = 0;
  for (const auto& [key, rows] : buckets_.at(table)) n += rows.size();
  return n;
}

std::vector<std::size_t> LshIndex::candidates(std::span<const double> x, std::size_t max_tables) const {
  std::vector<char> hit(ids_.size(), 0);
  for (std::size_t t = 0; t < std::min(max_tables, tables_); ++t) {
    const auto it = buckets_[t].find(bucket_key(t, x));
    if (it == buckets_[t].end()) continue;
    for (std::size_t r : it->second) hit[r] = 1;
  }
  std::vector<std::size_t> rows;
  for (std::size_t r = 0; r < hit.size(); ++r) {
    if (hit[r]) rows.push_back(r);
  }
  return rows;
}

std::vector<Neighbor> LshIndex::rank(std::span<const double> point, std::span<const std::size_t> rows,
                                     std::size_t k) const {
  std::vector<std::pair<double, std::size_t>> scored;
  scored.reserve(rows.size());
  for (std::size_t r : rows) scored.emplace_back(squared_distance(point, embedding(r)), r);
  const auto before = [&](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first < b.first;
    return ids_[a.second] < ids_[b.second];
  };
  const std::size_t keep = std::min(k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(keep), scored.end(), before);
  std::vector<Neighbor> out;
  out.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i) out.push_back({ids_[scored[i].second], std::sqrt(scored[i].first)});
  return out;
}

std::vector<Neighbor> LshIndex::query(std::span<const double> point, std::size_t k) const {
  require(k >= 1, ErrorCode::kInvalidArgument, "lsh: k must be >= 1");
  if (ids_.empty()) return {};
  const auto rows = candidates(point);
  return rank(point, rows, k);
}

std::vector<Neighbor> LshIndex::query_seeds(const std::vector<std::vector<double>>& seeds,
                                            std::size_t k) const {
  require(!seeds.empty(), ErrorCode::kInvalidArgument, "lsh: at least one seed embedding is required");
  std::vector<double> mean(dim_, 0.0);
  for (const auto& s : seeds) {
    require(s.size() == dim_, ErrorCode::kShape,
            "lsh: seed has dimension " + std::to_string(s.size()) + ", index has " + std::to_string(dim_));
    for (std::size_t d = 0; d < dim_; ++d) mean[d] += s[d];
  }
  for (double& v : mean) v /= static_cast<double>(seeds.size());
  return query(mean, k);
}

std::vector<Neighbor> LshIndex::brute_force(std::span<const double> point, std::size_t k) const {
  require(k >= 1, ErrorCode::kInvalidArgument, "lsh: k must be >= 1");
  require(point.size() == dim_, ErrorCode::kShape, "lsh: query dimension mismatch");
  std::vector<std::size_t> rows(ids_.size());
  std::iota(rows.begin(), rows.end(), 0);
  return rank(point, rows, k);
}

void LshIndex::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorCode::kIo, "cannot open index for writing: " + path);
  out.write(kMagic.data(), kMagic.size());
  binio::put(out, kIndexVersion);
  binio::put(out, static_cast<std::uint64_t>(dim_));
  binio::put(out, static_cast<std::uint32_t>(tables_));
  binio::put(out, static_cast<std::uint32_t>(hashes_));
  binio::put_f64(out, width_);
  binio::put(out, seed_);
  for (double v : projections_) binio::put_f64(out, v);
  for (double v : offsets_) binio::put_f64(out, v);
  binio::put(out, static_cast<std::uint64_t>(ids_.size()));
  for (std::size_t r = 0; r < ids_.size(); ++r) {
    binio::put_string(out, ids_[r]);
    for (double v : embedding(r)) binio::put_f64(out, v);
  }
  require(static_cast<bool>(out), ErrorCode::kIo, "failed writing index: " + path);
}

LshIndex LshIndex::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::kNotFound, "index not found: " + path);
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  require(static_cast<bool>(in) && magic == kMagic, ErrorCode::kFormat, "not an LSH index file: " + path);
  const auto version = binio::get<std::uint32_t>(in, "index version");
  require(version == kIndexVersion, ErrorCode::kSchemaVersion,
          "index version " + std::to_string(version) + " unsupported (expected " +
              std::to_string(kIndexVersion) + ")");
  LshIndex index;
  index.dim_ = binio::get<std::uint64_t>(in, "index dimension");
  index.tables_ = binio::get<std::uint32_t>(in, "table count");
  index.hashes_ = binio::get<std::uint32_t>(in, "hash count");
  index.width_ = binio::get_f64(in, "bucket width");
  index.seed_ = binio::get<std::uint64_t>(in, "seed");
  require(index.dim_ >= 1 && index.dim_ < (1u << 20) && index.tables_ >= 1 && index.hashes_ >= 1 &&
              index.tables_ * index.hashes_ < (1u << 20) && index.width_ > 0.0,
          ErrorCode::kFormat, "implausible index header: " + path);
  const std::size_t functions = index.tables_ * index.hashes_;
  index.projections_.resize(functions * index.dim_);
  for (double& v : index.projections_) v = binio::get_f64(in, "projections");
  index.offsets_.resize(functions);
  for (double& v : index.offsets_) v = binio::get_f64(in, "offsets");
  const auto n = binio::get<std::uint64_t>(in, "entry count");
  require(n < (1ull << 32), ErrorCode::kFormat, "implausible index size: " + path);
  index.ids_.reserve(n);
  index.data_.reserve(n * index.dim_);
  for (std::uint64_t r = 0; r < n; ++r) {
    index.ids_.push_back(binio::get_string(in, "entry id"));
    for (std::size_t d = 0; d < index.dim_; ++d) index.data_.push_back(binio::get_f64(in, "entry vector"));
  }
  index.rebuild_buckets();
  return index;
}

}  // namespace gmtl
