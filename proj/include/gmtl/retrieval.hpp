#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace gmtl {

inline constexpr std::uint32_t kIndexVersion = 1;

struct LshParams {
  std::size_t tables = 16;  // L
  std::size_t hashes = 8;   // m per table
  double width = 0.0;       // w; <= 0 selects default_bucket_width
  std::uint64_t seed = 0;
};

struct Neighbor {
  std::string id;
  double distance = 0.0;
};

// Median pairwise Euclidean distance over a seeded sample of at most 1000
// points, divided by 4. `points` is row-major [n, dim].
double default_bucket_width(std::span<const double> points, std::size_t dim, std::uint64_t seed);

// Bucketed random-projection LSH: table t hashes x to the tuple
// floor((x . v_tj + b_tj) / w), j = 1..m. Stored vectors are kept for exact
// re-ranking. Immutable after construction.
class LshIndex {
 public:
  static LshIndex build(std::vector<std::string> ids, std::vector<double> embeddings,
                        std::size_t dim, const LshParams& params);

  std::size_t size() const { return ids_.size(); }
  std::size_t dim() const { return dim_; }
  std::size_t tables() const { return tables_; }
  std::size_t hashes() const { return hashes_; }
  double width() const { return width_; }
  std::uint64_t seed() const { return seed_; }
  const std::vector<std::string>& ids() const { return ids_; }
  std::span<const double> embedding(std::size_t row) const;
  std::optional<std::size_t> find(const std::string& id) const;

  // The m bucket coordinates of x in one table.
  std::vector<std::int64_t> hash_key(std::size_t table, std::span<const double> x) const;
  // Rows sharing a bucket with x in at least one of the first `max_tables` tables, ascending.
  std::vector<std::size_t> candidates(std::span<const double> x, std::size_t max_tables) const;
  std::vector<std::size_t> candidates(std::span<const double> x) const { return candidates(x, tables_); }

  // Exact Euclidean re-rank of the candidates; ties broken by ascending id.
  std::vector<Neighbor> query(std::span<const double> point, std::size_t k) const;
  // Query point is the mean of the seed embeddings (each of width dim()).
  std::vector<Neighbor> query_seeds(const std::vector<std::vector<double>>& seeds, std::size_t k) const;
  // Exhaustive search over every stored vector, same ordering rules.
  std::vector<Neighbor> brute_force(std::span<const double> point, std::size_t k) const;

  // Bucket contents of one table: key -> rows.
  std::size_t bucket_count(std::size_t table) const { return buckets_.at(table).size(); }
  std::size_t bucket_entries(std::size_t table) const;

  void save(const std::string& path) const;
  static LshIndex load(const std::string& path);

 private:
  LshIndex() = default;
  void rebuild_buckets();
  std::string bucket_key(std::size_t table, std::span<const double> x) const;
  std::vector<Neighbor> rank(std::span<const double> point, std::span<const std::size_t> rows,
                             std::size_t k) const;

  std::size_t dim_ = 0;
  std::size_t tables_ = 0;
  std::size_t hashes_ = 0;
  double width_ = 0.0;
  std::uint64_t seed_ = 0;
  std::vector<double> projections_;  // [tables * hashes, dim]
  std::vector<double> offsets_;      // [tables * hashes]
  std::vector<std::string> ids_;
  std::vector<double> data_;         // [n, dim]
  std::unordered_map<std::string, std::size_t> row_of_;
  std::vector<std::unordered_map<std::string, std::vector<std::size_t>>> buckets_;
};

}  // namespace gmtl
