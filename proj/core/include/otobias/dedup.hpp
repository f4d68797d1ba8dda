#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "otobias/manifest.hpp"

namespace otobias {

// Image embeddings keyed by id, stored as one contiguous row-major block.
class EmbeddingSet {
 public:
  EmbeddingSet() = default;
  // Throws ValidationError on duplicate ids, shape mismatch or non-finite
  // values. With normalize = true every row is scaled to unit L2 norm (zero
  // rows are rejected).
  EmbeddingSet(std::size_t dim, std::vector<std::string> ids, std::vector<double> values,
               bool normalize = false);

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return ids_.size(); }
  bool normalized() const { return normalized_; }
  const std::vector<std::string>& ids() const { return ids_; }
  std::span<const double> vector(std::size_t i) const {
    return std::span<const double>(values_).subspan(i * dim_, dim_);
  }
  std::optional<std::size_t> index_of(std::string_view id) const;

  // Copy with unit-norm rows; returns *this unchanged if already normalized.
  EmbeddingSet normalized_copy() const;

 private:
  std::size_t dim_ = 0;
  std::vector<std::string> ids_;
  std::vector<double> values_;
  std::unordered_map<std::string, std::size_t> index_;
  bool normalized_ = false;
};

struct EmbeddingLoadOptions {
  bool normalize = false;
  // When set, ids outside the manifest are rejected.
  const DatasetManifest* manifest = nullptr;
};

// CSV with header `id,f0,...,f{d-1}` or JSON lines {"id": ..., "vector": [...]}
// (`.jsonl` / `.ndjson`). The dimension comes from the header (CSV) or the
// first row (JSON lines) and is enforced on every row.
EmbeddingSet load_embeddings(const std::filesystem::path& path,
                             const EmbeddingLoadOptions& options = {});

void write_embeddings_csv(const EmbeddingSet& embeddings, const std::filesystem::path& path);

// 1 - u.v / (|u||v|), clamped to [0, 2]. Throws ValidationError on a dimension
// mismatch or a zero vector.
double cosine_distance(std::span<const double> u, std::span<const double> v);

// Disjoint-set forest with union by size and path halving.
class UnionFind {
 public:
  explicit UnionFind(std::size_t n);
  std::size_t find(std::size_t x);
  bool unite(std::size_t a, std::size_t b);
  std::size_t size_of(std::size_t x) { return size_[find(x)]; }

 private:
  std::vector<std::size_t> parent_;
  std::vector<std::size_t> size_;
};

enum class Linkage { connected_components };

struct ClusterConfig {
  double alpha = 0.0;  // cosine-distance threshold, edge when distance <= alpha
  Linkage linkage = Linkage::connected_components;
  std::size_t min_cluster_size = 2;

  // Throws ValidationError unless 0 <= alpha <= 2 and min_cluster_size >= 2.
  void validate() const;
};

struct Edge {
  std::uint32_t a = 0;
  std::uint32_t b = 0;
  double distance = 0.0;
};

// Source of candidate pairs for clustering. The default is exact and
// quadratic; an approximate nearest-neighbour index can be plugged in for
// large corpora, provided it returns every pair (a < b) within max_distance.
class NeighborSearch {
 public:
  virtual ~NeighborSearch() = default;
  // `unit` rows have unit L2 norm. Returned edges need not be sorted.
  virtual std::vector<Edge> pairs_within(const EmbeddingSet& unit, double max_distance,
                                         int jobs) const = 0;
};

// All-pairs search over square tiles of `block` rows so each tile's vectors
// stay in cache; tiles are spread over worker threads.
class BlockedExactSearch final : public NeighborSearch {
 public:
  explicit BlockedExactSearch(std::size_t block = 256) : block_(block == 0 ? 1 : block) {}
  std::vector<Edge> pairs_within(const EmbeddingSet& unit, double max_distance,
                                 int jobs) const override;

 private:
  std::size_t block_;
};

using IdSet = std::vector<std::string>;

// Connected components of the threshold graph, components smaller than
// min_cluster_size dropped. Members are sorted; sets are ordered by size
// descending, then by smallest member id.
std::vector<IdSet> cluster(const EmbeddingSet& embeddings, const ClusterConfig& config,
                           const NeighborSearch* search = nullptr, int jobs = 1);

struct LeakageStats {
  std::size_t test_with_dup_count = 0;
  double test_with_dup_abnormal_ratio = 0.0;
  std::size_t test_without_dup_count = 0;
  double test_without_dup_abnormal_ratio = 0.0;
  std::size_t test_set_size = 0;

  // test_with_dup_count / test_set_size, 0 for an empty test set.
  double leakage_fraction() const;
};

struct ClusterReport {
  std::vector<IdSet> sets;
  std::size_t set_count = 0;
  double avg_size = 0.0;
  std::size_t max_size = 0;
  std::size_t total_clustered = 0;
  std::size_t redundant_count = 0;
  std::size_t dataset_size = 0;
  LeakageStats leakage;
  // Test ids sharing a cluster with at least one training image, sorted.
  std::vector<std::string> test_ids_with_dup;

  // redundant_count / dataset_size.
  double redundant_fraction() const;
};

// Table-style redundancy statistics and train/test leakage. A test image
// "has a near duplicate in training" iff its cluster holds a train image.
// Throws ValidationError for ids unknown to the manifest or the split.
ClusterReport near_duplicate_report(std::span<const IdSet> clusters, const SplitAssignment& split,
                                    const DatasetManifest& manifest);

struct StyleCluster {
  std::size_t cluster_index = 0;  // position in the input cluster list
  std::size_t size = 0;
  std::size_t normal_count = 0;
  std::size_t abnormal_count = 0;
  std::map<Subtype, std::size_t> subtype_counts;
  Label majority = Label::normal;
  double purity = 0.0;  // majority label fraction
  bool flagged = false;
};

// Label composition of every cluster with at least min_size members;
// flags those whose majority-label fraction reaches purity_threshold.
std::vector<StyleCluster> style_label_report(std::span<const IdSet> clusters,
                                             const DatasetManifest& manifest,
                                             double purity_threshold = 0.9,
                                             std::size_t min_size = 20);

struct SweepPoint {
  double alpha = 0.0;
  ClusterReport report;
};

// One report per alpha (ascending). Pair distances are computed once at the
// largest alpha and replayed through a single union-find, so components only
// ever merge as alpha grows.
std::vector<SweepPoint> alpha_sweep(const EmbeddingSet& embeddings, std::span<const double> alphas,
                                    const SplitAssignment& split, const DatasetManifest& manifest,
                                    std::size_t min_cluster_size = 2,
                                    const NeighborSearch* search = nullptr, int jobs = 1);

}  // namespace otobias
