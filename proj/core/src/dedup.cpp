#include "otobias/dedup.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <tuple>
#include <numeric>
#include <set>

#include <fmt/format.h>

#include "otobias/csv.hpp"
#include "otobias/error.hpp"
#include "otobias/parallel.hpp"

namespace otobias {

namespace fs = std::filesystem;

namespace {

double dot(std::span<const double> u, std::span<const double> v) {
  double s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) s += u[i] * v[i];
  return s;
}

std::string join(const std::vector<std::string>& items, std::size_t limit = 20) {
  std::string out;
  for (std::size_t i = 0; i < items.size() && i < limit; ++i) {
    if (i) out += ", ";
    out += items[i];
  }
  if (items.size() > limit) out += fmt::format(", ... ({} total)", items.size());
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// EmbeddingSet

EmbeddingSet::EmbeddingSet(std::size_t dim, std::vector<std::string> ids, std::vector<double> values, bool normalize)
    : dim_(dim), ids_(std::move(ids)), values_(std::move(values)) {
  if (dim_ == 0) throw ValidationError("embedding dimension must be positive");
  if (values_.size() != ids_.size() * dim_) {
    throw ValidationError(fmt::format("{} values for {} embeddings of dim {}", values_.size(), ids_.size(), dim_));
  }
  index_.reserve(ids_.size());
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    if (!index_.emplace(ids_[i], i).second) throw ValidationError(fmt::format("duplicate embedding id \"{}\"", ids_[i]));
  }
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!std::isfinite(values_[i])) {
      throw ValidationError(fmt::format("non-finite embedding value for id \"{}\"", ids_[i / dim_]));
    }
  }
  if (normalize) {
    for (std::size_t r = 0; r < ids_.size(); ++r) {
      const auto v = std::span<double>(values_).subspan(r * dim_, dim_);
      const double norm = std::sqrt(dot(v, v));
      if (!(norm > 0.0)) throw ValidationError(fmt::format("zero embedding for id \"{}\" cannot be normalized", ids_[r]));
      for (double& x : v) x /= norm;
    }
    normalized_ = true;
  }
}

std::optional<std::size_t> EmbeddingSet::index_of(std::string_view id) const {
  const auto it = index_.find(std::string(id));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

EmbeddingSet EmbeddingSet::normalized_copy() const {
  if (normalized_) return *this;
  return EmbeddingSet(dim_, ids_, values_, true);
}

EmbeddingSet load_embeddings(const fs::path& path, const EmbeddingLoadOptions& options) {
  std::vector<std::string> ids;
  std::vector<double> values;
  std::size_t dim = 0;

  auto parse_number = [&](const std::string& text, std::size_t line, const std::string& id) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(text, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != text.size()) {
      throw ValidationError(fmt::format("{}: row {}: \"{}\" is not a number (id \"{}\")", path.string(), line, text, id));
    }
    if (!std::isfinite(v)) {
      throw ValidationError(fmt::format("{}: row {}: non-finite value for id \"{}\"", path.string(), line, id));
    }
    return v;
  };

  const auto ext = path.extension().string();
  if (ext == ".jsonl" || ext == ".ndjson") {
    std::ifstream in(path);
    if (!in) throw IoError(fmt::format("cannot open {}", path.string()));
    std::string text;
    std::size_t line = 0;
    while (std::getline(in, text)) {
      ++line;
      if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
      nlohmann::json obj;
      try {
        obj = nlohmann::json::parse(text);
      } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError(fmt::format("{}: row {}: malformed JSON ({})", path.string(), line, e.what()));
      }
      if (!obj.is_object() || !obj.contains("id") || !obj["id"].is_string() || !obj.contains("vector") ||
          !obj["vector"].is_array()) {
        throw ValidationError(fmt::format("{}: row {}: expected {{\"id\": string, \"vector\": [numbers]}}", path.string(), line));
      }
      const auto id = obj["id"].get<std::string>();
      const auto& vec = obj["vector"];
      if (dim == 0) dim = vec.size();
      if (vec.size() != dim || dim == 0) {
        throw ValidationError(fmt::format("{}: row {}: dimension mismatch for id \"{}\" ({} values, expected {})",
                                          path.string(), line, id, vec.size(), dim));
      }
      for (const auto& x : vec) {
        if (!x.is_number()) throw ValidationError(fmt::format("{}: row {}: non-numeric value for id \"{}\"", path.string(), line, id));
        const double v = x.get<double>();
        if (!std::isfinite(v)) throw ValidationError(fmt::format("{}: row {}: non-finite value for id \"{}\"", path.string(), line, id));
        values.push_back(v);
      }
      ids.push_back(id);
    }
  } else {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(fmt::format("cannot open {}", path.string()));
    std::string text;
    std::size_t line = 0;
    std::vector<std::string> header;
    while (std::getline(in, text)) {
      ++line;
      if (!text.empty() && text.back() == '\r') text.pop_back();
      if (text.empty()) continue;
      const csv::Table row = csv::parse(text);
      const auto& fields = row.header;
      if (header.empty()) {
        header = fields;
        if (header.size() < 2 || header[0] != "id") {
          throw ValidationError(fmt::format("{}: header must be id,f0,f1,...", path.string()));
        }
        for (std::size_t k = 1; k < header.size(); ++k) {
          if (header[k] != fmt::format("f{}", k - 1)) {
            throw ValidationError(fmt::format("{}: header column {} is \"{}\", expected \"f{}\"", path.string(),
                                              k + 1, header[k], k - 1));
          }
        }
        dim = header.size() - 1;
        continue;
      }
      const std::string& id = fields.empty() ? std::string() : fields[0];
      if (fields.size() != dim + 1) {
        throw ValidationError(fmt::format("{}: row {}: dimension mismatch for id \"{}\" ({} values, expected {})",
                                          path.string(), line, id, fields.size() - 1, dim));
      }
      for (std::size_t k = 1; k < fields.size(); ++k) values.push_back(parse_number(fields[k], line, id));
      ids.push_back(id);
    }
    if (in.bad()) throw IoError(fmt::format("cannot read {}", path.string()));
    if (header.empty()) throw ValidationError(fmt::format("{}: empty embedding file", path.string()));
  }

  if (options.manifest) {
    std::vector<std::string> unknown;
    for (const auto& id : ids) {
      if (!options.manifest->find(id)) unknown.push_back(id);
    }
    if (!unknown.empty()) throw ValidationError(fmt::format("{}: ids not in the manifest: {}", path.string(), join(unknown)));
  }
  if (dim == 0) throw ValidationError(fmt::format("{}: no embeddings", path.string()));
  try {
    return EmbeddingSet(dim, std::move(ids), std::move(values), options.normalize);
  } catch (const ValidationError& e) {
    throw ValidationError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

void write_embeddings_csv(const EmbeddingSet& embeddings, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(fmt::format("cannot write {}", path.string()));
  out << "id";
  for (std::size_t k = 0; k < embeddings.dim(); ++k) out << ",f" << k;
  out << '\n';
  for (std::size_t i = 0; i < embeddings.size(); ++i) {
    out << csv::escape(embeddings.ids()[i]);
    for (double v : embeddings.vector(i)) out << ',' << fmt::format("{}", v);
    out << '\n';
  }
  if (!out) throw IoError(fmt::format("cannot write {}", path.string()));
}

double cosine_distance(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw ValidationError(fmt::format("cosine distance of dims {} and {}", u.size(), v.size()));
  const double nu = std::sqrt(dot(u, u));
  const double nv = std::sqrt(dot(v, v));
  if (!(nu > 0.0) || !(nv > 0.0)) throw ValidationError("cosine distance is undefined for a zero vector");
  return std::clamp(1.0 - dot(u, v) / (nu * nv), 0.0, 2.0);
}

// ---------------------------------------------------------------------------
// Union-find

UnionFind::UnionFind(std::size_t n) : parent_(n), size_(n, 1) { std::iota(parent_.begin(), parent_.end(), std::size_t{0}); }

std::size_t UnionFind::find(std::size_t x) {
  while (parent_[x] != x) {
    parent_[x] = parent_[parent_[x]];
    x = parent_[x];
  }
  return x;
}

bool UnionFind::unite(std::size_t a, std::size_t b) {
  a = find(a);
  b = find(b);
  if (a == b) return false;
  if (size_[a] < size_[b]) std::swap(a, b);
  parent_[b] = a;
  size_[a] += size_[b];
  return true;
}

// ---------------------------------------------------------------------------
// Clustering

void ClusterConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 2.0)) throw ValidationError(fmt::format("alpha {} is outside [0, 2]", alpha));
  if (min_cluster_size < 2) throw ValidationError(fmt::format("min cluster size {} is below 2", min_cluster_size));
}

std::vector<Edge> BlockedExactSearch::pairs_within(const EmbeddingSet& unit, double max_distance, int jobs) const {
  const std::size_t n = unit.size();
  const std::size_t blocks = (n + block_ - 1) / block_;
  // Upper-triangular tiles (bi <= bj), enumerated row-major.
  std::vector<std::pair<std::size_t, std::size_t>> tiles;
  for (std::size_t bi = 0; bi < blocks; ++bi) {
    for (std::size_t bj = bi; bj < blocks; ++bj) tiles.emplace_back(bi, bj);
  }
  std::vector<std::vector<Edge>> found(tiles.size());
  parallel_for(tiles.size(), jobs, [&](std::size_t t) {
    const auto [bi, bj] = tiles[t];
    const std::size_t i_end = std::min(n, (bi + 1) * block_);
    const std::size_t j_end = std::min(n, (bj + 1) * block_);
    for (std::size_t i = bi * block_; i < i_end; ++i) {
      const auto u = unit.vector(i);
      for (std::size_t j = bi == bj ? i + 1 : bj * block_; j < j_end; ++j) {
        const double d = std::clamp(1.0 - dot(u, unit.vector(j)), 0.0, 2.0);
        if (d <= max_distance) {
          found[t].push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j), d});
        }
      }
    }
  });
  std::vector<Edge> edges;
  for (auto& f : found) edges.insert(edges.end(), f.begin(), f.end());
  return edges;
}

namespace {

const NeighborSearch& default_search() {
  static const BlockedExactSearch search;
  return search;
}

void check_clusterable(const EmbeddingSet& embeddings) {
  if (embeddings.size() < 2) throw ValidationError("clustering needs at least 2 embeddings");
  if (embeddings.size() > std::numeric_limits<std::uint32_t>::max()) throw ValidationError("too many embeddings");
}

std::vector<IdSet> components(UnionFind& uf, const EmbeddingSet& embeddings, std::size_t min_size) {
  std::map<std::size_t, IdSet> groups;
  for (std::size_t i = 0; i < embeddings.size(); ++i) {
    if (uf.size_of(i) >= min_size) groups[uf.find(i)].push_back(embeddings.ids()[i]);
  }
  std::vector<IdSet> out;
  out.reserve(groups.size());
  for (auto& [root, members] : groups) {
    std::sort(members.begin(), members.end());
    out.push_back(std::move(members));
  }
  std::sort(out.begin(), out.end(), [](const IdSet& a, const IdSet& b) {
    if (a.size() != b.size()) return a.size() > b.size();
    return a.front() < b.front();
  });
  return out;
}

}  // namespace

std::vector<IdSet> cluster(const EmbeddingSet& embeddings, const ClusterConfig& config, const NeighborSearch* search,
                           int jobs) {
  config.validate();
  check_clusterable(embeddings);
  const EmbeddingSet unit = embeddings.normalized_copy();
  const auto edges = (search ? *search : default_search()).pairs_within(unit, config.alpha, jobs);
  UnionFind uf(unit.size());
  for (const auto& e : edges) uf.unite(e.a, e.b);
  return components(uf, unit, config.min_cluster_size);
}

// ---------------------------------------------------------------------------
// Reports

double LeakageStats::leakage_fraction() const {
  return test_set_size == 0 ? 0.0 : static_cast<double>(test_with_dup_count) / static_cast<double>(test_set_size);
}

double ClusterReport::redundant_fraction() const {
  return dataset_size == 0 ? 0.0 : static_cast<double>(redundant_count) / static_cast<double>(dataset_size);
}

ClusterReport near_duplicate_report(std::span<const IdSet> clusters, const SplitAssignment& split,
                                    const DatasetManifest& manifest) {
  split.check_covers(manifest);
  ClusterReport report;
  report.sets.assign(clusters.begin(), clusters.end());
  report.set_count = clusters.size();
  report.dataset_size = manifest.size();

  std::set<std::string> seen;
  std::set<std::string> leaked;
  std::vector<std::string> unknown;
  for (const auto& set : clusters) {
    report.total_clustered += set.size();
    report.max_size = std::max(report.max_size, set.size());
    bool has_train = false;
    for (const auto& id : set) {
      if (!manifest.find(id)) {
        unknown.push_back(id);
        continue;
      }
      if (!seen.insert(id).second) throw ValidationError(fmt::format("id \"{}\" appears in two clusters", id));
      if (split.part(id) == SplitPart::train) has_train = true;
    }
    if (has_train) {
      for (const auto& id : set) {
        if (split.part(id) == SplitPart::test) leaked.insert(id);
      }
    }
  }
  if (!unknown.empty()) throw ValidationError("cluster ids not in the manifest: " + join(unknown));
  report.redundant_count = report.total_clustered - report.set_count;
  report.avg_size = report.set_count == 0 ? 0.0
                                          : static_cast<double>(report.total_clustered) / static_cast<double>(report.set_count);

  std::size_t with_abnormal = 0, without_abnormal = 0;
  auto& lk = report.leakage;
  for (const auto& r : manifest.records()) {
    if (split.part(r.id) != SplitPart::test) continue;
    ++lk.test_set_size;
    const bool abnormal = r.label() == Label::abnormal;
    if (leaked.count(r.id)) {
      ++lk.test_with_dup_count;
      with_abnormal += abnormal;
    } else {
      ++lk.test_without_dup_count;
      without_abnormal += abnormal;
    }
  }
  auto ratio = [](std::size_t k, std::size_t n) { return n == 0 ? 0.0 : static_cast<double>(k) / static_cast<double>(n); };
  lk.test_with_dup_abnormal_ratio = ratio(with_abnormal, lk.test_with_dup_count);
  lk.test_without_dup_abnormal_ratio = ratio(without_abnormal, lk.test_without_dup_count);
  report.test_ids_with_dup.assign(leaked.begin(), leaked.end());
  return report;
}

std::vector<StyleCluster> style_label_report(std::span<const IdSet> clusters, const DatasetManifest& manifest,
                                             double purity_threshold, std::size_t min_size) {
  std::vector<StyleCluster> out;
  for (std::size_t c = 0; c < clusters.size(); ++c) {
    const auto& set = clusters[c];
    if (set.size() < min_size || set.empty()) continue;
    StyleCluster s;
    s.cluster_index = c;
    s.size = set.size();
    for (const auto& id : set) {
      const ImageRecord* r = manifest.find(id);
      if (!r) throw ValidationError(fmt::format("cluster id \"{}\" is not in the manifest", id));
      ++s.subtype_counts[r->subtype];
      (r->label() == Label::normal ? s.normal_count : s.abnormal_count) += 1;
    }
    s.majority = s.abnormal_count > s.normal_count ? Label::abnormal : Label::normal;
    s.purity = static_cast<double>(std::max(s.normal_count, s.abnormal_count)) / static_cast<double>(s.size);
    s.flagged = s.purity >= purity_threshold;
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<SweepPoint> alpha_sweep(const EmbeddingSet& embeddings, std::span<const double> alphas,
                                    const SplitAssignment& split, const DatasetManifest& manifest,
                                    std::size_t min_cluster_size, const NeighborSearch* search, int jobs) {
  if (alphas.empty()) throw ValidationError("alpha sweep needs at least one alpha");
  for (std::size_t i = 0; i < alphas.size(); ++i) {
    ClusterConfig{alphas[i], Linkage::connected_components, min_cluster_size}.validate();
    if (i && alphas[i] < alphas[i - 1]) throw ValidationError("alpha sweep values must be ascending");
  }
  check_clusterable(embeddings);
  const EmbeddingSet unit = embeddings.normalized_copy();
  auto edges = (search ? *search : default_search()).pairs_within(unit, alphas.back(), jobs);
  std::sort(edges.begin(), edges.end(), [](const Edge& x, const Edge& y) {
    if (x.distance != y.distance) return x.distance < y.distance;
    return std::tie(x.a, x.b) < std::tie(y.a, y.b);
  });

  UnionFind uf(unit.size());
  std::size_t next = 0;
  std::vector<SweepPoint> out;
  for (double alpha : alphas) {
    while (next < edges.size() && edges[next].distance <= alpha) {
      uf.unite(edges[next].a, edges[next].b);
      ++next;
    }
    const auto sets = components(uf, unit, min_cluster_size);
    out.push_back({alpha, near_duplicate_report(sets, split, manifest)});
  }
  return out;
}

}  // namespace otobias
