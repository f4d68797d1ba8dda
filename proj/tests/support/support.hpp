#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "otobias/dedup.hpp"
#include "otobias/imageops.hpp"
#include "otobias/manifest.hpp"
#include "otobias/rng.hpp"

namespace otobias::test {

namespace fs = std::filesystem;

// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

std::string read_file(const fs::path& path);
void write_file(const fs::path& path, const std::string& text);

// ---------------------------------------------------------------------------
// Oracles. Written without reference to the library implementation.

// Pair counting with ties as one half: (2 * wins + ties) / (2 * m * n).
double brute_auc(std::span<const double> scores, std::span<const int> labels);

struct DelongOracle {
  double auc = 0.0;
  double variance = 0.0;
};

// Structural components by direct O(m n) enumeration, sample variances.
DelongOracle brute_delong(std::span<const double> scores, std::span<const int> labels);

// Hexcone inverse on the 8-bit scale (h in half-degrees), unrounded.
struct RgbReal {
  double r = 0.0, g = 0.0, b = 0.0;
};
RgbReal hsv_to_rgb(double h, double s, double v);

// Per-pixel conversion by the textbook formula, then two-pass mean and
// population standard deviation.
HsvFeatures naive_hsv_features(const ImageBuffer& image);

// Logistic regression by BFGS with an exact line search on the directional
// derivative. `rows` is row-major n x p without intercept; the result is
// [intercept, b1, ..., bp].
std::vector<double> bfgs_logistic(std::span<const double> rows, std::size_t p,
                                  std::span<const int> y, double gradient_tolerance = 1e-10);

// Binomial log-likelihood at beta = [intercept, b1, ..., bp].
double logistic_loglik(std::span<const double> beta, std::span<const double> rows, std::size_t p,
                       std::span<const int> y);

// Central differences of logistic_loglik, step h per coordinate.
std::vector<double> fd_gradient(std::span<const double> beta, std::span<const double> rows,
                                std::size_t p, std::span<const int> y, double h = 1e-5);

// ---------------------------------------------------------------------------
// Generators.

// Image whose pixels share one hue and value while saturation is drawn
// per pixel from N(sat_mean, sat_sd), clipped to [0, 255].
ImageBuffer saturation_image(std::size_t width, std::size_t height, double hue, double sat_mean,
                             double sat_sd, double value, Rng& rng);

ImageBuffer random_image(std::size_t width, std::size_t height, Rng& rng);

// Records with ids "r000", ... and the given subtypes; paths are dummies.
DatasetManifest make_manifest(std::span<const Subtype> subtypes, const std::string& name = "synthetic");
DatasetManifest make_balanced_manifest(std::size_t normal, std::size_t abnormal,
                                       const std::string& name = "synthetic");

struct PlantedEmbeddings {
  EmbeddingSet embeddings;
  std::vector<std::vector<std::string>> groups;  // sorted members
};

// `groups` planted near-duplicate groups of `group_size` vectors each, plus
// `singletons` isolated vectors. Group members lie within cosine distance
// `within` of each other; every other pair is farther than `apart`.
PlantedEmbeddings planted_embeddings(std::size_t groups, std::size_t group_size,
                                     std::size_t singletons, double within, double apart,
                                     std::uint64_t seed);

fs::path write_manifest_file(const fs::path& path, const DatasetManifest& manifest);

// Writes `n` PNGs under root/<subtype>/ plus root/manifest.csv with a split
// column (every fifth image in test). Odd-numbered images are abnormal. With
// `signal`, abnormal images get a higher per-pixel saturation spread;
// otherwise the spread is drawn identically for both classes.
fs::path write_saturation_dataset(const fs::path& root, const std::string& name, std::size_t n, bool signal,
                                  std::uint64_t seed, std::size_t side = 24);

// Manifest (dummy paths, split column) and embeddings for `pairs` planted
// duplicate pairs, each with one training and one test member, plus
// `singletons` isolated images alternating between train and test.
struct LeakageCorpus {
  DatasetManifest manifest;
  EmbeddingSet embeddings;
};
LeakageCorpus leakage_corpus(std::size_t pairs, std::size_t singletons, std::uint64_t seed);

}  // namespace otobias::test
