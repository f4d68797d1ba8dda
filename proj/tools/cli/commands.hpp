#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "otobias/manifest.hpp"
#include "otobias/probe.hpp"

namespace otobias::cli {

namespace fs = std::filesystem;

enum ExitCode : int {
  kExitOk = 0,
  kExitValidation = 1,
  kExitGate = 2,  // audit gate failed (leakage above budget)
  kExitIo = 3,
};

// Seed used when --seed is absent: OTOBIAS_SEED if set and numeric, else 0.
std::uint64_t default_seed();

struct ScanOptions {
  fs::path dir;
  fs::path out_manifest;
  std::string source;  // defaults to the directory name
};

struct EclipseOptions {
  fs::path manifest;
  std::vector<double> extents;
  fs::path out;
  int jobs = 1;
};

struct ProbeOptions {
  std::vector<fs::path> manifests;
  std::vector<FeatureSet> feature_sets = {FeatureSet::hsv6, FeatureSet::sat_std_only};
  fs::path out;
  std::optional<double> test_fraction;  // split manifests that carry no split column
  std::uint64_t seed = 0;
  int jobs = 1;
};

struct DedupOptions {
  fs::path manifest;
  fs::path embeddings;
  std::vector<double> alphas;  // one value for --alpha, several for --alpha-sweep
  std::optional<fs::path> split;
  std::optional<double> test_fraction;
  double leakage_budget = 0.0;
  std::size_t min_cluster_size = 2;
  std::size_t style_min_size = 20;
  double purity_threshold = 0.9;
  std::uint64_t seed = 0;
  int jobs = 1;
  fs::path out;
};

struct EvalOptions {
  fs::path scores;
  std::optional<fs::path> tags;
  fs::path out;
  std::string train_source;
  std::string model_name;
  std::string target;
  std::optional<double> eclipse_extent;
};

struct SplitOptions {
  fs::path manifest;
  SplitMethod method = SplitMethod::stratified_holdout;
  double test_fraction = 0.2;
  int k = 5;
  std::uint64_t seed = 0;
  fs::path out;
};

// Each command writes its outputs and returns an ExitCode; failures are
// thrown as ValidationError / IoError and mapped to exit codes by the caller.
int run_scan(const ScanOptions& options, std::ostream& log);
int run_eclipse(const EclipseOptions& options, std::ostream& log);
int run_probe(const ProbeOptions& options, std::ostream& log);
int run_dedup(const DedupOptions& options, std::ostream& log);
int run_eval(const EvalOptions& options, std::ostream& log);
int run_split(const SplitOptions& options, std::ostream& log);

// Directory suffix for an eclipsed tree, e.g. "_e0.9", "_e1.0".
std::string extent_suffix(double extent);

}  // namespace otobias::cli
