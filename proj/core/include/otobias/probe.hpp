#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "otobias/error.hpp"
#include "otobias/imageops.hpp"
#include "otobias/manifest.hpp"
#include "otobias/metrics.hpp"

namespace otobias {

// Raised for inputs a logistic fit cannot proceed on: single-class labels,
// rank-deficient design, non-converged models passed to inference.
class FitError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

enum class FeatureSet { hsv6, sat_std_only };

std::string_view to_string(FeatureSet set);
// Accepts "hsv6", "sat_std_only" and the CLI spelling "sat-std".
std::optional<FeatureSet> parse_feature_set(std::string_view text);
std::vector<std::string> feature_columns(FeatureSet set);

// Dense row-major design matrix (no intercept column) with 0/1 labels.
class FeatureMatrix {
 public:
  FeatureMatrix() = default;
  // Throws ValidationError on shape mismatch, duplicate column names,
  // non-finite values or labels other than 0/1.
  FeatureMatrix(std::vector<std::string> columns, std::vector<double> values,
                std::vector<int> labels, std::vector<std::string> ids = {});

  std::size_t rows() const { return labels_.size(); }
  std::size_t cols() const { return columns_.size(); }
  const std::vector<std::string>& columns() const { return columns_; }
  const std::vector<int>& labels() const { return labels_; }
  const std::vector<std::string>& ids() const { return ids_; }
  double at(std::size_t row, std::size_t col) const { return values_[row * cols() + col]; }
  std::span<const double> row(std::size_t r) const {
    return std::span<const double>(values_).subspan(r * cols(), cols());
  }
  std::span<const double> values() const { return values_; }

  // Throws ValidationError if a requested column is missing.
  FeatureMatrix select(std::span<const std::string> columns) const;
  FeatureMatrix subset(std::span<const std::size_t> rows) const;

 private:
  std::vector<std::string> columns_;
  std::vector<double> values_;
  std::vector<int> labels_;
  std::vector<std::string> ids_;
};

// Six HSV columns in HsvFeatures::kNames order, rows keyed by feature id.
FeatureMatrix make_feature_matrix(std::span<const HsvFeatures> features,
                                  std::span<const Label> labels);

enum class FitStatus { converged, separated, max_iterations };

std::string_view to_string(FitStatus status);

struct LogisticModel {
  double intercept = 0.0;
  std::vector<std::string> names;
  std::vector<double> coefficients;
  FitStatus status = FitStatus::max_iterations;
  int iterations = 0;
  double deviance = 0.0;

  bool converged() const { return status == FitStatus::converged; }
};

struct IrlsOptions {
  double tolerance = 1e-8;  // on max |delta beta|
  int max_iterations = 100;
  // Separation is declared when a slope times its feature's standard
  // deviation exceeds this, or the deviance drops below separation_deviance,
  // before convergence.
  double separation_magnitude = 30.0;
  double separation_deviance = 1e-8;
};

// Maximum-likelihood logistic regression with intercept by iteratively
// reweighted least squares, halving the step whenever the deviance rises.
// Separation is reported through FitStatus::separated with the last stable
// iterate, not thrown. Throws FitError for single-class labels, too few rows
// or a rank-deficient design.
LogisticModel fit_logistic(const FeatureMatrix& x, const IrlsOptions& options = {});

// Binomial log-likelihood of (intercept, coefficients) on x.
double log_likelihood(const LogisticModel& model, const FeatureMatrix& x);

struct CoefficientStat {
  std::string variable;
  double beta = 0.0;
  double std_error = 0.0;
  double odds_ratio = 1.0;
  double ci_low = 1.0;
  double ci_high = 1.0;
  double z = 0.0;
  double p_value = 1.0;
};

inline constexpr std::string_view kInterceptName = "(Intercept)";

// Wald odds ratio, 95% CI exp(beta -/+ kZ95 * se) and two-sided p.
CoefficientStat wald_from_estimate(std::string variable, double beta, double std_error);

// Standard errors from the inverse information matrix X'WX at the fit.
// First row is the intercept. Throws FitError for non-converged models or a
// singular information matrix.
std::vector<CoefficientStat> wald_stats(const LogisticModel& model, const FeatureMatrix& x);

// sigmoid(intercept + x . beta) per row. Columns must match the model's
// names in order; throws ValidationError otherwise.
std::vector<double> predict_scores(const LogisticModel& model, const FeatureMatrix& x);

// One dataset entering the probe matrix: the full feature matrix and, per
// row, its split part. Rows in `train` fit the model, rows in `test` give
// the internal AUC, and every row counts for external evaluation.
struct ProbeDataset {
  std::string name;
  FeatureMatrix features;
  std::vector<SplitPart> parts;
};

struct ProbeCell {
  std::string target;
  bool internal = false;
  std::optional<AucResult> result;
  std::string error;  // non-empty when result is absent
};

struct ProbeRow {
  std::string train_source;
  FeatureSet feature_set = FeatureSet::hsv6;
  std::optional<LogisticModel> model;
  std::vector<CoefficientStat> coefficients;
  std::string error;  // fit or inference problem for the whole row
  std::vector<ProbeCell> cells;  // one per dataset, in input order
};

struct ProbeMatrix {
  FeatureSet feature_set = FeatureSet::hsv6;
  std::vector<std::string> sources;
  std::vector<ProbeRow> rows;  // one per train source, in input order
};

// Fits one model per dataset on its training rows, then scores the internal
// test rows and every other dataset in full. Rows are fitted on up to `jobs`
// threads; output does not depend on the thread count.
ProbeMatrix probe_matrix(std::span<const ProbeDataset> datasets, FeatureSet feature_set,
                         int jobs = 1);

}  // namespace otobias
