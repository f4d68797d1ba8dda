#include "otobias/probe.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <set>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "otobias/parallel.hpp"

namespace otobias {

using Eigen::MatrixXd;
using Eigen::VectorXd;

std::string_view to_string(FeatureSet set) { return set == FeatureSet::hsv6 ? "hsv6" : "sat_std_only"; }

std::optional<FeatureSet> parse_feature_set(std::string_view text) {
  if (text == "hsv6") return FeatureSet::hsv6;
  if (text == "sat_std_only" || text == "sat-std" || text == "sat_std") return FeatureSet::sat_std_only;
  return std::nullopt;
}

std::vector<std::string> feature_columns(FeatureSet set) {
  if (set == FeatureSet::sat_std_only) return {"sat_std"};
  return {HsvFeatures::kNames.begin(), HsvFeatures::kNames.end()};
}

std::string_view to_string(FitStatus status) {
  switch (status) {
    case FitStatus::converged:
      return "converged";
    case FitStatus::separated:
      return "separated";
    case FitStatus::max_iterations:
      break;
  }
  return "max_iterations";
}

// ---------------------------------------------------------------------------
// FeatureMatrix

FeatureMatrix::FeatureMatrix(std::vector<std::string> columns, std::vector<double> values,
                             std::vector<int> labels, std::vector<std::string> ids)
    : columns_(std::move(columns)), values_(std::move(values)), labels_(std::move(labels)), ids_(std::move(ids)) {
  if (std::set<std::string>(columns_.begin(), columns_.end()).size() != columns_.size()) {
    throw ValidationError("feature matrix has duplicate column names");
  }
  if (values_.size() != labels_.size() * columns_.size()) {
    throw ValidationError(fmt::format("feature matrix: {} values for {} rows x {} columns", values_.size(),
                                      labels_.size(), columns_.size()));
  }
  if (!ids_.empty() && ids_.size() != labels_.size()) {
    throw ValidationError(fmt::format("feature matrix: {} ids for {} rows", ids_.size(), labels_.size()));
  }
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!std::isfinite(values_[i])) {
      throw ValidationError(fmt::format("feature matrix: non-finite value at row {}, column {}", i / cols(),
                                        columns_[i % cols()]));
    }
  }
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (labels_[i] != 0 && labels_[i] != 1) throw ValidationError(fmt::format("feature matrix: label at row {} is not 0/1", i));
  }
}

FeatureMatrix FeatureMatrix::select(std::span<const std::string> columns) const {
  std::vector<std::size_t> source;
  for (const auto& name : columns) {
    const auto it = std::find(columns_.begin(), columns_.end(), name);
    if (it == columns_.end()) throw ValidationError(fmt::format("feature matrix has no column \"{}\"", name));
    source.push_back(static_cast<std::size_t>(it - columns_.begin()));
  }
  std::vector<double> values;
  values.reserve(rows() * source.size());
  for (std::size_t r = 0; r < rows(); ++r) {
    for (std::size_t c : source) values.push_back(at(r, c));
  }
  return FeatureMatrix({columns.begin(), columns.end()}, std::move(values), labels_, ids_);
}

FeatureMatrix FeatureMatrix::subset(std::span<const std::size_t> rows) const {
  std::vector<double> values;
  std::vector<int> labels;
  std::vector<std::string> ids;
  values.reserve(rows.size() * cols());
  for (std::size_t r : rows) {
    const auto src = row(r);
    values.insert(values.end(), src.begin(), src.end());
    labels.push_back(labels_[r]);
    if (!ids_.empty()) ids.push_back(ids_[r]);
  }
  return FeatureMatrix(columns_, std::move(values), std::move(labels), std::move(ids));
}

FeatureMatrix make_feature_matrix(std::span<const HsvFeatures> features, std::span<const Label> labels) {
  if (features.size() != labels.size()) {
    throw ValidationError(fmt::format("{} feature rows but {} labels", features.size(), labels.size()));
  }
  std::vector<double> values;
  std::vector<int> y;
  std::vector<std::string> ids;
  values.reserve(features.size() * 6);
  for (std::size_t i = 0; i < features.size(); ++i) {
    const auto v = features[i].values();
    values.insert(values.end(), v.begin(), v.end());
    y.push_back(labels[i] == Label::abnormal ? 1 : 0);
    ids.push_back(features[i].id);
  }
  return FeatureMatrix(feature_columns(FeatureSet::hsv6), std::move(values), std::move(y), std::move(ids));
}

// ---------------------------------------------------------------------------
// IRLS

namespace {

double sigmoid(double eta) {
  if (eta >= 0.0) return 1.0 / (1.0 + std::exp(-eta));
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

// log(1 + exp(eta)) without overflow.
double softplus(double eta) { return eta > 0.0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta)); }

double deviance_of(const MatrixXd& design, const VectorXd& y, const VectorXd& beta) {
  const VectorXd eta = design * beta;
  double ll = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) ll += y[i] * eta[i] - softplus(eta[i]);
  return -2.0 * ll;
}

// Columns are centred and scaled to unit SD before fitting; the solver works
// on this scale and results are mapped back. `to_raw` maps standardized
// (intercept, slopes) to raw ones.
struct Standardized {
  MatrixXd design;  // [1, (x - mean) / sd]
  VectorXd mean, sd;
  MatrixXd to_raw;
};

Standardized standardize(const FeatureMatrix& x) {
  const auto n = static_cast<Eigen::Index>(x.rows());
  const auto p = static_cast<Eigen::Index>(x.cols());
  Standardized s;
  s.mean = VectorXd::Zero(p);
  s.sd = VectorXd::Zero(p);
  for (Eigen::Index c = 0; c < p; ++c) {
    double sum = 0.0;
    for (Eigen::Index r = 0; r < n; ++r) sum += x.at(r, c);
    s.mean[c] = sum / static_cast<double>(n);
    double ss = 0.0;
    for (Eigen::Index r = 0; r < n; ++r) ss += (x.at(r, c) - s.mean[c]) * (x.at(r, c) - s.mean[c]);
    s.sd[c] = std::sqrt(ss / static_cast<double>(n));
    if (!(s.sd[c] > 0.0)) {
      throw FitError(fmt::format("rank-deficient design: column \"{}\" is constant", x.columns()[c]));
    }
  }
  s.design.resize(n, p + 1);
  s.design.col(0).setOnes();
  for (Eigen::Index r = 0; r < n; ++r) {
    for (Eigen::Index c = 0; c < p; ++c) s.design(r, c + 1) = (x.at(r, c) - s.mean[c]) / s.sd[c];
  }
  s.to_raw = MatrixXd::Identity(p + 1, p + 1);
  for (Eigen::Index c = 0; c < p; ++c) {
    s.to_raw(c + 1, c + 1) = 1.0 / s.sd[c];
    s.to_raw(0, c + 1) = -s.mean[c] / s.sd[c];
  }
  return s;
}

VectorXd labels_vector(const FeatureMatrix& x) {
  VectorXd y(static_cast<Eigen::Index>(x.rows()));
  for (std::size_t i = 0; i < x.rows(); ++i) y[static_cast<Eigen::Index>(i)] = x.labels()[i];
  return y;
}

MatrixXd information(const MatrixXd& design, const VectorXd& beta) {
  const VectorXd eta = design * beta;
  VectorXd w(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    const double mu = sigmoid(eta[i]);
    w[i] = mu * (1.0 - mu);
  }
  return design.transpose() * w.asDiagonal() * design;
}

LogisticModel to_model(const FeatureMatrix& x, const Standardized& s, const VectorXd& beta_std, FitStatus status,
                       int iterations, double deviance) {
  const VectorXd raw = s.to_raw * beta_std;
  LogisticModel m;
  m.intercept = raw[0];
  m.names = x.columns();
  m.coefficients.assign(raw.data() + 1, raw.data() + raw.size());
  m.status = status;
  m.iterations = iterations;
  m.deviance = deviance;
  return m;
}

}  // namespace

LogisticModel fit_logistic(const FeatureMatrix& x, const IrlsOptions& options) {
  const std::size_t n = x.rows();
  const std::size_t p = x.cols();
  if (n < p + 1) throw FitError(fmt::format("{} rows cannot fit {} coefficients plus intercept", n, p));
  const auto positives = static_cast<std::size_t>(std::count(x.labels().begin(), x.labels().end(), 1));
  if (positives == 0 || positives == n) throw FitError("labels contain a single class");

  const Standardized s = standardize(x);
  {
    Eigen::ColPivHouseholderQR<MatrixXd> qr(s.design);
    qr.setThreshold(1e-10);
    if (qr.rank() < s.design.cols()) {
      throw FitError(fmt::format("rank-deficient design: {} independent columns out of {} (collinear features)",
                                 qr.rank(), s.design.cols()));
    }
  }
  const VectorXd y = labels_vector(x);

  VectorXd beta = VectorXd::Zero(s.design.cols());
  const double ybar = static_cast<double>(positives) / static_cast<double>(n);
  beta[0] = std::log(ybar / (1.0 - ybar));
  double deviance = deviance_of(s.design, y, beta);

  for (int iter = 1; iter <= options.max_iterations; ++iter) {
    const VectorXd eta = s.design * beta;
    VectorXd residual(eta.size());
    for (Eigen::Index i = 0; i < eta.size(); ++i) residual[i] = y[i] - sigmoid(eta[i]);
    const MatrixXd info = information(s.design, beta);
    Eigen::LLT<MatrixXd> llt(info);
    if (llt.info() != Eigen::Success) {
      // The weights have collapsed: fitted probabilities are at 0 or 1.
      return to_model(x, s, beta, FitStatus::separated, iter - 1, deviance);
    }
    VectorXd step = llt.solve(s.design.transpose() * residual);

    VectorXd candidate = beta + step;
    double candidate_dev = deviance_of(s.design, y, candidate);
    for (int halvings = 0; !(candidate_dev <= deviance * (1.0 + 1e-12) + 1e-300) && halvings < 30; ++halvings) {
      step *= 0.5;
      candidate = beta + step;
      candidate_dev = deviance_of(s.design, y, candidate);
    }

    const double change = step.cwiseAbs().maxCoeff();
    if (change < options.tolerance) {
      return to_model(x, s, candidate, FitStatus::converged, iter, candidate_dev);
    }
    const double slope_magnitude = candidate.size() > 1 ? candidate.tail(candidate.size() - 1).cwiseAbs().maxCoeff() : 0.0;
    if (!candidate.allFinite() || slope_magnitude > options.separation_magnitude ||
        candidate_dev < options.separation_deviance) {
      return to_model(x, s, beta, FitStatus::separated, iter - 1, deviance);
    }
    beta = candidate;
    deviance = candidate_dev;
  }
  return to_model(x, s, beta, FitStatus::max_iterations, options.max_iterations, deviance);
}

double log_likelihood(const LogisticModel& model, const FeatureMatrix& x) {
  double ll = 0.0;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double eta = model.intercept;
    const auto row = x.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) eta += model.coefficients[c] * row[c];
    ll += x.labels()[r] * eta - softplus(eta);
  }
  return ll;
}

// ---------------------------------------------------------------------------
// Inference and scoring

CoefficientStat wald_from_estimate(std::string variable, double beta, double std_error) {
  CoefficientStat s;
  s.variable = std::move(variable);
  s.beta = beta;
  s.std_error = std_error;
  s.odds_ratio = std::exp(beta);
  s.ci_low = std::exp(beta - kZ95 * std_error);
  s.ci_high = std::exp(beta + kZ95 * std_error);
  s.z = std_error > 0.0 ? beta / std_error : 0.0;
  s.p_value = std_error > 0.0 ? std::erfc(std::abs(s.z) / std::numbers::sqrt2) : (beta == 0.0 ? 1.0 : 0.0);
  return s;
}

std::vector<CoefficientStat> wald_stats(const LogisticModel& model, const FeatureMatrix& x) {
  if (!model.converged()) {
    throw FitError(fmt::format("Wald statistics need a converged model (status: {})", to_string(model.status)));
  }
  if (model.names != x.columns()) throw ValidationError("model and feature matrix columns differ");

  const Standardized s = standardize(x);
  const Eigen::Index k = s.design.cols();
  VectorXd raw(k);
  raw[0] = model.intercept;
  for (Eigen::Index c = 1; c < k; ++c) raw[c] = model.coefficients[static_cast<std::size_t>(c - 1)];
  const VectorXd beta_std = s.to_raw.inverse() * raw;

  const MatrixXd info = information(s.design, beta_std);
  Eigen::LDLT<MatrixXd> ldlt(info);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
      ldlt.vectorD().minCoeff() <= 1e-12 * ldlt.vectorD().maxCoeff()) {
    throw FitError("information matrix is singular");
  }
  const MatrixXd cov_std = ldlt.solve(MatrixXd::Identity(k, k));
  const MatrixXd cov = s.to_raw * cov_std * s.to_raw.transpose();

  std::vector<CoefficientStat> out;
  out.reserve(static_cast<std::size_t>(k));
  out.push_back(wald_from_estimate(std::string(kInterceptName), model.intercept, std::sqrt(cov(0, 0))));
  for (Eigen::Index c = 1; c < k; ++c) {
    out.push_back(wald_from_estimate(model.names[static_cast<std::size_t>(c - 1)], raw[c], std::sqrt(cov(c, c))));
  }
  return out;
}

std::vector<double> predict_scores(const LogisticModel& model, const FeatureMatrix& x) {
  if (model.names != x.columns()) {
    throw ValidationError(fmt::format("feature columns do not match the model ({} vs {} columns)", x.cols(),
                                      model.names.size()));
  }
  std::vector<double> scores(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double eta = model.intercept;
    const auto row = x.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) eta += model.coefficients[c] * row[c];
    scores[r] = sigmoid(eta);
  }
  return scores;
}

// ---------------------------------------------------------------------------
// Probe matrix

namespace {

std::vector<std::size_t> rows_in(const ProbeDataset& d, SplitPart part) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < d.parts.size(); ++i) {
    if (d.parts[i] == part) out.push_back(i);
  }
  return out;
}

ProbeCell evaluate(const LogisticModel& model, const FeatureMatrix& x, std::string target, bool internal) {
  ProbeCell cell;
  cell.target = std::move(target);
  cell.internal = internal;
  try {
    const auto scores = predict_scores(model, x);
    cell.result = delong_ci(scores, x.labels());
  } catch (const Error& e) {
    cell.error = e.what();
  }
  return cell;
}

ProbeRow probe_row(std::span<const ProbeDataset> datasets, std::size_t index,
                   const std::vector<std::string>& columns, FeatureSet feature_set) {
  const ProbeDataset& source = datasets[index];
  ProbeRow row;
  row.train_source = source.name;
  row.feature_set = feature_set;

  auto fail_all = [&](const std::string& why) {
    row.error = why;
    for (const auto& d : datasets) {
      ProbeCell cell;
      cell.target = d.name;
      cell.internal = &d == &source;
      cell.error = why;
      row.cells.push_back(std::move(cell));
    }
    return row;
  };

  if (source.parts.size() != source.features.rows()) {
    return fail_all(fmt::format("{} split entries for {} rows", source.parts.size(), source.features.rows()));
  }
  try {
    const FeatureMatrix selected = source.features.select(columns);
    const auto train = rows_in(source, SplitPart::train);
    const auto test = rows_in(source, SplitPart::test);
    if (train.empty() || test.empty()) return fail_all("dataset needs both train and test rows");

    const FeatureMatrix train_x = selected.subset(train);
    row.model = fit_logistic(train_x);
    if (row.model->converged()) {
      row.coefficients = wald_stats(*row.model, train_x);
    } else {
      row.error = fmt::format("fit did not converge ({}); scores use the last stable iterate",
                              to_string(row.model->status));
    }
    for (std::size_t j = 0; j < datasets.size(); ++j) {
      if (j == index) {
        row.cells.push_back(evaluate(*row.model, selected.subset(test), datasets[j].name, true));
      } else {
        row.cells.push_back(evaluate(*row.model, datasets[j].features.select(columns), datasets[j].name, false));
      }
    }
  } catch (const Error& e) {
    row.cells.clear();
    row.model.reset();
    row.coefficients.clear();
    return fail_all(e.what());
  }
  return row;
}

}  // namespace

ProbeMatrix probe_matrix(std::span<const ProbeDataset> datasets, FeatureSet feature_set, int jobs) {
  if (datasets.empty()) throw ValidationError("probe matrix needs at least one dataset");
  ProbeMatrix m;
  m.feature_set = feature_set;
  for (const auto& d : datasets) m.sources.push_back(d.name);
  const auto columns = feature_columns(feature_set);
  m.rows.resize(datasets.size());
  parallel_for(datasets.size(), jobs, [&](std::size_t i) { m.rows[i] = probe_row(datasets, i, columns, feature_set); });
  return m;
}

}  // namespace otobias
