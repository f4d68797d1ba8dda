#include "otobias/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include <fmt/format.h>

#include "otobias/error.hpp"

namespace otobias {

std::string_view to_string(SubsetTag tag) {
  switch (tag) {
    case SubsetTag::with_near_dup:
      return "with_near_dup";
    case SubsetTag::without_near_dup:
      return "without_near_dup";
    case SubsetTag::none:
      break;
  }
  return "none";
}

std::optional<SubsetTag> parse_subset_tag(std::string_view text) {
  if (text == "with_near_dup") return SubsetTag::with_near_dup;
  if (text == "without_near_dup") return SubsetTag::without_near_dup;
  if (text == "none" || text.empty()) return SubsetTag::none;
  return std::nullopt;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double normal_upper_tail(double z) { return 0.5 * std::erfc(z / std::numbers::sqrt2); }

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw ValidationError(fmt::format("normal quantile of {} is undefined", p));
  // Acklam's rational approximation (relative error ~1e-9), then one Halley
  // step against normal_cdf to reach full double precision.
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                 1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                 6.680131188771972e+01,  -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                 -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                 3.754408661907416e+00};
  constexpr double low = 0.02425;
  double x;
  if (p < low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - low) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double e = normal_cdf(x) - p;
  const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
  return x - u / (1.0 + 0.5 * x * u);
}

double z_for_level(double level) {
  if (!(level > 0.0 && level < 1.0)) throw ValidationError(fmt::format("confidence level {} is not in (0, 1)", level));
  if (level == 0.95) return kZ95;
  return normal_quantile(0.5 + level / 2.0);
}

namespace {

void check_inputs(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) {
    throw ValidationError(fmt::format("{} scores but {} labels", scores.size(), labels.size()));
  }
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores[i])) throw ValidationError(fmt::format("score {} is not finite", i));
    if (labels[i] != 0 && labels[i] != 1) throw ValidationError(fmt::format("label {} is not 0/1", i));
  }
}

// 1-based mid-ranks of `values` (ties share the average rank). Mid-ranks are
// multiples of 1/2 and therefore exact in double.
std::vector<double> midranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && values[order[j]] == values[order[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + 1 + j);  // average of ranks i+1 .. j
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = mid;
    i = j;
  }
  return ranks;
}

struct Split {
  std::vector<double> pos, neg;
};

Split split_by_label(std::span<const double> scores, std::span<const int> labels) {
  Split s;
  for (std::size_t i = 0; i < scores.size(); ++i) (labels[i] ? s.pos : s.neg).push_back(scores[i]);
  return s;
}

std::vector<double> scores_of(std::span<const ScoredSample> samples) {
  std::vector<double> out(samples.size());
  std::transform(samples.begin(), samples.end(), out.begin(), [](const ScoredSample& s) { return s.score; });
  return out;
}

std::vector<int> labels_of(std::span<const ScoredSample> samples) {
  std::vector<int> out(samples.size());
  std::transform(samples.begin(), samples.end(), out.begin(), [](const ScoredSample& s) { return s.label; });
  return out;
}

double sample_variance(const std::vector<double>& v) {
  const double n = static_cast<double>(v.size());
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return ss / (n - 1.0);
}

}  // namespace

double auc(std::span<const double> scores, std::span<const int> labels) {
  check_inputs(scores, labels);
  const auto ranks = midranks(scores);
  double rank_sum = 0.0;
  std::size_t m = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i]) {
      rank_sum += ranks[i];
      ++m;
    }
  }
  const std::size_t n = scores.size() - m;
  if (m == 0 || n == 0) {
    throw ValidationError(fmt::format("AUC needs both classes ({} positive, {} negative)", m, n));
  }
  // Mann-Whitney U for the positives; exact for any realistic n.
  const double u = rank_sum - 0.5 * static_cast<double>(m) * static_cast<double>(m + 1);
  return u / (static_cast<double>(m) * static_cast<double>(n));
}

double auc(std::span<const ScoredSample> samples) {
  const auto s = scores_of(samples);
  const auto l = labels_of(samples);
  return auc(s, l);
}

StructuralComponents delong_components(std::span<const double> scores, std::span<const int> labels) {
  check_inputs(scores, labels);
  const Split s = split_by_label(scores, labels);
  const std::size_t m = s.pos.size(), n = s.neg.size();
  if (m == 0 || n == 0) {
    throw ValidationError(fmt::format("AUC needs both classes ({} positive, {} negative)", m, n));
  }
  const auto all = midranks(scores);
  const auto within_pos = midranks(s.pos);
  const auto within_neg = midranks(s.neg);

  StructuralComponents out;
  out.v10.reserve(m);
  out.v01.reserve(n);
  std::size_t ip = 0, in = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i]) {
      // Rank among everything minus rank among positives = negatives below
      // (ties one half).
      out.v10.push_back((all[i] - within_pos[ip++]) / static_cast<double>(n));
    } else {
      out.v01.push_back(1.0 - (all[i] - within_neg[in++]) / static_cast<double>(m));
    }
  }
  return out;
}

AucResult delong_ci(std::span<const double> scores, std::span<const int> labels, double level) {
  const double z = z_for_level(level);
  const auto comps = delong_components(scores, labels);
  const std::size_t m = comps.v10.size(), n = comps.v01.size();
  if (m < 2 || n < 2) {
    throw ValidationError(
        fmt::format("DeLong variance needs at least 2 samples per class ({} positive, {} negative)", m, n));
  }
  AucResult r;
  r.n_pos = m;
  r.n_neg = n;
  r.auc = auc(scores, labels);
  r.variance = sample_variance(comps.v10) / static_cast<double>(m) + sample_variance(comps.v01) / static_cast<double>(n);
  if (r.variance <= 0.0) {
    r.variance = 0.0;
    r.ci_low = r.ci_high = r.auc;
    return r;
  }
  const double half = z * std::sqrt(r.variance);
  r.ci_low = std::clamp(r.auc - half, 0.0, 1.0);
  r.ci_high = std::clamp(r.auc + half, 0.0, 1.0);
  return r;
}

AucResult delong_ci(std::span<const ScoredSample> samples, double level) {
  const auto s = scores_of(samples);
  const auto l = labels_of(samples);
  return delong_ci(s, l, level);
}

double compare_auc_unpaired(const AucResult& a, const AucResult& b) {
  const double var = a.variance + b.variance;
  const double diff = a.auc - b.auc;
  if (var <= 0.0) {
    if (diff == 0.0) return 0.5;
    return diff > 0.0 ? 0.0 : 1.0;
  }
  return normal_upper_tail(diff / std::sqrt(var));
}

double compare_auc_unpaired(std::span<const ScoredSample> a, std::span<const ScoredSample> b) {
  return compare_auc_unpaired(delong_ci(a), delong_ci(b));
}

std::string format_auc(const AucResult& r) {
  auto num = [](double x) {
    const double rounded = std::round(x * 100.0) / 100.0;
    std::string s = fmt::format("{}", rounded);
    if (s.find_first_of(".e") == std::string::npos) s += ".0";
    return s;
  };
  return fmt::format("{} ({}, {})", num(r.auc), num(r.ci_low), num(r.ci_high));
}

}  // namespace otobias
