#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace otobias {

enum class SubsetTag { none, with_near_dup, without_near_dup };

std::string_view to_string(SubsetTag tag);
std::optional<SubsetTag> parse_subset_tag(std::string_view text);

struct ScoredSample {
  std::string id;
  double score = 0.0;
  int label = 0;  // abnormal = 1
  SubsetTag subset_tag = SubsetTag::none;
};

struct AucResult {
  double auc = 0.0;
  double variance = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
};

// Two-sided critical value used for every 95% interval in the toolkit.
inline constexpr double kZ95 = 1.959964;

// Standard normal CDF, Phi(z) = erfc(-z / sqrt 2) / 2.
double normal_cdf(double z);

// Upper tail 1 - Phi(z), computed as erfc(z / sqrt 2) / 2 to keep precision
// for large z.
double normal_upper_tail(double z);

// Inverse of normal_cdf for p in (0, 1).
double normal_quantile(double p);

// Critical z for a two-sided interval at `level`; exactly kZ95 for 0.95.
double z_for_level(double level);

// Mann-Whitney AUC with ties counted as one half, via mid-ranks in
// O(n log n). Throws ValidationError on single-class input or non-finite
// scores.
double auc(std::span<const double> scores, std::span<const int> labels);
double auc(std::span<const ScoredSample> samples);

// DeLong structural components: V10 per positive (share of negatives scored
// below it, ties one half) and V01 per negative (share of positives scored
// above it).
struct StructuralComponents {
  std::vector<double> v10;
  std::vector<double> v01;
};

StructuralComponents delong_components(std::span<const double> scores,
                                       std::span<const int> labels);

// AUC with DeLong variance S10/m + S01/n (sample covariances) and the
// normal-approximation interval clipped to [0, 1]. Needs at least two
// samples of each class.
AucResult delong_ci(std::span<const double> scores, std::span<const int> labels,
                    double level = 0.95);
AucResult delong_ci(std::span<const ScoredSample> samples, double level = 0.95);

// One-sided p-value for H1: AUC(a) > AUC(b) on disjoint sample sets,
// z = (auc_a - auc_b) / sqrt(var_a + var_b). With zero combined variance,
// p is 0.5 for equal AUCs and 0 or 1 by the sign of the difference.
double compare_auc_unpaired(const AucResult& a, const AucResult& b);
double compare_auc_unpaired(std::span<const ScoredSample> a, std::span<const ScoredSample> b);

// "0.89 (0.83, 0.95)" style, each number rounded to two decimals.
std::string format_auc(const AucResult& result);

}  // namespace otobias
