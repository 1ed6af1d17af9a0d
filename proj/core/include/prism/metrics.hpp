#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "prism/outcome.hpp"

namespace prism::metrics {

/// Harrell concordance over comparable pairs (t_i < t_j with an event at
/// t_i); tied risks count 0.5.
double c_index(const std::vector<double>& risks, const Outcomes& outcomes);

/// Cumulative-case / dynamic-control AUC at the horizon with inverse
/// probability of censoring weights from the Kaplan-Meier estimate of the
/// censoring distribution. Reduces to the Mann-Whitney statistic when no one
/// is censored.
double td_auc(const std::vector<double>& risks, const Outcomes& outcomes,
              double horizon);

struct KMCurve {
  std::vector<double> times;      // event-time grid, starting at 0
  std::vector<double> survival;   // S(t) just after each grid time
  std::vector<int64_t> at_risk;   // subjects at risk just before each time
  std::string group;
};

/// Product-limit estimator. Events are processed before censorings at tied
/// times; censored subjects leave the risk set after their own time.
KMCurve km_estimate(const Outcomes& outcomes);

/// Indices of the (high, low) risk groups split at the median risk:
/// risk > median -> high, risk <= median -> low.
std::pair<std::vector<int>, std::vector<int>> stratify_median(
    const std::vector<double>& risks);

struct LogRankResult {
  double statistic = 0.0;
  double p = 1.0;
};

LogRankResult logrank_test(const Outcomes& group_a, const Outcomes& group_b);

struct FisherResult {
  double x2 = 0.0;
  int df = 0;
  double p = 1.0;
};

/// Fisher's method: X^2 = -2 sum ln(p_i) against chi-squared with 2k df.
FisherResult fisher_combine(const std::vector<double>& p_values);

struct RegressionPoint {
  double x = 0.0;  // normalized inverse risk
  double y = 0.0;  // normalized survival time
  bool event = false;
};

struct RiskTimeRegression {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_ci_lo = 0.0;
  double slope_ci_hi = 0.0;
  std::vector<RegressionPoint> points;
  // Pointwise 95% band on an even grid over [0,1].
  std::vector<double> grid, fit, ci_lo, ci_hi;
};

/// OLS of normalized survival time against normalized inverse risk, with the
/// standard pointwise 95% confidence band. Censored samples are included and
/// flagged in the output.
RiskTimeRegression risk_time_regression(const std::vector<double>& risks,
                                        const Outcomes& outcomes,
                                        int grid_points = 50);

struct MetricsReport {
  uint64_t seed = 0;
  std::string cohort;
  std::string setting;  // "internal" | "external"
  double c_index = 0.0;
  std::map<std::string, double> td_auc;  // horizon (months, as text) -> AUC
  double logrank_p = 1.0;
  FisherResult fisher;
  double regression_slope = 0.0;
  double regression_ci_lo = 0.0;
  double regression_ci_hi = 0.0;

  nlohmann::ordered_json to_json() const;
  static MetricsReport from_json(const nlohmann::ordered_json& j);
};

/// KM curves as CSV rows: time,survival,at_risk,group.
std::string km_to_csv(const std::vector<KMCurve>& curves);

}  // namespace prism::metrics
