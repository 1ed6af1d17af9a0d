#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "prism/outcome.hpp"

namespace prism::cox {

/// Row-major design matrix, one row per subject.
struct Design {
  int64_t n = 0;
  int64_t d = 0;
  std::vector<double> x;  // n*d

  double at(int64_t i, int64_t j) const { return x[static_cast<size_t>(i * d + j)]; }
  double& at(int64_t i, int64_t j) { return x[static_cast<size_t>(i * d + j)]; }
  static Design zeros(int64_t n, int64_t d) {
    return Design{n, d, std::vector<double>(static_cast<size_t>(n * d), 0.0)};
  }
};

/// Fused subject representation: EHR dims first, then pooled image dims.
std::vector<double> fuse_features(const std::vector<double>& ehr,
                                  const std::vector<double>& image);

/// Negative log partial likelihood with Breslow tie handling plus lambda *
/// ||theta||^2. Risk sets are {j : t_j >= t_i}; log-sum-exp is max-guarded.
double cox_nll(const std::vector<double>& theta, const Design& X,
               const Outcomes& outcomes, double lambda);

/// Analytic gradient of cox_nll (same conventions).
std::vector<double> cox_nll_grad(const std::vector<double>& theta,
                                 const Design& X, const Outcomes& outcomes,
                                 double lambda);

struct BaselineHazard {
  std::vector<double> times;  // distinct event times, ascending
  std::vector<double> h0;     // cumulative hazard right after each time
  double at(double t) const;  // step evaluation, H0(0) = 0
};

struct CoxModel {
  std::vector<double> theta;  // original feature scale
  double lambda = 0.0;
  std::vector<std::string> feature_names;
  std::vector<double> norm_mean, norm_sd;  // fitted standardization stats
  BaselineHazard baseline;
  int newton_iterations = 0;

  nlohmann::ordered_json to_json() const;
  static CoxModel from_json(const nlohmann::ordered_json& j);
};

struct FitOptions {
  double grad_tol = 1e-8;
  int max_iterations = 100;
  std::vector<std::string> feature_names;  // optional
};

/// Newton-Raphson with step-halving on the ridge-penalized partial
/// likelihood; features are standardized internally and coefficients mapped
/// back to the original scale. Constant columns get coefficient zero.
CoxModel fit_cox(const Design& X, const Outcomes& outcomes, double lambda,
                 const FitOptions& options = {});

double predict_risk(const CoxModel& model, const std::vector<double>& x);

/// Breslow baseline cumulative hazard for an already-fitted linear predictor.
BaselineHazard breslow_baseline(const std::vector<double>& theta,
                                const Design& X, const Outcomes& outcomes);

/// S(t|x) = exp(-H0(t) * exp(theta^T x)) on the grid.
std::vector<double> survival_curve(const CoxModel& model,
                                   const std::vector<double>& x,
                                   const std::vector<double>& t_grid);

/// Optional pre-fit filter: cyclic coordinate-descent Lasso on the partial
/// likelihood; returns indices of features with non-zero coefficients.
std::vector<int> lasso_select(const Design& X, const Outcomes& outcomes,
                              double l1, int max_sweeps = 200);

}  // namespace prism::cox
