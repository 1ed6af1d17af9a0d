#include "prism/cox.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "prism/common.hpp"

namespace prism::cox {

namespace {

std::vector<size_t> order_by_time(const Outcomes& outcomes) {
  std::vector<size_t> order(outcomes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return outcomes[a].time < outcomes[b].time;
  });
  return order;
}

struct NllTerms {
  double nll = 0.0;
  Eigen::VectorXd grad;
  Eigen::MatrixXd hess;
};

// One descending sweep accumulates risk-set sums S0, S1, S2; each event then
// contributes its Breslow term.
NllTerms cox_terms(const Eigen::VectorXd& theta, const Design& X,
                   const Outcomes& outcomes, double lambda, bool with_hess) {
  const int64_t n = X.n, d = X.d;
  PRISM_CHECK(static_cast<int64_t>(outcomes.size()) == n,
              "cox: outcomes/design size mismatch");
  PRISM_CHECK(theta.size() == d, "cox: theta has ", theta.size(),
              " entries for ", d, " features");

  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                 Eigen::RowMajor>>
      Xm(X.x.data(), n, d);
  Eigen::VectorXd eta = Xm * theta;
  const double m = eta.size() > 0 ? eta.maxCoeff() : 0.0;

  NllTerms out;
  out.grad = Eigen::VectorXd::Zero(d);
  if (with_hess) out.hess = Eigen::MatrixXd::Zero(d, d);

  const auto order = order_by_time(outcomes);
  double s0 = 0.0;
  Eigen::VectorXd s1 = Eigen::VectorXd::Zero(d);
  Eigen::MatrixXd s2;
  if (with_hess) s2 = Eigen::MatrixXd::Zero(d, d);

  int64_t k = n - 1;
  while (k >= 0) {
    const double t = outcomes[order[static_cast<size_t>(k)]].time;
    int64_t j = k;
    // absorb everyone tied at time t into the risk set first
    while (j >= 0 && outcomes[order[static_cast<size_t>(j)]].time == t) {
      const size_t idx = order[static_cast<size_t>(j)];
      const double w = std::exp(eta[static_cast<int64_t>(idx)] - m);
      s0 += w;
      s1 += w * Xm.row(static_cast<int64_t>(idx)).transpose();
      if (with_hess)
        s2 += w * Xm.row(static_cast<int64_t>(idx)).transpose() *
              Xm.row(static_cast<int64_t>(idx));
      --j;
    }
    for (int64_t e = k; e > j; --e) {
      const size_t idx = order[static_cast<size_t>(e)];
      if (!outcomes[idx].event) continue;
      out.nll -= eta[static_cast<int64_t>(idx)] - (m + std::log(s0));
      const Eigen::VectorXd mean1 = s1 / s0;
      out.grad -= Xm.row(static_cast<int64_t>(idx)).transpose() - mean1;
      if (with_hess) out.hess += s2 / s0 - mean1 * mean1.transpose();
    }
    k = j;
  }

  out.nll += lambda * theta.squaredNorm();
  out.grad += 2.0 * lambda * theta;
  if (with_hess)
    out.hess += 2.0 * lambda * Eigen::MatrixXd::Identity(d, d);
  return out;
}

int count_events(const Outcomes& outcomes) {
  int e = 0;
  for (const auto& o : outcomes) e += o.event ? 1 : 0;
  return e;
}

}  // namespace

std::vector<double> fuse_features(const std::vector<double>& ehr,
                                  const std::vector<double>& image) {
  std::vector<double> fused;
  fused.reserve(ehr.size() + image.size());
  for (double v : ehr) {
    PRISM_CHECK(std::isfinite(v), "fuse_features: non-finite EHR value");
    fused.push_back(v);
  }
  for (double v : image) {
    PRISM_CHECK(std::isfinite(v), "fuse_features: non-finite image value");
    fused.push_back(v);
  }
  return fused;
}

double cox_nll(const std::vector<double>& theta, const Design& X,
               const Outcomes& outcomes, double lambda) {
  Eigen::Map<const Eigen::VectorXd> th(theta.data(),
                                       static_cast<int64_t>(theta.size()));
  return cox_terms(th, X, outcomes, lambda, false).nll;
}

std::vector<double> cox_nll_grad(const std::vector<double>& theta,
                                 const Design& X, const Outcomes& outcomes,
                                 double lambda) {
  Eigen::Map<const Eigen::VectorXd> th(theta.data(),
                                       static_cast<int64_t>(theta.size()));
  const auto terms = cox_terms(th, X, outcomes, lambda, false);
  return {terms.grad.data(), terms.grad.data() + terms.grad.size()};
}

double BaselineHazard::at(double t) const {
  double h = 0.0;
  for (size_t i = 0; i < times.size() && times[i] <= t; ++i) h = h0[i];
  return h;
}

CoxModel fit_cox(const Design& X, const Outcomes& outcomes, double lambda,
                 const FitOptions& options) {
  const int64_t n = X.n, d = X.d;
  PRISM_CHECK(n >= 2, "fit_cox: need at least 2 subjects");
  PRISM_CHECK(count_events(outcomes) >= 1, "fit_cox: no events in cohort");
  PRISM_CHECK(lambda >= 0.0, "fit_cox: lambda must be non-negative");

  // standardize columns; constant columns carry no information and are
  // frozen at coefficient zero
  std::vector<double> mean(static_cast<size_t>(d), 0.0),
      sd(static_cast<size_t>(d), 0.0);
  for (int64_t j = 0; j < d; ++j) {
    double m = 0;
    for (int64_t i = 0; i < n; ++i) m += X.at(i, j);
    m /= static_cast<double>(n);
    double v = 0;
    for (int64_t i = 0; i < n; ++i) v += (X.at(i, j) - m) * (X.at(i, j) - m);
    v /= static_cast<double>(n);
    mean[static_cast<size_t>(j)] = m;
    sd[static_cast<size_t>(j)] = std::sqrt(v);
  }
  std::vector<int64_t> active;
  for (int64_t j = 0; j < d; ++j)
    if (sd[static_cast<size_t>(j)] > 1e-12) active.push_back(j);

  Design Z = Design::zeros(n, static_cast<int64_t>(active.size()));
  for (int64_t i = 0; i < n; ++i)
    for (size_t a = 0; a < active.size(); ++a)
      Z.at(i, static_cast<int64_t>(a)) =
          (X.at(i, active[a]) - mean[static_cast<size_t>(active[a])]) /
          sd[static_cast<size_t>(active[a])];

  const int64_t da = Z.d;
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(da);
  auto cur = cox_terms(theta, Z, outcomes, lambda, true);
  int iter = 0;
  for (; iter < options.max_iterations; ++iter) {
    if (cur.grad.lpNorm<Eigen::Infinity>() < options.grad_tol) break;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(cur.hess);
    PRISM_CHECK(ldlt.info() == Eigen::Success,
                "fit_cox: singular Hessian; try a larger ridge lambda");
    const Eigen::VectorXd step = ldlt.solve(-cur.grad);
    PRISM_CHECK(step.allFinite(),
                "fit_cox: non-finite Newton step; try a larger ridge lambda");

    double alpha = 1.0;
    bool improved = false;
    // accept within the double-precision noise floor so Newton can take its
    // last full step at the optimum
    const double accept_tol = 1e-12 * (1.0 + std::fabs(cur.nll));
    for (int h = 0; h < 40; ++h) {
      const Eigen::VectorXd cand = theta + alpha * step;
      const auto cand_terms = cox_terms(cand, Z, outcomes, lambda, true);
      if (cand_terms.nll <= cur.nll + accept_tol) {
        theta = cand;
        cur = cand_terms;
        improved = true;
        break;
      }
      alpha *= 0.5;
    }
    PRISM_CHECK(improved,
                "fit_cox: line search failed (possible separation); "
                "try a larger ridge lambda");
    PRISM_CHECK(theta.lpNorm<Eigen::Infinity>() < 1e6,
                "fit_cox: coefficients diverging (possible separation); "
                "try a larger ridge lambda");
  }

  CoxModel model;
  model.lambda = lambda;
  model.newton_iterations = iter;
  model.norm_mean = mean;
  model.norm_sd = sd;
  model.theta.assign(static_cast<size_t>(d), 0.0);
  for (size_t a = 0; a < active.size(); ++a)
    model.theta[static_cast<size_t>(active[a])] =
        theta[static_cast<int64_t>(a)] / sd[static_cast<size_t>(active[a])];
  model.feature_names = options.feature_names;
  if (model.feature_names.empty())
    for (int64_t j = 0; j < d; ++j)
      model.feature_names.push_back("f" + std::to_string(j));
  model.baseline = breslow_baseline(model.theta, X, outcomes);
  return model;
}

double predict_risk(const CoxModel& model, const std::vector<double>& x) {
  PRISM_CHECK(x.size() == model.theta.size(), "predict_risk: feature length ",
              x.size(), " does not match model dimension ", model.theta.size());
  double r = 0.0;
  for (size_t i = 0; i < x.size(); ++i) r += model.theta[i] * x[i];
  return r;
}

BaselineHazard breslow_baseline(const std::vector<double>& theta,
                                const Design& X, const Outcomes& outcomes) {
  const int64_t n = X.n;
  std::vector<double> eta(static_cast<size_t>(n), 0.0);
  for (int64_t i = 0; i < n; ++i) {
    double e = 0;
    for (int64_t j = 0; j < X.d; ++j) e += theta[static_cast<size_t>(j)] * X.at(i, j);
    eta[static_cast<size_t>(i)] = e;
  }
  const double m =
      eta.empty() ? 0.0 : *std::max_element(eta.begin(), eta.end());

  const auto order = order_by_time(outcomes);
  BaselineHazard base;
  double cum = 0.0;
  double s0 = 0.0;
  int64_t k = n - 1;
  // descending sweep mirrors cox_terms so risk sets match the likelihood
  std::vector<std::pair<double, double>> jumps;  // (time, d_k / sum)
  while (k >= 0) {
    const double t = outcomes[order[static_cast<size_t>(k)]].time;
    int64_t j = k;
    int64_t deaths = 0;
    while (j >= 0 && outcomes[order[static_cast<size_t>(j)]].time == t) {
      const size_t idx = order[static_cast<size_t>(j)];
      s0 += std::exp(eta[idx] - m);
      if (outcomes[idx].event) ++deaths;
      --j;
    }
    if (deaths > 0)
      jumps.emplace_back(t, static_cast<double>(deaths) / (s0 * std::exp(m)));
    k = j;
  }
  std::reverse(jumps.begin(), jumps.end());
  for (const auto& [t, jump] : jumps) {
    cum += jump;
    base.times.push_back(t);
    base.h0.push_back(cum);
  }
  return base;
}

std::vector<double> survival_curve(const CoxModel& model,
                                   const std::vector<double>& x,
                                   const std::vector<double>& t_grid) {
  const double risk = predict_risk(model, x);
  std::vector<double> s(t_grid.size());
  for (size_t i = 0; i < t_grid.size(); ++i)
    s[i] = std::exp(-model.baseline.at(t_grid[i]) * std::exp(risk));
  return s;
}

std::vector<int> lasso_select(const Design& X, const Outcomes& outcomes,
                              double l1, int max_sweeps) {
  const int64_t n = X.n, d = X.d;
  PRISM_CHECK(l1 >= 0.0, "lasso_select: l1 must be non-negative");

  // standardized copy (constant columns are never selected)
  std::vector<double> mean(static_cast<size_t>(d)), sd(static_cast<size_t>(d));
  Design Z = Design::zeros(n, d);
  for (int64_t j = 0; j < d; ++j) {
    double m = 0;
    for (int64_t i = 0; i < n; ++i) m += X.at(i, j);
    m /= static_cast<double>(n);
    double v = 0;
    for (int64_t i = 0; i < n; ++i) v += (X.at(i, j) - m) * (X.at(i, j) - m);
    sd[static_cast<size_t>(j)] = std::sqrt(v / static_cast<double>(n));
    mean[static_cast<size_t>(j)] = m;
    for (int64_t i = 0; i < n; ++i)
      Z.at(i, j) = sd[static_cast<size_t>(j)] > 1e-12
                       ? (X.at(i, j) - m) / sd[static_cast<size_t>(j)]
                       : 0.0;
  }

  Eigen::VectorXd theta = Eigen::VectorXd::Zero(d);
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    const auto terms = cox_terms(theta, Z, outcomes, 0.0, true);
    double max_delta = 0.0;
    for (int64_t j = 0; j < d; ++j) {
      const double h = std::max(terms.hess(j, j), 1e-8);
      const double u = theta[j] * h - terms.grad[j];
      const double soft = std::max(0.0, std::fabs(u) - l1);
      const double updated = (u >= 0 ? soft : -soft) / h;
      max_delta = std::max(max_delta, std::fabs(updated - theta[j]));
      theta[j] = updated;
    }
    if (max_delta < 1e-7) break;
  }
  std::vector<int> keep;
  for (int64_t j = 0; j < d; ++j)
    if (std::fabs(theta[j]) > 1e-10) keep.push_back(static_cast<int>(j));
  return keep;
}

nlohmann::ordered_json CoxModel::to_json() const {
  nlohmann::ordered_json j;
  j["theta"] = theta;
  j["lambda"] = lambda;
  j["feature_names"] = feature_names;
  j["normalization"] = {{"mean", norm_mean}, {"sd", norm_sd}};
  j["baseline"] = {{"times", baseline.times}, {"H0", baseline.h0}};
  j["newton_iterations"] = newton_iterations;
  return j;
}

CoxModel CoxModel::from_json(const nlohmann::ordered_json& j) {
  CoxModel m;
  m.theta = j.at("theta").get<std::vector<double>>();
  m.lambda = j.at("lambda").get<double>();
  m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
  m.norm_mean = j.at("normalization").at("mean").get<std::vector<double>>();
  m.norm_sd = j.at("normalization").at("sd").get<std::vector<double>>();
  m.baseline.times = j.at("baseline").at("times").get<std::vector<double>>();
  m.baseline.h0 = j.at("baseline").at("H0").get<std::vector<double>>();
  m.newton_iterations = j.value("newton_iterations", 0);
  return m;
}

}  // namespace prism::cox
