#include "prism/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "prism/common.hpp"
#include "prism/special.hpp"

namespace prism::metrics {

double c_index(const std::vector<double>& risks, const Outcomes& outcomes) {
  PRISM_CHECK(risks.size() == outcomes.size(),
              "c_index: risks/outcomes size mismatch");
  const size_t n = risks.size();
  double num = 0.0, den = 0.0;
  for (size_t i = 0; i < n; ++i) {
    if (!outcomes[i].event) continue;
    for (size_t j = 0; j < n; ++j) {
      if (i == j || !(outcomes[i].time < outcomes[j].time)) continue;
      den += 1.0;
      if (risks[i] > risks[j]) num += 1.0;
      else if (risks[i] == risks[j]) num += 0.5;
    }
  }
  PRISM_CHECK(den > 0.0, "c_index: no comparable pairs");
  return num / den;
}

namespace {

// KM survival of the censoring distribution, evaluated as a left limit G(t-).
class CensoringKM {
 public:
  explicit CensoringKM(const Outcomes& outcomes) {
    std::vector<size_t> order(outcomes.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
      return outcomes[a].time < outcomes[b].time;
    });
    double s = 1.0;
    size_t i = 0;
    const size_t n = outcomes.size();
    size_t at_risk = n;
    while (i < n) {
      const double t = outcomes[order[i]].time;
      size_t cens = 0, total = 0;
      while (i < n && outcomes[order[i]].time == t) {
        if (!outcomes[order[i]].event) ++cens;
        ++total;
        ++i;
      }
      if (cens > 0) {
        // Events leave the risk set for the censoring process first, the
        // usual mirror of the event-before-censoring convention.
        const size_t events_at_t = total - cens;
        s *= 1.0 - static_cast<double>(cens) /
                       static_cast<double>(at_risk - events_at_t);
        times_.push_back(t);
        surv_.push_back(s);
      }
      at_risk -= total;
    }
  }

  double left_limit(double t) const {
    double s = 1.0;
    for (size_t k = 0; k < times_.size() && times_[k] < t; ++k) s = surv_[k];
    return s;
  }

 private:
  std::vector<double> times_, surv_;
};

}  // namespace

double td_auc(const std::vector<double>& risks, const Outcomes& outcomes,
              double horizon) {
  PRISM_CHECK(risks.size() == outcomes.size(),
              "td_auc: risks/outcomes size mismatch");
  const size_t n = risks.size();
  std::vector<size_t> cases, controls;
  for (size_t i = 0; i < n; ++i) {
    if (outcomes[i].event && outcomes[i].time <= horizon) cases.push_back(i);
    else if (outcomes[i].time > horizon) controls.push_back(i);
  }
  PRISM_CHECK(!cases.empty(), "td_auc: no cases at horizon ", horizon);
  PRISM_CHECK(!controls.empty(), "td_auc: no controls at horizon ", horizon);

  const CensoringKM g(outcomes);
  double num = 0.0, den = 0.0;
  for (size_t i : cases) {
    const double gi = g.left_limit(outcomes[i].time);
    PRISM_CHECK(gi > 0.0, "td_auc: degenerate censoring weight at t=",
                outcomes[i].time);
    const double w = 1.0 / gi;
    for (size_t j : controls) {
      den += w;
      if (risks[i] > risks[j]) num += w;
      else if (risks[i] == risks[j]) num += 0.5 * w;
    }
  }
  return num / den;
}

KMCurve km_estimate(const Outcomes& outcomes) {
  PRISM_CHECK(!outcomes.empty(), "km_estimate: no subjects");
  std::vector<size_t> order(outcomes.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return outcomes[a].time < outcomes[b].time;
  });
  KMCurve curve;
  curve.times.push_back(0.0);
  curve.survival.push_back(1.0);
  curve.at_risk.push_back(static_cast<int64_t>(outcomes.size()));
  double s = 1.0;
  size_t i = 0;
  int64_t at_risk = static_cast<int64_t>(outcomes.size());
  const size_t n = outcomes.size();
  while (i < n) {
    const double t = outcomes[order[i]].time;
    int64_t deaths = 0, total = 0;
    while (i < n && outcomes[order[i]].time == t) {
      if (outcomes[order[i]].event) ++deaths;
      ++total;
      ++i;
    }
    if (deaths > 0) {
      s *= 1.0 - static_cast<double>(deaths) / static_cast<double>(at_risk);
      curve.times.push_back(t);
      curve.survival.push_back(s);
      curve.at_risk.push_back(at_risk);
    }
    at_risk -= total;
  }
  return curve;
}

std::pair<std::vector<int>, std::vector<int>> stratify_median(
    const std::vector<double>& risks) {
  PRISM_CHECK(risks.size() >= 2, "stratify_median: need at least 2 subjects");
  std::vector<double> sorted = risks;
  std::sort(sorted.begin(), sorted.end());
  PRISM_CHECK(sorted.front() != sorted.back(),
              "stratify_median: degenerate stratification (all risks equal)");
  const size_t n = sorted.size();
  const double median = (n % 2 == 1)
                            ? sorted[n / 2]
                            : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  std::vector<int> high, low;
  for (size_t i = 0; i < risks.size(); ++i) {
    if (risks[i] > median) high.push_back(static_cast<int>(i));
    else low.push_back(static_cast<int>(i));
  }
  return {high, low};
}

LogRankResult logrank_test(const Outcomes& group_a, const Outcomes& group_b) {
  PRISM_CHECK(!group_a.empty() && !group_b.empty(),
              "logrank_test: both groups must be non-empty");
  struct Row {
    double t;
    bool event;
    int grp;
  };
  std::vector<Row> rows;
  for (const auto& o : group_a) rows.push_back({o.time, o.event, 0});
  for (const auto& o : group_b) rows.push_back({o.time, o.event, 1});
  std::sort(rows.begin(), rows.end(),
            [](const Row& a, const Row& b) { return a.t < b.t; });

  double o_minus_e = 0.0, var = 0.0;
  size_t i = 0;
  double n_a = static_cast<double>(group_a.size());
  double n_b = static_cast<double>(group_b.size());
  while (i < rows.size()) {
    const double t = rows[i].t;
    double d_a = 0, d_b = 0, leave_a = 0, leave_b = 0;
    while (i < rows.size() && rows[i].t == t) {
      if (rows[i].grp == 0) {
        ++leave_a;
        if (rows[i].event) ++d_a;
      } else {
        ++leave_b;
        if (rows[i].event) ++d_b;
      }
      ++i;
    }
    const double d = d_a + d_b;
    const double n = n_a + n_b;
    if (d > 0 && n > 1) {
      const double e_a = d * n_a / n;
      o_minus_e += d_a - e_a;
      var += d * (n_a / n) * (n_b / n) * (n - d) / (n - 1);
    }
    n_a -= leave_a;
    n_b -= leave_b;
  }
  PRISM_CHECK(var > 0.0, "logrank_test: zero variance (no usable events)");
  LogRankResult res;
  res.statistic = o_minus_e * o_minus_e / var;
  res.p = special::chi2_sf(res.statistic, 1.0);
  return res;
}

FisherResult fisher_combine(const std::vector<double>& p_values) {
  PRISM_CHECK(!p_values.empty(), "fisher_combine: empty p-value list");
  FisherResult res;
  for (double p : p_values) {
    PRISM_CHECK(p > 0.0 && p <= 1.0, "fisher_combine: p-value ", p,
                " out of (0,1]");
    res.x2 += -2.0 * std::log(p);
  }
  res.df = 2 * static_cast<int>(p_values.size());
  res.p = special::chi2_sf(res.x2, static_cast<double>(res.df));
  return res;
}

RiskTimeRegression risk_time_regression(const std::vector<double>& risks,
                                        const Outcomes& outcomes,
                                        int grid_points) {
  PRISM_CHECK(risks.size() == outcomes.size(),
              "risk_time_regression: size mismatch");
  const size_t n = risks.size();
  PRISM_CHECK(n >= 3, "risk_time_regression: need at least 3 subjects");

  auto minmax_norm = [](std::vector<double> v, bool* degenerate) {
    const auto [lo_it, hi_it] = std::minmax_element(v.begin(), v.end());
    const double lo = *lo_it, hi = *hi_it;  // copy before mutating v
    const double range = hi - lo;
    *degenerate = range <= 0.0;
    if (!*degenerate)
      for (auto& x : v) x = (x - lo) / range;
    return v;
  };

  std::vector<double> inv_risk(n), time(n);
  for (size_t i = 0; i < n; ++i) {
    inv_risk[i] = -risks[i];
    time[i] = outcomes[i].time;
  }
  bool deg_x = false, deg_y = false;
  std::vector<double> x = minmax_norm(std::move(inv_risk), &deg_x);
  std::vector<double> y = minmax_norm(std::move(time), &deg_y);
  PRISM_CHECK(!deg_x, "risk_time_regression: zero variance in risks");

  double xbar = 0, ybar = 0;
  for (size_t i = 0; i < n; ++i) {
    xbar += x[i];
    ybar += y[i];
  }
  xbar /= static_cast<double>(n);
  ybar /= static_cast<double>(n);
  double sxx = 0, sxy = 0;
  for (size_t i = 0; i < n; ++i) {
    sxx += (x[i] - xbar) * (x[i] - xbar);
    sxy += (x[i] - xbar) * (y[i] - ybar);
  }
  PRISM_CHECK(sxx > 0.0, "risk_time_regression: zero variance in x");

  RiskTimeRegression out;
  out.slope = sxy / sxx;
  out.intercept = ybar - out.slope * xbar;

  double sse = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double r = y[i] - (out.intercept + out.slope * x[i]);
    sse += r * r;
  }
  const double dof = static_cast<double>(n) - 2.0;
  const double s2 = dof > 0 ? sse / dof : 0.0;
  const double tcrit = dof > 0 ? special::student_t_ppf(0.975, dof) : 0.0;
  const double slope_se = std::sqrt(s2 / sxx);
  out.slope_ci_lo = out.slope - tcrit * slope_se;
  out.slope_ci_hi = out.slope + tcrit * slope_se;

  out.points.resize(n);
  for (size_t i = 0; i < n; ++i)
    out.points[i] = {x[i], y[i], outcomes[i].event};

  out.grid.resize(static_cast<size_t>(grid_points));
  out.fit.resize(out.grid.size());
  out.ci_lo.resize(out.grid.size());
  out.ci_hi.resize(out.grid.size());
  for (int k = 0; k < grid_points; ++k) {
    const double gx = static_cast<double>(k) / (grid_points - 1);
    const double fy = out.intercept + out.slope * gx;
    const double se = std::sqrt(
        s2 * (1.0 / static_cast<double>(n) + (gx - xbar) * (gx - xbar) / sxx));
    out.grid[static_cast<size_t>(k)] = gx;
    out.fit[static_cast<size_t>(k)] = fy;
    out.ci_lo[static_cast<size_t>(k)] = fy - tcrit * se;
    out.ci_hi[static_cast<size_t>(k)] = fy + tcrit * se;
  }
  return out;
}

nlohmann::ordered_json MetricsReport::to_json() const {
  nlohmann::ordered_json j;
  j["seed"] = seed;
  j["cohort"] = cohort;
  j["setting"] = setting;
  j["c_index"] = c_index;
  j["td_auc"] = td_auc;
  j["logrank_p"] = logrank_p;
  j["fisher"] = {{"X2", fisher.x2}, {"df", fisher.df}, {"p", fisher.p}};
  j["regression"] = {{"slope", regression_slope},
                     {"ci", {regression_ci_lo, regression_ci_hi}}};
  return j;
}

MetricsReport MetricsReport::from_json(const nlohmann::ordered_json& j) {
  MetricsReport r;
  r.seed = j.at("seed").get<uint64_t>();
  r.cohort = j.at("cohort").get<std::string>();
  r.setting = j.at("setting").get<std::string>();
  r.c_index = j.at("c_index").get<double>();
  r.td_auc = j.at("td_auc").get<std::map<std::string, double>>();
  r.logrank_p = j.at("logrank_p").get<double>();
  r.fisher.x2 = j.at("fisher").at("X2").get<double>();
  r.fisher.df = j.at("fisher").at("df").get<int>();
  r.fisher.p = j.at("fisher").at("p").get<double>();
  r.regression_slope = j.at("regression").at("slope").get<double>();
  r.regression_ci_lo = j.at("regression").at("ci")[0].get<double>();
  r.regression_ci_hi = j.at("regression").at("ci")[1].get<double>();
  return r;
}

std::string km_to_csv(const std::vector<KMCurve>& curves) {
  std::ostringstream os;
  os << "time,survival,at_risk,group\n";
  for (const auto& c : curves)
    for (size_t i = 0; i < c.times.size(); ++i)
      os << c.times[i] << "," << c.survival[i] << "," << c.at_risk[i] << ","
         << c.group << "\n";
  return os.str();
}

}  // namespace prism::metrics
