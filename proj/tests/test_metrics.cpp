#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "prism/common.hpp"
#include "prism/metrics.hpp"
#include "prism/rng.hpp"
#include "prism/special.hpp"

using namespace prism;
using namespace prism::metrics;

namespace {

Outcomes make(std::initializer_list<double> times, std::initializer_list<int> events) {
  Outcomes o;
  auto t = times.begin();
  auto e = events.begin();
  for (; t != times.end(); ++t, ++e) o.push_back({*t, *e != 0});
  return o;
}

// independent Mann-Whitney oracle: mean pairwise indicator with 0.5 for ties
double mann_whitney(const std::vector<double>& case_r,
                    const std::vector<double>& ctrl_r) {
  double s = 0;
  for (double a : case_r)
    for (double b : ctrl_r) s += a > b ? 1.0 : (a == b ? 0.5 : 0.0);
  return s / (static_cast<double>(case_r.size()) * static_cast<double>(ctrl_r.size()));
}

// quadrature oracle for the chi-squared upper tail (Simpson on [x, x+80*df])
double chi2_tail_quadrature(double x, double df) {
  auto pdf = [df](double t) {
    if (t <= 0) return 0.0;
    return std::exp((0.5 * df - 1.0) * std::log(t) - 0.5 * t -
                    std::lgamma(0.5 * df) - 0.5 * df * std::log(2.0));
  };
  const double hi = x + 80.0 * std::max(df, 1.0);
  const int n = 200000;
  const double h = (hi - x) / n;
  double s = pdf(x) + pdf(hi);
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * pdf(x + i * h);
  return s * h / 3.0;
}

}  // namespace

TEST_CASE("c-index: perfect, inverted, and exhaustive-pair example") {
  auto o = make({1, 2, 3}, {1, 1, 1});
  CHECK(c_index({3, 2, 1}, o) == doctest::Approx(1.0));
  CHECK(c_index({1, 2, 3}, o) == doctest::Approx(0.0));

  auto o2 = make({1, 2, 3, 4}, {1, 0, 1, 1});
  CHECK(c_index({4, 1, 2, 3}, o2) == doctest::Approx(0.75));
}

TEST_CASE("c-index invariance under strictly increasing transforms") {
  Rng rng(21);
  std::vector<double> risks(40);
  Outcomes o;
  for (auto& r : risks) r = rng.normal();
  for (int i = 0; i < 40; ++i) o.push_back({rng.uniform(0.1, 10.0), rng.bernoulli(0.7)});
  const double base = c_index(risks, o);
  for (int k = 0; k < 100; ++k) {
    const double a = std::exp(rng.normal() * 0.5);
    const double b = rng.normal();
    std::vector<double> tr(risks.size());
    for (size_t i = 0; i < risks.size(); ++i)
      tr[i] = a * risks[i] + b + 0.1 * std::tanh(risks[i]);
    CHECK(c_index(tr, o) == base);
  }
  // complement under risk negation (no ties by construction)
  std::vector<double> neg(risks.size());
  for (size_t i = 0; i < risks.size(); ++i) neg[i] = -risks[i];
  CHECK(c_index(risks, o) + c_index(neg, o) == doctest::Approx(1.0));
}

TEST_CASE("td_auc equals Mann-Whitney on uncensored data") {
  Rng rng(22);
  const int n = 60;
  std::vector<double> risks(n);
  Outcomes o;
  for (int i = 0; i < n; ++i) {
    risks[static_cast<size_t>(i)] = rng.normal();
    o.push_back({rng.uniform(0.5, 20.0), true});
  }
  const double tau = 10.0;
  std::vector<double> case_r, ctrl_r;
  for (int i = 0; i < n; ++i) {
    if (o[static_cast<size_t>(i)].time <= tau) case_r.push_back(risks[static_cast<size_t>(i)]);
    else ctrl_r.push_back(risks[static_cast<size_t>(i)]);
  }
  CHECK(std::fabs(td_auc(risks, o, tau) - mann_whitney(case_r, ctrl_r)) < 1e-10);
}

TEST_CASE("td_auc is 1 for perfectly ordered risks and 0.5 for noise") {
  Rng rng(23);
  Outcomes o;
  std::vector<double> risks;
  for (int i = 0; i < 50; ++i) {
    const double t = rng.uniform(1.0, 30.0);
    o.push_back({t, true});
    risks.push_back(-t);  // earlier event = higher risk
  }
  CHECK(td_auc(risks, o, 15.0) == doctest::Approx(1.0));

  // risks independent of outcomes
  const int n = 2000;
  Outcomes big;
  std::vector<double> noise(n);
  for (int i = 0; i < n; ++i) {
    big.push_back({rng.uniform(1.0, 30.0), true});
    noise[static_cast<size_t>(i)] = rng.normal();
  }
  CHECK(td_auc(noise, big, 15.0) == doctest::Approx(0.5).epsilon(0.06));
}

TEST_CASE("td_auc errors without cases or controls") {
  auto o = make({1, 2, 3}, {1, 1, 1});
  CHECK_THROWS_WITH_AS(td_auc({1, 2, 3}, o, 0.5), doctest::Contains("0.5"),
                       Error);
  CHECK_THROWS(td_auc({1, 2, 3}, o, 10.0));
}

TEST_CASE("km textbook case and tie convention") {
  auto curve = km_estimate(make({1, 2, 3}, {1, 1, 1}));
  REQUIRE(curve.times.size() == 4);  // t=0 plus three event times
  CHECK(curve.survival[0] == doctest::Approx(1.0));
  CHECK(curve.survival[1] == doctest::Approx(2.0 / 3.0));
  CHECK(curve.survival[2] == doctest::Approx(1.0 / 3.0));
  CHECK(curve.survival[3] == doctest::Approx(0.0));

  // event and censoring tied at t=2: the censored subject still counts as at
  // risk for the event, so the factor is (1 - 1/3)
  auto tied = km_estimate(make({1, 2, 2}, {0, 1, 0}));
  REQUIRE(tied.times.size() == 2);
  CHECK(tied.at_risk[1] == 2);
  CHECK(tied.survival[1] == doctest::Approx(0.5));

  auto none = km_estimate(make({1, 2, 3}, {0, 0, 0}));
  CHECK(none.times.size() == 1);
  CHECK(none.survival[0] == doctest::Approx(1.0));
}

TEST_CASE("median stratification") {
  auto [high, low] = stratify_median({1, 2, 3, 4});
  CHECK(high == std::vector<int>{2, 3});
  CHECK(low == std::vector<int>{0, 1});

  auto [h2, l2] = stratify_median({5, 1, 9, 2, 7});
  CHECK(std::abs(static_cast<int>(h2.size()) - static_cast<int>(l2.size())) == 1);

  // invariant under strictly increasing transform
  auto [h3, l3] = stratify_median({std::exp(5.), std::exp(1.), std::exp(9.),
                                   std::exp(2.), std::exp(7.)});
  CHECK(h3 == h2);
  CHECK(l3 == l2);

  CHECK_THROWS_WITH_AS(stratify_median({2, 2, 2}),
                       doctest::Contains("degenerate"), Error);
}

TEST_CASE("log-rank: identical groups, separated groups, label symmetry") {
  auto a = make({1, 2, 3, 4}, {1, 1, 1, 1});
  auto same = logrank_test(a, a);
  CHECK(same.statistic == doctest::Approx(0.0));
  CHECK(same.p == doctest::Approx(1.0));

  Rng rng(31);
  Outcomes g1, g2;
  for (int i = 0; i < 50; ++i) {
    const double t = rng.uniform(1.0, 5.0);
    g1.push_back({t, true});
    g2.push_back({t * 10.0, true});
  }
  auto sep = logrank_test(g1, g2);
  CHECK(sep.p < 1e-6);
  auto swapped = logrank_test(g2, g1);
  CHECK(swapped.statistic == doctest::Approx(sep.statistic));
  CHECK(swapped.p == doctest::Approx(sep.p));
}

TEST_CASE("fisher combination") {
  auto k1 = fisher_combine({0.1});
  CHECK(k1.x2 == doctest::Approx(-2.0 * std::log(0.1)));
  CHECK(k1.df == 2);
  CHECK(std::fabs(k1.p - 0.1) < 1e-10);  // chi^2_2 tail is exp(-x/2)

  auto ones = fisher_combine({1.0, 1.0, 1.0});
  CHECK(ones.x2 == doctest::Approx(0.0));
  CHECK(ones.p == doctest::Approx(1.0));

  auto five = fisher_combine({0.05, 0.05, 0.05, 0.05, 0.05});
  CHECK(five.x2 == doctest::Approx(29.9573).epsilon(1e-4));
  CHECK(five.df == 10);
  // quadrature oracle for the tail
  const double oracle = chi2_tail_quadrature(five.x2, 10.0);
  CHECK(five.p == doctest::Approx(oracle).epsilon(1e-6));
  CHECK(five.p == doctest::Approx(8.6e-4).epsilon(0.03));

  CHECK_THROWS(fisher_combine({0.0}));
  CHECK_THROWS(fisher_combine({-0.1}));
}

TEST_CASE("risk-time regression") {
  // perfectly anti-ordered: risk = -time gives slope exactly 1
  Outcomes o;
  std::vector<double> risks;
  Rng rng(41);
  for (int i = 0; i < 20; ++i) {
    const double t = rng.uniform(1.0, 40.0);
    o.push_back({t, rng.bernoulli(0.5)});
    risks.push_back(-t);
  }
  auto reg = risk_time_regression(risks, o);
  CHECK(reg.slope == doctest::Approx(1.0).epsilon(1e-12));

  CHECK_THROWS(risk_time_regression({1, 1, 1}, make({1, 2, 3}, {1, 1, 1})));

  // closed-form OLS oracle on random data
  std::vector<double> r2;
  Outcomes o2;
  for (int i = 0; i < 30; ++i) {
    r2.push_back(rng.normal());
    o2.push_back({rng.uniform(1.0, 50.0), rng.bernoulli(0.6)});
  }
  auto reg2 = risk_time_regression(r2, o2);
  // recompute normalized x,y and the closed-form slope
  std::vector<double> x, y;
  {
    std::vector<double> u, t;
    for (double r : r2) u.push_back(-r);
    for (const auto& s : o2) t.push_back(s.time);
    const auto [ulo, uhi] = std::minmax_element(u.begin(), u.end());
    const auto [tlo, thi] = std::minmax_element(t.begin(), t.end());
    for (double v : u) x.push_back((v - *ulo) / (*uhi - *ulo));
    for (double v : t) y.push_back((v - *tlo) / (*thi - *tlo));
  }
  const double xb = std::accumulate(x.begin(), x.end(), 0.0) / x.size();
  const double yb = std::accumulate(y.begin(), y.end(), 0.0) / y.size();
  double sxx = 0, sxy = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - xb) * (x[i] - xb);
    sxy += (x[i] - xb) * (y[i] - yb);
  }
  CHECK(reg2.slope == doctest::Approx(sxy / sxx).epsilon(1e-12));
  CHECK(reg2.points.size() == 30);
}

TEST_CASE("metrics report json round-trip") {
  MetricsReport r;
  r.seed = 7;
  r.cohort = "a";
  r.setting = "internal";
  r.c_index = 0.81;
  r.td_auc["12"] = 0.79;
  r.logrank_p = 0.004;
  r.fisher = {11.0, 2, 0.004};
  r.regression_slope = 0.6;
  r.regression_ci_lo = 0.4;
  r.regression_ci_hi = 0.8;
  auto j = r.to_json();
  auto r2 = MetricsReport::from_json(j);
  CHECK(r2.to_json().dump() == j.dump());
}
