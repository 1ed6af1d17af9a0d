#include <doctest.h>

#include <cmath>

#include "prism/cox.hpp"
#include "prism/optim.hpp"
#include "prism/rng.hpp"
#include "prism/survsim.hpp"
#include "prism/tape.hpp"

using namespace prism;
using cox::Design;

namespace {

// Tape replica of the partial likelihood for the gradient audit.
double cox_nll_tape(const ad::ParamStore<double>& params, const Design& X,
                    const Outcomes& outcomes, double lambda,
                    ad::Grads64* grads_out) {
  ad::TapeT<double> t;
  auto ids = ad::bind_params(t, params);
  auto theta = ids.at("theta");  // [d,1]
  auto xm = t.constant(ad::Arr64({X.n, X.d}, std::vector<double>(X.x)));
  auto eta = t.matmul(xm, theta);  // [n,1]

  std::vector<size_t> order(outcomes.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return outcomes[a].time < outcomes[b].time;
  });
  // per-event terms with risk sets {j: t_j >= t_i}
  std::vector<ad::TapeT<double>::Id> terms;
  for (size_t k = 0; k < order.size(); ++k) {
    const size_t i = order[k];
    if (!outcomes[i].event) continue;
    size_t first = k;
    while (first > 0 && outcomes[order[first - 1]].time == outcomes[i].time)
      --first;
    std::vector<int32_t> risk_rows;
    for (size_t j = first; j < order.size(); ++j)
      risk_rows.push_back(static_cast<int32_t>(order[j]));
    auto eta_risk = t.gather_rows(eta, risk_rows);
    auto lse = t.logsumexp_all(eta_risk);
    auto eta_i = t.slice_rows(eta, static_cast<int64_t>(i), static_cast<int64_t>(i) + 1);
    terms.push_back(t.sub(lse, eta_i));
  }
  auto loss = terms.empty() ? t.constant(0.0) : t.sum(t.concat_rows(terms));
  loss = t.add(loss, t.scale(t.sum(t.square(theta)), lambda));
  if (grads_out) {
    t.backward(loss);
    *grads_out = ad::collect_grads(t, params, ids);
  }
  return t.val(loss).v[0];
}

}  // namespace

TEST_CASE("fuse_features concatenates EHR first") {
  std::vector<double> e(41, 1.0), r(64, 2.0);
  auto fused = cox::fuse_features(e, r);
  CHECK(fused.size() == 105);
  CHECK(fused[0] == 1.0);
  CHECK(fused[41] == 2.0);

  auto ehr_only = cox::fuse_features(e, {});
  CHECK(ehr_only == e);

  CHECK_THROWS(cox::fuse_features({std::nan("")}, r));
}

TEST_CASE("cox_nll hand cases") {
  // theta=0, both events at times [1,2]: log|R(t1)| + log|R(t2)| = log2
  Design X = Design::zeros(2, 1);
  X.at(0, 0) = 0.3;
  X.at(1, 0) = -0.7;
  Outcomes o{{1.0, true}, {2.0, true}};
  CHECK(cox::cox_nll({0.0}, X, o, 0.0) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));

  // no events: only the ridge term remains
  Outcomes cens{{1.0, false}, {2.0, false}};
  CHECK(cox::cox_nll({1.5}, X, cens, 0.25) == doctest::Approx(0.25 * 1.5 * 1.5));
}

TEST_CASE("cox_nll analytic gradient matches finite differences at 64-bit") {
  Rng rng(51);
  const int n = 5, d = 3;
  Design X = Design::zeros(n, d);
  for (auto& v : X.x) v = rng.normal();
  Outcomes o;
  for (int i = 0; i < n; ++i) o.push_back({rng.uniform(1.0, 10.0), rng.bernoulli(0.8)});
  if (!o[0].event) o[0].event = true;

  ad::ParamStore<double> params;
  auto th = ad::Arr64::zeros({d, 1});
  for (auto& v : th.v) v = rng.normal() * 0.4;
  params.add("theta", th);

  // tape gradient against central differences
  ad::Grads64 grads;
  cox_nll_tape(params, X, o, 0.1, &grads);
  const double err = ad::finite_diff_check(
      [&](const ad::ParamStore<double>& p) {
        return cox_nll_tape(p, X, o, 0.1, nullptr);
      },
      params, grads, 1e-6);
  CHECK(err < 1e-6);

  // tape value agrees with the production implementation
  std::vector<double> theta_v(th.v.begin(), th.v.end());
  CHECK(cox_nll_tape(params, X, o, 0.1, nullptr) ==
        doctest::Approx(cox::cox_nll(theta_v, X, o, 0.1)).epsilon(1e-12));

  // and the hand-written analytic gradient agrees with the tape gradient
  auto hand = cox::cox_nll_grad(theta_v, X, o, 0.1);
  for (int j = 0; j < d; ++j)
    CHECK(hand[static_cast<size_t>(j)] ==
          doctest::Approx(grads.at("theta").v[static_cast<size_t>(j)]).epsilon(1e-9));
}

TEST_CASE("fit_cox recovers planted coefficients") {
  const std::vector<double> theta_star{1.0, -0.5};
  int hits = 0;
  int max_iters = 0;
  for (uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed);
    const int n = 500;
    Design X = Design::zeros(n, 2);
    Outcomes o;
    for (int i = 0; i < n; ++i) {
      const std::vector<double> x{rng.normal(), rng.normal()};
      X.at(i, 0) = x[0];
      X.at(i, 1) = x[1];
      o.push_back(synth::sample_survival(x, theta_star, 0.05, 60.0, rng));
    }
    auto model = cox::fit_cox(X, o, 1e-4);
    max_iters = std::max(max_iters, model.newton_iterations);
    if (std::fabs(model.theta[0] - 1.0) <= 0.15 &&
        std::fabs(model.theta[1] + 0.5) <= 0.15)
      ++hits;
  }
  CHECK(hits >= 4);
  CHECK(max_iters < 25);
}

TEST_CASE("constant covariate is pulled to zero by ridge") {
  Rng rng(52);
  const int n = 80;
  Design X = Design::zeros(n, 2);
  Outcomes o;
  for (int i = 0; i < n; ++i) {
    X.at(i, 0) = rng.normal();
    X.at(i, 1) = 1.0;  // identical for everyone
    o.push_back({rng.uniform(1.0, 20.0), rng.bernoulli(0.7)});
  }
  auto model = cox::fit_cox(X, o, 0.01);
  CHECK(model.theta[1] == 0.0);
}

TEST_CASE("column rescaling rescales the coefficient exactly at lambda=0") {
  Rng rng(53);
  const int n = 120;
  Design X = Design::zeros(n, 2);
  Outcomes o;
  std::vector<double> theta_star{0.8, -0.3};
  for (int i = 0; i < n; ++i) {
    const std::vector<double> x{rng.normal(), rng.normal()};
    X.at(i, 0) = x[0];
    X.at(i, 1) = x[1];
    o.push_back(synth::sample_survival(x, theta_star, 0.05, 80.0, rng));
  }
  auto m1 = cox::fit_cox(X, o, 0.0);
  Design Xs = X;
  const double c = 4.0;
  for (int i = 0; i < n; ++i) Xs.at(i, 0) *= c;
  auto m2 = cox::fit_cox(Xs, o, 0.0);
  CHECK(m2.theta[0] == doctest::Approx(m1.theta[0] / c).epsilon(1e-9));
  CHECK(m2.theta[1] == doctest::Approx(m1.theta[1]).epsilon(1e-9));
}

TEST_CASE("fit_cox refuses event-free cohorts") {
  Design X = Design::zeros(3, 1);
  Outcomes o{{1, false}, {2, false}, {3, false}};
  CHECK_THROWS_WITH_AS(cox::fit_cox(X, o, 0.1), doctest::Contains("no events"),
                       Error);
}

TEST_CASE("breslow baseline") {
  // theta=0, single event at t1 among n at risk: jump 1/n
  const int n = 5;
  Design X = Design::zeros(n, 1);
  Outcomes o;
  for (int i = 0; i < n; ++i) o.push_back({static_cast<double>(i + 1), i == 0});
  auto base = cox::breslow_baseline({0.0}, X, o);
  REQUIRE(base.times.size() == 1);
  CHECK(base.h0[0] == doctest::Approx(1.0 / n));
  CHECK(base.at(0.5) == 0.0);
  CHECK(base.at(1.0) == doctest::Approx(1.0 / n));

  // no events: identically zero
  Outcomes cens;
  for (int i = 0; i < n; ++i) cens.push_back({static_cast<double>(i + 1), false});
  auto empty = cox::breslow_baseline({0.0}, X, cens);
  CHECK(empty.times.empty());
  CHECK(empty.at(100.0) == 0.0);

  // monotone for a fitted model
  Rng rng(54);
  Design X2 = Design::zeros(60, 2);
  Outcomes o2;
  for (int i = 0; i < 60; ++i) {
    X2.at(i, 0) = rng.normal();
    X2.at(i, 1) = rng.normal();
    o2.push_back({rng.uniform(0.5, 30.0), rng.bernoulli(0.6)});
  }
  auto model = cox::fit_cox(X2, o2, 0.01);
  for (size_t i = 1; i < model.baseline.h0.size(); ++i)
    CHECK(model.baseline.h0[i] >= model.baseline.h0[i - 1]);
}

TEST_CASE("survival curves obey the proportional-hazards identity") {
  Rng rng(55);
  Design X = Design::zeros(50, 2);
  Outcomes o;
  for (int i = 0; i < 50; ++i) {
    X.at(i, 0) = rng.normal();
    X.at(i, 1) = rng.normal();
    o.push_back({rng.uniform(0.5, 24.0), rng.bernoulli(0.7)});
  }
  auto model = cox::fit_cox(X, o, 0.01);
  std::vector<double> grid{0.0, 2.0, 5.0, 10.0, 20.0};
  std::vector<double> x{0.4, -1.2};
  auto s = cox::survival_curve(model, x, grid);
  CHECK(s[0] == doctest::Approx(1.0));
  for (size_t i = 1; i < s.size(); ++i) CHECK(s[i] <= s[i - 1] + 1e-12);

  // adding log2 to the linear predictor doubles log S exactly
  const double risk = cox::predict_risk(model, x);
  const double target = risk + std::log(2.0);
  // shift the first coordinate to produce the target risk
  std::vector<double> x2 = x;
  x2[0] += (target - risk) / model.theta[0];
  auto s2 = cox::survival_curve(model, x2, grid);
  for (size_t i = 1; i < grid.size(); ++i) {
    if (s[i] > 0 && s[i] < 1)
      CHECK(std::log(s2[i]) == doctest::Approx(2.0 * std::log(s[i])).epsilon(1e-9));
  }
}

TEST_CASE("predict_risk basics") {
  cox::CoxModel m;
  m.theta = {2.0, -1.0};
  CHECK(cox::predict_risk(m, {1.0, 1.0}) == doctest::Approx(1.0));
  CHECK(cox::predict_risk(m, {0.0, 0.0}) == doctest::Approx(0.0));
  m.theta = {0.0, 0.0};
  CHECK(cox::predict_risk(m, {3.0, 9.0}) == doctest::Approx(0.0));
  CHECK_THROWS(cox::predict_risk(m, {1.0}));
}

TEST_CASE("partial likelihood is convex along random directions") {
  Rng rng(56);
  const int n = 40, d = 3;
  Design X = Design::zeros(n, d);
  for (auto& v : X.x) v = rng.normal();
  Outcomes o;
  for (int i = 0; i < n; ++i) o.push_back({rng.uniform(0.5, 15.0), rng.bernoulli(0.7)});
  o[0].event = true;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> theta(d), dir(d);
    for (auto& v : theta) v = rng.normal() * 0.5;
    for (auto& v : dir) v = rng.normal();
    const double h = 1e-3;
    std::vector<double> plus(theta), minus(theta);
    for (int j = 0; j < d; ++j) {
      plus[static_cast<size_t>(j)] += h * dir[static_cast<size_t>(j)];
      minus[static_cast<size_t>(j)] -= h * dir[static_cast<size_t>(j)];
    }
    const double second = cox::cox_nll(plus, X, o, 0.0) -
                          2.0 * cox::cox_nll(theta, X, o, 0.0) +
                          cox::cox_nll(minus, X, o, 0.0);
    CHECK(second > -1e-9);
  }
}

TEST_CASE("risk ordering is invariant to column shifts and tiny ridge") {
  Rng rng(57);
  const int n = 100;
  Design X = Design::zeros(n, 2);
  Outcomes o;
  std::vector<double> theta_star{1.0, 0.6};
  for (int i = 0; i < n; ++i) {
    const std::vector<double> x{rng.normal(), rng.normal()};
    X.at(i, 0) = x[0];
    X.at(i, 1) = x[1];
    o.push_back(synth::sample_survival(x, theta_star, 0.04, 90.0, rng));
  }
  auto m_shifted = [&] {
    Design Xs = X;
    for (int i = 0; i < n; ++i) Xs.at(i, 0) += 100.0;
    return cox::fit_cox(Xs, o, 1e-8);
  }();
  auto m_plain = cox::fit_cox(X, o, 1e-8);
  auto m_zero = cox::fit_cox(X, o, 0.0);

  auto rank_agreement = [&](const cox::CoxModel& a, const cox::CoxModel& b,
                            bool shift) {
    int agree = 0, total = 0;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) {
        std::vector<double> xi{X.at(i, 0), X.at(i, 1)};
        std::vector<double> xj{X.at(j, 0), X.at(j, 1)};
        std::vector<double> xi_s{X.at(i, 0) + (shift ? 100.0 : 0.0), X.at(i, 1)};
        std::vector<double> xj_s{X.at(j, 0) + (shift ? 100.0 : 0.0), X.at(j, 1)};
        const bool oa = cox::predict_risk(a, xi_s) > cox::predict_risk(a, xj_s);
        const bool ob = cox::predict_risk(b, xi) > cox::predict_risk(b, xj);
        agree += oa == ob;
        ++total;
      }
    return static_cast<double>(agree) / total;
  };
  CHECK(rank_agreement(m_shifted, m_plain, true) == doctest::Approx(1.0));
  CHECK(rank_agreement(m_plain, m_zero, false) == doctest::Approx(1.0));
}

TEST_CASE("lasso prefilter drops pure-noise columns at strong penalty") {
  Rng rng(58);
  const int n = 200;
  Design X = Design::zeros(n, 4);
  Outcomes o;
  std::vector<double> theta_star{1.2, 0.0, 0.0, 0.0};
  for (int i = 0; i < n; ++i) {
    std::vector<double> x{rng.normal(), rng.normal(), rng.normal(), rng.normal()};
    for (int j = 0; j < 4; ++j) X.at(i, j) = x[static_cast<size_t>(j)];
    o.push_back(synth::sample_survival(x, theta_star, 0.05, 60.0, rng));
  }
  auto keep = cox::lasso_select(X, o, 8.0);
  REQUIRE(!keep.empty());
  CHECK(keep[0] == 0);
  CHECK(keep.size() <= 2);
}
