#include "prism/survsim.hpp"

#include <algorithm>
#include <cmath>

#include "prism/common.hpp"

namespace prism::synth {

SurvivalOutcome sample_survival(const std::vector<double>& x,
                                const std::vector<double>& theta_star,
                                double baseline_rate, double censor_window,
                                Rng& rng) {
  PRISM_CHECK(x.size() == theta_star.size(),
              "sample_survival: x/theta length mismatch");
  PRISM_CHECK(baseline_rate > 0.0, "sample_survival: baseline rate must be > 0");
  PRISM_CHECK(censor_window >= 0.0, "sample_survival: negative censor window");
  double eta = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    PRISM_CHECK(std::isfinite(theta_star[i]), "sample_survival: theta not finite");
    eta += theta_star[i] * x[i];
  }
  double u = rng.uniform();
  if (u < 1e-300) u = 1e-300;
  const double event_time = -std::log(u) / (baseline_rate * std::exp(eta));
  const double censor_time = censor_window * rng.uniform();
  SurvivalOutcome out;
  out.event = event_time <= censor_time;
  out.time = std::max(std::min(event_time, censor_time), 1e-12);
  return out;
}

}  // namespace prism::synth
