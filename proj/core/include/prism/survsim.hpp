#pragma once

#include <vector>

#include "prism/outcome.hpp"
#include "prism/rng.hpp"

namespace prism::synth {

/// Proportional-hazards sampler with an exponential baseline: the event time
/// is -ln(U) / (rate * exp(theta*^T x)); censoring is uniform over
/// [0, censor_window] and independent. delta = [event <= censor].
SurvivalOutcome sample_survival(const std::vector<double>& x,
                                const std::vector<double>& theta_star,
                                double baseline_rate, double censor_window,
                                Rng& rng);

}  // namespace prism::synth
