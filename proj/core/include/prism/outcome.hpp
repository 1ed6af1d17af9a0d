#pragma once

#include <vector>

namespace prism {

/// Right-censored follow-up: time in months, event=true when the endpoint
/// occurred, false when the subject was censored at that time.
struct SurvivalOutcome {
  double time = 0.0;
  bool event = false;
};

using Outcomes = std::vector<SurvivalOutcome>;

}  // namespace prism
