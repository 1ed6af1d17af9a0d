#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "prism/phantom.hpp"
#include "prism/rng.hpp"

namespace prism::synth {

/// The four semantic EHR groups, in routing order.
enum class EhrGroup : int { Clinical = 0, Physiological = 1, Biochemical = 2, Pharmaceutical = 3 };

const char* group_prefix(EhrGroup g);  // clin_/phys_/bio_/pharm_
const char* group_name(EhrGroup g);

/// Fixed 41-feature schema: 13 clinical, 8 physiological, 10 biochemical,
/// 10 pharmaceutical.
struct EhrSchema {
  struct Feature {
    std::string name;      // with group prefix
    EhrGroup group;
    bool binary;
    double nominal_mean;   // generator-side distribution location
    double nominal_sd;     // generator-side scale (binaries: prevalence in mean)
  };

  std::vector<Feature> features;
  std::array<std::vector<int>, 4> group_indices;

  static const EhrSchema& instance();
  int index_of(const std::string& name) const;
  size_t size() const { return features.size(); }
};

/// Image-side ground truth a subject is generated from.
struct SubjectLatents {
  double ef = 0.6;
  double edv = 150.0;
  Segment defect = Segment::None;
};

struct EhrGenConfig {
  double ef_noise_sd = 0.05;    // EHR EF = latent EF + this noise
  double sv_noise_frac = 0.08;  // relative noise on SV = EF * EDV
  double volume_noise_frac = 0.06;
  std::map<std::string, double> prevalence_overrides;  // binary features
};

/// Draws the 41 feature values; physiological entries correlate with the
/// phantom latents, the rest follow fixed population distributions.
std::vector<double> generate_ehr(const SubjectLatents& latents,
                                 const EhrGenConfig& config, Rng& rng);

}  // namespace prism::synth
