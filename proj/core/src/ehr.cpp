#include "prism/ehr.hpp"

#include <algorithm>
#include <cmath>

#include "prism/common.hpp"

namespace prism::synth {

const char* group_prefix(EhrGroup g) {
  switch (g) {
    case EhrGroup::Clinical: return "clin_";
    case EhrGroup::Physiological: return "phys_";
    case EhrGroup::Biochemical: return "bio_";
    case EhrGroup::Pharmaceutical: return "pharm_";
  }
  return "?";
}

const char* group_name(EhrGroup g) {
  switch (g) {
    case EhrGroup::Clinical: return "clinical";
    case EhrGroup::Physiological: return "physiological";
    case EhrGroup::Biochemical: return "biochemical";
    case EhrGroup::Pharmaceutical: return "pharmaceutical";
  }
  return "?";
}

namespace {

EhrSchema build_schema() {
  EhrSchema s;
  auto add = [&](EhrGroup g, const std::string& base, bool binary, double mean,
                 double sd) {
    const int idx = static_cast<int>(s.features.size());
    s.features.push_back({group_prefix(g) + base, g, binary, mean, sd});
    s.group_indices[static_cast<size_t>(g)].push_back(idx);
  };

  // clinical (13): two continuous demographics plus eleven comorbidity flags
  add(EhrGroup::Clinical, "age", false, 61.0, 10.0);
  add(EhrGroup::Clinical, "bmi", false, 26.0, 3.5);
  add(EhrGroup::Clinical, "hypertension", true, 0.55, 0.0);
  add(EhrGroup::Clinical, "diabetes", true, 0.30, 0.0);
  add(EhrGroup::Clinical, "smoking", true, 0.40, 0.0);
  add(EhrGroup::Clinical, "dyslipidemia", true, 0.45, 0.0);
  add(EhrGroup::Clinical, "family_history", true, 0.20, 0.0);
  add(EhrGroup::Clinical, "prior_stroke", true, 0.08, 0.0);
  add(EhrGroup::Clinical, "atrial_fibrillation", true, 0.12, 0.0);
  add(EhrGroup::Clinical, "ckd", true, 0.10, 0.0);
  add(EhrGroup::Clinical, "copd", true, 0.09, 0.0);
  add(EhrGroup::Clinical, "alcohol", true, 0.25, 0.0);
  add(EhrGroup::Clinical, "male", true, 0.72, 0.0);

  // physiological (8): tied to the phantom latents where meaningful
  add(EhrGroup::Physiological, "hr", false, 72.0, 10.0);
  add(EhrGroup::Physiological, "sv", false, 80.0, 18.0);
  add(EhrGroup::Physiological, "ef", false, 0.48, 0.13);
  add(EhrGroup::Physiological, "edv", false, 155.0, 38.0);
  add(EhrGroup::Physiological, "esv", false, 80.0, 32.0);
  add(EhrGroup::Physiological, "sbp", false, 130.0, 15.0);
  add(EhrGroup::Physiological, "dbp", false, 80.0, 10.0);
  add(EhrGroup::Physiological, "qrs", false, 95.0, 12.0);

  // biochemical (10)
  add(EhrGroup::Biochemical, "troponin", false, 2.2, 1.1);      // log-scale
  add(EhrGroup::Biochemical, "ntprobnp", false, 6.8, 1.0);      // log-scale
  add(EhrGroup::Biochemical, "creatinine", false, 1.0, 0.22);
  add(EhrGroup::Biochemical, "crp", false, 1.4, 0.8);           // log-scale
  add(EhrGroup::Biochemical, "ldl", false, 3.1, 0.8);
  add(EhrGroup::Biochemical, "hdl", false, 1.2, 0.3);
  add(EhrGroup::Biochemical, "triglycerides", false, 1.7, 0.6);
  add(EhrGroup::Biochemical, "glucose", false, 6.1, 1.5);
  add(EhrGroup::Biochemical, "hba1c", false, 6.2, 1.0);
  add(EhrGroup::Biochemical, "potassium", false, 4.2, 0.4);

  // pharmaceutical (10): discharge medication flags
  add(EhrGroup::Pharmaceutical, "aspirin", true, 0.90, 0.0);
  add(EhrGroup::Pharmaceutical, "statin", true, 0.85, 0.0);
  add(EhrGroup::Pharmaceutical, "beta_blocker", true, 0.70, 0.0);
  add(EhrGroup::Pharmaceutical, "acei", true, 0.60, 0.0);
  add(EhrGroup::Pharmaceutical, "p2y12", true, 0.85, 0.0);
  add(EhrGroup::Pharmaceutical, "diuretic", true, 0.30, 0.0);
  add(EhrGroup::Pharmaceutical, "anticoagulant", true, 0.15, 0.0);
  add(EhrGroup::Pharmaceutical, "ccb", true, 0.20, 0.0);
  add(EhrGroup::Pharmaceutical, "nitrate", true, 0.25, 0.0);
  add(EhrGroup::Pharmaceutical, "sglt2", true, 0.15, 0.0);

  PRISM_CHECK(s.features.size() == 41, "EhrSchema: expected 41 features");
  PRISM_CHECK(s.group_indices[0].size() == 13 && s.group_indices[1].size() == 8 &&
                  s.group_indices[2].size() == 10 && s.group_indices[3].size() == 10,
              "EhrSchema: group sizes must be 13/8/10/10");
  return s;
}

}  // namespace

const EhrSchema& EhrSchema::instance() {
  static const EhrSchema schema = build_schema();
  return schema;
}

int EhrSchema::index_of(const std::string& name) const {
  for (size_t i = 0; i < features.size(); ++i)
    if (features[i].name == name) return static_cast<int>(i);
  raise("EhrSchema: unknown feature ", name);
}

std::vector<double> generate_ehr(const SubjectLatents& latents,
                                 const EhrGenConfig& config, Rng& rng) {
  const auto& schema = EhrSchema::instance();
  std::vector<double> values(schema.size(), 0.0);

  for (size_t i = 0; i < schema.size(); ++i) {
    const auto& f = schema.features[i];
    if (f.binary) {
      double p = f.nominal_mean;
      auto it = config.prevalence_overrides.find(f.name);
      if (it != config.prevalence_overrides.end()) p = it->second;
      values[i] = rng.bernoulli(p) ? 1.0 : 0.0;
      continue;
    }
    if (f.name == "phys_ef") {
      values[i] = latents.ef + config.ef_noise_sd * rng.normal();
    } else if (f.name == "phys_sv") {
      const double sv = latents.ef * latents.edv;
      values[i] = sv * (1.0 + config.sv_noise_frac * rng.normal());
    } else if (f.name == "phys_edv") {
      values[i] = latents.edv * (1.0 + config.volume_noise_frac * rng.normal());
    } else if (f.name == "phys_esv") {
      const double esv = latents.edv * (1.0 - latents.ef);
      values[i] = esv * (1.0 + config.volume_noise_frac * rng.normal());
    } else if (f.name == "bio_troponin" || f.name == "bio_ntprobnp" ||
               f.name == "bio_crp") {
      // heavy-tailed markers: log-normal with the schema location/scale
      values[i] = std::exp(rng.normal(f.nominal_mean, f.nominal_sd));
    } else {
      values[i] = rng.normal(f.nominal_mean, f.nominal_sd);
    }
  }
  return values;
}

}  // namespace prism::synth
