#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "prism/ehr.hpp"
#include "prism/outcome.hpp"
#include "prism/phantom.hpp"

namespace prism::synth {

struct CohortSpec {
  std::string name = "synthetic";
  int n = 64;
  uint64_t seed = 1;
  PhantomGrid grid;
  double ef_min = 0.25, ef_max = 0.70;
  double edv_min = 95.0, edv_max = 215.0;
  double p_defect = 0.5;
  std::vector<Segment> defect_choices = {Segment::I};
  double image_noise = 0.02;
  EhrGenConfig ehr;
  // feature name (or latent:ef_z / latent:defect / latent:defect_<SEG>)
  // -> true hazard coefficient
  std::map<std::string, double> theta_star;
  double baseline_rate = 0.03;   // events per month at eta = 0
  double censor_window = 60.0;   // months

  void validate() const;
};

/// Standardized latent covariates the planted hazard acts on. Continuous EHR
/// features enter z-scored with the schema's nominal moments; latent:ef_z is
/// the (negated) z-scored EF so positive coefficients mean "low EF is risky".
double hazard_covariate(const std::string& key, const SubjectLatents& latents,
                        const std::vector<double>& ehr_values);

struct FeatureStats {
  std::vector<double> min, max, mean, sd;  // per schema feature
};

/// On-disk cohort written by generate_cohort:
///   <dir>/cohort.json, ehr.csv, stats.json, truth.json,
///   <dir>/subjects/<id>/{sax,lax_2ch,lax_3ch,lax_4ch}.bin + .json sidecars
void generate_cohort(const CohortSpec& spec, const std::filesystem::path& dir);

struct Cohort {
  std::string name;
  std::filesystem::path dir;
  PhantomGrid grid;
  std::vector<std::string> subject_ids;
  std::vector<std::vector<double>> ehr;  // [n][41]
  Outcomes outcomes;
  FeatureStats stats;
  // subjects whose image blobs were read through load_study; the IECV
  // protocol asserts external training never touches the target train rows
  mutable std::set<std::string> read_log;

  int size() const { return static_cast<int>(subject_ids.size()); }
};

Cohort load_cohort(const std::filesystem::path& dir);

/// Reads one subject's blobs (and records the access in cohort.read_log).
/// `cropped` selects the motion-prepped copy written by the prep step.
CineStudy load_study(const Cohort& cohort, int index, bool cropped = false);

/// Ground-truth sidecar for oracle tests.
struct CohortTruth {
  std::map<std::string, double> theta_star;
  std::vector<SubjectLatents> latents;
  std::vector<double> eta;  // planted linear predictor per subject
};
CohortTruth load_truth(const std::filesystem::path& dir);

/// FNV-1a digest over every regular file (sorted by relative path).
uint64_t cohort_digest(const std::filesystem::path& dir);

}  // namespace prism::synth
