#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "prism/cohort.hpp"
#include "prism/common.hpp"
#include "prism/ehr.hpp"
#include "prism/phantom.hpp"
#include "prism/survsim.hpp"

using namespace prism;
using namespace prism::synth;
namespace fs = std::filesystem;

namespace {

PhantomGrid small_grid() {
  PhantomGrid g;
  g.slices = 4;
  g.frames = 16;
  g.height = 64;
  g.width = 64;
  g.raw_height = 80;
  g.raw_width = 80;
  return g;
}

double mean_abs_frame_change(const Volume4& v) {
  double acc = 0.0;
  int64_t count = 0;
  for (int z = 0; z < v.d; ++z)
    for (int f = 0; f + 1 < v.t; ++f)
      for (int y = 0; y < v.h; ++y)
        for (int x = 0; x < v.w; ++x) {
          acc += std::fabs(v.at(z, f + 1, y, x) - v.at(z, f, y, x));
          ++count;
        }
  return acc / static_cast<double>(count);
}

fs::path temp_dir(const std::string& tag) {
  auto p = fs::temp_directory_path() / ("prism_test_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("cavity area ratio follows the volume-to-area convention") {
  PhantomSpec spec;
  spec.grid = small_grid();
  spec.ef = 0.6;
  auto areas = cavity_mask_areas(spec);
  const double ratio = *std::max_element(areas.begin(), areas.end()) /
                       *std::min_element(areas.begin(), areas.end());
  const double expected = std::pow(spec.edv / spec.esv(), 2.0 / 3.0);
  CHECK(ratio == doctest::Approx(expected).epsilon(0.05));
}

TEST_CASE("spec invariants: ESV below EDV and exact EF identity") {
  PhantomSpec spec;
  spec.ef = 0.37;
  spec.edv = 181.0;
  CHECK(spec.esv() < spec.edv);
  CHECK(1.0 - spec.esv() / spec.edv == doctest::Approx(spec.ef).epsilon(1e-12));
  spec.ef = 1.2;
  CHECK_THROWS_AS(spec.validate(), Error);
}

TEST_CASE("higher EF produces more frame-to-frame intensity change") {
  PhantomSpec hi, lo;
  hi.grid = lo.grid = small_grid();
  hi.ef = 0.6;
  lo.ef = 0.2;
  hi.noise = lo.noise = 0.0;
  auto study_hi = generate_phantom(hi, 77);
  auto study_lo = generate_phantom(lo, 77);
  CHECK(mean_abs_frame_change(study_hi.sax) > mean_abs_frame_change(study_lo.sax));
}

TEST_CASE("phantom generation is bitwise deterministic") {
  PhantomSpec spec;
  spec.grid = small_grid();
  spec.noise = 0.0;
  auto a = generate_phantom(spec, 5);
  auto b = generate_phantom(spec, 5);
  CHECK(a.sax.v == b.sax.v);
  CHECK(a.lax[0].v == b.lax[0].v);

  spec.noise = 0.03;
  auto c = generate_phantom(spec, 5);
  auto d = generate_phantom(spec, 5);
  CHECK(c.sax.v == d.sax.v);
}

TEST_CASE("phase labels partition frames into 4 contiguous non-empty spans") {
  for (int frames : {16, 24, 25, 40}) {
    PhantomSpec spec;
    spec.grid = small_grid();
    spec.grid.frames = frames;
    auto labels = derive_phase_labels(volume_curve(spec));
    REQUIRE(static_cast<int>(labels.size()) == frames);
    int transitions = 0;
    std::set<Phase> seen{labels[0]};
    for (size_t f = 1; f < labels.size(); ++f) {
      if (labels[f] != labels[f - 1]) {
        ++transitions;
        CHECK(!seen.count(labels[f]));  // contiguity: no phase repeats
        seen.insert(labels[f]);
      }
    }
    CHECK(transitions == 3);
    CHECK(seen.size() == 4);
  }
}

TEST_CASE("phantom intensities stay in [0,1]") {
  PhantomSpec spec;
  spec.grid = small_grid();
  spec.noise = 0.1;
  auto study = generate_phantom(spec, 9);
  for (float p : study.sax.v) {
    CHECK(p >= 0.0f);
    CHECK(p <= 1.0f);
  }
}

TEST_CASE("ehr schema group sizes are 13/8/10/10") {
  const auto& s = EhrSchema::instance();
  CHECK(s.size() == 41);
  CHECK(s.group_indices[0].size() == 13);
  CHECK(s.group_indices[1].size() == 8);
  CHECK(s.group_indices[2].size() == 10);
  CHECK(s.group_indices[3].size() == 10);
}

TEST_CASE("noise-free EHR copies the phantom EF exactly") {
  SubjectLatents latents;
  latents.ef = 0.437;
  latents.edv = 160.0;
  EhrGenConfig cfg;
  cfg.ef_noise_sd = 0.0;
  Rng rng(3);
  auto values = generate_ehr(latents, cfg, rng);
  const auto& schema = EhrSchema::instance();
  CHECK(values[static_cast<size_t>(schema.index_of("phys_ef"))] == latents.ef);
}

TEST_CASE("planted prevalence is recovered within a binomial band") {
  EhrGenConfig cfg;
  cfg.prevalence_overrides["clin_hypertension"] = 0.5;
  SubjectLatents latents;
  const auto& schema = EhrSchema::instance();
  const auto idx = static_cast<size_t>(schema.index_of("clin_hypertension"));
  double hits = 0;
  const int n = 1000;
  for (int i = 0; i < n; ++i) {
    Rng rng = Rng::derive(11, static_cast<uint64_t>(i));
    hits += generate_ehr(latents, cfg, rng)[idx];
  }
  CHECK(hits / n == doctest::Approx(0.5).epsilon(0.1));  // +-0.05 absolute
}

TEST_CASE("survival sampler: baseline mean, exact log-2 scaling, censoring") {
  // theta*=0: event times are exponential draws with mean 1/h0
  Rng rng(123);
  const double h0 = 0.05;
  double acc = 0.0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    auto o = sample_survival({0.0}, {1.0}, h0, 1e9, rng);
    acc += o.time;
  }
  CHECK(acc / n == doctest::Approx(1.0 / h0).epsilon(0.05));

  // shifting eta by log 2 halves each event time exactly (same uniforms)
  for (int i = 0; i < 50; ++i) {
    Rng a(200 + static_cast<uint64_t>(i)), b(200 + static_cast<uint64_t>(i));
    auto o1 = sample_survival({1.0}, {0.4}, h0, 1e9, a);
    auto o2 = sample_survival({1.0}, {0.4 + std::log(2.0)}, h0, 1e9, b);
    CHECK(o2.time == doctest::Approx(o1.time / 2.0).epsilon(1e-12));
  }

  // zero-width censor window censors everyone
  Rng c(9);
  for (int i = 0; i < 20; ++i) {
    auto o = sample_survival({0.0}, {1.0}, h0, 0.0, c);
    CHECK(!o.event);
  }
}

TEST_CASE("cohort generation: structure, determinism, event fraction") {
  CohortSpec spec;
  spec.name = "toy";
  spec.n = 16;
  spec.seed = 21;
  spec.grid = small_grid();
  spec.theta_star = {{"latent:ef_z", 0.8}};

  const auto dir_a = temp_dir("cohort_a");
  const auto dir_b = temp_dir("cohort_b");
  generate_cohort(spec, dir_a);
  generate_cohort(spec, dir_b);
  CHECK(cohort_digest(dir_a) == cohort_digest(dir_b));

  int subject_dirs = 0;
  for (const auto& e : fs::directory_iterator(dir_a / "subjects")) {
    if (!e.is_directory()) continue;
    ++subject_dirs;
    CHECK(fs::exists(e.path() / "sax.bin"));
    CHECK(fs::exists(e.path() / "lax_2ch.bin"));
    CHECK(fs::exists(e.path() / "lax_3ch.bin"));
    CHECK(fs::exists(e.path() / "lax_4ch.bin"));
  }
  CHECK(subject_dirs == 16);

  auto cohort = load_cohort(dir_a);
  CHECK(cohort.size() == 16);
  CHECK(cohort.ehr[0].size() == 41);

  // a study loads back with matching shapes and phase labels
  auto study = load_study(cohort, 3);
  CHECK(study.sax.d == spec.grid.slices);
  CHECK(study.sax.t == spec.grid.frames);
  CHECK(study.phase_labels.size() == static_cast<size_t>(spec.grid.frames));
  CHECK(cohort.read_log.count(cohort.subject_ids[3]) == 1);

  // truth sidecar round-trips
  auto truth = load_truth(dir_a);
  CHECK(truth.theta_star.at("latent:ef_z") == 0.8);
  CHECK(truth.latents.size() == 16);

  fs::remove_all(dir_a);
  fs::remove_all(dir_b);
}

TEST_CASE("event fraction tracks the closed-form target") {
  // With theta*=0, P(event) = 1 - (1 - exp(-lw)) / (lw) for censoring
  // uniform on [0,w] and exponential events at rate l.
  CohortSpec spec;
  spec.name = "ev";
  spec.n = 200;
  spec.seed = 33;
  spec.grid = small_grid();
  spec.grid.slices = 1;  // keep the disk footprint small
  spec.theta_star = {};
  spec.baseline_rate = 0.03;
  spec.censor_window = 60.0;

  const auto dir = temp_dir("cohort_ev");
  generate_cohort(spec, dir);
  auto cohort = load_cohort(dir);
  double events = 0;
  for (const auto& o : cohort.outcomes) events += o.event ? 1 : 0;
  const double lw = spec.baseline_rate * spec.censor_window;
  const double target = 1.0 - (1.0 - std::exp(-lw)) / lw;
  CHECK(std::fabs(events / spec.n - target) <= 0.1);
  fs::remove_all(dir);
}
