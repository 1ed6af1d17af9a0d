#include "prism/cohort.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "prism/blob_io.hpp"
#include "prism/common.hpp"
#include "prism/survsim.hpp"

namespace prism::synth {

namespace fs = std::filesystem;
using io::Json;

void CohortSpec::validate() const {
  PRISM_CHECK(n >= 8, "CohortSpec: need n >= 8, got ", n);
  PRISM_CHECK(ef_min > 0.0 && ef_max < 1.0 && ef_min < ef_max,
              "CohortSpec: invalid EF range");
  PRISM_CHECK(edv_min > 0.0 && edv_min < edv_max, "CohortSpec: invalid EDV range");
  PRISM_CHECK(p_defect >= 0.0 && p_defect <= 1.0, "CohortSpec: invalid p_defect");
  PRISM_CHECK(!defect_choices.empty() || p_defect == 0.0,
              "CohortSpec: defect_choices empty with p_defect > 0");
  PRISM_CHECK(baseline_rate > 0.0, "CohortSpec: baseline_rate must be > 0");
  PRISM_CHECK(censor_window >= 0.0, "CohortSpec: negative censor window");
}

double hazard_covariate(const std::string& key, const SubjectLatents& latents,
                        const std::vector<double>& ehr_values) {
  if (key == "latent:ef_z") {
    // uniform-EF cohorts: z-score against the nominal schema moments, sign
    // flipped so positive coefficients increase hazard at low EF
    const auto& f = EhrSchema::instance().features[static_cast<size_t>(
        EhrSchema::instance().index_of("phys_ef"))];
    return -(latents.ef - f.nominal_mean) / f.nominal_sd;
  }
  if (key == "latent:defect") return latents.defect == Segment::None ? 0.0 : 1.0;
  if (key.rfind("latent:defect_", 0) == 0) {
    const Segment s = segment_from_name(key.substr(14));
    return latents.defect == s ? 1.0 : 0.0;
  }
  const auto& schema = EhrSchema::instance();
  const int idx = schema.index_of(key);
  const auto& f = schema.features[static_cast<size_t>(idx)];
  const double raw = ehr_values[static_cast<size_t>(idx)];
  if (f.binary) return raw;
  return (raw - f.nominal_mean) / f.nominal_sd;
}

namespace {

Json sidecar(const std::string& subject_id, const std::string& view,
             const std::vector<int64_t>& shape,
             const std::vector<Phase>& phases) {
  Json j;
  j["subject_id"] = subject_id;
  j["view"] = view;
  j["shape"] = shape;
  j["dtype"] = "f32le";
  Json labels = Json::array();
  for (Phase p : phases) labels.push_back(phase_name(p));
  j["phase_labels"] = labels;
  return j;
}

std::string subject_name(int i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "s%04d", i);
  return buf;
}

struct SubjectRow {
  std::string id;
  SubjectLatents latents;
  std::vector<double> ehr;
  SurvivalOutcome outcome;
  double eta = 0.0;
};

}  // namespace

void generate_cohort(const CohortSpec& spec, const fs::path& dir) {
  spec.validate();
  fs::create_directories(dir / "subjects");

  std::vector<SubjectRow> rows(static_cast<size_t>(spec.n));

#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < spec.n; ++i) {
    Rng rng = Rng::derive(spec.seed, static_cast<uint64_t>(i));
    SubjectRow row;
    row.id = subject_name(i);
    row.latents.ef = rng.uniform(spec.ef_min, spec.ef_max);
    row.latents.edv = rng.uniform(spec.edv_min, spec.edv_max);
    row.latents.defect = Segment::None;
    if (rng.bernoulli(spec.p_defect) && !spec.defect_choices.empty())
      row.latents.defect =
          spec.defect_choices[rng.below(spec.defect_choices.size())];

    PhantomSpec ps;
    ps.grid = spec.grid;
    ps.ef = row.latents.ef;
    ps.edv = row.latents.edv;
    ps.defect = row.latents.defect;
    ps.noise = spec.image_noise;
    CineStudy study = generate_phantom(ps, spec.seed ^ (0x51ed2700ULL + i));
    study.subject_id = row.id;

    row.ehr = generate_ehr(row.latents, spec.ehr, rng);
    for (const auto& [key, coef] : spec.theta_star)
      row.eta += coef * hazard_covariate(key, row.latents, row.ehr);
    // one explicit draw pair for the survival sampler
    {
      std::vector<double> x{row.eta};
      std::vector<double> one{1.0};
      row.outcome = sample_survival(x, one, spec.baseline_rate,
                                    spec.censor_window, rng);
    }

    const fs::path sdir = dir / "subjects" / row.id;
    io::write_f32_blob(sdir / "sax.bin", study.sax.v);
    io::write_json_atomic(
        sdir / "sax.json",
        [&] {
          auto j = sidecar(row.id, "sax",
                           {study.sax.d, study.sax.t, study.sax.h, study.sax.w},
                           study.phase_labels);
          j["lv_center"] = {study.lv_center_y, study.lv_center_x};
          return j;
        }());
    for (int v = 0; v < 3; ++v) {
      const auto& lv = study.lax[static_cast<size_t>(v)];
      const std::string view = std::string("lax_") + kLaxViews[static_cast<size_t>(v)];
      io::write_f32_blob(sdir / (view + ".bin"), lv.v);
      io::write_json_atomic(sdir / (view + ".json"),
                            sidecar(row.id, view, {lv.t, lv.h, lv.w},
                                    study.phase_labels));
    }
    rows[static_cast<size_t>(i)] = std::move(row);
  }

  // EHR CSV
  const auto& schema = EhrSchema::instance();
  std::ostringstream csv;
  csv << "subject_id";
  for (const auto& f : schema.features) csv << "," << f.name;
  csv << ",time_months,event\n";
  csv.precision(10);
  for (const auto& row : rows) {
    csv << row.id;
    for (double v : row.ehr) csv << "," << v;
    csv << "," << row.outcome.time << "," << (row.outcome.event ? 1 : 0) << "\n";
  }
  io::write_text_atomic(dir / "ehr.csv", csv.str());

  // per-cohort normalization stats
  Json stats;
  for (size_t f = 0; f < schema.size(); ++f) {
    double lo = rows[0].ehr[f], hi = rows[0].ehr[f], mean = 0.0;
    for (const auto& row : rows) {
      lo = std::min(lo, row.ehr[f]);
      hi = std::max(hi, row.ehr[f]);
      mean += row.ehr[f];
    }
    mean /= static_cast<double>(rows.size());
    double var = 0.0;
    for (const auto& row : rows) var += (row.ehr[f] - mean) * (row.ehr[f] - mean);
    var /= static_cast<double>(rows.size());
    stats[schema.features[f].name] = {{"min", lo},
                                      {"max", hi},
                                      {"mean", mean},
                                      {"sd", std::sqrt(var)}};
  }
  io::write_json_atomic(dir / "stats.json", stats);

  // ground truth for oracle tests
  Json truth;
  truth["theta_star"] = spec.theta_star;
  truth["baseline_rate"] = spec.baseline_rate;
  truth["censor_window"] = spec.censor_window;
  Json subjects = Json::array();
  for (const auto& row : rows) {
    subjects.push_back({{"id", row.id},
                        {"ef", row.latents.ef},
                        {"edv", row.latents.edv},
                        {"defect", segment_name(row.latents.defect)},
                        {"eta", row.eta},
                        {"time_months", row.outcome.time},
                        {"event", row.outcome.event ? 1 : 0}});
  }
  truth["subjects"] = subjects;
  io::write_json_atomic(dir / "truth.json", truth);

  Json manifest;
  manifest["name"] = spec.name;
  manifest["n"] = spec.n;
  manifest["seed"] = spec.seed;
  manifest["grid"] = {{"slices", spec.grid.slices},
                      {"frames", spec.grid.frames},
                      {"height", spec.grid.height},
                      {"width", spec.grid.width},
                      {"raw_height", spec.grid.raw_height},
                      {"raw_width", spec.grid.raw_width}};
  io::write_json_atomic(dir / "cohort.json", manifest);
}

Cohort load_cohort(const fs::path& dir) {
  Cohort c;
  c.dir = dir;
  const Json manifest = io::read_json(dir / "cohort.json");
  c.name = manifest.at("name").get<std::string>();
  const auto& g = manifest.at("grid");
  c.grid.slices = g.at("slices").get<int>();
  c.grid.frames = g.at("frames").get<int>();
  c.grid.height = g.at("height").get<int>();
  c.grid.width = g.at("width").get<int>();
  c.grid.raw_height = g.at("raw_height").get<int>();
  c.grid.raw_width = g.at("raw_width").get<int>();

  const auto& schema = EhrSchema::instance();
  std::ifstream f(dir / "ehr.csv");
  PRISM_CHECK(f.good(), "load_cohort: cannot open ", (dir / "ehr.csv").string());
  std::string line;
  PRISM_CHECK(static_cast<bool>(std::getline(f, line)), "load_cohort: empty csv");
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::getline(ss, cell, ',');
    c.subject_ids.push_back(cell);
    std::vector<double> values;
    values.reserve(schema.size());
    for (size_t k = 0; k < schema.size(); ++k) {
      std::getline(ss, cell, ',');
      values.push_back(std::stod(cell));
    }
    std::getline(ss, cell, ',');
    const double time = std::stod(cell);
    std::getline(ss, cell, ',');
    c.outcomes.push_back({time, cell == "1"});
    c.ehr.push_back(std::move(values));
  }

  const Json stats = io::read_json(dir / "stats.json");
  for (const auto& feat : schema.features) {
    const auto& s = stats.at(feat.name);
    c.stats.min.push_back(s.at("min").get<double>());
    c.stats.max.push_back(s.at("max").get<double>());
    c.stats.mean.push_back(s.at("mean").get<double>());
    c.stats.sd.push_back(s.at("sd").get<double>());
  }
  return c;
}

CineStudy load_study(const Cohort& cohort, int index, bool cropped) {
  PRISM_CHECK(index >= 0 && index < cohort.size(), "load_study: index ", index,
              " out of range");
  const std::string& id = cohort.subject_ids[static_cast<size_t>(index)];
  cohort.read_log.insert(id);
  const fs::path sdir =
      cohort.dir / (cropped ? "prepped" : "subjects") / id;

  CineStudy study;
  study.subject_id = id;
  const Json sax_meta = io::read_json(sdir / "sax.json");
  const auto shape = sax_meta.at("shape").get<std::vector<int64_t>>();
  PRISM_CHECK(shape.size() == 4, "load_study: sax sidecar must be rank 4");
  study.sax.d = static_cast<int>(shape[0]);
  study.sax.t = static_cast<int>(shape[1]);
  study.sax.h = static_cast<int>(shape[2]);
  study.sax.w = static_cast<int>(shape[3]);
  study.sax.v = io::read_f32_blob(sdir / "sax.bin");
  PRISM_CHECK(static_cast<int64_t>(study.sax.v.size()) ==
                  shape[0] * shape[1] * shape[2] * shape[3],
              "load_study: sax blob size mismatch for ", id);
  for (const auto& name : sax_meta.at("phase_labels")) {
    const std::string p = name.get<std::string>();
    bool found = false;
    for (int k = 0; k < 4; ++k)
      if (p == phase_name(static_cast<Phase>(k))) {
        study.phase_labels.push_back(static_cast<Phase>(k));
        found = true;
      }
    PRISM_CHECK(found, "load_study: unknown phase label ", p);
  }
  if (sax_meta.contains("lv_center")) {
    study.lv_center_y = sax_meta.at("lv_center")[0].get<double>();
    study.lv_center_x = sax_meta.at("lv_center")[1].get<double>();
  }

  for (int v = 0; v < 3; ++v) {
    const std::string view = std::string("lax_") + kLaxViews[static_cast<size_t>(v)];
    const Json meta = io::read_json(sdir / (view + ".json"));
    const auto lshape = meta.at("shape").get<std::vector<int64_t>>();
    PRISM_CHECK(lshape.size() == 3, "load_study: lax sidecar must be rank 3");
    auto& lv = study.lax[static_cast<size_t>(v)];
    lv.t = static_cast<int>(lshape[0]);
    lv.h = static_cast<int>(lshape[1]);
    lv.w = static_cast<int>(lshape[2]);
    lv.v = io::read_f32_blob(sdir / (view + ".bin"));
    PRISM_CHECK(static_cast<int64_t>(lv.v.size()) ==
                    lshape[0] * lshape[1] * lshape[2],
                "load_study: lax blob size mismatch for ", id);
  }
  return study;
}

CohortTruth load_truth(const fs::path& dir) {
  const Json j = io::read_json(dir / "truth.json");
  CohortTruth t;
  for (const auto& [key, value] : j.at("theta_star").items())
    t.theta_star[key] = value.get<double>();
  for (const auto& s : j.at("subjects")) {
    SubjectLatents l;
    l.ef = s.at("ef").get<double>();
    l.edv = s.at("edv").get<double>();
    l.defect = segment_from_name(s.at("defect").get<std::string>());
    t.latents.push_back(l);
    t.eta.push_back(s.at("eta").get<double>());
  }
  return t;
}

uint64_t cohort_digest(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir))
    if (entry.is_regular_file()) files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const char* data, size_t n) {
    for (size_t i = 0; i < n; ++i) {
      h ^= static_cast<unsigned char>(data[i]);
      h *= 1099511628211ULL;
    }
  };
  for (const auto& p : files) {
    const std::string rel = fs::relative(p, dir).string();
    mix(rel.data(), rel.size());
    const std::string bytes = io::read_text(p);
    mix(bytes.data(), bytes.size());
  }
  return h;
}

}  // namespace prism::synth
