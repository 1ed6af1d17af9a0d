#include "prism/phantom.hpp"

#include <algorithm>
#include <cmath>

namespace prism::synth {

namespace {

constexpr double kPi = 3.14159265358979323846;

double smoothstep(double edge_lo, double edge_hi, double x) {
  const double t = std::clamp((x - edge_lo) / (edge_hi - edge_lo), 0.0, 1.0);
  return t * t * (3.0 - 2.0 * t);
}

// 1 inside a [-1,1]-pixel band around r, soft edges
double disk_coverage(double dist, double radius) {
  return smoothstep(-1.0, 1.0, radius - dist);
}

// Smooth low-frequency texture from a handful of fixed sinusoids.
struct Texture {
  struct Wave {
    double kx, ky, phase, amp;
  };
  std::vector<Wave> waves;

  static Texture make(Rng& rng, int n_waves, double amp) {
    Texture t;
    for (int i = 0; i < n_waves; ++i) {
      const double ang = rng.uniform(0.0, 2.0 * kPi);
      const double freq = rng.uniform(0.03, 0.11);
      t.waves.push_back({freq * std::cos(ang), freq * std::sin(ang),
                         rng.uniform(0.0, 2.0 * kPi), amp * rng.uniform(0.5, 1.0)});
    }
    return t;
  }
  double at(double x, double y) const {
    double s = 0.0;
    for (const auto& w : waves) s += w.amp * std::sin(w.kx * x + w.ky * y + w.phase);
    return s;
  }
};

// Geometry shared by SAX and LAX rendering.
struct LvGeometry {
  const PhantomSpec& spec;
  double cx, cy;            // LV center in raw pixels
  double base_radius;       // cavity radius at the most basal slice, at ED
  double defect_center_rad; // segment center angle (radians, y-up)
  bool has_defect;
  std::vector<double> lambda;  // per-frame linear contraction factor

  LvGeometry(const PhantomSpec& s, double center_x, double center_y)
      : spec(s), cx(center_x), cy(center_y) {
    base_radius = 0.21 * std::min(s.grid.raw_height, s.grid.raw_width);
    has_defect = s.defect != Segment::None;
    defect_center_rad = segment_center_deg(s.defect) * kPi / 180.0;
    const auto curve = volume_curve(s);
    lambda.resize(curve.size());
    for (size_t i = 0; i < curve.size(); ++i) lambda[i] = std::cbrt(curve[i]);
  }

  // apex->base cavity profile; zeta in [0,1]
  double profile(double zeta) const {
    const double u = 1.0 - std::clamp(zeta, 0.0, 1.0);
    return std::sqrt(std::max(0.12, 1.0 - u * u));
  }

  double zeta_of_slice(int z) const {
    return (static_cast<double>(z) + 0.5) / spec.grid.slices;
  }

  // local motion amplitude in [defect_scale, 1]; smooth 60-degree wedge
  double amplitude(double theta) const {
    if (!has_defect) return 1.0;
    double d = std::remainder(theta - defect_center_rad, 2.0 * kPi);
    d = std::fabs(d);
    const double half = kPi / 6.0;           // 30 degrees
    const double ramp = kPi / 12.0;          // 15-degree shoulder
    double wedge = 0.0;
    if (d <= half) wedge = 1.0;
    else if (d <= half + ramp) wedge = 1.0 - smoothstep(half, half + ramp, d);
    return 1.0 - (1.0 - spec.defect_amplitude_scale) * wedge;
  }

  double cavity_radius(double zeta, int frame, double theta) const {
    const double r_ed = base_radius * profile(zeta);
    const double contraction = 1.0 - lambda[static_cast<size_t>(frame)];
    return r_ed * (1.0 - contraction * amplitude(theta));
  }

  double outer_radius(double zeta, int frame, double theta) const {
    const double r_ed = base_radius * profile(zeta);
    const double thickness = std::max(2.5, 0.30 * r_ed);
    const double ring_area = 2.0 * r_ed * thickness + thickness * thickness;
    const double rc = cavity_radius(zeta, frame, theta);
    return std::sqrt(rc * rc + ring_area);
  }
};

void render_sax_frame(const LvGeometry& geo, const Texture& tex, int z,
                      int frame, float* out, int h, int w) {
  const double zeta = geo.zeta_of_slice(z);
  const double lam = geo.lambda[static_cast<size_t>(frame)];
  const double rv_scale = 0.88 + 0.12 * lam;
  const double rv_cx = geo.cx - geo.base_radius * 1.45;
  const double rv_cy = geo.cy - geo.base_radius * 0.15;
  const double rv_a = 0.95 * geo.base_radius * geo.profile(zeta) * rv_scale;
  const double rv_b = 1.25 * geo.base_radius * geo.profile(zeta) * rv_scale;

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double dx = x - geo.cx;
      const double dy_up = geo.cy - y;
      const double dist = std::hypot(dx, dy_up);
      const double theta = std::atan2(dy_up, dx);

      double pix = 0.16 + tex.at(x, y);

      // RV crescent: ellipse, carved by the LV outer wall
      const double rdx = (x - rv_cx) / rv_a;
      const double rdy = (rv_cy - y) / rv_b;
      const double rv_r = std::sqrt(rdx * rdx + rdy * rdy);
      const double lv_out = geo.outer_radius(zeta, frame, theta);
      const double rv_blood =
          smoothstep(1.12, 1.0, rv_r) * smoothstep(-1.0, 1.0, dist - (lv_out + 1.5));
      const double rv_wall =
          (smoothstep(1.30, 1.18, rv_r) - smoothstep(1.12, 1.0, rv_r)) *
          smoothstep(-1.0, 1.0, dist - (lv_out + 0.5));
      pix = pix + rv_wall * (0.45 - pix);
      pix = pix + rv_blood * (0.88 - pix);

      // LV ring and cavity
      const double myo = disk_coverage(dist, lv_out);
      pix = pix + myo * (0.50 + 0.6 * tex.at(x + 31.0, y - 17.0) - pix);
      const double blood =
          disk_coverage(dist, geo.cavity_radius(zeta, frame, theta));
      pix = pix + blood * (0.95 - pix);

      out[y * w + x] = static_cast<float>(pix);
    }
  }
}

// Long-axis plane at the given azimuth: rows run base (top) to apex (bottom).
void render_lax_frame(const LvGeometry& geo, const Texture& tex, double azimuth,
                      int frame, float* out, int h, int w) {
  const double y_base = 0.20 * h;
  const double y_apex = 0.86 * h;
  const double atria_r = geo.base_radius * 0.85;

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double u = x - geo.cx;
      const double zeta = (y_apex - y) / (y_apex - y_base);
      double pix = 0.16 + tex.at(x + 7.0, y + 3.0);

      if (zeta >= 1.0) {
        // atrium: static pool above the base plane, with a valve gap
        const double gap = y_base - y;
        if (gap > 2.5) {
          const double cov = smoothstep(-1.0, 1.0, atria_r - std::fabs(u)) *
                             smoothstep(-1.0, 1.0, 0.30 * h - gap);
          pix = pix + cov * (0.80 - pix);
        }
      } else {
        const double z = std::max(zeta, 0.0);
        const double r_pos = geo.cavity_radius(z, frame, azimuth);
        const double r_neg = geo.cavity_radius(z, frame, azimuth + kPi);
        const double o_pos = geo.outer_radius(z, frame, azimuth);
        const double o_neg = geo.outer_radius(z, frame, azimuth + kPi);
        const double apex_fade = zeta < 0.0 ? 0.0 : 1.0;

        double wall = 0.0, blood = 0.0;
        if (u >= 0) {
          wall = (smoothstep(-1.0, 1.0, o_pos - u) -
                  smoothstep(-1.0, 1.0, r_pos - u));
          blood = smoothstep(-1.0, 1.0, r_pos - u) * apex_fade;
        } else {
          wall = (smoothstep(-1.0, 1.0, o_neg + u) -
                  smoothstep(-1.0, 1.0, r_neg + u));
          blood = smoothstep(-1.0, 1.0, r_neg + u) * apex_fade;
        }
        if (zeta < 0.0) {
          // apical cap
          const double below = y - y_apex;
          wall = std::max(wall, smoothstep(-1.0, 1.0,
                                           0.5 * (o_pos + o_neg) - below -
                                               std::fabs(u)) *
                                    0.9);
          blood = 0.0;
        }
        pix = pix + std::clamp(wall, 0.0, 1.0) *
                        (0.50 + 0.6 * tex.at(x - 13.0, y + 29.0) - pix);
        pix = pix + std::clamp(blood, 0.0, 1.0) * (0.95 - pix);
      }
      out[y * w + x] = static_cast<float>(pix);
    }
  }
}

}  // namespace

const char* segment_name(Segment s) {
  switch (s) {
    case Segment::A: return "A";
    case Segment::AS: return "AS";
    case Segment::IS: return "IS";
    case Segment::I: return "I";
    case Segment::IL: return "IL";
    case Segment::AL: return "AL";
    case Segment::None: return "none";
  }
  return "?";
}

Segment segment_from_name(const std::string& name) {
  for (int i = 0; i <= 6; ++i)
    if (name == segment_name(static_cast<Segment>(i)))
      return static_cast<Segment>(i);
  raise("unknown segment name: ", name);
}

double segment_center_deg(Segment s) {
  switch (s) {
    case Segment::A: return 90.0;
    case Segment::AS: return 150.0;
    case Segment::IS: return 210.0;
    case Segment::I: return 270.0;
    case Segment::IL: return 330.0;
    case Segment::AL: return 30.0;
    case Segment::None: return 0.0;
  }
  return 0.0;
}

const char* phase_name(Phase p) {
  switch (p) {
    case Phase::EarlyDiastole: return "early_diastole";
    case Phase::LateDiastole: return "late_diastole";
    case Phase::Ejection: return "ventricular_ejection";
    case Phase::IsovolumicRelaxation: return "isovolumetric_relaxation";
  }
  return "?";
}

void PhantomSpec::validate() const {
  PRISM_CHECK(ef > 0.0 && ef < 1.0, "PhantomSpec: EF must be in (0,1), got ", ef);
  PRISM_CHECK(edv > 0.0, "PhantomSpec: EDV must be positive");
  PRISM_CHECK(esv() < edv, "PhantomSpec: ESV must be below EDV");
  PRISM_CHECK(grid.frames >= 8, "PhantomSpec: need at least 8 frames");
  PRISM_CHECK(grid.slices >= 1, "PhantomSpec: need at least 1 slice");
  PRISM_CHECK(grid.raw_height >= grid.height && grid.raw_width >= grid.width,
              "PhantomSpec: raw dims must not be below target dims");
  PRISM_CHECK(noise >= 0.0, "PhantomSpec: negative noise level");
  PRISM_CHECK(defect_amplitude_scale >= 0.0 && defect_amplitude_scale <= 1.0,
              "PhantomSpec: defect amplitude scale out of [0,1]");
}

std::vector<double> volume_curve(const PhantomSpec& spec) {
  const int t_total = spec.grid.frames;
  // ejection / isovolumetric relaxation / filling, roughly 1/3, 1/8, rest
  int n_ej = std::max(2, static_cast<int>(std::lround(t_total / 3.0)));
  int n_iso = std::max(1, static_cast<int>(std::lround(t_total / 8.0)));
  int n_fill = t_total - n_ej - n_iso;
  PRISM_CHECK(n_fill >= 2, "volume_curve: too few frames for filling span");

  const double v_min = 1.0 - spec.ef;
  std::vector<double> v(static_cast<size_t>(t_total));
  for (int f = 0; f < n_ej; ++f) {
    const double s = static_cast<double>(f) / n_ej;  // frame 0 at ED
    v[static_cast<size_t>(f)] =
        v_min + (1.0 - v_min) * 0.5 * (1.0 + std::cos(kPi * s));
  }
  for (int f = 0; f < n_iso; ++f) v[static_cast<size_t>(n_ej + f)] = v_min;
  for (int f = 0; f < n_fill; ++f) {
    const double s = static_cast<double>(f + 1) / n_fill;
    // rapid early filling followed by a slower late (atrial) phase
    const double shape = 0.5 * (1.0 - std::cos(kPi * std::pow(s, 0.85)));
    v[static_cast<size_t>(n_ej + n_iso + f)] = v_min + (1.0 - v_min) * shape;
  }
  return v;
}

std::vector<Phase> derive_phase_labels(const std::vector<double>& curve) {
  const int t_total = static_cast<int>(curve.size());
  PRISM_CHECK(t_total >= 4, "derive_phase_labels: need >= 4 frames");
  const double v_min = *std::min_element(curve.begin(), curve.end());

  // decreasing prefix = ejection
  int eject_end = 1;
  while (eject_end < t_total && curve[static_cast<size_t>(eject_end)] <
                                    curve[static_cast<size_t>(eject_end - 1)])
    ++eject_end;
  // plateau at the minimum = isovolumetric relaxation
  int iso_end = eject_end;
  while (iso_end < t_total &&
         curve[static_cast<size_t>(iso_end)] <= v_min + 1e-12)
    ++iso_end;
  PRISM_CHECK(iso_end > eject_end, "derive_phase_labels: no relaxation plateau");
  PRISM_CHECK(iso_end < t_total, "derive_phase_labels: no filling span");

  const int n_fill = t_total - iso_end;
  const int early_end = iso_end + (n_fill + 1) / 2;
  std::vector<Phase> labels(static_cast<size_t>(t_total));
  for (int f = 0; f < t_total; ++f) {
    if (f < eject_end) labels[static_cast<size_t>(f)] = Phase::Ejection;
    else if (f < iso_end) labels[static_cast<size_t>(f)] = Phase::IsovolumicRelaxation;
    else if (f < early_end) labels[static_cast<size_t>(f)] = Phase::EarlyDiastole;
    else labels[static_cast<size_t>(f)] = Phase::LateDiastole;
  }
  return labels;
}

CineStudy generate_phantom(const PhantomSpec& spec, uint64_t seed) {
  spec.validate();
  const int d = spec.grid.slices, t = spec.grid.frames;
  const int h = spec.grid.raw_height, w = spec.grid.raw_width;

  Rng rng(seed);
  // LV sits slightly right of frame center, RV crescent on its left
  const double cx = 0.56 * w + rng.uniform(-4.0, 4.0);
  const double cy = 0.5 * h + rng.uniform(-4.0, 4.0);
  LvGeometry geo(spec, cx, cy);
  Texture tex = Texture::make(rng, 5, 0.015);

  CineStudy study;
  study.lv_center_x = cx;
  study.lv_center_y = cy;
  study.phase_labels = derive_phase_labels(volume_curve(spec));
  study.sax = Volume4{d, t, h, w,
                      std::vector<float>(static_cast<size_t>(d) * t * h * w)};
  for (int z = 0; z < d; ++z)
    for (int f = 0; f < t; ++f)
      render_sax_frame(geo, tex, z, f, &study.sax.at(z, f, 0, 0), h, w);

  const double azimuths[3] = {kPi / 2.0, 3.0 * kPi / 4.0, 0.0};  // 2ch/3ch/4ch
  for (int view = 0; view < 3; ++view) {
    study.lax[static_cast<size_t>(view)] =
        Volume3{t, h, w, std::vector<float>(static_cast<size_t>(t) * h * w)};
    for (int f = 0; f < t; ++f)
      render_lax_frame(geo, tex, azimuths[view], f,
                       &study.lax[static_cast<size_t>(view)].at(f, 0, 0), h, w);
  }

  // additive noise, one independent stream per (slice, frame)
  if (spec.noise > 0.0) {
    for (int z = 0; z < d; ++z)
      for (int f = 0; f < t; ++f) {
        Rng nrng = Rng::derive(seed, 1000 + static_cast<uint64_t>(z) * t + f);
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x) {
            float& p = study.sax.at(z, f, y, x);
            p = static_cast<float>(p + spec.noise * nrng.normal());
          }
      }
    for (int view = 0; view < 3; ++view)
      for (int f = 0; f < t; ++f) {
        Rng nrng = Rng::derive(seed, 100000 + static_cast<uint64_t>(view) * t + f);
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x) {
            float& p = study.lax[static_cast<size_t>(view)].at(f, y, x);
            p = static_cast<float>(p + spec.noise * nrng.normal());
          }
      }
  }

  for (auto& p : study.sax.v) p = std::clamp(p, 0.0f, 1.0f);
  for (auto& lv : study.lax)
    for (auto& p : lv.v) p = std::clamp(p, 0.0f, 1.0f);
  return study;
}

std::vector<double> cavity_mask_areas(const PhantomSpec& spec) {
  spec.validate();
  LvGeometry geo(spec, 0.5 * spec.grid.raw_width, 0.5 * spec.grid.raw_height);
  std::vector<double> areas(static_cast<size_t>(spec.grid.frames), 0.0);
  for (int f = 0; f < spec.grid.frames; ++f) {
    double area = 0.0;
    for (int z = 0; z < spec.grid.slices; ++z) {
      const double zeta = geo.zeta_of_slice(z);
      for (int y = 0; y < spec.grid.raw_height; ++y)
        for (int x = 0; x < spec.grid.raw_width; ++x) {
          const double dx = x - geo.cx;
          const double dy_up = geo.cy - y;
          const double dist = std::hypot(dx, dy_up);
          const double theta = std::atan2(dy_up, dx);
          if (dist <= geo.cavity_radius(zeta, f, theta)) area += 1.0;
        }
    }
    areas[static_cast<size_t>(f)] = area;
  }
  return areas;
}

}  // namespace prism::synth
