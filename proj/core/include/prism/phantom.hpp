#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "prism/common.hpp"
#include "prism/rng.hpp"

namespace prism::synth {

/// Six circumferential mid-ventricular wall segments plus "none".
enum class Segment : int { A = 0, AS = 1, IS = 2, I = 3, IL = 4, AL = 5, None = 6 };

const char* segment_name(Segment s);
Segment segment_from_name(const std::string& name);

/// Segment center angle in degrees, y-up image convention (A points up).
double segment_center_deg(Segment s);

enum class Phase : int {
  EarlyDiastole = 0,
  LateDiastole = 1,
  Ejection = 2,
  IsovolumicRelaxation = 3,
};

const char* phase_name(Phase p);

struct PhantomGrid {
  int slices = 24;
  int frames = 24;
  int height = 96;   // target (post-crop) spatial dims
  int width = 96;
  int raw_height = 128;  // rendered dims before motion-centered cropping
  int raw_width = 128;
};

struct PhantomSpec {
  PhantomGrid grid;
  double ef = 0.6;
  double edv = 150.0;
  Segment defect = Segment::None;
  double defect_amplitude_scale = 0.4;  // hypokinetic wall keeps 40% of motion
  double noise = 0.02;

  double esv() const { return edv * (1.0 - ef); }
  void validate() const;
};

struct Volume4 {
  int d = 0, t = 0, h = 0, w = 0;
  std::vector<float> v;  // row-major [D,T,H,W]
  float& at(int z, int f, int y, int x) {
    return v[static_cast<size_t>(((z * t + f) * h + y) * w + x)];
  }
  float at(int z, int f, int y, int x) const {
    return v[static_cast<size_t>(((z * t + f) * h + y) * w + x)];
  }
};

struct Volume3 {
  int t = 0, h = 0, w = 0;
  std::vector<float> v;  // row-major [T,H,W]
  float& at(int f, int y, int x) {
    return v[static_cast<size_t>((f * h + y) * w + x)];
  }
  float at(int f, int y, int x) const {
    return v[static_cast<size_t>((f * h + y) * w + x)];
  }
};

struct CineStudy {
  std::string subject_id;
  Volume4 sax;
  std::array<Volume3, 3> lax;  // 2ch, 3ch, 4ch
  std::vector<Phase> phase_labels;
  double lv_center_y = 0.0;  // ground truth in current pixel coordinates
  double lv_center_x = 0.0;
};

inline const std::array<const char*, 3> kLaxViews = {"2ch", "3ch", "4ch"};

/// Normalized cavity volume curve v(t) in [1-EF, 1] over one cycle, frame 0
/// at end-diastole.
std::vector<double> volume_curve(const PhantomSpec& spec);

/// Phase labels read off the volume curve: decreasing span = ejection, the
/// post-minimum plateau = isovolumetric relaxation, and the filling span
/// split into early/late halves.
std::vector<Phase> derive_phase_labels(const std::vector<double>& curve);

/// Beating biventricular phantom: ellipsoidal LV annulus plus an RV crescent,
/// with an optional hypokinetic sector. Deterministic in (spec, seed).
CineStudy generate_phantom(const PhantomSpec& spec, uint64_t seed);

/// Per-frame LV cavity mask area (pixel count over all slices) rendered
/// without noise or texture; oracle hook for the area-ratio contract.
std::vector<double> cavity_mask_areas(const PhantomSpec& spec);

}  // namespace prism::synth
