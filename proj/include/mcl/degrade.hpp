#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "mcl/tensor.hpp"

namespace mcl {

enum class Task { SR2x, SR4x, Haze, Rain, Blur };

std::string to_string(Task t);
Task task_from_string(const std::string& s);

// Everything needed to regenerate a pair's degraded image from its clean
// one. Written into dataset manifests so fixtures are reproducible.
struct DegradeMeta {
  Task task = Task::SR2x;
  std::uint64_t clean_seed = 0;  // seed that synthesized the clean image
  std::uint64_t field_seed = 0;  // seed for depth fields / streak layout
  int scale = 2;                 // SR factor
  double beta = 0.0;             // haze density
  double airlight = 0.0;         // haze atmospheric light
  double density = 0.0;          // rain coverage fraction
  double angle_deg = 0.0;        // rain streak angle from vertical
  double sigma = 0.0;            // blur stddev
};

struct ImagePair {
  Tensor lq;
  Tensor hq;
  Task task = Task::SR2x;
  DegradeMeta meta;
};

struct DatasetSpec {
  Task task = Task::SR2x;
  int count = 16;
  int size = 48;
  int channels = 1;
  std::uint64_t seed = 1;
  // per-pair degradation parameters are drawn uniformly from these ranges
  double beta_min = 0.4, beta_max = 2.0;
  double airlight_min = 0.7, airlight_max = 1.0;
  double density_min = 0.05, density_max = 0.15;
  double angle_min = -30.0, angle_max = 30.0;
  double sigma_min = 1.0, sigma_max = 2.5;

  void validate() const;
};

// Seeded synthetic "photograph": a smooth low-frequency base with hard
// rectangles, disks and thin strokes on top, so every pair has both flat
// regions and edges. Values in [0,1].
Tensor synth_clean(int size, std::uint64_t seed);
Tensor synth_clean(int size, int channels, std::uint64_t seed);

// Catmull-Rom (a = -0.5) resampling at scale 1/4, 1/2, 2 or 4, separable
// with edge-clamped taps; the output is clamped to [0,1] once at the end.
Tensor bicubic_resample(const Tensor& img, double scale);

// The four Catmull-Rom tap weights for a sampling phase in [0,1).
std::array<double, 4> bicubic_weights(double frac);

// Atmospheric scattering: out = img * t + airlight * (1 - t) with
// t = exp(-beta * depth). beta may be exactly 0 (identity); otherwise it
// must lie in [0.4, 2.0], airlight in [0.7, 1.0].
Tensor apply_haze(const Tensor& img, double beta, double airlight,
                  std::uint64_t seed);
// The same with a caller-supplied depth field (tests use d == 1).
Tensor haze_with_depth(const Tensor& img, const Tensor& depth, double beta,
                       double airlight);
// Smooth pseudo-depth in [0,1], deterministic per seed.
Tensor depth_field(long h, long w, std::uint64_t seed);

// Additive bright streaks at the given angle. density may be exactly 0
// (identity); otherwise it must lie in (0, 0.2].
Tensor apply_rain(const Tensor& img, double density, double angle_deg,
                  std::uint64_t seed);

// Separable Gaussian blur, sigma in [0.5, 3], kernel truncated at 3 sigma
// and renormalized, edges clamped.
Tensor apply_blur(const Tensor& img, double sigma);

// Snaps values to the 8-bit grid k/255 (clamping to [0,1] first). Dataset
// images are stored snapped so PGM/PPM round-trips are lossless.
Tensor quantize8(const Tensor& img);

// Re-derives the degraded image from a clean image and recorded meta
// (before quantization).
Tensor reapply(const Tensor& hq, const DegradeMeta& meta);

// Deterministic dataset: pair i is fully determined by (spec.seed, i).
// Both hq and lq come back snapped to the 8-bit grid.
std::vector<ImagePair> make_dataset(const DatasetSpec& spec);

// Binary PGM (P5) for single-channel, PPM (P6) for 3-channel, maxval 255.
void write_pnm(const std::string& path, const Tensor& img);
Tensor read_pnm(const std::string& path);

}  // namespace mcl
