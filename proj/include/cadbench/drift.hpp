#pragma once

// Continuous-drift protocol: ten tasks of monotonically increasing colour,
// blur or geometric distortion built from one product's nominal images.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cadbench/featstore.hpp"
#include "cadbench/image_io.hpp"

namespace cadbench {

enum class DriftTrack { color, blur, geometric };
const char* to_string(DriftTrack track);
// Accepts "color", "blur", "geo" and "geometric".
DriftTrack drift_track_from_string(const std::string& s);

inline constexpr std::size_t kDriftTasks = 10;

struct ColorBand {
  double lo = 0.0;
  double hi = 0.0;
};

struct BlurParams {
  int kernel = 1;
  double sigma = 0.5;
};

struct GeometricParams {
  double rotation_deg = 0.0;
  double tx = 0.0;
  double ty = 0.0;
  double scale = 0.0;  // zoom factor is 1 + scale
  double shear_deg = 0.0;
};

struct DriftTaskParams {
  ColorBand band;
  BlurParams blur;
  GeometricParams nominal;  // table value (tx == ty == translation)
  GeometricParams sampled;  // drawn once per task from the window below nominal
};

struct DriftPlan {
  DriftTrack track = DriftTrack::color;
  std::uint64_t seed = 0;
  std::vector<DriftTaskParams> tasks;

  // Scalar severity of task t for the plan's track; strictly increasing in t.
  double intensity(std::size_t t) const;
};

// Fixed colour bands and blur pairs; geometric parameters sampled with
// SplitMix64::derive(seed, {t}) in the order rotation, tx, ty, scale, shear.
DriftPlan make_plan(DriftTrack track, std::uint64_t seed);

std::string plan_to_json(const DriftPlan& plan);

struct ColorSigns {
  int brightness = 1;
  int contrast = 1;
  int saturation = 1;
};

struct ColorDraw {
  double v = 0.0;
  ColorSigns signs;
};

// Per-image colour magnitude within the task band and independent signs,
// from SplitMix64::derive(seed, {t, image_index}).
ColorDraw sample_color(const DriftPlan& plan, std::size_t t, std::size_t image_index);

// Brightness, then contrast about the mean Rec.601 luminance, then
// saturation about per-pixel luminance; factors 1 + sign * v, clamped to
// [0, 255] after each stage and rounded once at the end. v in [0, 0.5].
RawImage apply_color(const RawImage& img, double v, ColorSigns signs);

// Normalised 1-D Gaussian taps for odd `kernel`, centred.
std::vector<double> gaussian_kernel(int kernel, double sigma);

// Separable blur, horizontal then vertical, mirror (reflect-101) borders.
RawImage apply_blur(const RawImage& img, int kernel, double sigma);

// Inverse-mapped affine warp about the image centre: scale, x-shear,
// rotation, translation. Bilinear sampling with edge replication.
RawImage apply_geometric(const RawImage& img, const GeometricParams& params);

// Applies task t of the plan to one image.
RawImage apply_drift(const RawImage& img, const DriftPlan& plan, std::size_t t, std::size_t image_index);

struct DriftBuildResult {
  Manifest manifest;
  std::size_t images_written = 0;
};

// Reads <source>/train/*.ppm and <source>/test/**/*.ppm, writes
// <out>/task_NN/{train,test}/... for every task, the drift sidecar
// <out>/drift_plan.json and <out>/manifest.json. The manifest points at the
// task_NN/{train,test}.cadf feature files the extractor produces.
DriftBuildResult build_drift_tasks(const std::filesystem::path& source_dir, const DriftPlan& plan,
                                   const std::filesystem::path& out_dir);

}  // namespace cadbench
