#include "cadbench/drift.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include <json.hpp>

#include "cadbench/error.hpp"
#include "cadbench/splitmix.hpp"

namespace cadbench {

namespace fs = std::filesystem;

const char* to_string(DriftTrack track) {
  switch (track) {
    case DriftTrack::color: return "color";
    case DriftTrack::blur: return "blur";
    case DriftTrack::geometric: return "geometric";
  }
  return "?";
}

DriftTrack drift_track_from_string(const std::string& s) {
  if (s == "color") return DriftTrack::color;
  if (s == "blur") return DriftTrack::blur;
  if (s == "geo" || s == "geometric") return DriftTrack::geometric;
  throw Error("unknown drift track " + s);
}

double DriftPlan::intensity(std::size_t t) const {
  const DriftTaskParams& p = tasks.at(t);
  switch (track) {
    case DriftTrack::color: return p.band.hi;
    case DriftTrack::blur: return p.blur.sigma;
    case DriftTrack::geometric: return p.nominal.rotation_deg;
  }
  return 0.0;
}

DriftPlan make_plan(DriftTrack track, std::uint64_t seed) {
  DriftPlan plan;
  plan.track = track;
  plan.seed = seed;
  for (std::size_t t = 0; t < kDriftTasks; ++t) {
    const double level = static_cast<double>(t + 1);
    DriftTaskParams p;
    p.band = {0.05 * static_cast<double>(t), 0.05 * level};
    p.blur = {static_cast<int>(2 * t + 1), 0.5 * level};
    p.nominal = {2.0 * level, level, level, 0.01 * level, level};
    SplitMix64 rng = SplitMix64::derive(seed, {t});
    p.sampled.rotation_deg = rng.uniform(p.nominal.rotation_deg - 2.0, p.nominal.rotation_deg);
    p.sampled.tx = rng.uniform(p.nominal.tx - 1.0, p.nominal.tx);
    p.sampled.ty = rng.uniform(p.nominal.ty - 1.0, p.nominal.ty);
    p.sampled.scale = rng.uniform(p.nominal.scale - 0.01, p.nominal.scale);
    p.sampled.shear_deg = rng.uniform(p.nominal.shear_deg - 1.0, p.nominal.shear_deg);
    plan.tasks.push_back(p);
  }
  return plan;
}

namespace {

nlohmann::json geometric_json(const GeometricParams& g) {
  return {{"rotation_deg", g.rotation_deg}, {"tx", g.tx}, {"ty", g.ty}, {"scale", g.scale}, {"shear_deg", g.shear_deg}};
}

nlohmann::json plan_json(const DriftPlan& plan) {
  nlohmann::json doc;
  doc["track"] = to_string(plan.track);
  doc["seed"] = plan.seed;
  doc["tasks"] = nlohmann::json::array();
  for (std::size_t t = 0; t < plan.tasks.size(); ++t) {
    const DriftTaskParams& p = plan.tasks[t];
    nlohmann::json task{{"task", t + 1}};
    switch (plan.track) {
      case DriftTrack::color: task["band"] = {p.band.lo, p.band.hi}; break;
      case DriftTrack::blur:
        task["kernel"] = p.blur.kernel;
        task["sigma"] = p.blur.sigma;
        break;
      case DriftTrack::geometric:
        task["nominal"] = geometric_json(p.nominal);
        task["sampled"] = geometric_json(p.sampled);
        break;
    }
    doc["tasks"].push_back(task);
  }
  return doc;
}

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0))); }

double luminance(double r, double g, double b) { return 0.299 * r + 0.587 * g + 0.114 * b; }

// Mirror index into [0, n) without repeating the edge sample.
std::ptrdiff_t reflect(std::ptrdiff_t i, std::ptrdiff_t n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * (n - 1) - i;
  }
  return i;
}

}  // namespace

std::string plan_to_json(const DriftPlan& plan) { return plan_json(plan).dump(2); }

ColorDraw sample_color(const DriftPlan& plan, std::size_t t, std::size_t image_index) {
  const ColorBand band = plan.tasks.at(t).band;
  SplitMix64 rng = SplitMix64::derive(plan.seed, {t, image_index});
  ColorDraw d;
  d.v = rng.uniform(band.lo, band.hi);
  auto sign = [&] { return (rng.next() >> 63) ? -1 : 1; };
  d.signs.brightness = sign();
  d.signs.contrast = sign();
  d.signs.saturation = sign();
  return d;
}

RawImage apply_color(const RawImage& img, double v, ColorSigns signs) {
  if (!(v >= 0.0 && v <= 0.5)) throw Error("color magnitude must be in [0,0.5]");
  const double fb = 1.0 + signs.brightness * v;
  const double fc = 1.0 + signs.contrast * v;
  const double fs = 1.0 + signs.saturation * v;
  const std::size_t n = img.width * img.height;
  std::vector<double> px(img.pixels.begin(), img.pixels.end());

  for (double& p : px) p = std::clamp(p * fb, 0.0, 255.0);

  double mean_l = 0.0;
  for (std::size_t k = 0; k < n; ++k) mean_l += luminance(px[3 * k], px[3 * k + 1], px[3 * k + 2]);
  if (n) mean_l /= static_cast<double>(n);
  for (double& p : px) p = std::clamp((p - mean_l) * fc + mean_l, 0.0, 255.0);

  for (std::size_t k = 0; k < n; ++k) {
    double* p = &px[3 * k];
    const double l = luminance(p[0], p[1], p[2]);
    for (int ch = 0; ch < 3; ++ch) p[ch] = std::clamp(l + (p[ch] - l) * fs, 0.0, 255.0);
  }

  RawImage out(img.width, img.height);
  for (std::size_t k = 0; k < px.size(); ++k) out.pixels[k] = to_byte(px[k]);
  return out;
}

std::vector<double> gaussian_kernel(int kernel, double sigma) {
  if (kernel < 1 || kernel % 2 == 0) throw Error("kernel size must be odd");
  if (!(sigma > 0.0)) throw Error("sigma must be > 0");
  const int half = kernel / 2;
  std::vector<double> g(static_cast<std::size_t>(kernel));
  double sum = 0.0;
  for (int i = -half; i <= half; ++i) {
    const double w = std::exp(-static_cast<double>(i * i) / (2.0 * sigma * sigma));
    g[static_cast<std::size_t>(i + half)] = w;
    sum += w;
  }
  for (double& w : g) w /= sum;
  return g;
}

RawImage apply_blur(const RawImage& img, int kernel, double sigma) {
  const std::vector<double> g = gaussian_kernel(kernel, sigma);
  const auto w = static_cast<std::ptrdiff_t>(img.width);
  const auto h = static_cast<std::ptrdiff_t>(img.height);
  const std::ptrdiff_t half = kernel / 2;
  std::vector<double> horiz(img.pixels.size());
  for (std::ptrdiff_t y = 0; y < h; ++y) {
    for (std::ptrdiff_t x = 0; x < w; ++x) {
      for (int ch = 0; ch < 3; ++ch) {
        double acc = 0.0;
        for (std::ptrdiff_t i = -half; i <= half; ++i) {
          acc += g[static_cast<std::size_t>(i + half)] * img.pixels[static_cast<std::size_t>((y * w + reflect(x + i, w)) * 3 + ch)];
        }
        horiz[static_cast<std::size_t>((y * w + x) * 3 + ch)] = acc;
      }
    }
  }
  RawImage out(img.width, img.height);
  for (std::ptrdiff_t y = 0; y < h; ++y) {
    for (std::ptrdiff_t x = 0; x < w; ++x) {
      for (int ch = 0; ch < 3; ++ch) {
        double acc = 0.0;
        for (std::ptrdiff_t i = -half; i <= half; ++i) {
          acc += g[static_cast<std::size_t>(i + half)] * horiz[static_cast<std::size_t>((reflect(y + i, h) * w + x) * 3 + ch)];
        }
        out.pixels[static_cast<std::size_t>((y * w + x) * 3 + ch)] = to_byte(acc);
      }
    }
  }
  return out;
}

RawImage apply_geometric(const RawImage& img, const GeometricParams& p) {
  const double theta = p.rotation_deg * std::numbers::pi / 180.0;
  const double cos_t = std::cos(theta);
  const double sin_t = std::sin(theta);
  const double shear = std::tan(p.shear_deg * std::numbers::pi / 180.0);
  const double zoom = 1.0 + p.scale;
  if (!(zoom > 0.0)) throw Error("scale must be > -1");
  const double cx = (static_cast<double>(img.width) - 1.0) / 2.0;
  const double cy = (static_cast<double>(img.height) - 1.0) / 2.0;
  const auto max_x = static_cast<std::ptrdiff_t>(img.width) - 1;
  const auto max_y = static_cast<std::ptrdiff_t>(img.height) - 1;

  RawImage out(img.width, img.height);
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 0; x < img.width; ++x) {
      // Undo translate, rotate, shear, scale, in that order.
      const double ux = static_cast<double>(x) - cx - p.tx;
      const double uy = static_cast<double>(y) - cy - p.ty;
      const double rx = cos_t * ux + sin_t * uy;
      const double ry = -sin_t * ux + cos_t * uy;
      const double sx = (rx - shear * ry) / zoom + cx;
      const double sy = ry / zoom + cy;

      const double fx0 = std::floor(sx);
      const double fy0 = std::floor(sy);
      const double fx = sx - fx0;
      const double fy = sy - fy0;
      const auto x0 = static_cast<std::ptrdiff_t>(fx0);
      const auto y0 = static_cast<std::ptrdiff_t>(fy0);
      const auto xa = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(x0, 0, max_x));
      const auto xb = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(x0 + 1, 0, max_x));
      const auto ya = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(y0, 0, max_y));
      const auto yb = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(y0 + 1, 0, max_y));
      for (std::size_t ch = 0; ch < 3; ++ch) {
        const double top = (1.0 - fx) * img.at(xa, ya, ch) + fx * img.at(xb, ya, ch);
        const double bottom = (1.0 - fx) * img.at(xa, yb, ch) + fx * img.at(xb, yb, ch);
        out.at(x, y, ch) = to_byte((1.0 - fy) * top + fy * bottom);
      }
    }
  }
  return out;
}

RawImage apply_drift(const RawImage& img, const DriftPlan& plan, std::size_t t, std::size_t image_index) {
  const DriftTaskParams& p = plan.tasks.at(t);
  switch (plan.track) {
    case DriftTrack::color: {
      const ColorDraw d = sample_color(plan, t, image_index);
      return apply_color(img, d.v, d.signs);
    }
    case DriftTrack::blur: return apply_blur(img, p.blur.kernel, p.blur.sigma);
    case DriftTrack::geometric: return apply_geometric(img, p.sampled);
  }
  return img;
}

namespace {

std::vector<fs::path> ppm_files(const fs::path& dir) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".ppm") out.push_back(fs::relative(e.path(), dir));
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

DriftBuildResult build_drift_tasks(const fs::path& source_dir, const DriftPlan& plan, const fs::path& out_dir) {
  if (!fs::is_directory(source_dir)) throw Error("unreadable source: " + source_dir.string());
  const std::vector<fs::path> train = ppm_files(source_dir / "train");
  const std::vector<fs::path> test = ppm_files(source_dir / "test");
  if (train.empty() && test.empty()) throw Error("empty directory: " + source_dir.string());

  // Decode once; every task reads the same sources.
  struct Source {
    std::string split;
    fs::path rel;
    RawImage image;
  };
  std::vector<Source> sources;
  for (const auto& r : train) sources.push_back({"train", r, read_ppm(source_dir / "train" / r)});
  for (const auto& r : test) sources.push_back({"test", r, read_ppm(source_dir / "test" / r)});

  fs::create_directories(out_dir);
  DriftBuildResult result;
  result.manifest.base_dir = out_dir;
  nlohmann::json sidecar = plan_json(plan);
  sidecar["images"] = nlohmann::json::array();

  for (std::size_t t = 0; t < plan.tasks.size(); ++t) {
    char name[16];
    std::snprintf(name, sizeof name, "task_%02zu", t + 1);
    const fs::path task_dir = out_dir / name;
    for (std::size_t k = 0; k < sources.size(); ++k) {
      const Source& s = sources[k];
      const fs::path dest = task_dir / s.split / s.rel;
      fs::create_directories(dest.parent_path());
      write_ppm(apply_drift(s.image, plan, t, k), dest);
      ++result.images_written;
      if (plan.track == DriftTrack::color) {
        const ColorDraw d = sample_color(plan, t, k);
        sidecar["images"].push_back({{"task", t + 1},
                                     {"file", fs::relative(dest, out_dir).generic_string()},
                                     {"v", d.v},
                                     {"signs", {d.signs.brightness, d.signs.contrast, d.signs.saturation}}});
      }
    }
    result.manifest.tasks.push_back({name, fs::path(name) / "train.cadf", fs::path(name) / "test.cadf"});
  }

  std::ofstream side(out_dir / "drift_plan.json");
  side << sidecar.dump(2) << '\n';
  if (!side) throw Error("write failed: drift_plan.json");
  write_manifest(result.manifest, out_dir / "manifest.json");
  return result;
}

}  // namespace cadbench
