#include "cadbench/synthetic.hpp"

#include <cmath>
#include <string>

#include "cadbench/error.hpp"
#include "cadbench/splitmix.hpp"

namespace cadbench {

void SyntheticSpec::validate() const {
  if (shape.grid_h == 0 || shape.grid_w == 0 || shape.dim == 0) throw Error("synthetic: empty grid shape");
  if (n_train == 0) throw Error("synthetic: n_train must be positive");
  if (n_tasks == 0) throw Error("synthetic: n_tasks must be positive");
  if (!(cluster_spread > 0.0)) throw Error("synthetic: cluster_spread must be > 0");
  if (!(anomaly_delta >= 0.0)) throw Error("synthetic: anomaly_delta must be >= 0");
  if (!(task_separation > 0.0)) throw Error("synthetic: task_separation must be > 0");
}

namespace {

FeatureGrid draw_image(SplitMix64& rng, const SyntheticSpec& spec, const std::vector<double>& base,
                       const std::vector<double>& center, std::string id) {
  const std::size_t dim = spec.shape.dim;
  const double sigma = spec.cluster_spread;
  FeatureGrid g;
  g.shape = spec.shape;
  g.image_id = std::move(id);
  g.cls.resize(dim);
  for (std::size_t k = 0; k < dim; ++k) {
    g.cls[k] = static_cast<float>(center[k] + sigma * rng.gaussian());
  }
  g.patches.resize(spec.shape.patch_floats());
  for (std::size_t k = 0; k < g.patches.size(); ++k) {
    g.patches[k] = static_cast<float>(base[k] + sigma * rng.gaussian());
  }
  return g;
}

}  // namespace

std::vector<SyntheticTask> generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const std::size_t dim = spec.shape.dim;
  const std::size_t cells = spec.shape.cells();
  std::vector<SyntheticTask> tasks;
  tasks.reserve(spec.n_tasks);

  for (std::size_t t = 0; t < spec.n_tasks; ++t) {
    SplitMix64 rng = SplitMix64::derive(spec.seed, {t});
    const std::string task_id = "task" + std::to_string(t);

    std::vector<double> center(dim, 0.0);
    center[0] = static_cast<double>(t) * spec.task_separation;

    std::vector<double> base(spec.shape.patch_floats());
    for (double& v : base) v = rng.gaussian();

    SyntheticTask task;
    task.center.assign(center.begin(), center.end());
    task.train.task_id = task_id;
    task.train.split = Split::train;
    task.test.task_id = task_id;
    task.test.split = Split::test;

    for (std::size_t k = 0; k < spec.n_train; ++k) {
      task.train.features.push_back(draw_image(rng, spec, base, center, task_id + "/train/" + std::to_string(k)));
    }
    for (std::size_t k = 0; k < spec.n_test_normal; ++k) {
      task.test.features.push_back(draw_image(rng, spec, base, center, task_id + "/good/" + std::to_string(k)));
      task.anomaly_cells.emplace_back(std::nullopt);
    }
    for (std::size_t k = 0; k < spec.n_test_anomalous; ++k) {
      FeatureGrid g = draw_image(rng, spec, base, center, task_id + "/defect/" + std::to_string(k));
      g.label = Label::anomalous;
      const std::size_t cell = static_cast<std::size_t>(rng.below(cells));
      std::vector<double> dir(dim);
      double norm2 = 0.0;
      for (double& v : dir) {
        v = rng.gaussian();
        norm2 += v * v;
      }
      const double scale = norm2 > 0.0 ? spec.anomaly_delta / std::sqrt(norm2) : 0.0;
      float* p = g.patches.data() + cell * dim;
      for (std::size_t d = 0; d < dim; ++d) {
        p[d] = static_cast<float>(static_cast<double>(p[d]) + scale * dir[d]);
      }
      task.test.features.push_back(std::move(g));
      task.anomaly_cells.emplace_back(SyntheticCell{cell / spec.shape.grid_w, cell % spec.shape.grid_w});
    }
    tasks.push_back(std::move(task));
  }
  return tasks;
}

}  // namespace cadbench
