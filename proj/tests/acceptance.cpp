// Acceptance suite: one PASS/FAIL line per headline criterion. Exit status
// is non-zero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "cadbench/drift.hpp"
#include "cadbench/harness.hpp"
#include "cadbench/membank.hpp"
#include "cadbench/metrics.hpp"
#include "cadbench/scoring.hpp"
#include "cadbench/synthetic.hpp"
#include "oracles.hpp"

using namespace cadbench;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string sci(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2e", v);
  return buf;
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

Outcome coreset_oracle() {
  const auto start = Clock::now();
  std::size_t mismatches = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    SplitMix64 rng = SplitMix64::derive(2024, {seed});
    const std::size_t n = 20 + rng.below(481);
    std::vector<float> pool = oracle::random_points(rng, n, 8);
    // Every fifth pool gets duplicate points to exercise tie-breaking.
    if (seed % 5 == 0) std::copy_n(pool.begin(), 8 * (n / 4), pool.begin() + 8 * (n / 2));
    if (greedy_coreset_indices(pool, 8, 20) != oracle::farthest_point(pool, 8, 20)) ++mismatches;
  }
  const double elapsed = seconds_since(start);
  return {mismatches == 0 && elapsed < 5.0,
          std::to_string(mismatches) + " mismatches over 100 pools, " + fixed(elapsed, 2) + " s"};
}

SyntheticSpec small_spec(std::uint64_t seed) {
  SyntheticSpec spec;
  spec.seed = seed;
  spec.shape = {6, 5, 8};
  spec.n_train = 40;
  return spec;
}

Outcome flat_equivalence() {
  const SyntheticTask task = generate_synthetic(small_spec(7)).front();
  const TaskMemoryBank bank = fit_task(task.train, 0.5, 0);
  double worst = 0.0;
  std::size_t images = 0;
  for (std::size_t k = 0; k < 20; ++k) {
    const FeatureGrid& g = task.test.features[k];
    const ScoreReport rep = score_image(g, bank, 10);  // radius beyond the grid diameter
    for (std::size_t cell = 0; cell < g.shape.cells(); ++cell) {
      const double ref = oracle::nearest(g.patch(cell).data(), bank.coresets(), g.shape.dim);
      worst = std::max(worst, std::abs(rep.patch_scores[cell] - ref));
    }
    ++images;
  }
  return {images == 20 && worst <= 1e-6, "max |diff| = " + sci(worst) + " on " + std::to_string(images) + " images"};
}

Outcome radius_monotonicity() {
  std::size_t violations = 0;
  std::size_t checks = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    SplitMix64 rng = SplitMix64::derive(77, {seed});
    const auto side = [&] { return static_cast<std::uint16_t>(4 + rng.below(5)); };
    const GridShape shape{side(), side(), 6};
    TaskDataset train;
    train.task_id = "rand";
    for (std::size_t k = 0; k < 25; ++k) train.features.push_back(oracle::random_grid(rng, shape));
    const TaskMemoryBank bank = fit_task(train, 0.3, 1);
    for (std::size_t k = 0; k < 5; ++k) {
      const FeatureGrid g = oracle::random_grid(rng, shape);
      std::vector<double> prev = score_image(g, bank, 0).patch_scores;
      for (std::size_t r = 1; r <= 4; ++r) {
        const std::vector<double> cur = score_image(g, bank, r).patch_scores;
        for (std::size_t c = 0; c < cur.size(); ++c, ++checks) violations += cur[c] > prev[c];
        prev = cur;
      }
    }
  }
  return {violations == 0, std::to_string(violations) + " violations in " + std::to_string(checks) + " comparisons"};
}

Outcome auroc_oracle() {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    SplitMix64 rng = SplitMix64::derive(31, {seed});
    const std::size_t n = 2 + rng.below(60);
    std::vector<double> scores(n);
    auto labels = std::make_unique<bool[]>(n);
    const std::uint64_t levels = 1 + rng.below(12);  // few levels produce ties
    for (std::size_t k = 0; k < n; ++k) {
      scores[k] = static_cast<double>(rng.below(levels));
      labels[k] = k < 1 || (k > 1 && rng.below(2) == 1);
    }
    if (seed == 0) std::fill(scores.begin(), scores.end(), 3.0);
    if (seed == 1) {
      for (std::size_t k = 0; k < n; ++k) scores[k] = labels[k] ? 10.0 + k : static_cast<double>(k) * 0.01;
    }
    const std::span<const bool> ls(labels.get(), n);
    const double got = auroc(scores, ls);
    worst = std::max(worst, std::abs(got - oracle::pair_auroc(scores, ls)));
    if (seed == 0 && got != 0.5) return {false, "all-tied instance gave " + std::to_string(got)};
    if (seed == 1 && got != 1.0) return {false, "separated instance gave " + std::to_string(got)};
  }
  return {worst <= 1e-12, "max |diff| = " + sci(worst) + " over 1000 instances"};
}

Outcome fm_hand_cases() {
  EvalMatrix m(3);
  m.set(0, 0, 0.90);
  m.set(1, 0, 0.88);
  m.set(1, 1, 0.70);
  m.set(2, 0, 0.85);
  m.set(2, 1, 0.60);
  m.set(2, 2, 0.80);
  const MetricSummary s = forgetting(m);
  const bool f_ok = s.per_task_f.size() == 2 && std::abs(s.per_task_f[0] - 0.05) < 1e-15 &&
                    std::abs(s.per_task_f[1] - 0.10) < 1e-15;
  const bool fm_ok = s.fm == ((0.90 - 0.85) + (0.70 - 0.60)) / 2.0 && std::abs(s.fm - 0.075) < 1e-15;

  EvalMatrix flat(4);
  for (std::size_t t = 0; t < 4; ++t)
    for (std::size_t j = 0; j <= t; ++j) flat.set(t, j, 0.25 + 0.1 * static_cast<double>(j));
  const bool zero_ok = forgetting(flat).fm == 0.0;

  EvalMatrix neg(2);
  neg.set(0, 0, 0.80);
  neg.set(1, 0, 0.886);
  neg.set(1, 1, 0.90);
  const double neg_fm = forgetting(neg).fm;
  const bool neg_ok = neg_fm < 0.0 && fixed(neg_fm, 3) == "-0.086";

  return {f_ok && fm_ok && zero_ok && neg_ok, "FM=" + fixed(s.fm, 3) + " constant=" + fixed(forgetting(flat).fm, 3) +
                                                  " negative=" + fixed(neg_fm, 3)};
}

std::vector<ProtocolTask> five_tasks() {
  SyntheticSpec spec;
  spec.seed = 5;
  spec.n_tasks = 5;
  spec.n_train = 40;
  spec.cluster_spread = 0.1;
  spec.task_separation = 1.0;
  std::vector<ProtocolTask> out;
  for (SyntheticTask& t : generate_synthetic(spec)) out.push_back({t.train.task_id, t.train, t.test});
  return out;
}

Outcome zero_forgetting() {
  const auto tasks = five_tasks();
  ProtocolConfig c;
  c.rho = 0.5;
  c.radius = 1;
  c.routing = Routing::oracle;
  const RunReport oracle_run = run_protocol(c, tasks);
  bool hashes_ok = oracle_run.stage_isolation_ok && oracle_run.bank_hashes.size() == 5;
  for (std::size_t t = 0; hashes_ok && t < 5; ++t)
    for (std::size_t j = 0; j <= t; ++j) hashes_ok = hashes_ok && oracle_run.bank_hashes[t][j] == oracle_run.bank_hashes[j][j];
  bool fm_ok = true;
  for (MetricKind k : {MetricKind::auroc, MetricKind::accuracy, MetricKind::recall}) {
    const double fm = oracle_run.summary(k).fm;
    fm_ok = fm_ok && fm == 0.0 && !std::signbit(fm);
  }

  c.routing = Routing::prototype;
  const RunReport proto = run_protocol(c, tasks);
  bool same = proto.auroc == oracle_run.auroc && proto.accuracy == oracle_run.accuracy &&
              proto.recall == oracle_run.recall && proto.scores.size() == oracle_run.scores.size();
  for (std::size_t k = 0; same && k < proto.scores.size(); ++k) {
    same = proto.scores[k].image_score == oracle_run.scores[k].image_score &&
           proto.scores[k].decision == oracle_run.scores[k].decision;
  }
  const double routing = proto.routing_accuracy();
  return {hashes_ok && fm_ok && routing == 1.0 && same,
          std::string("hashes ") + (hashes_ok ? "stable" : "changed") + ", FM=" +
              fixed(oracle_run.summary(MetricKind::auroc).fm, 3) + ", routing=" + fixed(100.0 * routing, 1) +
              "%, reports " + (same ? "equal" : "differ")};
}

Outcome synthetic_detection() {
  SyntheticSpec spec;
  spec.seed = 17;
  spec.n_tasks = 3;
  spec.n_train = 40;
  spec.shape = {6, 6, 8};
  spec.anomaly_delta = 10.0 * spec.cluster_spread * std::sqrt(static_cast<double>(spec.shape.dim));
  double worst_auroc = 1.0;
  std::size_t located = 0;
  std::size_t anomalies = 0;
  for (const SyntheticTask& task : generate_synthetic(spec)) {
    const TaskMemoryBank bank = fit_task(task.train, 0.1, 3);
    std::vector<double> scores;
    auto labels = std::make_unique<bool[]>(task.test.size());
    for (std::size_t k = 0; k < task.test.size(); ++k) {
      const ScoreReport r = score_image(task.test.features[k], bank, 3);
      scores.push_back(r.image_score);
      labels[k] = task.test.features[k].label == Label::anomalous;
      if (const auto& cell = task.anomaly_cells[k]) {
        ++anomalies;
        located += r.argmax.row == cell->row && r.argmax.col == cell->col;
      }
    }
    worst_auroc = std::min(worst_auroc, auroc(scores, std::span<const bool>(labels.get(), task.test.size())));
  }
  return {worst_auroc == 1.0 && located == anomalies && anomalies > 0,
          "min AUROC " + fixed(worst_auroc, 3) + ", localized " + std::to_string(located) + "/" + std::to_string(anomalies)};
}

SyntheticTask large_task(std::size_t n_train) {
  SyntheticSpec spec;
  spec.seed = 3;
  spec.shape = {14, 14, 384};
  spec.n_train = n_train;
  spec.n_test_normal = 1;
  spec.n_test_anomalous = 1;
  return generate_synthetic(spec).front();
}

Outcome storage_formula() {
  const TaskMemoryBank bank = fit_task(large_task(20).train, 0.1, 3);
  const StorageReport s = storage_bytes(bank);
  const fs::path path = fs::temp_directory_path() / "cadbench_acceptance_bank.cadb";
  const std::size_t written = save_bank(bank, path);
  const auto on_disk = static_cast<std::size_t>(fs::file_size(path));
  fs::remove(path);
  const bool ok = bank.m() == 20 && s.payload_bytes == 6'022'656 && written == on_disk &&
                  on_disk <= s.payload_bytes + 4096 && s.serialized_bytes == on_disk;
  return {ok, "payload " + std::to_string(s.payload_bytes) + " B, file " + std::to_string(on_disk) + " B"};
}

Outcome drift_tables() {
  std::vector<std::string> problems;
  const DriftPlan color = make_plan(DriftTrack::color, 1);
  const DriftPlan blur = make_plan(DriftTrack::blur, 1);
  const DriftPlan geo = make_plan(DriftTrack::geometric, 1);
  for (std::size_t t = 0; t < kDriftTasks; ++t) {
    const double n = static_cast<double>(t + 1);
    if (std::abs(color.tasks[t].band.lo - 0.05 * (n - 1)) > 1e-12 || std::abs(color.tasks[t].band.hi - 0.05 * n) > 1e-12)
      problems.push_back("color band " + std::to_string(t + 1));
    if (blur.tasks[t].blur.kernel != static_cast<int>(2 * t + 1) || blur.tasks[t].blur.sigma != 0.5 * n)
      problems.push_back("blur pair " + std::to_string(t + 1));
    double sum = 0.0;
    for (double w : gaussian_kernel(blur.tasks[t].blur.kernel, blur.tasks[t].blur.sigma)) sum += w;
    if (std::abs(sum - 1.0) > 1e-6) problems.push_back("kernel sum " + std::to_string(t + 1));
    const GeometricParams& s = geo.tasks[t].sampled;
    const bool in_window = s.rotation_deg >= 2.0 * n - 2.0 && s.rotation_deg <= 2.0 * n && s.tx >= n - 1.0 &&
                           s.tx <= n && s.ty >= n - 1.0 && s.ty <= n && s.scale >= 0.01 * n - 0.01 - 1e-15 &&
                           s.scale <= 0.01 * n && s.shear_deg >= n - 1.0 && s.shear_deg <= n;
    if (!in_window) problems.push_back("geometric window " + std::to_string(t + 1));
  }
  SplitMix64 rng(9);
  RawImage img(13, 9);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng.below(256));
  if (!(apply_color(img, 0.0, {1, -1, 1}) == img)) problems.push_back("v=0 identity");
  if (!(apply_blur(img, 1, 0.5) == img)) problems.push_back("k=1 identity");
  if (!(apply_geometric(img, {}) == img)) problems.push_back("zero-affine identity");

  std::string detail = "10 color bands, 10 blur pairs, 10 geometric windows, identities";
  for (const auto& p : problems) detail += "; bad " + p;
  return {problems.empty(), detail};
}

Outcome latency_proxy() {
  const SyntheticTask small = large_task(20);
  BankRegistry reg;
  reg.add(fit_task(small.train, 0.1, 3, {.workers = 1, .task_id = {}}));
  const LatencyStats lat = profile_inference(reg, small.test.features.front(), 3, 30, 5);

  const SyntheticTask big = large_task(400);
  const auto start = Clock::now();
  const TaskMemoryBank bank = fit_task(big.train, 0.1, 3);
  const double fit_s = seconds_since(start);
  const bool ok = reg[0].m() == 20 && lat.samples == 30 && lat.mean_ms < 100.0 && bank.m() == 40 && fit_s < 30.0;
  return {ok, "infer " + fixed(lat.mean_ms, 2) + " +/- " + fixed(lat.std_ms, 2) + " ms over " +
                  std::to_string(lat.samples) + " runs, 400-image fit " + fixed(fit_s, 2) + " s (M=" +
                  std::to_string(bank.m()) + ")"};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"coreset oracle equivalence", coreset_oracle},
      {"flat equivalence", flat_equivalence},
      {"radius monotonicity", radius_monotonicity},
      {"AUROC oracle", auroc_oracle},
      {"forgetting hand cases", fm_hand_cases},
      {"zero forgetting by construction", zero_forgetting},
      {"synthetic detection", synthetic_detection},
      {"storage formula", storage_formula},
      {"drift tables", drift_tables},
      {"latency proxy", latency_proxy},
  };
  int failed = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
    std::fflush(stdout);
    failed += !o.pass;
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
