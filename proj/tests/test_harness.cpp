#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "cadbench/error.hpp"
#include "cadbench/harness.hpp"
#include "cadbench/synthetic.hpp"

using namespace cadbench;
namespace fs = std::filesystem;

namespace {

std::vector<ProtocolTask> synthetic_protocol(std::size_t n_tasks, std::uint64_t seed = 11) {
  SyntheticSpec spec;
  spec.seed = seed;
  spec.n_tasks = n_tasks;
  spec.n_train = 40;
  spec.cluster_spread = 0.1;
  spec.task_separation = 1.0;  // 10 sigma
  spec.anomaly_delta = 1.0;
  std::vector<ProtocolTask> out;
  for (SyntheticTask& t : generate_synthetic(spec)) out.push_back({t.train.task_id, t.train, t.test});
  return out;
}

ProtocolConfig base_config(Routing routing) {
  ProtocolConfig c;
  c.rho = 0.5;
  c.radius = 1;
  c.routing = routing;
  c.workers = 1;
  return c;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "cadbench_harness" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

fs::path write_protocol(const std::vector<ProtocolTask>& tasks, const fs::path& dir) {
  Manifest m;
  for (const ProtocolTask& t : tasks) {
    write_feature_file(t.train, dir / (t.task_id + "_train.cadf"));
    write_feature_file(t.test, dir / (t.task_id + "_test.cadf"));
    m.tasks.push_back({t.task_id, t.task_id + "_train.cadf", t.task_id + "_test.cadf"});
  }
  write_manifest(m, dir / "manifest.json");
  return dir / "manifest.json";
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("single-task protocol reports the single-task flag") {
  const RunReport rep = run_protocol(base_config(Routing::oracle), synthetic_protocol(1));
  const MetricSummary s = rep.summary(MetricKind::auroc);
  CHECK(s.single_task);
  CHECK(s.fm == 0.0);
  CHECK(s.final_mean == 1.0);
}

TEST_CASE("oracle routing over five tasks has exactly zero forgetting") {
  const auto tasks = synthetic_protocol(5);
  const RunReport rep = run_protocol(base_config(Routing::oracle), tasks);
  CHECK(rep.stage_isolation_ok);
  REQUIRE(rep.bank_hashes.size() == 5);
  for (std::size_t t = 0; t < 5; ++t) {
    REQUIRE(rep.bank_hashes[t].size() == t + 1);
    for (std::size_t j = 0; j <= t; ++j) CHECK(rep.bank_hashes[t][j] == rep.bank_hashes[j][j]);
  }
  for (MetricKind kind : {MetricKind::auroc, MetricKind::accuracy, MetricKind::recall}) {
    CHECK(rep.matrix(kind).complete());
    CHECK(rep.summary(kind).fm == 0.0);
    for (std::size_t j = 0; j < 5; ++j) {
      for (std::size_t t = j; t < 5; ++t) CHECK(rep.matrix(kind).at(t, j) == rep.matrix(kind).at(j, j));
    }
  }
  CHECK(rep.coreset_sizes == std::vector<std::size_t>(5, 20));
  CHECK(rep.storage.size() == 5);
}

TEST_CASE("prototype routing with well separated tasks matches oracle routing") {
  const auto tasks = synthetic_protocol(5);
  const RunReport oracle = run_protocol(base_config(Routing::oracle), tasks);
  const RunReport proto = run_protocol(base_config(Routing::prototype), tasks);
  CHECK(proto.routed_images > 0);
  CHECK(proto.routing_accuracy() == 1.0);
  CHECK(proto.stage_isolation_ok);
  CHECK(proto.auroc == oracle.auroc);
  CHECK(proto.accuracy == oracle.accuracy);
  CHECK(proto.recall == oracle.recall);
  CHECK(proto.summary(MetricKind::auroc).fm == 0.0);
}

TEST_CASE("runs are reproducible") {
  const auto tasks = synthetic_protocol(3);
  const RunReport a = run_protocol(base_config(Routing::prototype), tasks);
  const RunReport b = run_protocol(base_config(Routing::prototype), tasks);
  CHECK(a.auroc == b.auroc);
  CHECK(a.bank_hashes == b.bank_hashes);
  REQUIRE(a.scores.size() == b.scores.size());
  for (std::size_t k = 0; k < a.scores.size(); ++k) {
    CHECK(a.scores[k].image_id == b.scores[k].image_id);
    CHECK(a.scores[k].image_score == b.scores[k].image_score);
  }
  ProtocolConfig threaded = base_config(Routing::prototype);
  threaded.workers = 3;
  CHECK(run_protocol(threaded, tasks).auroc == a.auroc);
}

TEST_CASE("oracle results per task do not depend on task order") {
  const auto tasks = synthetic_protocol(4);
  auto reversed = tasks;
  std::reverse(reversed.begin(), reversed.end());
  const RunReport fwd = run_protocol(base_config(Routing::oracle), tasks);
  const RunReport rev = run_protocol(base_config(Routing::oracle), reversed);
  std::map<std::string, double> by_id;
  for (std::size_t j = 0; j < 4; ++j) by_id[fwd.task_ids[j]] = fwd.auroc.at(j, j);
  for (std::size_t j = 0; j < 4; ++j) {
    CHECK(rev.auroc.at(j, j) == by_id.at(rev.task_ids[j]));
    CHECK(rev.auroc.at(3, j) == by_id.at(rev.task_ids[j]));
  }
}

TEST_CASE("flat baseline runs the same protocol") {
  ProtocolConfig c = base_config(Routing::oracle);
  c.method = Method::flat_baseline;
  const RunReport rep = run_protocol(c, synthetic_protocol(3));
  CHECK(rep.auroc.complete());
  CHECK(rep.bank_hashes.empty());
  CHECK(rep.storage.size() == 3);
  CHECK(rep.summary(MetricKind::auroc).final_mean > 0.5);
}

TEST_CASE("larger radius never raises a score") {
  const auto tasks = synthetic_protocol(2);
  std::vector<RunReport> reps;
  for (std::size_t r = 0; r <= 3; ++r) {
    ProtocolConfig c = base_config(Routing::oracle);
    c.radius = r;
    reps.push_back(run_protocol(c, tasks));
  }
  for (std::size_t r = 1; r < reps.size(); ++r) {
    REQUIRE(reps[r].scores.size() == reps[0].scores.size());
    for (std::size_t k = 0; k < reps[r].scores.size(); ++k) {
      CHECK(reps[r].scores[k].image_score <= reps[r - 1].scores[k].image_score);
    }
  }
}

TEST_CASE("sweep cells equal single runs") {
  const auto tasks = synthetic_protocol(2);
  ProtocolConfig c = base_config(Routing::oracle);
  c.sweep_rho = {0.5};
  c.sweep_radius = {1};
  const SweepResult one = run_sweep(c, {tasks});
  REQUIRE(one.cells.size() == 1);
  CHECK(one.at(0, 0).error.empty());
  CHECK(one.at(0, 0).mean_final_auroc == run_protocol(base_config(Routing::oracle), tasks).summary(MetricKind::auroc).final_mean);

  c.sweep_rho = {0.5, 1.0};
  c.sweep_radius = {0, 2};
  const SweepResult grid = run_sweep(c, {tasks, synthetic_protocol(2, 99)});
  CHECK(grid.cells.size() == 4);
  for (const SweepCell& cell : grid.cells) {
    CHECK(cell.protocol_auroc.size() == 2);
    CHECK(cell.mean_final_auroc == doctest::Approx((cell.protocol_auroc[0] + cell.protocol_auroc[1]) / 2.0));
  }
  const std::string md = grid.to_markdown();
  CHECK(md.find("| 50.0% |") != std::string::npos);
  CHECK(md.find("| 100.0% |") != std::string::npos);

  c.sweep_rho = {0.5};
  c.sweep_radius = {1};
  std::vector<ProtocolTask> broken = tasks;
  broken[1].train.features[0].patches.pop_back();
  const SweepResult failed = run_sweep(c, {broken});
  CHECK_FALSE(failed.at(0, 0).error.empty());
}

TEST_CASE("profiling reports thirty timed samples") {
  ProtocolConfig c = base_config(Routing::prototype);
  c.profile = true;
  const RunReport rep = run_protocol(c, synthetic_protocol(2));
  REQUIRE(rep.latency.has_value());
  CHECK(rep.latency->samples == 30);
  CHECK(rep.latency->mean_ms > 0.0);
  CHECK(rep.latency->fps == doctest::Approx(1000.0 / rep.latency->mean_ms));
}

TEST_CASE("manifest-driven runs write report files") {
  const fs::path dir = fresh_dir("files");
  ProtocolConfig c = base_config(Routing::oracle);
  c.manifest = write_protocol(synthetic_protocol(3), dir);
  c.out_dir = dir / "out";
  c.profile = true;
  const RunReport rep = run_protocol(c);
  CHECK(rep.summary(MetricKind::auroc).fm == 0.0);
  for (const char* f : {"report.md", "matrices.csv", "scores.csv", "profile.csv"}) CHECK(fs::exists(c.out_dir / f));
  CHECK(slurp(c.out_dir / "matrices.csv") == matrices_csv(rep));
  CHECK(slurp(c.out_dir / "report.md").find("task2") != std::string::npos);
  CHECK(load_tasks(c.manifest).size() == 3);
}

TEST_CASE("load_config reads keys and resolves paths") {
  const fs::path dir = fresh_dir("config");
  std::ofstream(dir / "run.json") << R"({"manifest": "m.json", "method": "flat_baseline", "rho": 0.25, "radius": 2,
    "routing": "oracle", "metric_kind": "recall", "seed": 7, "profile": true, "runs": 12, "out": "res",
    "sweep": {"rho": [0.1, 0.2], "radius": [0, 1], "manifests": ["a.json"]}})";
  const ProtocolConfig c = load_config(dir / "run.json");
  CHECK(c.manifest == dir / "m.json");
  CHECK(c.method == Method::flat_baseline);
  CHECK(c.rho == 0.25);
  CHECK(c.radius == 2);
  CHECK(c.routing == Routing::oracle);
  CHECK(c.metric_kind == MetricKind::recall);
  CHECK(c.seed == 7);
  CHECK(c.profile);
  CHECK(c.profile_runs == 12);
  CHECK(c.out_dir == dir / "res");
  CHECK(c.sweep_rho == std::vector<double>{0.1, 0.2});
  CHECK(c.sweep_radius == std::vector<std::size_t>{0, 1});
  CHECK(c.sweep_manifests == std::vector<fs::path>{dir / "a.json"});

  std::ofstream(dir / "bad.json") << R"({"rho": 0})";
  CHECK_THROWS_AS(load_config(dir / "bad.json"), Error);
  std::ofstream(dir / "bad_method.json") << R"({"method": "magic"})";
  CHECK_THROWS_AS(load_config(dir / "bad_method.json"), Error);
}
