#pragma once

// Continual protocol runner: sequential fitting, lower-triangular
// evaluation, hyperparameter sweeps, latency profiling and report files.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cadbench/featstore.hpp"
#include "cadbench/membank.hpp"
#include "cadbench/metrics.hpp"
#include "cadbench/scoring.hpp"

namespace cadbench {

enum class Method { dinosaur, flat_baseline };
enum class Routing { prototype, oracle };
const char* to_string(Method m);
const char* to_string(Routing r);
Method method_from_string(const std::string& s);
Routing routing_from_string(const std::string& s);

struct ProtocolConfig {
  std::filesystem::path manifest;
  Method method = Method::dinosaur;
  double rho = 0.10;
  std::size_t radius = 3;
  Routing routing = Routing::prototype;
  MetricKind metric_kind = MetricKind::auroc;
  std::uint64_t seed = 0;
  bool profile = false;
  std::size_t profile_runs = 30;
  std::size_t workers = 0;  // 0 = default_workers()
  std::filesystem::path out_dir;  // empty: no files written

  // Sweep grids; empty means "use the single value above".
  std::vector<double> sweep_rho;
  std::vector<std::size_t> sweep_radius;
  std::vector<std::filesystem::path> sweep_manifests;

  void validate() const;
  std::string to_json() const;
};

// Reads a JSON config; missing keys keep their defaults. Relative paths are
// resolved against the config file's directory.
ProtocolConfig load_config(const std::filesystem::path& path);

struct ProtocolTask {
  std::string task_id;
  TaskDataset train;
  TaskDataset test;
};

// Loads every train/test file named by the manifest.
std::vector<ProtocolTask> load_tasks(const std::filesystem::path& manifest);

struct LatencyStats {
  double mean_ms = 0.0;
  double std_ms = 0.0;
  double fps = 0.0;
  std::size_t samples = 0;
  std::size_t warmup = 0;
};

struct StageTiming {
  std::string task_id;
  double fit_seconds = 0.0;
  double eval_seconds = 0.0;
};

struct ScoreRow {
  std::size_t stage = 0;
  std::string task_id;  // ground-truth task of the image
  std::string image_id;
  std::string routed_task;
  double image_score = 0.0;
  double threshold = 0.0;
  Decision decision = Decision::normal;
  bool anomalous = false;
  std::int64_t latency_ns = 0;
};

struct RunReport {
  ProtocolConfig config;
  std::vector<std::string> task_ids;
  EvalMatrix auroc;
  EvalMatrix accuracy;
  EvalMatrix recall;
  std::vector<StorageReport> storage;  // per task; flat baseline reports its single bank per stage
  std::vector<std::size_t> coreset_sizes;
  std::optional<LatencyStats> latency;
  std::vector<StageTiming> timings;
  std::vector<ScoreRow> scores;
  // bank_hashes[t][j]: hash of bank j as observed after stage t (DINOSaur only).
  std::vector<std::vector<std::uint64_t>> bank_hashes;
  bool stage_isolation_ok = true;
  std::size_t routed_images = 0;
  std::size_t correctly_routed = 0;

  const EvalMatrix& matrix(MetricKind kind) const;
  MetricSummary summary(MetricKind kind) const { return forgetting(matrix(kind)); }
  double routing_accuracy() const {
    return routed_images ? static_cast<double>(correctly_routed) / static_cast<double>(routed_images) : 1.0;
  }
};

// Runs the continual protocol over in-memory tasks (config.manifest unused).
RunReport run_protocol(const ProtocolConfig& config, const std::vector<ProtocolTask>& tasks);

// Loads config.manifest and runs it; writes outputs if config.out_dir is set.
RunReport run_protocol(const ProtocolConfig& config);

// Timed infer() on one image with a single worker: `warmup` untimed runs,
// then `runs` timed ones. fps = 1000 / mean_ms.
LatencyStats profile_inference(const BankRegistry& registry, const FeatureGrid& sample, std::size_t radius,
                               std::size_t runs = 30, std::size_t warmup = 5);

struct SweepCell {
  double rho = 0.0;
  std::size_t radius = 0;
  double mean_final_auroc = 0.0;  // protocols weighted equally
  std::vector<double> protocol_auroc;
  std::string error;              // non-empty if any protocol failed
};

struct SweepResult {
  std::vector<double> rho;
  std::vector<std::size_t> radius;
  std::vector<SweepCell> cells;  // row-major [rho][radius]

  const SweepCell& at(std::size_t rho_index, std::size_t radius_index) const {
    return cells.at(rho_index * radius.size() + radius_index);
  }
  std::string to_markdown() const;
};

// One run_protocol per (rho, radius) cell over every protocol; a failing cell
// records its error and the sweep continues.
SweepResult run_sweep(const ProtocolConfig& config, const std::vector<std::vector<ProtocolTask>>& protocols);
SweepResult run_sweep(const ProtocolConfig& config);

// report.md, matrices.csv, scores.csv and (when profiled) profile.csv.
void write_run_outputs(const RunReport& report, const std::filesystem::path& out_dir);
std::string report_markdown(const RunReport& report);
std::string matrices_csv(const RunReport& report);
std::string scores_csv(const std::vector<ScoreRow>& rows);

}  // namespace cadbench
