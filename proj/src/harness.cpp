#include "cadbench/harness.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <numeric>
#include <sstream>
#include <tuple>

#include <json.hpp>

#include "cadbench/error.hpp"
#include "cadbench/flat_bank.hpp"
#include "cadbench/parallel.hpp"

namespace cadbench {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

const char* to_string(Method m) { return m == Method::dinosaur ? "dinosaur" : "flat_baseline"; }
const char* to_string(Routing r) { return r == Routing::prototype ? "prototype" : "oracle"; }

Method method_from_string(const std::string& s) {
  if (s == "dinosaur") return Method::dinosaur;
  if (s == "flat_baseline" || s == "flat") return Method::flat_baseline;
  throw Error("unknown method " + s);
}

Routing routing_from_string(const std::string& s) {
  if (s == "prototype") return Routing::prototype;
  if (s == "oracle") return Routing::oracle;
  throw Error("routing must be prototype or oracle");
}

void ProtocolConfig::validate() const {
  if (!(rho > 0.0 && rho <= 1.0)) throw Error("rho must be in (0,1]");
  for (double r : sweep_rho) {
    if (!(r > 0.0 && r <= 1.0)) throw Error("rho must be in (0,1]");
  }
  if (profile && profile_runs == 0) throw Error("runs must be positive");
}

std::string ProtocolConfig::to_json() const {
  nlohmann::json doc{{"manifest", manifest.string()},
                     {"method", cadbench::to_string(method)},
                     {"rho", rho},
                     {"radius", radius},
                     {"routing", cadbench::to_string(routing)},
                     {"metric_kind", cadbench::to_string(metric_kind)},
                     {"seed", seed},
                     {"profile", profile},
                     {"runs", profile_runs},
                     {"workers", workers ? workers : default_workers()}};
  if (!sweep_rho.empty() || !sweep_radius.empty() || !sweep_manifests.empty()) {
    nlohmann::json sweep{{"rho", sweep_rho}, {"radius", sweep_radius}, {"manifests", nlohmann::json::array()}};
    for (const auto& m : sweep_manifests) sweep["manifests"].push_back(m.string());
    doc["sweep"] = sweep;
  }
  return doc.dump();
}

ProtocolConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  ProtocolConfig c;
  const fs::path base = path.parent_path();
  auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base / p; };
  try {
    const nlohmann::json doc = nlohmann::json::parse(in);
    if (doc.contains("manifest")) c.manifest = resolve(doc["manifest"].get<std::string>());
    if (doc.contains("method")) c.method = method_from_string(doc["method"].get<std::string>());
    if (doc.contains("rho")) c.rho = doc["rho"].get<double>();
    if (doc.contains("radius")) c.radius = doc["radius"].get<std::size_t>();
    if (doc.contains("routing")) c.routing = routing_from_string(doc["routing"].get<std::string>());
    if (doc.contains("metric_kind")) c.metric_kind = metric_kind_from_string(doc["metric_kind"].get<std::string>());
    if (doc.contains("seed")) c.seed = doc["seed"].get<std::uint64_t>();
    if (doc.contains("profile")) c.profile = doc["profile"].get<bool>();
    if (doc.contains("runs")) c.profile_runs = doc["runs"].get<std::size_t>();
    if (doc.contains("workers")) c.workers = doc["workers"].get<std::size_t>();
    if (doc.contains("out")) c.out_dir = resolve(doc["out"].get<std::string>());
    if (doc.contains("sweep")) {
      const auto& s = doc["sweep"];
      if (s.contains("rho")) c.sweep_rho = s["rho"].get<std::vector<double>>();
      if (s.contains("radius")) c.sweep_radius = s["radius"].get<std::vector<std::size_t>>();
      if (s.contains("manifests")) {
        for (const auto& m : s["manifests"]) c.sweep_manifests.push_back(resolve(m.get<std::string>()));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("bad config: ") + e.what());
  }
  c.validate();
  return c;
}

std::vector<ProtocolTask> load_tasks(const fs::path& manifest_path) {
  const Manifest manifest = read_manifest(manifest_path);
  std::vector<ProtocolTask> tasks;
  for (const TaskEntry& e : manifest.tasks) {
    ProtocolTask t;
    t.task_id = e.task_id;
    t.train = read_feature_file(manifest.resolve(e.train_file));
    t.test = read_feature_file(manifest.resolve(e.test_file));
    t.train.task_id = e.task_id;
    t.test.task_id = e.task_id;
    t.train.source_manifest = manifest_path;
    t.test.source_manifest = manifest_path;
    tasks.push_back(std::move(t));
  }
  return tasks;
}

const EvalMatrix& RunReport::matrix(MetricKind kind) const {
  switch (kind) {
    case MetricKind::auroc: return auroc;
    case MetricKind::accuracy: return accuracy;
    case MetricKind::recall: return recall;
  }
  return auroc;
}

namespace {

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

template <typename Fn>
LatencyStats time_runs(std::size_t runs, std::size_t warmup, Fn&& fn) {
  for (std::size_t w = 0; w < warmup; ++w) fn();
  std::vector<double> ms;
  ms.reserve(runs);
  for (std::size_t r = 0; r < runs; ++r) {
    const auto start = Clock::now();
    fn();
    ms.push_back(std::chrono::duration<double, std::milli>(Clock::now() - start).count());
  }
  LatencyStats s;
  s.samples = ms.size();
  s.warmup = warmup;
  if (ms.empty()) return s;
  s.mean_ms = std::accumulate(ms.begin(), ms.end(), 0.0) / static_cast<double>(ms.size());
  double var = 0.0;
  for (double v : ms) var += (v - s.mean_ms) * (v - s.mean_ms);
  s.std_ms = ms.size() > 1 ? std::sqrt(var / static_cast<double>(ms.size() - 1)) : 0.0;
  s.fps = s.mean_ms > 0.0 ? 1000.0 / s.mean_ms : 0.0;
  return s;
}

void check_shapes(const std::vector<ProtocolTask>& tasks) {
  if (tasks.empty()) throw Error("empty manifest");
  const GridShape shape = tasks.front().train.shape();
  for (const ProtocolTask& t : tasks) {
    t.train.validate();
    if (t.test.features.empty()) throw Error("empty test set for task " + t.task_id);
    if (t.train.shape() != shape || t.test.shape() != shape) {
      throw Error("shape mismatch in task " + t.task_id);
    }
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw Error("write failed: " + path.string());
}

std::string fixed(double v, int digits = 3) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

}  // namespace

LatencyStats profile_inference(const BankRegistry& registry, const FeatureGrid& sample, std::size_t radius,
                               std::size_t runs, std::size_t warmup) {
  if (registry.empty()) throw Error("empty registry");
  volatile double sink = 0.0;
  return time_runs(runs, warmup, [&] { sink = infer(sample, registry, radius).image_score; });
}

RunReport run_protocol(const ProtocolConfig& config, const std::vector<ProtocolTask>& tasks) {
  config.validate();
  check_shapes(tasks);
  const std::size_t count = tasks.size();
  const std::size_t workers = config.workers ? config.workers : default_workers();

  RunReport rep;
  rep.config = config;
  rep.auroc = EvalMatrix(count, MetricKind::auroc);
  rep.accuracy = EvalMatrix(count, MetricKind::accuracy);
  rep.recall = EvalMatrix(count, MetricKind::recall);
  for (const ProtocolTask& t : tasks) rep.task_ids.push_back(t.task_id);

  BankRegistry registry;
  ReplayBuffer replay(FlatBankConfig{}.replay_per_task);
  std::optional<FlatBank> flat;
  // Banks never change once fitted, so a score depends only on (task, image, bank).
  std::map<std::tuple<std::size_t, std::size_t, std::size_t>, ScoreReport> cache;

  for (std::size_t t = 0; t < count; ++t) {
    StageTiming timing{tasks[t].task_id, 0.0, 0.0};
    auto start = Clock::now();
    if (config.method == Method::dinosaur) {
      FitOptions fit_options{workers, tasks[t].task_id};
      registry.add(fit_task(tasks[t].train, config.rho, config.radius, fit_options));
      rep.storage.push_back(storage_bytes(registry[t]));
      rep.coreset_sizes.push_back(registry[t].m());
    } else {
      flat.emplace(FlatBank::fit(tasks[t].train, replay.images(), FlatBankConfig{}, workers));
      replay.add_task(tasks[t].train);
      const std::size_t payload = flat->vectors().size() * sizeof(float);
      rep.storage.push_back({payload, payload});
      rep.coreset_sizes.push_back(flat->size());
    }
    timing.fit_seconds = seconds_since(start);

    if (config.method == Method::dinosaur) {
      std::vector<std::uint64_t> hashes;
      for (std::size_t j = 0; j <= t; ++j) {
        hashes.push_back(bank_hash(registry[j]));
        if (j < t && hashes[j] != rep.bank_hashes.back()[j]) rep.stage_isolation_ok = false;
      }
      rep.bank_hashes.push_back(std::move(hashes));
    }

    start = Clock::now();
    for (std::size_t j = 0; j <= t; ++j) {
      const std::vector<FeatureGrid>& test = tasks[j].test.features;
      std::vector<ScoreReport> reports(test.size());
      parallel_for(test.size(), workers, [&](std::size_t k) {
        if (config.method == Method::flat_baseline) {
          reports[k] = flat->score(test[k]);
          return;
        }
        const std::size_t bank =
            config.routing == Routing::oracle ? j : route(test[k].cls, registry);
        reports[k] = infer_with_task(test[k], registry, bank, config.radius);
      });

      std::vector<double> scores, thresholds;
      auto flags = std::make_unique<bool[]>(test.size());
      for (std::size_t k = 0; k < test.size(); ++k) {
        ScoreReport& r = reports[k];
        double threshold;
        if (config.method == Method::dinosaur) {
          // Reuse the first score of this (image, bank) pair so reports stay bitwise stable.
          auto [it, inserted] = cache.try_emplace({j, k, r.routed_index}, r);
          if (!inserted) r = it->second;
          threshold = registry[r.routed_index].threshold();
          ++rep.routed_images;
          if (r.routed_index == j) ++rep.correctly_routed;
        } else {
          threshold = flat->threshold();
        }
        scores.push_back(r.image_score);
        thresholds.push_back(threshold);
        flags[k] = test[k].label == Label::anomalous;
        rep.scores.push_back({t, tasks[j].task_id, r.image_id, r.routed_task, r.image_score, threshold, r.decision,
                              test[k].label == Label::anomalous, r.latency_ns});
      }
      const std::span<const bool> label_span(flags.get(), test.size());
      try {
        rep.auroc.set(t, j, auroc(scores, label_span));
      } catch (const Error& e) {
        throw Error(std::string(e.what()) + " for task " + tasks[j].task_id);
      }
      const AccuracyRecall ar = accuracy_recall(scores, label_span, thresholds);
      rep.accuracy.set(t, j, ar.accuracy);
      rep.recall.set(t, j, ar.recall);
    }
    timing.eval_seconds = seconds_since(start);
    rep.timings.push_back(timing);

    if (!config.out_dir.empty()) {
      fs::create_directories(config.out_dir);
      write_text(config.out_dir / "matrices.csv", matrices_csv(rep));
    }
  }

  if (config.profile) {
    const FeatureGrid& sample = tasks.back().test.features.front();
    if (config.method == Method::dinosaur) {
      rep.latency = profile_inference(registry, sample, config.radius, config.profile_runs);
    } else {
      volatile double sink = 0.0;
      rep.latency = time_runs(config.profile_runs, 5, [&] { sink = flat->score(sample).image_score; });
    }
  }
  return rep;
}

RunReport run_protocol(const ProtocolConfig& config) {
  config.validate();
  if (config.manifest.empty()) throw Error("missing manifest");
  RunReport rep = run_protocol(config, load_tasks(config.manifest));
  if (!config.out_dir.empty()) write_run_outputs(rep, config.out_dir);
  return rep;
}

SweepResult run_sweep(const ProtocolConfig& config, const std::vector<std::vector<ProtocolTask>>& protocols) {
  config.validate();
  if (protocols.empty()) throw Error("sweep needs at least one protocol");
  SweepResult res;
  res.rho = config.sweep_rho.empty() ? std::vector<double>{config.rho} : config.sweep_rho;
  res.radius = config.sweep_radius.empty() ? std::vector<std::size_t>{config.radius} : config.sweep_radius;
  for (double rho : res.rho) {
    for (std::size_t radius : res.radius) {
      SweepCell cell;
      cell.rho = rho;
      cell.radius = radius;
      ProtocolConfig c = config;
      c.rho = rho;
      c.radius = radius;
      c.profile = false;
      c.out_dir.clear();
      try {
        for (const auto& tasks : protocols) {
          cell.protocol_auroc.push_back(run_protocol(c, tasks).summary(MetricKind::auroc).final_mean);
        }
        cell.mean_final_auroc = std::accumulate(cell.protocol_auroc.begin(), cell.protocol_auroc.end(), 0.0) /
                                static_cast<double>(cell.protocol_auroc.size());
      } catch (const Error& e) {
        cell.error = e.what();
      }
      res.cells.push_back(std::move(cell));
    }
  }
  return res;
}

SweepResult run_sweep(const ProtocolConfig& config) {
  std::vector<fs::path> manifests = config.sweep_manifests;
  if (manifests.empty() && !config.manifest.empty()) manifests.push_back(config.manifest);
  if (manifests.empty()) throw Error("missing manifest");
  std::vector<std::vector<ProtocolTask>> protocols;
  for (const auto& m : manifests) protocols.push_back(load_tasks(m));
  SweepResult res = run_sweep(config, protocols);
  if (!config.out_dir.empty()) {
    fs::create_directories(config.out_dir);
    write_text(config.out_dir / "sweep.md", res.to_markdown());
  }
  return res;
}

std::string SweepResult::to_markdown() const {
  std::ostringstream os;
  os << "| rho \\ r |";
  for (std::size_t r : radius) os << ' ' << r << " |";
  os << "\n|---|";
  for (std::size_t k = 0; k < radius.size(); ++k) os << "---|";
  os << '\n';
  for (std::size_t i = 0; i < rho.size(); ++i) {
    os << "| " << fixed(rho[i] * 100.0, 1) << "% |";
    for (std::size_t k = 0; k < radius.size(); ++k) {
      const SweepCell& c = at(i, k);
      os << ' ' << (c.error.empty() ? fixed(c.mean_final_auroc) : "error") << " |";
    }
    os << '\n';
  }
  for (const SweepCell& c : cells) {
    if (!c.error.empty()) os << "\nrho=" << c.rho << " r=" << c.radius << ": " << c.error << '\n';
  }
  return os.str();
}

std::string matrices_csv(const RunReport& report) {
  std::ostringstream os;
  os << "metric,stage,task,value\n";
  os << std::setprecision(17);
  for (MetricKind kind : {MetricKind::auroc, MetricKind::accuracy, MetricKind::recall}) {
    const EvalMatrix& m = report.matrix(kind);
    for (std::size_t t = 0; t < m.tasks(); ++t) {
      for (std::size_t j = 0; j <= t; ++j) {
        if (m.has(t, j)) os << to_string(kind) << ',' << t + 1 << ',' << report.task_ids[j] << ',' << m.at(t, j) << '\n';
      }
    }
  }
  return os.str();
}

std::string scores_csv(const std::vector<ScoreRow>& rows) {
  std::ostringstream os;
  os << "stage,task,image_id,routed_task,image_score,threshold,decision,label,latency_ns\n";
  os << std::setprecision(17);
  for (const ScoreRow& r : rows) {
    os << r.stage + 1 << ',' << r.task_id << ',' << r.image_id << ',' << r.routed_task << ',' << r.image_score << ','
       << r.threshold << ',' << to_string(r.decision) << ',' << (r.anomalous ? "anomalous" : "normal") << ','
       << r.latency_ns << '\n';
  }
  return os.str();
}

std::string report_markdown(const RunReport& report) {
  std::ostringstream os;
  const ProtocolConfig& c = report.config;
  os << "# Continual protocol report\n\n";
  os << "Config: `" << c.to_json() << "`\n\n";
  os << "| Method | AUROC | Acc | Recall | FM |\n|---|---|---|---|---|\n";
  const MetricSummary a = report.summary(MetricKind::auroc);
  const MetricSummary acc = report.summary(MetricKind::accuracy);
  const MetricSummary rec = report.summary(MetricKind::recall);
  const MetricSummary fm = report.summary(c.metric_kind);
  os << "| " << to_string(c.method) << " | " << fixed(a.final_mean) << " | " << fixed(acc.final_mean) << " | "
     << fixed(rec.final_mean) << " | " << fixed(fm.fm) << (fm.single_task ? " (T<2)" : "") << " |\n\n";
  if (fm.single_task) os << "Warning: FM undefined for a single task (T<2); reported as 0.\n\n";
  os << "FM metric: " << to_string(c.metric_kind) << "\n\n";
  if (c.method == Method::dinosaur) {
    os << "Routing accuracy: " << fixed(report.routing_accuracy() * 100.0, 2) << "% (" << report.correctly_routed << '/'
       << report.routed_images << ")\n\n";
    os << "Stage isolation: " << (report.stage_isolation_ok ? "ok" : "VIOLATED") << "\n\n";
  }

  os << "## Per-task storage\n\n| Task | M | Payload (B) | Serialized (B) | Fit (s) | Eval (s) |\n|---|---|---|---|---|---|\n";
  std::size_t total = 0;
  for (std::size_t t = 0; t < report.storage.size(); ++t) {
    total += report.storage[t].serialized_bytes;
    os << "| " << report.task_ids[t] << " | " << report.coreset_sizes[t] << " | " << report.storage[t].payload_bytes
       << " | " << report.storage[t].serialized_bytes << " | " << fixed(report.timings[t].fit_seconds) << " | "
       << fixed(report.timings[t].eval_seconds) << " |\n";
  }
  os << "\nTotal serialized: " << fixed(static_cast<double>(total) / 1e6, 1) << " MB\n\n";

  if (report.latency) {
    const LatencyStats& l = *report.latency;
    os << "## Latency\n\n" << fixed(l.mean_ms, 2) << " ± " << fixed(l.std_ms, 2) << " ms, " << fixed(l.fps, 1)
       << " FPS (" << l.samples << " runs after " << l.warmup << " warmup)\n\n";
  }

  for (MetricKind kind : {MetricKind::auroc, MetricKind::accuracy, MetricKind::recall}) {
    const EvalMatrix& m = report.matrix(kind);
    os << "## " << to_string(kind) << " matrix a[t][j]\n\n| stage |";
    for (const auto& id : report.task_ids) os << ' ' << id << " |";
    os << "\n|---|";
    for (std::size_t j = 0; j < report.task_ids.size(); ++j) os << "---|";
    os << '\n';
    for (std::size_t t = 0; t < m.tasks(); ++t) {
      os << "| " << t + 1 << " |";
      for (std::size_t j = 0; j < m.tasks(); ++j) os << ' ' << (j <= t && m.has(t, j) ? fixed(m.at(t, j)) : "") << " |";
      os << '\n';
    }
    os << '\n';
  }
  return os.str();
}

void write_run_outputs(const RunReport& report, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  write_text(out_dir / "report.md", report_markdown(report));
  write_text(out_dir / "matrices.csv", matrices_csv(report));
  write_text(out_dir / "scores.csv", scores_csv(report.scores));
  if (report.latency) {
    const LatencyStats& l = *report.latency;
    std::ostringstream os;
    os << "mean_ms,std_ms,fps,runs,warmup\n" << l.mean_ms << ',' << l.std_ms << ',' << l.fps << ',' << l.samples << ','
       << l.warmup << '\n';
    write_text(out_dir / "profile.csv", os.str());
  }
}

}  // namespace cadbench
