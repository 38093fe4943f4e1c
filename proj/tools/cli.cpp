#include "cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "cadbench/drift.hpp"
#include "cadbench/error.hpp"
#include "cadbench/harness.hpp"
#include "cadbench/membank.hpp"
#include "cadbench/metrics.hpp"
#include "cadbench/parallel.hpp"
#include "cadbench/scoring.hpp"
#include "cadbench/synthetic.hpp"

namespace cadbench::cli {

namespace fs = std::filesystem;

namespace {

struct UsageError : Error {
  using Error::Error;
};

struct Options {
  std::string features;
  std::string manifest;
  std::vector<std::string> manifests;
  std::vector<std::string> banks;
  std::string bank_dir;
  std::string config;
  double rho = 0.10;
  std::size_t radius = 3;
  std::string routing = "prototype";
  std::string method = "dinosaur";
  std::string metric = "auroc";
  std::uint64_t seed = 0;
  std::string out;
  std::string track = "color";
  std::string source;
  std::string task;
  std::size_t runs = 30;
  std::size_t warmup = 5;
  bool profile = false;
  std::vector<double> rho_grid{0.01, 0.025, 0.05, 0.10, 0.20};
  std::vector<std::size_t> radius_grid{0, 1, 2, 3, 4};
  SyntheticSpec synth;
};

void check_rho(double rho) {
  if (!(rho > 0.0 && rho <= 1.0)) throw UsageError("rho must be in (0,1]");
}

std::string fmt(double v, int digits = 3) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

BankRegistry load_registry(const Options& o) {
  if (!o.banks.empty() && !o.bank_dir.empty()) throw UsageError("conflicting flags: --bank and --bank-dir");
  std::vector<fs::path> paths(o.banks.begin(), o.banks.end());
  if (!o.bank_dir.empty()) {
    if (!fs::is_directory(o.bank_dir)) throw Error("not a directory: " + o.bank_dir);
    for (const auto& e : fs::directory_iterator(o.bank_dir)) {
      if (e.path().extension() == ".cadb") paths.push_back(e.path());
    }
    // Training order is the file-name order inside a bank directory.
    std::sort(paths.begin(), paths.end());
  }
  if (paths.empty()) throw UsageError("missing required flag: --bank or --bank-dir");
  BankRegistry reg;
  for (const auto& p : paths) reg.add(load_bank(p));
  return reg;
}

std::vector<ScoreReport> score_all(const Options& o, const TaskDataset& data, const BankRegistry& reg) {
  const Routing routing = routing_from_string(o.routing);
  if (routing == Routing::oracle && o.task.empty() && reg.size() > 1) {
    throw UsageError("missing required flag: --task (oracle routing with several banks)");
  }
  const std::size_t task = routing == Routing::oracle && !o.task.empty() ? reg.index_of(o.task) : 0;
  std::vector<ScoreReport> out(data.size());
  parallel_for(data.size(), default_workers(), [&](std::size_t k) {
    out[k] = routing == Routing::oracle ? infer_with_task(data.features[k], reg, task, o.radius)
                                        : infer(data.features[k], reg, o.radius);
  });
  return out;
}

ProtocolConfig protocol_config(const Options& o) {
  ProtocolConfig c;
  if (!o.config.empty()) c = load_config(o.config);
  if (!o.manifest.empty()) c.manifest = o.manifest;
  c.method = method_from_string(o.method);
  c.rho = o.rho;
  c.radius = o.radius;
  c.routing = routing_from_string(o.routing);
  c.metric_kind = metric_kind_from_string(o.metric);
  c.seed = o.seed;
  c.profile = c.profile || o.profile;
  c.profile_runs = o.runs;
  if (!o.out.empty()) c.out_dir = o.out;
  return c;
}

void cmd_synth(const Options& o, std::ostream& out) {
  if (o.out.empty()) throw UsageError("missing required flag: --out");
  SyntheticSpec spec = o.synth;
  spec.seed = o.seed;
  out << "config: {\"seed\":" << spec.seed << ",\"tasks\":" << spec.n_tasks << ",\"grid\":\""
      << to_string(spec.shape) << "\",\"sigma\":" << spec.cluster_spread << ",\"delta\":" << spec.anomaly_delta
      << ",\"separation\":" << spec.task_separation << "}\n";
  const auto tasks = generate_synthetic(spec);
  fs::create_directories(o.out);
  Manifest manifest;
  for (const SyntheticTask& t : tasks) {
    const std::string id = t.train.task_id;
    write_feature_file(t.train, fs::path(o.out) / (id + "_train.cadf"));
    write_feature_file(t.test, fs::path(o.out) / (id + "_test.cadf"));
    manifest.tasks.push_back({id, id + "_train.cadf", id + "_test.cadf"});
  }
  write_manifest(manifest, fs::path(o.out) / "manifest.json");
  out << "wrote " << tasks.size() << " tasks to " << o.out << "/manifest.json\n";
}

void cmd_fit(const Options& o, std::ostream& out) {
  if (o.features.empty()) throw UsageError("missing required flag: --features");
  if (o.out.empty()) throw UsageError("missing required flag: --out");
  out << "config: {\"features\":\"" << o.features << "\",\"rho\":" << o.rho << ",\"radius\":" << o.radius << "}\n";
  TaskDataset train = read_feature_file(o.features);
  if (!o.task.empty()) train.task_id = o.task;
  const TaskMemoryBank bank = fit_task(train, o.rho, o.radius);
  const std::size_t written = save_bank(bank, o.out);
  const StorageReport s = storage_bytes(bank);
  out << "task=" << bank.task_id() << " D=" << bank.train_count() << " M=" << bank.m()
      << " threshold=" << bank.threshold() << " payload_bytes=" << s.payload_bytes << " file_bytes=" << written
      << '\n';
}

void cmd_score(const Options& o, std::ostream& out) {
  if (o.features.empty()) throw UsageError("missing required flag: --features");
  out << "config: {\"features\":\"" << o.features << "\",\"radius\":" << o.radius << ",\"routing\":\"" << o.routing
      << "\"}\n";
  const BankRegistry reg = load_registry(o);
  const TaskDataset data = read_feature_file(o.features);
  const auto reports = score_all(o, data, reg);
  std::ostringstream csv;
  csv << "image_id,routed_task,image_score,decision,latency_ns\n" << std::setprecision(17);
  for (const ScoreReport& r : reports) {
    csv << r.image_id << ',' << r.routed_task << ',' << r.image_score << ',' << to_string(r.decision) << ','
        << r.latency_ns << '\n';
  }
  if (o.out.empty()) {
    out << csv.str();
  } else {
    std::ofstream f(o.out);
    if (!f) throw Error("cannot open " + o.out + " for writing");
    f << csv.str();
    out << "wrote " << reports.size() << " scores to " << o.out << '\n';
  }
}

void cmd_evaluate(const Options& o, std::ostream& out) {
  if (o.features.empty()) throw UsageError("missing required flag: --features");
  out << "config: {\"features\":\"" << o.features << "\",\"radius\":" << o.radius << ",\"routing\":\"" << o.routing
      << "\"}\n";
  const BankRegistry reg = load_registry(o);
  const TaskDataset data = read_feature_file(o.features);
  const auto reports = score_all(o, data, reg);
  std::vector<double> scores, thresholds;
  auto labels = std::make_unique<bool[]>(reports.size());
  for (std::size_t k = 0; k < reports.size(); ++k) {
    scores.push_back(reports[k].image_score);
    thresholds.push_back(reg[reports[k].routed_index].threshold());
    labels[k] = data.features[k].label == Label::anomalous;
  }
  const std::span<const bool> ls(labels.get(), reports.size());
  const AccuracyRecall ar = accuracy_recall(scores, ls, thresholds);
  out << "auroc=" << fmt(auroc(scores, ls), 6) << " accuracy=" << fmt(ar.accuracy, 6) << " recall=" << fmt(ar.recall, 6)
      << '\n';
}

void print_summary(const RunReport& rep, std::ostream& out) {
  const MetricSummary a = rep.summary(MetricKind::auroc);
  const MetricSummary acc = rep.summary(MetricKind::accuracy);
  const MetricSummary rec = rep.summary(MetricKind::recall);
  const MetricSummary fm = rep.summary(rep.config.metric_kind);
  out << "| Method | AUROC | Acc | Recall | FM |\n|---|---|---|---|---|\n";
  out << "| " << to_string(rep.config.method) << " | " << fmt(a.final_mean) << " | " << fmt(acc.final_mean) << " | "
      << fmt(rec.final_mean) << " | " << fmt(fm.fm) << (fm.single_task ? " (T<2)" : "") << " |\n";
  if (rep.config.method == Method::dinosaur) {
    out << "routing_accuracy=" << fmt(rep.routing_accuracy(), 4) << " stage_isolation="
        << (rep.stage_isolation_ok ? "ok" : "violated") << '\n';
  }
  if (rep.latency) {
    out << "latency_ms=" << fmt(rep.latency->mean_ms, 2) << " std_ms=" << fmt(rep.latency->std_ms, 2)
        << " fps=" << fmt(rep.latency->fps, 1) << '\n';
  }
}

void cmd_protocol(const Options& o, std::ostream& out) {
  check_rho(o.rho);
  const ProtocolConfig c = protocol_config(o);
  if (c.manifest.empty()) throw UsageError("missing required flag: --manifest");
  out << "config: " << c.to_json() << '\n';
  const RunReport rep = run_protocol(c);
  print_summary(rep, out);
  if (!c.out_dir.empty()) out << "wrote report to " << c.out_dir.string() << '\n';
}

void cmd_sweep(const Options& o, std::ostream& out) {
  ProtocolConfig c = protocol_config(o);
  for (double r : o.rho_grid) check_rho(r);
  if (c.sweep_rho.empty()) c.sweep_rho = o.rho_grid;
  if (c.sweep_radius.empty()) c.sweep_radius = o.radius_grid;
  for (const auto& m : o.manifests) c.sweep_manifests.push_back(m);
  if (c.manifest.empty() && c.sweep_manifests.empty()) throw UsageError("missing required flag: --manifest");
  out << "config: " << c.to_json() << '\n';
  out << run_sweep(c).to_markdown();
}

void cmd_drift_plan(const Options& o, std::ostream& out) {
  const DriftPlan plan = make_plan(drift_track_from_string(o.track), o.seed);
  const std::string json = plan_to_json(plan);
  if (o.out.empty()) {
    out << json << '\n';
  } else {
    std::ofstream f(o.out);
    f << json << '\n';
    if (!f) throw Error("write failed: " + o.out);
    out << "wrote plan to " << o.out << '\n';
  }
}

void cmd_drift_apply(const Options& o, std::ostream& out) {
  if (o.source.empty()) throw UsageError("missing required flag: --source");
  if (o.out.empty()) throw UsageError("missing required flag: --out");
  const DriftPlan plan = make_plan(drift_track_from_string(o.track), o.seed);
  out << "config: " << nlohmann::json::parse(plan_to_json(plan)).dump() << '\n';
  const DriftBuildResult res = build_drift_tasks(o.source, plan, o.out);
  out << "wrote " << res.images_written << " images in " << res.manifest.tasks.size() << " tasks to " << o.out << '\n';
}

void cmd_profile(const Options& o, std::ostream& out) {
  if (o.features.empty()) throw UsageError("missing required flag: --features");
  if (o.runs == 0) throw UsageError("runs must be positive");
  out << "config: {\"features\":\"" << o.features << "\",\"radius\":" << o.radius << ",\"runs\":" << o.runs
      << ",\"warmup\":" << o.warmup << "}\n";
  const BankRegistry reg = load_registry(o);
  const TaskDataset data = read_feature_file(o.features);
  const LatencyStats s = profile_inference(reg, data.features.front(), o.radius, o.runs, o.warmup);
  out << "mean_ms=" << fmt(s.mean_ms, 3) << " std_ms=" << fmt(s.std_ms, 3) << " fps=" << fmt(s.fps, 1)
      << " runs=" << s.samples << '\n';
}

void cmd_inspect(const Options& o, std::ostream& out) {
  if (!o.features.empty() && !o.banks.empty()) throw UsageError("conflicting flags: --features and --bank");
  if (!o.features.empty()) {
    const TaskDataset d = read_feature_file(o.features);
    std::size_t anomalous = 0;
    for (const auto& g : d.features) anomalous += g.label == Label::anomalous;
    out << "feature file " << o.features << ": split=" << (d.split == Split::train ? "train" : "test")
        << " grid=" << to_string(d.shape()) << " count=" << d.size() << " anomalous=" << anomalous
        << " bytes=" << encoded_size(d) << '\n';
    return;
  }
  if (o.banks.empty()) throw UsageError("missing required flag: --features or --bank");
  for (const auto& p : o.banks) {
    const TaskMemoryBank b = load_bank(p);
    const StorageReport s = storage_bytes(b);
    out << "bank " << p << ": task=" << b.task_id() << " grid=" << to_string(b.shape()) << " M=" << b.m()
        << " D=" << b.train_count() << " rho=" << b.rho() << " threshold=" << b.threshold()
        << " payload_bytes=" << s.payload_bytes << " file_bytes=" << s.serialized_bytes << " hash=" << std::hex
        << bank_hash(b) << std::dec << '\n';
  }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Continual anomaly detection benchmark", "cadbench"};
  app.require_subcommand(1);
  Options o;

  auto add_bank_flags = [&](CLI::App* cmd) {
    cmd->add_option("--bank", o.banks, "bank file (repeatable, training order)");
    cmd->add_option("--bank-dir", o.bank_dir, "directory of .cadb banks, name order");
  };
  auto add_scoring_flags = [&](CLI::App* cmd) {
    cmd->add_option("--radius", o.radius, "neighborhood radius")->capture_default_str();
    cmd->add_option("--routing", o.routing, "prototype|oracle")->check(CLI::IsMember({"prototype", "oracle"}));
    cmd->add_option("--task", o.task, "task id for oracle routing");
  };

  auto* synth = app.add_subcommand("synth", "generate synthetic feature tasks");
  synth->add_option("--seed", o.seed);
  synth->add_option("--out", o.out, "output directory");
  synth->add_option("--tasks", o.synth.n_tasks);
  synth->add_option("--train", o.synth.n_train);
  synth->add_option("--test-normal", o.synth.n_test_normal);
  synth->add_option("--test-anomalous", o.synth.n_test_anomalous);
  synth->add_option("--grid-h", o.synth.shape.grid_h);
  synth->add_option("--grid-w", o.synth.shape.grid_w);
  synth->add_option("--dim", o.synth.shape.dim);
  synth->add_option("--sigma", o.synth.cluster_spread);
  synth->add_option("--delta", o.synth.anomaly_delta);
  synth->add_option("--separation", o.synth.task_separation);

  auto* fit = app.add_subcommand("fit", "fit one task bank");
  fit->add_option("--features", o.features, "training feature file");
  fit->add_option("--rho", o.rho)->capture_default_str();
  fit->add_option("--radius", o.radius)->capture_default_str();
  fit->add_option("--task", o.task, "task id (default: file stem)");
  fit->add_option("--out", o.out, "bank output path");

  auto* score = app.add_subcommand("score", "score a feature file");
  score->add_option("--features", o.features);
  add_bank_flags(score);
  add_scoring_flags(score);
  score->add_option("--out", o.out, "CSV output (default stdout)");

  auto* evaluate = app.add_subcommand("evaluate", "AUROC/accuracy/recall of a test file");
  evaluate->add_option("--features", o.features);
  add_bank_flags(evaluate);
  add_scoring_flags(evaluate);

  auto add_protocol_flags = [&](CLI::App* cmd) {
    cmd->add_option("--config", o.config, "JSON config");
    cmd->add_option("--method", o.method)->check(CLI::IsMember({"dinosaur", "flat_baseline", "flat"}));
    cmd->add_option("--rho", o.rho)->capture_default_str();
    cmd->add_option("--radius", o.radius)->capture_default_str();
    cmd->add_option("--routing", o.routing)->check(CLI::IsMember({"prototype", "oracle"}));
    cmd->add_option("--metric", o.metric)->check(CLI::IsMember({"auroc", "accuracy", "recall"}));
    cmd->add_option("--seed", o.seed);
    cmd->add_option("--out", o.out, "report directory");
  };
  auto* protocol = app.add_subcommand("protocol", "run a continual protocol");
  protocol->add_option("--manifest", o.manifest);
  add_protocol_flags(protocol);
  protocol->add_flag("--profile", o.profile, "profile inference latency");
  protocol->add_option("--runs", o.runs)->capture_default_str();

  auto* sweep = app.add_subcommand("sweep", "rho x radius grid");
  sweep->add_option("--manifest", o.manifests, "protocol manifest (repeatable)");
  add_protocol_flags(sweep);
  sweep->add_option("--rho-grid", o.rho_grid)->delimiter(',');
  sweep->add_option("--radius-grid", o.radius_grid)->delimiter(',');

  auto* plan = app.add_subcommand("drift-plan", "print a drift plan");
  plan->add_option("--track", o.track)->check(CLI::IsMember({"color", "blur", "geo", "geometric"}));
  plan->add_option("--seed", o.seed);
  plan->add_option("--out", o.out, "JSON output (default stdout)");

  auto* apply = app.add_subcommand("drift-apply", "build drift task images");
  apply->add_option("--track", o.track)->check(CLI::IsMember({"color", "blur", "geo", "geometric"}));
  apply->add_option("--seed", o.seed);
  apply->add_option("--source", o.source, "directory with train/ and test/ PPM images");
  apply->add_option("--out", o.out, "output directory");

  auto* profile = app.add_subcommand("profile", "time inference on one image");
  profile->add_option("--features", o.features, "feature file; its first image is timed");
  add_bank_flags(profile);
  profile->add_option("--radius", o.radius)->capture_default_str();
  profile->add_option("--runs", o.runs)->capture_default_str();
  profile->add_option("--warmup", o.warmup)->capture_default_str();

  auto* inspect = app.add_subcommand("inspect", "describe a feature or bank file");
  inspect->add_option("--features", o.features);
  inspect->add_option("--bank", o.banks);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: usage: " << e.what() << '\n';
    return 2;
  }

  try {
    if (fit->parsed() || score->parsed() || evaluate->parsed() || protocol->parsed()) check_rho(o.rho);
    if (synth->parsed()) cmd_synth(o, out);
    else if (fit->parsed()) cmd_fit(o, out);
    else if (score->parsed()) cmd_score(o, out);
    else if (evaluate->parsed()) cmd_evaluate(o, out);
    else if (protocol->parsed()) cmd_protocol(o, out);
    else if (sweep->parsed()) cmd_sweep(o, out);
    else if (plan->parsed()) cmd_drift_plan(o, out);
    else if (apply->parsed()) cmd_drift_apply(o, out);
    else if (profile->parsed()) cmd_profile(o, out);
    else if (inspect->parsed()) cmd_inspect(o, out);
  } catch (const UsageError& e) {
    err << "error: usage: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace cadbench::cli
