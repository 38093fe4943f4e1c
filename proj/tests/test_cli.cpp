#include <doctest.h>

#include <filesystem>
#include <sstream>

#include "cli.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code = 0;
  std::string out;
  std::string err;
};

Result run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  Result r;
  r.code = cadbench::cli::run(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

fs::path synth_dir() {
  static const fs::path dir = [] {
    const fs::path d = fs::temp_directory_path() / "cadbench_cli" / "synth";
    fs::remove_all(d);
    const Result r = run({"synth", "--seed", "3", "--tasks", "3", "--train", "40", "--out", d.string()});
    REQUIRE(r.code == 0);
    return d;
  }();
  return dir;
}

}  // namespace

TEST_CASE("synth writes a manifest") {
  CHECK(fs::exists(synth_dir() / "manifest.json"));
  CHECK(fs::exists(synth_dir() / "task2_test.cadf"));
}

TEST_CASE("fit prints coreset size and storage") {
  const fs::path bank = synth_dir() / "task0.cadb";
  const Result r = run({"fit", "--features", (synth_dir() / "task0_train.cadf").string(), "--task", "task0", "--rho",
                        "0.5", "--out", bank.string()});
  REQUIRE(r.code == 0);
  CHECK(r.out.rfind("config: ", 0) == 0);
  CHECK(r.out.find("M=20") != std::string::npos);
  CHECK(r.out.find("payload_bytes=") != std::string::npos);
  CHECK(fs::exists(bank));

  const Result inspect = run({"inspect", "--bank", bank.string()});
  CHECK(inspect.code == 0);
  CHECK(inspect.out.find("task=task0") != std::string::npos);

  const Result score = run({"score", "--features", (synth_dir() / "task0_test.cadf").string(), "--bank", bank.string()});
  CHECK(score.code == 0);
  CHECK(score.out.find("image_id,routed_task,image_score,decision,latency_ns") != std::string::npos);
  CHECK(score.out.find("task0/defect/0,task0,") != std::string::npos);

  const Result eval = run({"evaluate", "--features", (synth_dir() / "task0_test.cadf").string(), "--bank", bank.string()});
  CHECK(eval.code == 0);
  CHECK(eval.out.find("auroc=1.000") != std::string::npos);
}

TEST_CASE("protocol with oracle routing reports zero forgetting") {
  const Result r = run({"protocol", "--manifest", (synth_dir() / "manifest.json").string(), "--routing", "oracle",
                        "--rho", "0.5", "--radius", "1"});
  REQUIRE(r.code == 0);
  CHECK(r.out.rfind("config: ", 0) == 0);
  CHECK(r.out.find("| dinosaur | 1.000 |") != std::string::npos);
  CHECK(r.out.find(" 0.000 |\n") != std::string::npos);
  CHECK(r.out.find("stage_isolation=ok") != std::string::npos);
}

TEST_CASE("usage errors exit with code 2") {
  const std::string features = (synth_dir() / "task0_train.cadf").string();
  Result r = run({"fit", "--features", features, "--rho", "0", "--out", "x.cadb"});
  CHECK(r.code == 2);
  CHECK(r.err == "error: usage: rho must be in (0,1]\n");

  r = run({"fit", "--bogus"});
  CHECK(r.code == 2);
  CHECK(r.err.rfind("error: usage: ", 0) == 0);

  r = run({"score", "--features", features, "--bank", "a.cadb", "--bank-dir", "."});
  CHECK(r.code == 2);
  CHECK(r.err == "error: usage: conflicting flags: --bank and --bank-dir\n");

  r = run({"protocol"});
  CHECK(r.code == 2);

  r = run({});
  CHECK(r.code == 2);
}

TEST_CASE("runtime errors exit with code 1") {
  const Result r = run({"inspect", "--features", "/nonexistent/file.cadf"});
  CHECK(r.code == 1);
  CHECK(r.err.rfind("error: ", 0) == 0);
}

TEST_CASE("drift-plan prints the plan") {
  const Result r = run({"drift-plan", "--track", "blur"});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("\"kernel\": 19") != std::string::npos);
  CHECK(run({"drift-plan", "--track", "fog"}).code == 2);
}
