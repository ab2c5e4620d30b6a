#include <catch_amalgamated.hpp>

#include <fstream>
#include <sstream>

#include "sparsespec/cli.hpp"

using namespace sparsespec;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "sparsespec");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Run r;
  r.code = cli::run(int(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "sparsespec_cli_test" / name;
  fs::remove_all(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(slurp(p)); }

// Small synthetic baseline shared by the prune and simulate cases.
fs::path baseline_model() {
  static const fs::path dir = [] {
    const auto d = scratch("baseline");
    const auto r = run({"train-baseline", "--synthetic", "60", "--epochs", "4", "--lr", "0.05",
                        "--batch", "10", "--domain", "spectral", "--c1", "4", "--c2", "8",
                        "--seed", "2", "--out", d.string()});
    REQUIRE(r.code == 0);
    return d;
  }();
  return dir / "model.toy";
}

fs::path pruned_kernels() {
  static const fs::path dir = [] {
    const auto d = scratch("prune");
    const auto r = run({"prune", "--model", baseline_model().string(), "--synthetic", "60",
                        "--iterations", "2", "--retrain-epochs", "1", "--batch", "10",
                        "--retrain-batch", "10", "--rho", "0.1", "--seed", "2", "--out",
                        d.string()});
    REQUIRE(r.code == 0);
    return d;
  }();
  return dir / "kernels.spk";
}

}  // namespace

TEST_CASE("usage errors exit with code 2", "[cli]") {
  CHECK(run({}).code == 2);
  CHECK(run({"frobnicate"}).code == 2);
  CHECK(run({"prune"}).code == 2);  // --model is required
  CHECK(run({"train-baseline", "--domain", "wavelet"}).code == 2);
  CHECK(run({"verify", "--threads", "0"}).code == 2);
  CHECK(run({"--help"}).code == 0);
}

TEST_CASE("verify passes on a fresh checkout and honours the tolerance flag", "[cli][verify]") {
  const auto dir = scratch("verify");
  const std::vector<std::string> quick{"--conv-cases", "8", "--sim-cases", "10",
                                       "--gradient-seeds", "1"};
  auto args = quick;
  args.insert(args.begin(), {"verify", "--out", (dir / "ok").string()});
  const auto ok = run(args);
  CHECK(ok.code == 0);
  CHECK(ok.out.find("FAIL") == std::string::npos);
  CHECK(read_json(dir / "ok" / "verify.json")["pass"] == true);

  args.push_back("--tolerance");
  args.push_back("1e-30");
  args[2] = (dir / "strict").string();
  const auto strict = run(args);
  CHECK(strict.code == 1);
  const auto report = read_json(dir / "strict" / "verify.json");
  for (const auto& c : report["checks"]) CHECK(c["tolerance"] == 1e-30);
}

TEST_CASE("verify locates the fault in a corrupted kernel file", "[cli][verify]") {
  const auto dir = scratch("corrupt");
  fs::create_directories(dir);
  auto bytes = slurp(pruned_kernels());
  bytes[27] = char(0xFF);  // high byte of the first stored index
  std::ofstream(dir / "bad.spk", std::ios::binary) << bytes;

  const auto r = run({"verify", "--kernels", (dir / "bad.spk").string(), "--conv-cases", "2",
                      "--sim-cases", "2", "--gradient-seeds", "1", "--out", dir.string()});
  CHECK(r.code == 1);
  CHECK(r.out.find("layer 0") != std::string::npos);
  CHECK(r.out.find("out of range") != std::string::npos);

  const auto good = run({"verify", "--kernels", pruned_kernels().string(), "--conv-cases", "2",
                         "--sim-cases", "2", "--gradient-seeds", "1", "--out", dir.string()});
  CHECK(good.code == 0);
}

TEST_CASE("train-baseline is deterministic and snapshots its config", "[cli][train]") {
  const auto a = scratch("train_a"), b = scratch("train_b"), c = scratch("train_c");
  const std::vector<std::string> args{"train-baseline", "--synthetic", "40", "--epochs", "2",
                                      "--c1", "3", "--c2", "4", "--seed", "9"};
  auto with_out = [&](const fs::path& d) {
    auto v = args;
    v.push_back("--out");
    v.push_back(d.string());
    return v;
  };
  REQUIRE(run(with_out(a)).code == 0);
  REQUIRE(run(with_out(b)).code == 0);
  CHECK(slurp(a / "metrics.json") == slurp(b / "metrics.json"));
  CHECK(slurp(a / "model.toy") == slurp(b / "model.toy"));
  CHECK(slurp(a / "baseline_log.csv").rfind("epoch,train_loss,test_accuracy\n", 0) == 0);

  const auto snapshot = slurp(a / "config.toml");
  CHECK(snapshot.find("train-baseline.seed") == std::string::npos);
  CHECK(snapshot.find("seed=9") != std::string::npos);
  CHECK(snapshot.find("prune.") == std::string::npos);
  REQUIRE(run({"train-baseline", "--config", (a / "config.toml").string(), "--out", c.string()})
              .code == 0);
  CHECK(slurp(c / "metrics.json") == slurp(a / "metrics.json"));
}

TEST_CASE("zero epochs on MNIST gives chance-level accuracy", "[cli][train][mnist]") {
  const auto d = scratch("zero");
  const auto r = run({"train-baseline", "--mnist", SPARSESPEC_MNIST_DIR, "--epochs", "0",
                      "--train-limit", "10", "--test-limit", "500", "--out", d.string()});
  REQUIRE(r.code == 0);
  const auto m = read_json(d / "metrics.json");
  CHECK(m["model"]["input"] == 28);
  CHECK(m["test_size"] == 500);
  const double acc = m["test"]["accuracy"];
  CHECK(acc > 0.02);
  CHECK(acc < 0.25);
}

TEST_CASE("prune emits valid exactly-k kernels and a well-formed log", "[cli][prune]") {
  const auto dir = pruned_kernels().parent_path();
  const auto layers = load_kernels(dir / "kernels.spk");
  REQUIRE(layers.size() == 2);
  for (const auto& l : layers) {
    CHECK_NOTHROW(l.validate());
    CHECK(l.k == 16);
    for (const auto& m : l.maps) CHECK(m.nnz() == 16);
  }
  const auto m = read_json(dir / "metrics.json");
  CHECK(m["valid"] == true);
  CHECK(m["admm"].size() == 2);

  std::istringstream log(slurp(dir / "admm_log.csv"));
  std::string line;
  std::getline(log, line);
  CHECK(line == "iteration,loss,w_minus_z,accuracy");
  std::size_t rows = 0;
  while (std::getline(log, line)) {
    CHECK(std::count(line.begin(), line.end(), ',') == 3);
    ++rows;
  }
  CHECK(rows == 2);
  CHECK(fs::exists(dir / "pruned_model.toy"));
  CHECK(fs::exists(dir / "config.toml"));
}

TEST_CASE("prune reports missing inputs and mismatched data", "[cli][prune][error]") {
  const auto d = scratch("prune_err");
  CHECK(run({"prune", "--model", (d / "missing.toy").string(), "--synthetic", "20", "--out",
             d.string()})
            .code == 1);
  // 8x8 model against 28x28 MNIST images
  CHECK(run({"prune", "--model", baseline_model().string(), "--mnist", SPARSESPEC_MNIST_DIR,
             "--train-limit", "5", "--test-limit", "5", "--out", d.string()})
            .code == 2);
}

TEST_CASE("simulate sweeps the grid and cross-checks the analytic cycles", "[cli][simulate]") {
  const auto d = scratch("simulate");
  const auto r = run({"simulate", "--kernels", pruned_kernels().string(), "--po", "4,8", "--r",
                      "1,2,3,4,8", "--pb", "2", "--batch", "3", "--out", d.string()});
  REQUIRE(r.code == 0);
  const auto rep = read_json(d / "report.json");
  CHECK(rep["valid"] == true);
  CHECK(rep["points"].size() == 4 + 5);  // R <= P_o only
  for (const auto& p : rep["points"]) {
    CHECK(p["cycles"] == p["analytic_cycles"]);
    CHECK(p["max_output_error"].get<double>() <= 1e-9);
    if (p["R"] == p["P_o"]) CHECK(p["lambda_utilization"] == 1.0);
  }
  CHECK(slurp(d / "sweep.csv").rfind("P_o,R,alpha,utilization,cycles\n", 0) == 0);

  CHECK(run({"simulate", "--kernels", (d / "none.spk").string(), "--out", d.string()}).code == 1);
  CHECK(run({"simulate", "--kernels", pruned_kernels().string(), "--po", "0", "--out",
             d.string()})
            .code == 2);
}

TEST_CASE("explore returns the reference optimum from the shipped table", "[cli][explore]") {
  const auto d = scratch("explore");
  const std::string table = std::string(SPARSESPEC_SOURCE_DIR) + "/configs/utilization_reference.csv";
  REQUIRE(run({"explore", "--table", table, "--out", d.string()}).code == 0);
  const auto opt = read_json(d / "optimum.json");
  CHECK(opt["P_b"] == 10);
  CHECK(opt["P_o"] == 64);
  CHECK(opt["R"] == 16);
  CHECK(opt["bram_used"].get<double>() <= 1470);
  CHECK(opt["dsp_used"].get<double>() <= 3600);
  CHECK(slurp(d / "frontier.csv").rfind(
            "P_b,P_o,R,utilization,t_sys,fps,bram_used,dsp_used,feasible\n", 0) == 0);

  CHECK(run({"explore", "--table", table, "--bram", "10", "--out", d.string()}).code == 1);
  CHECK(read_json(d / "optimum.json")["feasible"] == false);
  CHECK(run({"explore", "--table", (d / "none.csv").string(), "--out", d.string()}).code == 2);
  CHECK(run({"explore", "--table", table, "--workload", "resnet", "--out", d.string()}).code == 2);
}
