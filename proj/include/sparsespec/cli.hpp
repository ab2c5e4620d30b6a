#pragma once

// Command-line front end: argument/config parsing, dataset ingestion and
// report emission for the train-baseline, prune, simulate, explore and
// verify subcommands. `run` returns the process exit code:
//   0 success, 1 validation or verification failure, 2 usage/config error.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "sparsespec/accel_sim.hpp"
#include "sparsespec/admm/params_io.hpp"
#include "sparsespec/admm/pruner.hpp"
#include "sparsespec/dse.hpp"
#include "sparsespec/mnist.hpp"
#include "sparsespec/serialize.hpp"
#include "sparsespec/verify.hpp"
#include "sparsespec/workloads.hpp"

#ifndef SPARSESPEC_MNIST_DIR
#define SPARSESPEC_MNIST_DIR "data/mnist-1k"
#endif

namespace sparsespec::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

enum ExitCode : int { kSuccess = 0, kFailure = 1, kUsage = 2 };

struct GlobalOptions {
  std::uint64_t seed = 1;
  std::string out = "out";
  unsigned threads = 1;
};

struct DataOptions {
  std::string mnist_dir = SPARSESPEC_MNIST_DIR;
  std::size_t synthetic = 0;  // > 0: use this many synthetic 8x8 training images instead
  std::size_t train_limit = 0;
  std::size_t test_limit = 0;
};

struct TrainOptions {
  DataOptions data;
  std::size_t epochs = 20;
  double lr = 0.01;
  double gamma = 0.8;
  std::size_t decay_every = 20;
  std::size_t batch = 32;
  std::string domain = "spatial";
  std::size_t c1 = 8, c2 = 16, n = 8;
};

struct PruneOptions {
  DataOptions data;
  std::string model;
  admm::AdmmOptions admm;
};

struct SimulateOptions {
  std::string kernels;
  std::vector<std::size_t> P_o{4, 8, 16};
  std::vector<std::size_t> R{1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16};
  std::size_t P_b = 1;
  std::size_t batch = 1;
};

struct ExploreCliOptions {
  std::string table;
  PlatformSpec platform;
  std::string workload = "vgg16";
  std::size_t n = 8;
  double alpha = 4.0;
  ExploreOptions explore;
};

struct VerifyCliOptions {
  std::optional<double> tolerance;
  std::vector<std::string> kernels;
  std::size_t conv_cases = 50;
  std::size_t sim_cases = 100;
  std::size_t gradient_seeds = 3;
};

namespace detail {

inline std::pair<Dataset, Dataset> load_data(const DataOptions& d, std::uint64_t seed) {
  std::pair<Dataset, Dataset> sets;
  if (d.synthetic > 0) {
    sets = {synthetic_dataset(d.synthetic, 8, seed), synthetic_dataset(d.synthetic, 8, seed + 1)};
  } else {
    sets = load_mnist(d.mnist_dir);
    sets.first.standardize(kMnistMean, kMnistStd);
    sets.second.standardize(kMnistMean, kMnistStd);
  }
  if (d.train_limit) sets.first = sets.first.head(d.train_limit);
  if (d.test_limit) sets.second = sets.second.head(d.test_limit);
  sparsespec::detail::require<FormatError>(sets.first.size() > 0 && sets.second.size() > 0,
                                           "dataset: no images loaded");
  return sets;
}

inline void add_data_options(CLI::App* cmd, DataOptions& d) {
  cmd->add_option("--mnist", d.mnist_dir, "Directory holding the four MNIST IDX files")
      ->capture_default_str();
  cmd->add_option("--synthetic", d.synthetic, "Use N synthetic 8x8 images instead of MNIST")
      ->capture_default_str();
  cmd->add_option("--train-limit", d.train_limit, "Keep only the first N training images (0 = all)")
      ->capture_default_str();
  cmd->add_option("--test-limit", d.test_limit, "Keep only the first N test images (0 = all)")
      ->capture_default_str();
}

inline void add_sgd_options(CLI::App* cmd, admm::SgdOptions& o, const std::string& prefix) {
  cmd->add_option("--" + prefix + "lr", o.lr, "Initial learning rate")->capture_default_str();
  cmd->add_option("--" + prefix + "gamma", o.gamma, "Learning-rate decay factor")
      ->capture_default_str();
  cmd->add_option("--" + prefix + "decay-every", o.decay_every, "Epochs between decays")
      ->capture_default_str();
  cmd->add_option("--" + prefix + "batch", o.batch, "Minibatch size")->capture_default_str();
}

inline std::ofstream open_out(const fs::path& path) {
  std::ofstream f(path);
  sparsespec::detail::require<Error>(bool(f), "cannot write " + path.string());
  f.precision(17);
  return f;
}

inline void write_json(const fs::path& path, const json& j) { open_out(path) << j.dump(2) << '\n'; }

inline json evaluation_json(const admm::Evaluation& e) {
  return {{"loss", e.loss}, {"accuracy", e.accuracy}};
}

inline json spec_json(const admm::ToyModelSpec& s) {
  return {{"input", s.input}, {"c1", s.c1},       {"c2", s.c2},
          {"h_krn", s.h_krn}, {"n", s.n},         {"classes", s.classes}};
}

inline WorkloadSpec workload_by_name(const std::string& name, std::size_t n, double alpha) {
  sparsespec::detail::require<ConfigError>(name == "vgg16", "unknown workload '" + name + "'");
  return vgg16_workload(n, alpha);
}

// Resolved options of the root and of the subcommand that ran, in the
// format --config reads back.
inline void write_config_snapshot(const fs::path& path, const CLI::App& app) {
  const std::string used = app.get_subcommands().front()->get_name();
  std::istringstream all(app.config_to_str(true, false));
  auto f = open_out(path);
  for (std::string line; std::getline(all, line);) {
    const auto key = line.substr(0, line.find('='));
    const auto dot = key.find('.');
    if (dot == std::string::npos || key.substr(0, dot) == used) f << line << '\n';
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

inline int cmd_train_baseline(const GlobalOptions& g, const TrainOptions& o, std::ostream& log) {
  using namespace admm;
  sparsespec::detail::require<ConfigError>(o.domain == "spatial" || o.domain == "spectral",
                                           "--domain must be spatial or spectral");
  const auto [train, test] = detail::load_data(o.data, g.seed);
  ToyModelSpec s{.input = train.h, .c1 = o.c1, .c2 = o.c2, .h_krn = 5, .n = o.n};
  s.validate();
  SgdOptions sgd{.lr = o.lr, .gamma = o.gamma, .decay_every = o.decay_every, .batch = o.batch,
                 .threads = g.threads};
  std::mt19937_64 rng(g.seed);
  auto p = init_params(s, rng);
  const auto domain = o.domain == "spatial" ? KernelDomain::spatial : KernelDomain::spectral;
  const auto epochs = train_baseline(s, p, train, test, sgd, o.epochs, domain, rng);
  for (const auto& e : epochs)
    log << "epoch " << e.epoch << "  loss " << e.train_loss << "  test acc " << e.test_accuracy
        << '\n';

  const fs::path out = g.out;
  save_params(out / "model.toy", s, p);
  auto csv = detail::open_out(out / "baseline_log.csv");
  csv << "epoch,train_loss,test_accuracy\n";
  for (const auto& e : epochs) csv << e.epoch << ',' << e.train_loss << ',' << e.test_accuracy << '\n';
  const auto test_eval = evaluate(s, p, test, g.threads);
  detail::write_json(out / "metrics.json",
                     {{"command", "train-baseline"},
                      {"model", detail::spec_json(s)},
                      {"train_size", train.size()},
                      {"test_size", test.size()},
                      {"epochs", o.epochs},
                      {"final_train_loss", epochs.empty() ? json(nullptr) : json(epochs.back().train_loss)},
                      {"train", detail::evaluation_json(evaluate(s, p, train, g.threads))},
                      {"test", detail::evaluation_json(test_eval)}});
  log << "test accuracy " << test_eval.accuracy << '\n';
  return kSuccess;
}

inline int cmd_prune(const GlobalOptions& g, PruneOptions o, std::ostream& log) {
  using namespace admm;
  auto [s, baseline] = load_params(o.model);
  const auto [train, test] = detail::load_data(o.data, g.seed);
  sparsespec::detail::require<ConfigError>(train.h == s.input,
                                           "prune: model expects " + std::to_string(s.input) +
                                               "x" + std::to_string(s.input) + " inputs, data has " +
                                               std::to_string(train.h));
  o.admm.sgd.threads = o.admm.retrain_sgd.threads = g.threads;
  std::mt19937_64 rng(g.seed);
  const auto res = run_pruning(s, baseline, train, test, o.admm, rng, [&](const AdmmLogRow& r) {
    log << "admm " << r.iteration << "  loss " << r.loss << "  |W-Z| " << r.w_minus_z << "  acc "
        << r.accuracy << "  nnz " << r.z_nnz_min << ".." << r.z_nnz_max << '\n';
  });

  const fs::path out = g.out;
  save_kernels(out / "kernels.spk", res.kernels);
  save_params(out / "pruned_model.toy", s, res.params);
  {
    auto csv = detail::open_out(out / "admm_log.csv");
    write_admm_log_csv(csv, res.admm_log);
    auto rcsv = detail::open_out(out / "retrain_log.csv");
    rcsv << "epoch,train_loss,test_accuracy\n";
    for (const auto& e : res.retrain_log)
      rcsv << e.epoch << ',' << e.train_loss << ',' << e.test_accuracy << '\n';
  }

  // The emitted file must round-trip and hold exactly k entries per map.
  const std::size_t k = nonzeros_per_map(s.n, o.admm.alpha);
  std::string problem;
  try {
    for (const auto& set : load_kernels(out / "kernels.spk"))
      if (set.k != k) problem = "kernel file holds " + std::to_string(set.k) + " entries per map";
  } catch (const FormatError& e) {
    problem = e.what();
  }
  for (const auto& r : res.admm_log)
    if (problem.empty() && (r.z_nnz_min != k || r.z_nnz_max != k))
      problem = "Z maps at iteration " + std::to_string(r.iteration) + " do not hold k entries";

  json iters = json::array();
  for (const auto& r : res.admm_log)
    iters.push_back({{"iteration", r.iteration}, {"loss", r.loss}, {"w_minus_z", r.w_minus_z},
                     {"accuracy", r.accuracy}, {"z_nnz_min", r.z_nnz_min}, {"z_nnz_max", r.z_nnz_max}});
  detail::write_json(out / "metrics.json",
                     {{"command", "prune"},
                      {"model", detail::spec_json(s)},
                      {"alpha", o.admm.alpha},
                      {"k", k},
                      {"baseline_accuracy", res.baseline_accuracy},
                      {"admm_accuracy", res.admm_accuracy},
                      {"pruned_accuracy", res.pruned_accuracy},
                      {"retrained_accuracy", res.retrained_accuracy},
                      {"near_zero_baseline", res.near_zero_baseline},
                      {"near_zero_admm", res.near_zero_admm},
                      {"admm", iters},
                      {"valid", problem.empty()},
                      {"problem", problem}});
  log << "baseline " << res.baseline_accuracy << "  pruned " << res.pruned_accuracy
      << "  retrained " << res.retrained_accuracy << '\n';
  if (!problem.empty()) {
    log << "validation failed: " << problem << '\n';
    return kFailure;
  }
  return kSuccess;
}

inline int cmd_simulate(const GlobalOptions& g, SimulateOptions o, std::ostream& log) {
  using sparsespec::detail::require;
  const auto positive = [](const std::vector<std::size_t>& v) {
    return !v.empty() && std::ranges::all_of(v, [](std::size_t x) { return x >= 1; });
  };
  require<ConfigError>(positive(o.P_o) && positive(o.R) && o.P_b >= 1 && o.batch >= 1,
                       "simulate: --po, --r, --pb and --batch must be >= 1");
  for (auto* v : {&o.P_o, &o.R}) {
    std::ranges::sort(*v);
    v->erase(std::unique(v->begin(), v->end()), v->end());
  }
  const auto layers = load_kernels(o.kernels);
  require<FormatError>(!layers.empty(), o.kernels + ": no kernel layers");
  const auto rows = utilization_sweep(layers, o.P_o, o.R);
  std::mt19937_64 rng(g.seed);
  std::normal_distribution<double> gauss;

  json points = json::array();
  std::vector<std::string> problems;
  for (std::size_t P_o : o.P_o) {
    double previous = 0.0;
    for (const auto& row : rows) {
      if (row.P_o != P_o) continue;
      SimReport total;
      std::uint64_t analytic = 0;
      double worst = 0.0;
      for (const auto& set : layers) {
        const SimConfig cfg{.P_b = o.P_b, .P_o = P_o, .R = row.R,
                            .c = std::max(set.c_out, set.c_in), .n = set.n, .b = o.batch};
        ComplexTensor act(o.batch, set.c_in, set.n, set.n);
        for (auto& v : act.data()) v = {gauss(rng), gauss(rng)};
        const auto rep = simulate_tile(schedule_kernel_tile(set, P_o, row.R), act, cfg);
        worst = std::max(worst, relative_error(rep.outputs, dense_hadamard_reference(set, act)));
        analytic += lambda_stats(set, P_o, row.R).total_rows * ((o.batch + o.P_b - 1) / o.P_b);
        total.accumulate(rep);
      }
      const std::string at = "(P_o=" + std::to_string(P_o) + ", R=" + std::to_string(row.R) + ")";
      if (total.cycles != analytic) problems.push_back(at + ": cycles differ from lambda_stats");
      if (worst > 1e-9) problems.push_back(at + ": outputs differ from the dense reference");
      if (row.utilization + 1e-12 < previous) problems.push_back(at + ": utilization fell as R grew");
      if (row.R == P_o && row.utilization != 1.0) problems.push_back(at + ": R = P_o below 100%");
      previous = row.utilization;
      points.push_back({{"P_o", P_o},
                        {"R", row.R},
                        {"P_b", o.P_b},
                        {"batch", o.batch},
                        {"cycles", total.cycles},
                        {"analytic_cycles", analytic},
                        {"useful_macs", total.useful_macs},
                        {"issued_macs", total.issued_macs},
                        {"bank_reads", total.bank_reads},
                        {"utilization", total.utilization()},
                        {"lambda_utilization", total.lambda_utilization()},
                        {"max_output_error", worst}});
      log << "P_o " << P_o << "  R " << row.R << "  util " << row.utilization << "  cycles "
          << total.cycles << '\n';
    }
  }

  const fs::path out = g.out;
  auto csv = detail::open_out(out / "sweep.csv");
  write_sweep_csv(csv, rows);
  detail::write_json(out / "report.json", {{"command", "simulate"},
                                           {"kernels", o.kernels},
                                           {"layers", layers.size()},
                                           {"alpha", layers.front().alpha()},
                                           {"points", points},
                                           {"valid", problems.empty()},
                                           {"problems", problems}});
  for (const auto& p : problems) log << "validation failed: " << p << '\n';
  return problems.empty() ? kSuccess : kFailure;
}

inline int cmd_explore(const GlobalOptions& g, const ExploreCliOptions& o, std::ostream& log) {
  std::ifstream in(o.table);
  sparsespec::detail::require<ConfigError>(bool(in), "cannot open utilization table " + o.table);
  const auto table = UtilizationTable::from_csv(in);
  const auto wl = detail::workload_by_name(o.workload, o.n, o.alpha);
  const fs::path out = g.out;
  ExploreResult res;
  try {
    res = explore(o.platform, wl, table, o.explore);
  } catch (const InfeasibleError& e) {
    detail::write_json(out / "optimum.json", {{"command", "explore"}, {"feasible", false},
                                              {"error", e.what()}});
    throw;
  }
  auto csv = detail::open_out(out / "frontier.csv");
  write_frontier_csv(csv, res.frontier, wl);
  const auto& b = res.best;
  const std::size_t k = wl.nonzeros();
  detail::write_json(out / "optimum.json",
                     {{"command", "explore"},
                      {"feasible", true},
                      {"P_b", b.P_b},
                      {"P_o", b.P_o},
                      {"R", b.R},
                      {"utilization", b.utilization()},
                      {"t_sys", b.t_sys},
                      {"fps", fps(b, o.platform, wl)},
                      {"dsp_used", b.dsp_used},
                      {"bram_used", b.bram_used},
                      {"bw_words_per_cycle", b.bw_required},
                      {"bw_bytes_per_s", bandwidth_bytes_per_s(b, o.platform, wl.n, k)},
                      {"candidates", res.frontier.size()}});
  log << "optimum P_b=" << b.P_b << " P_o=" << b.P_o << " R=" << b.R << "  fps "
      << fps(b, o.platform, wl) << "  BRAM " << b.bram_used << "  DSP " << b.dsp_used << '\n';
  return kSuccess;
}

inline int cmd_verify(const GlobalOptions& g, const VerifyCliOptions& o, std::ostream& log) {
  const verify::VerifyOptions v{.seed = g.seed, .tolerance = o.tolerance,
                                .conv_cases = o.conv_cases, .sim_cases = o.sim_cases,
                                .gradient_seeds = o.gradient_seeds, .threads = g.threads};
  std::vector<verify::CheckResult> results{verify::check_convolution(v), verify::check_simulator(v),
                                           verify::check_projection(v), verify::check_gradients(v)};
  for (const auto& k : o.kernels) results.push_back(verify::check_kernel_file(k, v));
  verify::print_table(log, results);

  bool ok = true;
  json checks = json::array();
  for (const auto& r : results) {
    ok = ok && r.pass;
    checks.push_back({{"name", r.name}, {"cases", r.cases},
                      {"worst", std::isfinite(r.worst) ? json(r.worst) : json("inf")},
                      {"tolerance", r.tolerance}, {"pass", r.pass}, {"cause", r.detail}});
  }
  detail::write_json(fs::path(g.out) / "verify.json",
                     {{"command", "verify"}, {"pass", ok}, {"checks", checks}});
  return ok ? kSuccess : kFailure;
}

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  CLI::App app{"Sparse spectral CNN training, accelerator simulation and design-space exploration"};
  app.name("sparsespec");
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "Read options from a TOML/INI file");

  GlobalOptions g;
  app.add_option("--seed", g.seed, "Random seed")->capture_default_str();
  app.add_option("--out", g.out, "Output directory")->capture_default_str();
  app.add_option("--threads", g.threads, "Worker threads for per-example work")
      ->capture_default_str()
      ->check(CLI::Range(1u, 256u));

  TrainOptions train;
  auto* tb = app.add_subcommand("train-baseline", "Train the dense toy model");
  detail::add_data_options(tb, train.data);
  tb->add_option("--epochs", train.epochs, "Training epochs")->capture_default_str();
  tb->add_option("--lr", train.lr, "Initial learning rate")->capture_default_str();
  tb->add_option("--gamma", train.gamma, "Learning-rate decay factor")->capture_default_str();
  tb->add_option("--decay-every", train.decay_every, "Epochs between decays")->capture_default_str();
  tb->add_option("--batch", train.batch, "Minibatch size")->capture_default_str();
  tb->add_option("--domain", train.domain, "Kernel parameterisation during training")
      ->capture_default_str()
      ->check(CLI::IsMember({"spatial", "spectral"}));
  tb->add_option("--c1", train.c1, "First convolution channels")->capture_default_str();
  tb->add_option("--c2", train.c2, "Second convolution channels")->capture_default_str();
  tb->add_option("--n", train.n, "FFT size")->capture_default_str();

  PruneOptions prune;
  auto* pr = app.add_subcommand("prune", "ADMM-prune a trained model in the spectral domain");
  detail::add_data_options(pr, prune.data);
  pr->add_option("--model", prune.model, "Baseline model file")->required();
  pr->add_option("--alpha", prune.admm.alpha, "Pruning rate")->capture_default_str();
  pr->add_option("--rho", prune.admm.rho, "Penalty weight")->capture_default_str();
  pr->add_option("--rho-multiplier", prune.admm.rho_multiplier, "Per-iteration rho factor")
      ->capture_default_str();
  pr->add_option("--iterations", prune.admm.iterations, "ADMM iterations")->capture_default_str();
  pr->add_option("--epochs-per-update", prune.admm.epochs_per_update, "Epochs per W update")
      ->capture_default_str();
  pr->add_option("--early-stop", prune.admm.early_stop, "Stop a W update when the loss moves less")
      ->capture_default_str();
  pr->add_option("--retrain-epochs", prune.admm.retrain_epochs, "Masked retraining epochs")
      ->capture_default_str();
  detail::add_sgd_options(pr, prune.admm.sgd, "");
  detail::add_sgd_options(pr, prune.admm.retrain_sgd, "retrain-");

  SimulateOptions sim;
  auto* si = app.add_subcommand("simulate", "Replay pruned kernels on the Hadamard engine model");
  si->add_option("--kernels", sim.kernels, "Kernel file")->required();
  si->add_option("--po", sim.P_o, "Multipliers per group")->capture_default_str()->delimiter(',');
  si->add_option("--r", sim.R, "Replica counts")->capture_default_str()->delimiter(',');
  si->add_option("--pb", sim.P_b, "Batch lanes")->capture_default_str();
  si->add_option("--batch", sim.batch, "Images per tile")->capture_default_str();

  ExploreCliOptions ex;
  auto* ep = app.add_subcommand("explore", "Search (P_b, P_o, R) under resource limits");
  ep->add_option("--table", ex.table, "Utilization table CSV (P_o,R,alpha,utilization)")->required();
  ep->add_option("--dsp", ex.platform.S_DSP, "DSP budget")->capture_default_str();
  ep->add_option("--bram", ex.platform.S_BRAM, "BRAM budget")->capture_default_str();
  ep->add_option("--bw", ex.platform.S_BW, "Off-chip words per cycle (0 = unbounded)")
      ->capture_default_str();
  ep->add_option("--freq", ex.platform.F, "Clock in Hz")->capture_default_str();
  ep->add_option("--bytes-per-word", ex.platform.bytes_per_word, "Bytes per streamed word")
      ->capture_default_str();
  ep->add_option("--workload", ex.workload, "Network descriptor")->capture_default_str();
  ep->add_option("--n", ex.n, "FFT size")->capture_default_str();
  ep->add_option("--alpha", ex.alpha, "Pruning rate")->capture_default_str();
  ep->add_option("--pb", ex.explore.P_b, "Batch-lane candidates")->capture_default_str()->delimiter(',');
  ep->add_option("--po", ex.explore.P_o, "P_o candidates (default powers of two)")->delimiter(',');
  ep->add_option("--channel-tile", ex.explore.channel_tile, "Channel tile c (0 = P_o)")
      ->capture_default_str();

  VerifyCliOptions ver;
  auto* ve = app.add_subcommand("verify", "Run the oracle-equivalence checks");
  ve->add_option("--tolerance", ver.tolerance, "Override every check's tolerance");
  ve->add_option("--kernels", ver.kernels, "Kernel files to validate and replay");
  ve->add_option("--conv-cases", ver.conv_cases, "Random convolution configurations")
      ->capture_default_str();
  ve->add_option("--sim-cases", ver.sim_cases, "Random simulator cases")->capture_default_str();
  ve->add_option("--gradient-seeds", ver.gradient_seeds, "Finite-difference seeds")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kSuccess : kUsage;
  }

  try {
    fs::create_directories(g.out);
    detail::write_config_snapshot(fs::path(g.out) / "config.toml", app);
    if (*tb) return cmd_train_baseline(g, train, out);
    if (*pr) return cmd_prune(g, prune, out);
    if (*si) return cmd_simulate(g, sim, out);
    if (*ep) return cmd_explore(g, ex, out);
    return cmd_verify(g, ver, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kFailure;
  }
}

}  // namespace sparsespec::cli
