// coalign_bench: run alignment solvers on simulated scenarios or dataset
// files and write CSV traces and summaries.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/core.h>

#include "coalign/bench.hpp"
#include "coalign/dataset_io.hpp"
#include "coalign/errors.hpp"
#include "coalign/localize.hpp"

namespace fs = std::filesystem;
using namespace coalign;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitIdentifiability = 3;
// "sec5c" is an alias kept for existing scripts.
const std::vector<std::string> kPresetNames = {"corner-anchors", "sec5c"};

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  int trials = 1;
  std::optional<double> snr;
  std::optional<int> tbar;
  std::optional<int> dim;
  std::optional<int> targets;
  std::optional<double> radius;
  std::optional<double> step;
  std::optional<bool> fixed_graph;
  std::string preset;
  int max_iters = 1000;
  double tol = 0.0;
  int restarts = 1;
  int window = 1;
  double discount = 1.0;
  double gd_step = 1e-3;
  int escape_rounds = 3;
  int threads = 0;
  bool trace = false;
  bool no_timing = false;
  std::string out;
  std::string data;
  std::string target;  // compare / generate: "two-node" or "network"
  std::vector<std::string> inputs;  // summarize
};

void add_common(CLI::App* cmd, Flags& f, bool network) {
  cmd->add_option("--config", f.config, "JSON scenario file");
  cmd->add_option("--seed", f.seed, "base seed");
  cmd->add_option("--trials", f.trials, "Monte-Carlo trials")->check(CLI::PositiveNumber);
  cmd->add_option("--snr", f.snr, "SNR in dB (inf for noiseless)");
  cmd->add_option("--tbar", f.tbar, "number of time slots");
  cmd->add_option("--dim", f.dim, "dimension, 2 or 3");
  cmd->add_option("--max-iters", f.max_iters, "iterations per solve")->check(CLI::NonNegativeNumber);
  cmd->add_option("--tol", f.tol, "relative objective tolerance (0: run all iterations)");
  cmd->add_option("--threads", f.threads, "worker threads (0: all cores)");
  cmd->add_flag("--trace", f.trace, "one CSV row per iteration");
  cmd->add_flag("--no-timing", f.no_timing, "write wall_ms as 0 for reproducible output");
  cmd->add_option("--out", f.out, "output directory");
  if (network) {
    cmd->add_option("--preset", f.preset, "scenario preset")->check(CLI::IsMember(kPresetNames));
    cmd->add_option("--targets", f.targets, "number of targets");
    cmd->add_option("--radius", f.radius, "communication radius");
    cmd->add_option("--step", f.step, "random-walk step per axis");
    cmd->add_option("--fixed-graph", f.fixed_graph, "keep the first snapshot's graph");
    cmd->add_option("--escape-rounds", f.escape_rounds, "local-minimum escape rounds");
  } else {
    cmd->add_option("--restarts", f.restarts, "PPA random starts")->check(CLI::PositiveNumber);
    cmd->add_option("--window", f.window, "RPA smoothing window")->check(CLI::PositiveNumber);
    cmd->add_option("--discount", f.discount, "RPA discount in (0, 1]");
    cmd->add_option("--gd-step", f.gd_step, "GD baseline step size");
  }
}

Scenario build_scenario(const Flags& f, bool network) {
  // Network runs default to the corner-anchor preset.
  Scenario sc = network ? Scenario::corner_anchor_network() : Scenario::two_node(20.0, 20, 1);
  if (!f.config.empty()) sc = load_scenario(f.config);
  if (f.seed) sc.seed = *f.seed;
  if (f.snr) sc.snr_db = *f.snr;
  if (f.tbar) sc.tbar = *f.tbar;
  if (f.dim) sc.dim = *f.dim;
  if (f.targets) sc.n_targets = *f.targets;
  if (f.radius) sc.comm_radius = *f.radius;
  if (f.step) sc.step = *f.step;
  if (f.fixed_graph) sc.fixed_graph = *f.fixed_graph;
  if (network && sc.anchors.empty()) throw UsageError("network scenario without anchors");
  sc.validate();
  return sc;
}

BenchOptions build_options(const Flags& f) {
  BenchOptions o;
  o.stop.max_iterations = f.max_iters;
  o.stop.relative_tolerance = f.tol;
  o.restarts = f.restarts;
  o.window = f.window;
  o.discount = f.discount;
  o.gd_step = f.gd_step;
  o.escape_rounds = f.escape_rounds;
  o.trace = f.trace;
  o.threads = f.threads;
  return o;
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw UsageError("cannot write '" + path.string() + "'");
  return out;
}

void print_summary(const std::vector<SummaryCell>& cells) {
  std::map<std::tuple<std::string, double, int>, std::map<std::string, const SummaryCell*>> rows;
  for (const auto& c : cells) rows[{c.algo, c.snr_db, c.tbar}][c.metric] = &c;
  fmt::print("{:<13} {:>7} {:>5} {:>6} {:>11} {:>11} {:>11} {:>11}\n", "algo", "snr_db", "tbar",
             "count", "mean_err_R", "med_err_R", "mean_err_T", "med_err_T");
  for (const auto& [key, m] : rows) {
    const auto* r = m.at("err_R");
    const auto* t = m.at("err_T");
    fmt::print("{:<13} {:>7.4g} {:>5} {:>6} {:>10.4f}% {:>10.4f}% {:>10.4f}% {:>10.4f}%\n",
               std::get<0>(key), std::get<1>(key), std::get<2>(key), r->count, 100 * r->mean,
               100 * r->median, 100 * t->mean, 100 * t->median);
  }
}

void print_network_stats(const RunReport& report) {
  std::vector<double> bins(6, 0.0);
  double targets = 0.0;
  double degree = 0.0;
  std::map<std::string, std::pair<double, int>> position;
  for (const auto& t : report.trials) {
    for (std::size_t b = 0; b < t.anchor_histogram.size(); ++b) {
      bins[b] += t.anchor_histogram[b];
      targets += t.anchor_histogram[b];
    }
    degree += t.average_degree;
    for (const auto& p : t.position_errors) {
      position[p.algo].first += p.error;
      position[p.algo].second += 1;
    }
  }
  const auto n = static_cast<double>(report.trials.size());
  fmt::print("\ntarget-anchor measurements per target (% of targets)\n");
  fmt::print("{:>8} {:>8} {:>8} {:>8} {:>8} {:>8}\n", "0", "1-5", "6-10", "11-15", "16-20", ">20");
  for (double b : bins) fmt::print("{:>8.1f} ", targets > 0 ? 100.0 * b / targets : 0.0);
  fmt::print("\naverage degree {:.2f}\n", degree / n);
  for (const auto& [algo, acc] : position) {
    fmt::print("{:<13} mean position error {:.4f} over {} target solves\n", algo,
               acc.first / acc.second, acc.second);
  }
  for (const auto& t : report.trials) {
    for (const auto& e : t.excluded) {
      fmt::print(stderr, "trial {}: target {} excluded ({})\n", t.trial, e.target, e.reason);
    }
  }
}

int run_simulated(const std::string& command, const std::vector<Algo>& algos, const Flags& f) {
  const bool network = is_network_algo(algos.front());
  Scenario sc = build_scenario(f, network);
  if (std::find(algos.begin(), algos.end(), Algo::kDppa) != algos.end()) sc.fixed_graph = true;
  const RunReport report = run_benchmark(command, sc, algos, build_options(f), f.trials);
  std::vector<TraceRow> rows;
  for (const auto& t : report.trials) rows.insert(rows.end(), t.rows.begin(), t.rows.end());
  const auto cells = summarize({rows});
  print_summary(cells);
  if (network) print_network_stats(report);
  if (!f.out.empty()) {
    fs::create_directories(f.out);
    auto trace = open_output(fs::path(f.out) / "trace.csv");
    write_trace_csv(trace, report, !f.no_timing);
    auto summary = open_output(fs::path(f.out) / "summary.csv");
    write_summary_csv(summary, cells);
    auto json = open_output(fs::path(f.out) / "report.json");
    json << report_json(report, !f.no_timing) << '\n';
  }
  return report.any_excluded() ? kExitIdentifiability : 0;
}

template <int Dim>
void print_pose(const std::string& label, const Pose<Dim>& pose) {
  fmt::print("{} R =", label);
  for (int r = 0; r < Dim; ++r)
    for (int c = 0; c < Dim; ++c) fmt::print(" {:.10g}", pose.rotation(r, c));
  fmt::print("  T =");
  for (int k = 0; k < Dim; ++k) fmt::print(" {:.10g}", pose.translation(k));
  fmt::print("\n");
}

/// Solves a two-node dataset file; no ground truth, so only the estimate and
/// the objective are reported.
int run_two_node_file(Algo algo, const Flags& f) {
  const auto any = load_two_node(f.data);
  std::visit(
      [&](const auto& data) {
        constexpr int Dim = std::decay_t<decltype(data.records.front().p_local)>::RowsAtCompileTime;
        if (auto warn = data.solvability_warning()) fmt::print(stderr, "warning: {}\n", *warn);
        auto rng = derive_rng(f.seed.value_or(1), 4);
        const StoppingRule stop{f.max_iters, f.tol};
        Pose<Dim> pose;
        switch (algo) {
          case Algo::kPpa:
            pose = ppa_solve_multistart(data, f.restarts, rng, stop).state.pose;
            break;
          case Algo::kRpa:
            pose = rpa_run(data, random_pose<Dim>(rng), f.window, f.discount).pose;
            break;
          default:
            pose = gd_solve(data, random_pose<Dim>(rng), f.gd_step, f.max_iters).pose;
            break;
        }
        print_pose("estimate", pose);
        fmt::print("objective {:.10g}\n", objective(pose, data));
      },
      any);
  return 0;
}

int run_network_file(Algo algo, const Flags& f) {
  const auto any = load_network(f.data);
  int code = 0;
  std::visit(
      [&](const auto& data) {
        constexpr int Dim =
            std::decay_t<decltype(data.snapshots.front().target_local.front())>::RowsAtCompileTime;
        MultiOptions mo;
        mo.method = algo == Algo::kMultiPpa     ? MultiMethod::kLeastSquares
                    : algo == Algo::kMultiJacobi ? MultiMethod::kJacobi
                                                 : MultiMethod::kDppa;
        mo.stop = {f.max_iters, f.tol};
        mo.escape_rounds = f.escape_rounds;
        auto rng = derive_rng(f.seed.value_or(1), 4);
        const auto sol = localize_network<Dim>(data, mo, rng);
        for (int i = 0; i < data.n_targets; ++i) {
          if (sol.solved[i]) print_pose("target " + std::to_string(i), sol.poses[i]);
        }
        for (int i : sol.unanchored) fmt::print(stderr, "target {} excluded (unanchored)\n", i);
        for (int i : sol.ill_posed) fmt::print(stderr, "target {} excluded (ill-posed)\n", i);
        if (!sol.run.best.trace.empty())
          fmt::print("objective {:.10g}\n", sol.run.best.trace.back());
        if (!sol.unanchored.empty() || !sol.ill_posed.empty()) code = kExitIdentifiability;
      },
      any);
  return code;
}

int run_generate(const Flags& f) {
  const bool network = f.target == "network";
  const Scenario sc = build_scenario(f, network);
  if (f.out.empty()) throw UsageError("generate needs --out");
  fs::create_directories(f.out);
  auto out = open_output(fs::path(f.out) / "dataset.txt");
  if (network) {
    if (sc.dim == 2) write_network(out, generate_network<2>(sc).first);
    else write_network(out, generate_network<3>(sc).first);
  } else {
    if (sc.dim == 2) write_two_node(out, generate_two_node<2>(sc).first);
    else write_two_node(out, generate_two_node<3>(sc).first);
  }
  auto scenario = open_output(fs::path(f.out) / "scenario.json");
  scenario << scenario_to_json(sc) << '\n';
  return 0;
}

int run_summarize(const Flags& f) {
  std::vector<std::vector<TraceRow>> reports;
  for (const auto& path : f.inputs) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open '" + path + "'", 0);
    try {
      reports.push_back(read_trace_csv(in));
    } catch (const ParseError& e) {
      throw ParseError(path + ": " + e.what(), 0);
    }
  }
  const auto cells = summarize(reports);
  print_summary(cells);
  if (!f.out.empty()) {
    fs::create_directories(f.out);
    auto out = open_output(fs::path(f.out) / "summary.csv");
    write_summary_csv(out, cells);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Range-based coordinate alignment benchmarks"};
  app.require_subcommand(1);
  Flags f;

  const std::vector<std::pair<std::string, Algo>> single = {
      {"two-node-ppa", Algo::kPpa},        {"two-node-rpa", Algo::kRpa},
      {"two-node-gd", Algo::kGd},          {"multi-ppa", Algo::kMultiPpa},
      {"multi-jacobi", Algo::kMultiJacobi}, {"dppa", Algo::kDppa}};
  std::map<CLI::App*, Algo> single_cmds;
  for (const auto& [name, algo] : single) {
    auto* cmd = app.add_subcommand(name, "run " + algo_name(algo));
    add_common(cmd, f, is_network_algo(algo));
    cmd->add_option("--data", f.data, "solve a dataset file instead of simulating");
    single_cmds[cmd] = algo;
  }
  auto* compare = app.add_subcommand("compare", "run all solvers of a problem on the same trials");
  compare->add_option("problem", f.target)->required()->check(CLI::IsMember({"two-node", "network"}));
  add_common(compare, f, false);
  compare->add_option("--preset", f.preset, "scenario preset")->check(CLI::IsMember(kPresetNames));
  compare->add_option("--targets", f.targets, "number of targets");
  compare->add_option("--radius", f.radius, "communication radius");
  compare->add_option("--step", f.step, "random-walk step per axis");
  compare->add_option("--escape-rounds", f.escape_rounds, "local-minimum escape rounds");

  auto* generate = app.add_subcommand("generate", "write a simulated dataset file");
  generate->add_option("problem", f.target)->required()->check(CLI::IsMember({"two-node", "network"}));
  add_common(generate, f, true);

  auto* summarize_cmd = app.add_subcommand("summarize", "pool trace CSV files into a summary");
  summarize_cmd->add_option("reports", f.inputs, "trace CSV files")->required();
  summarize_cmd->add_option("--out", f.out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    for (const auto& [cmd, algo] : single_cmds) {
      if (!cmd->parsed()) continue;
      if (!f.data.empty()) {
        return is_network_algo(algo) ? run_network_file(algo, f) : run_two_node_file(algo, f);
      }
      return run_simulated(cmd->get_name(), {algo}, f);
    }
    if (compare->parsed()) {
      if (f.target == "two-node") return run_simulated("compare", {Algo::kPpa, Algo::kRpa, Algo::kGd}, f);
      return run_simulated("compare", {Algo::kMultiPpa, Algo::kMultiJacobi, Algo::kDppa}, f);
    }
    if (generate->parsed()) return run_generate(f);
    if (summarize_cmd->parsed()) return run_summarize(f);
  } catch (const UsageError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitConfig;
  } catch (const ParseError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitConfig;
  } catch (const IdentifiabilityError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kExitIdentifiability;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 1;
  }
  return 0;
}
