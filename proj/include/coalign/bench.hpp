#pragma once

// Monte-Carlo harness: runs solvers on simulated scenarios, records
// per-iteration objective traces and relative errors, and pools reports into
// summary tables.
//
// Trials run on worker threads; each trial derives its own seed from the
// base seed and its index, and results are stored by trial index, so the
// output does not depend on scheduling.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "coalign/simulator.hpp"
#include "coalign/two_node.hpp"

namespace coalign {

enum class Algo { kPpa, kRpa, kGd, kMultiPpa, kMultiJacobi, kDppa };

/// "ppa", "rpa", "gd", "multi-ppa", "multi-jacobi", "dppa".
std::string algo_name(Algo algo);
bool is_network_algo(Algo algo);

struct BenchOptions {
  StoppingRule stop{1000, 0.0};
  int restarts = 1;        ///< PPA starts per trial, best objective kept
  int window = 1;          ///< RPA smoothing window
  double discount = 1.0;   ///< RPA discount
  double gd_step = 1e-3;   ///< GD baseline step size
  int escape_rounds = 3;   ///< network solvers
  bool trace = false;      ///< one CSV row per iteration instead of one per solve
  int threads = 0;         ///< 0: hardware concurrency
};

/// One CSV line. err_R and err_T are NaN (empty in the CSV) on rows that are
/// not the final iterate.
struct TraceRow {
  int trial = 0;
  std::uint64_t seed = 0;
  std::string algo;
  double snr_db = 0.0;
  int tbar = 0;
  int node = 0;
  int iter = 0;
  double objective = 0.0;
  double err_R = 0.0;
  double err_T = 0.0;
  double wall_ms = 0.0;
};

struct PhaseTiming {
  std::string phase;
  double ms = 0.0;
};

struct ExcludedTarget {
  int target = 0;
  std::string reason;  ///< "unanchored" or "ill-posed"
};

struct PositionError {
  std::string algo;
  int node = 0;
  double error = 0.0;  ///< mean distance to the true global trajectory
};

struct TrialReport {
  int trial = 0;
  std::uint64_t seed = 0;
  std::vector<TraceRow> rows;
  std::vector<PhaseTiming> phases;
  std::vector<ExcludedTarget> excluded;
  /// Network trials: targets per bin of target-anchor measurement counts
  /// (0, 1-5, 6-10, 11-15, 16-20, >20), per-target position errors and the
  /// union-graph average degree.
  std::vector<int> anchor_histogram;
  std::vector<PositionError> position_errors;
  double average_degree = 0.0;
};

struct RunReport {
  std::string command;
  Scenario scenario;
  BenchOptions options;
  std::vector<Algo> algos;
  std::vector<TrialReport> trials;

  bool any_excluded() const;
};

/// Runs every algorithm of `algos` on trial `trial` of the scenario. All
/// algorithms see the same dataset and the same initial poses.
TrialReport run_trial(const Scenario& base, const std::vector<Algo>& algos,
                      const BenchOptions& options, int trial);

/// Trials 0..trials-1, concurrently.
RunReport run_benchmark(const std::string& command, const Scenario& base,
                        const std::vector<Algo>& algos, const BenchOptions& options, int trials);

/// Header plus rows, in trial order. With timing false wall_ms is written
/// as 0 so that reports are byte-for-byte reproducible.
void write_trace_csv(std::ostream& out, const RunReport& report, bool timing);
std::vector<TraceRow> read_trace_csv(std::istream& in);

/// Scenario echo, options, per-trial phase timings, exclusions and network
/// statistics as JSON.
std::string report_json(const RunReport& report, bool timing);

struct SummaryCell {
  std::string algo;
  double snr_db = 0.0;
  int tbar = 0;
  std::string metric;  ///< "err_R", "err_T" or "objective"
  std::size_t count = 0;
  double mean = 0.0;
  double median = 0.0;
  double q10 = 0.0;
  double q25 = 0.0;
  double q75 = 0.0;
  double q90 = 0.0;
};

/// Pools the final rows (those with err columns) of all reports by cell
/// (algo, snr_db, tbar). Cells come out sorted by algo, snr_db, tbar, metric.
/// Quantiles use linear interpolation between order statistics.
std::vector<SummaryCell> summarize(const std::vector<std::vector<TraceRow>>& reports);
void write_summary_csv(std::ostream& out, const std::vector<SummaryCell>& cells);

/// Linear-interpolation quantile of unsorted data; q is clamped to [0, 1]
/// and an empty input gives NaN.
double quantile(std::vector<double> values, double q);

}  // namespace coalign
