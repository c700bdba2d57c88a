#include "coalign/bench.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <istream>
#include <limits>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>
#include <tuple>

#include <json.hpp>

#include "coalign/dataset_io.hpp"
#include "coalign/errors.hpp"
#include "coalign/localize.hpp"
#include "coalign/metrics.hpp"

namespace coalign {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr std::uint64_t kInitStream = 4;
constexpr std::uint64_t kEscapeStream = 5;

const char* const kCsvHeader = "trial,seed,algo,snr_db,tbar,node,iter,objective,err_R,err_T,wall_ms";

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point since) {
  return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

/// Appends one row per trace entry (or only the last one) for a solve.
void emit_rows(TrialReport& rep, const Scenario& sc, const std::string& algo, int node,
               const std::vector<double>& trace, PoseError err, double wall_ms, bool full) {
  const int last = static_cast<int>(trace.size()) - 1;
  for (int k = full ? 0 : last; k <= last; ++k) {
    const bool final_row = k == last;
    rep.rows.push_back({rep.trial, rep.seed, algo, sc.snr_db, sc.tbar, node, k, trace[k],
                        final_row ? err.rotation : kNaN, final_row ? err.translation : kNaN,
                        wall_ms});
  }
}

template <int Dim>
void two_node_trial(TrialReport& rep, const Scenario& sc, const std::vector<Algo>& algos,
                    const BenchOptions& opt) {
  auto t0 = Clock::now();
  const auto [data, truth] = generate_two_node<Dim>(sc);
  rep.phases.push_back({"generate", elapsed_ms(t0)});
  const Pose<Dim>& true_pose = truth.poses.front();
  const Pose<Dim> init = [&] {
    auto rng = derive_rng(sc.seed, kInitStream);
    return random_pose<Dim>(rng);
  }();

  for (Algo algo : algos) {
    const std::string name = algo_name(algo);
    t0 = Clock::now();
    Pose<Dim> estimate;
    std::vector<double> trace;
    switch (algo) {
      case Algo::kPpa: {
        // The first start drawn from this stream is `init`.
        auto rng = derive_rng(sc.seed, kInitStream);
        auto res = ppa_solve_multistart(data, opt.restarts, rng, opt.stop);
        estimate = res.state.pose;
        trace = std::move(res.trace);
        break;
      }
      case Algo::kRpa: {
        std::vector<Pose<Dim>> path;
        const auto st = rpa_run(data, init, opt.window, opt.discount, &path);
        estimate = st.pose;
        trace.push_back(objective(init, data));
        if (opt.trace) {
          for (const auto& p : path) trace.push_back(objective(p, data));
        } else {
          trace.resize(path.size() + 1, 0.0);
          trace.back() = objective(estimate, data);
        }
        break;
      }
      case Algo::kGd: {
        auto res = gd_solve(data, init, opt.gd_step, opt.stop.max_iterations);
        estimate = res.pose;
        trace = std::move(res.trace);
        break;
      }
      default:
        throw UsageError(name + " is a network algorithm");
    }
    const double ms = elapsed_ms(t0);
    rep.phases.push_back({name, ms});
    emit_rows(rep, sc, name, 0, trace, pose_error(estimate, true_pose), ms, opt.trace);
  }
}

MultiMethod method_of(Algo algo) {
  switch (algo) {
    case Algo::kMultiPpa:
      return MultiMethod::kLeastSquares;
    case Algo::kMultiJacobi:
      return MultiMethod::kJacobi;
    case Algo::kDppa:
      return MultiMethod::kDppa;
    default:
      throw UsageError(algo_name(algo) + " is a two-node algorithm");
  }
}

template <int Dim>
void network_trial(TrialReport& rep, const Scenario& sc, const std::vector<Algo>& algos,
                   const BenchOptions& opt) {
  auto t0 = Clock::now();
  const auto [data, truth] = generate_network<Dim>(sc);
  rep.phases.push_back({"generate", elapsed_ms(t0)});
  rep.anchor_histogram = anchor_measurement_histogram(anchor_measurement_counts(data));
  rep.average_degree = average_degree(data);

  const bool uses_master = std::find(algos.begin(), algos.end(), Algo::kMultiPpa) != algos.end();
  const TargetSelection sel = select_targets(data, uses_master);
  for (int i : sel.unanchored) rep.excluded.push_back({i, "unanchored"});
  for (int i : sel.ill_posed) rep.excluded.push_back({i, "ill-posed"});
  std::vector<int> index;
  const NetworkDataset<Dim> sub = restrict_to_targets(data, sel.keep, &index);
  if (sub.n_targets == 0) return;
  const PoseSet<Dim> init = [&] {
    auto rng = derive_rng(sc.seed, kInitStream);
    return random_poses<Dim>(sub.n_targets, rng);
  }();

  for (Algo algo : algos) {
    const std::string name = algo_name(algo);
    MultiOptions mo;
    mo.method = method_of(algo);
    mo.stop = opt.stop;
    mo.escape_rounds = opt.escape_rounds;
    auto rng = derive_rng(sc.seed, kEscapeStream);
    t0 = Clock::now();
    const auto run = multi_solve(sub, init, mo, rng);
    const double ms = elapsed_ms(t0);
    rep.phases.push_back({name, ms});
    const auto& trace = run.best.trace;
    for (int k = 0; k < sub.n_targets; ++k) {
      const int node = index[k];
      const Pose<Dim>& est = run.best.poses[k];
      // The objective trace is network-wide; it is written once, on the first
      // target's rows.
      emit_rows(rep, sc, name, node, trace, pose_error(est, truth.poses[node]), ms,
                opt.trace && k == 0);
      std::vector<Vec<Dim>> p_local;
      p_local.reserve(sub.snapshots.size());
      for (const auto& snap : sub.snapshots) p_local.push_back(snap.target_local[k]);
      rep.position_errors.push_back(
          {name, node, mean_position_error(est, truth.poses[node], p_local)});
    }
  }
}

std::string fmt17(double v) {
  if (std::isnan(v)) return "";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double csv_double(const std::string& s, int line) {
  if (s.empty()) return kNaN;
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw ParseError("bad number '" + s + "'", line);
}

long long csv_integer(const std::string& s, int line) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw ParseError("bad integer '" + s + "'", line);
}

std::uint64_t csv_seed(const std::string& s, int line) {
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(s, &used);
    if (used == s.size() && s.front() != '-') return v;
  } catch (const std::exception&) {
  }
  throw ParseError("bad seed '" + s + "'", line);
}

}  // namespace

std::string algo_name(Algo algo) {
  switch (algo) {
    case Algo::kPpa:
      return "ppa";
    case Algo::kRpa:
      return "rpa";
    case Algo::kGd:
      return "gd";
    case Algo::kMultiPpa:
      return "multi-ppa";
    case Algo::kMultiJacobi:
      return "multi-jacobi";
    case Algo::kDppa:
      return "dppa";
  }
  return "unknown";
}

bool is_network_algo(Algo algo) {
  return algo == Algo::kMultiPpa || algo == Algo::kMultiJacobi || algo == Algo::kDppa;
}

bool RunReport::any_excluded() const {
  return std::any_of(trials.begin(), trials.end(),
                     [](const TrialReport& t) { return !t.excluded.empty(); });
}

TrialReport run_trial(const Scenario& base, const std::vector<Algo>& algos,
                      const BenchOptions& options, int trial) {
  if (algos.empty()) throw UsageError("no algorithm selected");
  const bool network = is_network_algo(algos.front());
  for (Algo a : algos) {
    if (is_network_algo(a) != network) {
      throw UsageError("two-node and network algorithms cannot share a run");
    }
  }
  if (std::find(algos.begin(), algos.end(), Algo::kDppa) != algos.end() && !base.fixed_graph) {
    throw UsageError("dppa requires a fixed graph (set fixed_graph)");
  }
  Scenario sc = base;
  sc.seed = trial_seed(base.seed, static_cast<std::uint64_t>(trial));
  TrialReport rep;
  rep.trial = trial;
  rep.seed = sc.seed;
  if (network) {
    if (sc.dim == 2) network_trial<2>(rep, sc, algos, options);
    else network_trial<3>(rep, sc, algos, options);
  } else {
    if (sc.dim == 2) two_node_trial<2>(rep, sc, algos, options);
    else two_node_trial<3>(rep, sc, algos, options);
  }
  return rep;
}

RunReport run_benchmark(const std::string& command, const Scenario& base,
                        const std::vector<Algo>& algos, const BenchOptions& options, int trials) {
  if (trials < 1) throw UsageError("trials must be >= 1");
  base.validate();
  RunReport report{command, base, options, algos, {}};
  report.trials.resize(trials);

  int threads = options.threads > 0 ? options.threads
                                    : static_cast<int>(std::thread::hardware_concurrency());
  threads = std::clamp(threads, 1, trials);
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (int k; (k = next.fetch_add(1)) < trials;) {
      try {
        report.trials[k] = run_trial(base, algos, options, k);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = trials;
      }
    }
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < threads; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);
  return report;
}

void write_trace_csv(std::ostream& out, const RunReport& report, bool timing) {
  out << kCsvHeader << '\n';
  for (const auto& trial : report.trials) {
    for (const auto& r : trial.rows) {
      out << r.trial << ',' << r.seed << ',' << r.algo << ',' << fmt17(r.snr_db) << ',' << r.tbar
          << ',' << r.node << ',' << r.iter << ',' << fmt17(r.objective) << ',' << fmt17(r.err_R)
          << ',' << fmt17(r.err_T) << ',' << (timing ? fmt17(r.wall_ms) : "0") << '\n';
    }
  }
}

std::vector<TraceRow> read_trace_csv(std::istream& in) {
  std::vector<TraceRow> rows;
  std::string line;
  int number = 0;
  if (!std::getline(in, line)) throw ParseError("empty trace file", 0);
  ++number;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kCsvHeader) throw ParseError("unexpected CSV header", number);
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 11) throw ParseError("expected 11 columns", number);
    TraceRow r;
    r.trial = static_cast<int>(csv_integer(f[0], number));
    r.seed = csv_seed(f[1], number);
    r.algo = f[2];
    r.snr_db = csv_double(f[3], number);
    r.tbar = static_cast<int>(csv_integer(f[4], number));
    r.node = static_cast<int>(csv_integer(f[5], number));
    r.iter = static_cast<int>(csv_integer(f[6], number));
    r.objective = csv_double(f[7], number);
    r.err_R = csv_double(f[8], number);
    r.err_T = csv_double(f[9], number);
    r.wall_ms = csv_double(f[10], number);
    rows.push_back(std::move(r));
  }
  return rows;
}

std::string report_json(const RunReport& report, bool timing) {
  using nlohmann::json;
  json trials = json::array();
  for (const auto& t : report.trials) {
    json jt = {{"trial", t.trial}, {"seed", t.seed}};
    json phases = json::array();
    for (const auto& p : t.phases) phases.push_back({{"phase", p.phase}, {"ms", timing ? p.ms : 0.0}});
    jt["phases"] = phases;
    json excluded = json::array();
    for (const auto& e : t.excluded) excluded.push_back({{"target", e.target}, {"reason", e.reason}});
    jt["excluded"] = excluded;
    if (!t.anchor_histogram.empty()) {
      jt["anchor_histogram"] = t.anchor_histogram;
      jt["average_degree"] = t.average_degree;
      json pos = json::array();
      for (const auto& p : t.position_errors)
        pos.push_back({{"algo", p.algo}, {"node", p.node}, {"error", p.error}});
      jt["position_errors"] = pos;
    }
    trials.push_back(jt);
  }
  json algos = json::array();
  for (Algo a : report.algos) algos.push_back(algo_name(a));
  const auto& o = report.options;
  const json j = {{"command", report.command},
                  {"scenario", json::parse(scenario_to_json(report.scenario))},
                  {"algorithms", algos},
                  {"options",
                   {{"max_iterations", o.stop.max_iterations},
                    {"relative_tolerance", o.stop.relative_tolerance},
                    {"restarts", o.restarts},
                    {"window", o.window},
                    {"discount", o.discount},
                    {"gd_step", o.gd_step},
                    {"escape_rounds", o.escape_rounds},
                    {"trace", o.trace}}},
                  {"trials", trials}};
  return j.dump(2);
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) return kNaN;
  std::sort(values.begin(), values.end());
  const double pos = std::clamp(q, 0.0, 1.0) * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

std::vector<SummaryCell> summarize(const std::vector<std::vector<TraceRow>>& reports) {
  using Key = std::tuple<std::string, double, int>;
  std::map<Key, std::map<std::string, std::vector<double>>> pooled;
  for (const auto& rows : reports) {
    for (const auto& r : rows) {
      if (std::isnan(r.err_R) || std::isnan(r.err_T)) continue;
      auto& cell = pooled[{r.algo, r.snr_db, r.tbar}];
      cell["err_R"].push_back(r.err_R);
      cell["err_T"].push_back(r.err_T);
      cell["objective"].push_back(r.objective);
    }
  }
  std::vector<SummaryCell> cells;
  for (const auto& [key, metrics] : pooled) {
    for (const auto& [metric, values] : metrics) {
      SummaryCell c;
      std::tie(c.algo, c.snr_db, c.tbar) = key;
      c.metric = metric;
      c.count = values.size();
      double sum = 0.0;
      for (double v : values) sum += v;
      c.mean = sum / static_cast<double>(values.size());
      c.median = quantile(values, 0.5);
      c.q10 = quantile(values, 0.1);
      c.q25 = quantile(values, 0.25);
      c.q75 = quantile(values, 0.75);
      c.q90 = quantile(values, 0.9);
      cells.push_back(std::move(c));
    }
  }
  return cells;
}

void write_summary_csv(std::ostream& out, const std::vector<SummaryCell>& cells) {
  out << "algo,snr_db,tbar,metric,count,mean,median,q10,q25,q75,q90\n";
  for (const auto& c : cells) {
    out << c.algo << ',' << fmt17(c.snr_db) << ',' << c.tbar << ',' << c.metric << ',' << c.count
        << ',' << fmt17(c.mean) << ',' << fmt17(c.median) << ',' << fmt17(c.q10) << ','
        << fmt17(c.q25) << ',' << fmt17(c.q75) << ',' << fmt17(c.q90) << '\n';
  }
}

}  // namespace coalign
