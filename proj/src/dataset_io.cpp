#include "coalign/dataset_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <vector>

#include <json.hpp>

#include "coalign/errors.hpp"

namespace coalign {

namespace {

struct Line {
  int number = 0;
  std::vector<std::string> tokens;
};

std::vector<Line> tokenize(std::istream& in) {
  std::vector<Line> lines;
  std::string text;
  int number = 0;
  while (std::getline(in, text)) {
    ++number;
    if (const auto hash = text.find('#'); hash != std::string::npos) text.erase(hash);
    std::istringstream ss(text);
    Line line{number, {}};
    for (std::string tok; ss >> tok;) line.tokens.push_back(tok);
    if (!line.tokens.empty()) lines.push_back(std::move(line));
  }
  return lines;
}

double to_double(const std::string& tok, int line) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(tok, &used);
  } catch (const std::exception&) {
    throw ParseError("expected a number, got '" + tok + "'", line);
  }
  if (used != tok.size()) throw ParseError("expected a number, got '" + tok + "'", line);
  return v;
}

int to_int(const std::string& tok, int line) {
  std::size_t used = 0;
  long v = 0;
  try {
    v = std::stol(tok, &used);
  } catch (const std::exception&) {
    throw ParseError("expected an integer, got '" + tok + "'", line);
  }
  if (used != tok.size() || v < std::numeric_limits<int>::min() ||
      v > std::numeric_limits<int>::max()) {
    throw ParseError("expected an integer, got '" + tok + "'", line);
  }
  return static_cast<int>(v);
}

void expect_fields(const Line& line, std::size_t count, const std::string& what) {
  if (line.tokens.size() != count) {
    throw ParseError(what + " needs " + std::to_string(count) + " fields, got " +
                         std::to_string(line.tokens.size()),
                     line.number);
  }
}

int header_value(const std::vector<Line>& lines, std::size_t index, const std::string& key) {
  if (index >= lines.size()) throw ParseError("missing '" + key + "' header", 0);
  const Line& line = lines[index];
  if (line.tokens.front() != key) {
    throw ParseError("expected '" + key + "', got '" + line.tokens.front() + "'", line.number);
  }
  expect_fields(line, 2, "'" + key + "'");
  return to_int(line.tokens[1], line.number);
}

int read_dim(const std::vector<Line>& lines) {
  const int dim = header_value(lines, 0, "dim");
  if (dim != 2 && dim != 3) throw ParseError("dimension must be 2 or 3", lines[0].number);
  return dim;
}

template <int Dim>
Vec<Dim> read_vec(const Line& line, std::size_t first) {
  Vec<Dim> v;
  for (int k = 0; k < Dim; ++k) v(k) = to_double(line.tokens[first + k], line.number);
  return v;
}

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <int Dim>
std::string fmt_vec(const Vec<Dim>& v) {
  std::string s;
  for (int k = 0; k < Dim; ++k) s += " " + fmt17(v(k));
  return s;
}

template <int Dim>
TwoNodeDataset<Dim> parse_two_node(const std::vector<Line>& lines) {
  TwoNodeDataset<Dim> data;
  for (std::size_t k = 1; k < lines.size(); ++k) {
    const Line& line = lines[k];
    expect_fields(line, 2 + 2 * Dim, "record");
    MeasurementRecord<Dim> rec;
    rec.t = to_int(line.tokens[0], line.number);
    rec.p_local = read_vec<Dim>(line, 1);
    rec.p_anchor = read_vec<Dim>(line, 1 + Dim);
    rec.range = to_double(line.tokens[1 + 2 * Dim], line.number);
    data.records.push_back(rec);
  }
  try {
    data.validate();
  } catch (const UsageError& e) {
    throw ParseError(e.what(), 0);
  }
  return data;
}

template <int Dim>
NetworkDataset<Dim> parse_network(const std::vector<Line>& lines) {
  NetworkDataset<Dim> data;
  data.n_targets = header_value(lines, 1, "targets");
  data.n_anchors = header_value(lines, 2, "anchors");
  if (data.n_targets < 1) throw ParseError("need at least one target", lines[1].number);
  if (data.n_anchors < 0) throw ParseError("negative anchor count", lines[2].number);

  std::vector<bool> target_seen;
  std::vector<bool> anchor_seen;
  int snapshot_line = 0;
  auto close_snapshot = [&]() {
    if (data.snapshots.empty()) return;
    for (bool seen : target_seen)
      if (!seen) throw ParseError("snapshot is missing a target position", snapshot_line);
    for (bool seen : anchor_seen)
      if (!seen) throw ParseError("snapshot is missing an anchor position", snapshot_line);
  };

  for (std::size_t k = 3; k < lines.size(); ++k) {
    const Line& line = lines[k];
    const std::string& kind = line.tokens.front();
    if (kind == "t") {
      expect_fields(line, 2, "'t'");
      close_snapshot();
      NetworkSnapshot<Dim> snap;
      snap.t = to_int(line.tokens[1], line.number);
      snap.target_local.assign(data.n_targets, Vec<Dim>::Zero());
      snap.anchor_global.assign(data.n_anchors, Vec<Dim>::Zero());
      data.snapshots.push_back(std::move(snap));
      target_seen.assign(data.n_targets, false);
      anchor_seen.assign(data.n_anchors, false);
      snapshot_line = line.number;
      continue;
    }
    if (data.snapshots.empty()) throw ParseError("'" + kind + "' before the first 't'", line.number);
    auto& snap = data.snapshots.back();
    if (kind == "target" || kind == "anchor") {
      expect_fields(line, 2 + Dim, "'" + kind + "'");
      const int idx = to_int(line.tokens[1], line.number);
      const bool target = kind == "target";
      auto& seen = target ? target_seen : anchor_seen;
      if (idx < 0 || idx >= static_cast<int>(seen.size())) {
        throw ParseError(kind + " index out of range", line.number);
      }
      if (seen[idx]) throw ParseError("duplicate " + kind + " position", line.number);
      seen[idx] = true;
      (target ? snap.target_local : snap.anchor_global)[idx] = read_vec<Dim>(line, 2);
    } else if (kind == "tt" || kind == "ta") {
      expect_fields(line, 4, "'" + kind + "'");
      const int i = to_int(line.tokens[1], line.number);
      const int j = to_int(line.tokens[2], line.number);
      const int j_count = kind == "tt" ? data.n_targets : data.n_anchors;
      if (i < 0 || i >= data.n_targets || j < 0 || j >= j_count) {
        throw ParseError(kind + " edge index out of range", line.number);
      }
      const double range = to_double(line.tokens[3], line.number);
      if (kind == "tt") snap.tt_edges.push_back({i, j, range});
      else snap.ta_edges.push_back({i, j, range});
    } else {
      throw ParseError("unknown keyword '" + kind + "'", line.number);
    }
  }
  close_snapshot();
  if (data.snapshots.empty()) throw ParseError("network file has no snapshots", 0);
  try {
    data.validate();
  } catch (const UsageError& e) {
    throw ParseError(e.what(), 0);
  }
  return data;
}

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'", 0);
  return in;
}

}  // namespace

AnyTwoNodeDataset read_two_node(std::istream& in) {
  const auto lines = tokenize(in);
  if (read_dim(lines) == 2) return parse_two_node<2>(lines);
  return parse_two_node<3>(lines);
}

AnyNetworkDataset read_network(std::istream& in) {
  const auto lines = tokenize(in);
  if (read_dim(lines) == 2) return parse_network<2>(lines);
  return parse_network<3>(lines);
}

template <int Dim>
void write_two_node(std::ostream& out, const TwoNodeDataset<Dim>& data) {
  out << "dim " << Dim << "\n# t p_l p_g r\n";
  for (const auto& rec : data.records) {
    out << rec.t << fmt_vec<Dim>(rec.p_local) << fmt_vec<Dim>(rec.p_anchor) << ' '
        << fmt17(rec.range) << '\n';
  }
}

template <int Dim>
void write_network(std::ostream& out, const NetworkDataset<Dim>& data) {
  out << "dim " << Dim << "\ntargets " << data.n_targets << "\nanchors " << data.n_anchors << '\n';
  for (const auto& snap : data.snapshots) {
    out << "t " << snap.t << '\n';
    for (int i = 0; i < data.n_targets; ++i)
      out << "target " << i << fmt_vec<Dim>(snap.target_local[i]) << '\n';
    for (int a = 0; a < data.n_anchors; ++a)
      out << "anchor " << a << fmt_vec<Dim>(snap.anchor_global[a]) << '\n';
    for (const auto& e : snap.tt_edges)
      out << "tt " << e.i << ' ' << e.j << ' ' << fmt17(e.range) << '\n';
    for (const auto& e : snap.ta_edges)
      out << "ta " << e.i << ' ' << e.a << ' ' << fmt17(e.range) << '\n';
  }
}

AnyTwoNodeDataset load_two_node(const std::string& path) {
  auto in = open_input(path);
  return read_two_node(in);
}

AnyNetworkDataset load_network(const std::string& path) {
  auto in = open_input(path);
  return read_network(in);
}

// ---------------------------------------------------------------------------

namespace {

using nlohmann::json;

template <typename T>
void take(const json& j, const char* key, T& field) {
  if (!j.contains(key)) return;
  try {
    field = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ParseError(std::string("scenario field '") + key + "' has the wrong type", 0);
  }
}

}  // namespace

Scenario scenario_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("invalid JSON: ") + e.what(), 0);
  }
  if (!j.is_object()) throw ParseError("scenario config must be a JSON object", 0);
  static const std::vector<std::string> known = {
      "dim",  "area_lo", "area_hi", "n_targets",         "anchors", "comm_radius",
      "snr_db", "tbar",  "seed",    "wander_half_width", "step",    "anchors_move",
      "fixed_graph"};
  for (const auto& item : j.items()) {
    if (std::find(known.begin(), known.end(), item.key()) == known.end()) {
      throw ParseError("unknown scenario field '" + item.key() + "'", 0);
    }
  }
  Scenario sc;
  take(j, "dim", sc.dim);
  take(j, "area_lo", sc.area_lo);
  take(j, "area_hi", sc.area_hi);
  take(j, "n_targets", sc.n_targets);
  take(j, "anchors", sc.anchors);
  if (j.contains("comm_radius") && j["comm_radius"].is_string()) {
    if (j["comm_radius"] != "inf") throw ParseError("comm_radius must be a number or \"inf\"", 0);
    sc.comm_radius = std::numeric_limits<double>::infinity();
  } else {
    take(j, "comm_radius", sc.comm_radius);
  }
  if (j.contains("snr_db") && j["snr_db"].is_string()) {
    if (j["snr_db"] != "inf") throw ParseError("snr_db must be a number or \"inf\"", 0);
    sc.snr_db = std::numeric_limits<double>::infinity();
  } else {
    take(j, "snr_db", sc.snr_db);
  }
  take(j, "tbar", sc.tbar);
  take(j, "seed", sc.seed);
  take(j, "wander_half_width", sc.wander_half_width);
  take(j, "step", sc.step);
  take(j, "anchors_move", sc.anchors_move);
  take(j, "fixed_graph", sc.fixed_graph);
  return sc;
}

Scenario load_scenario(const std::string& path) {
  auto in = open_input(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return scenario_from_json(ss.str());
}

std::string scenario_to_json(const Scenario& sc) {
  auto number_or_inf = [](double v) { return std::isinf(v) ? json("inf") : json(v); };
  const json j = {{"dim", sc.dim},
                  {"area_lo", sc.area_lo},
                  {"area_hi", sc.area_hi},
                  {"n_targets", sc.n_targets},
                  {"anchors", sc.anchors},
                  {"comm_radius", number_or_inf(sc.comm_radius)},
                  {"snr_db", number_or_inf(sc.snr_db)},
                  {"tbar", sc.tbar},
                  {"seed", sc.seed},
                  {"wander_half_width", sc.wander_half_width},
                  {"step", sc.step},
                  {"anchors_move", sc.anchors_move},
                  {"fixed_graph", sc.fixed_graph}};
  return j.dump(2);
}

template void write_two_node<2>(std::ostream&, const TwoNodeDataset<2>&);
template void write_two_node<3>(std::ostream&, const TwoNodeDataset<3>&);
template void write_network<2>(std::ostream&, const NetworkDataset<2>&);
template void write_network<3>(std::ostream&, const NetworkDataset<3>&);

}  // namespace coalign
