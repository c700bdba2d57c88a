#include "coalign/network.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <string>
#include <tuple>

#include "coalign/errors.hpp"

namespace coalign {

namespace {

class DisjointSets {
 public:
  explicit DisjointSets(int n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }
  int find(int x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }
  void unite(int a, int b) { parent_[find(a)] = find(b); }

 private:
  std::vector<int> parent_;
};

using EdgeKey = std::tuple<int, int, int>;  // (kind, from, to)

template <int Dim>
std::set<EdgeKey> edge_keys(const NetworkSnapshot<Dim>& snap) {
  std::set<EdgeKey> keys;
  for (const auto& e : snap.tt_edges) keys.emplace(0, e.i, e.j);
  for (const auto& e : snap.ta_edges) keys.emplace(1, e.i, e.a);
  return keys;
}

}  // namespace

template <int Dim>
void NetworkDataset<Dim>::validate() const {
  if (n_targets < 0 || n_anchors < 0) throw UsageError("negative node count");
  int previous_t = 0;
  bool first = true;
  for (const auto& snap : snapshots) {
    const std::string where = "snapshot t=" + std::to_string(snap.t) + ": ";
    if (!first && snap.t <= previous_t) throw UsageError(where + "time index not increasing");
    first = false;
    previous_t = snap.t;
    if (static_cast<int>(snap.target_local.size()) != n_targets ||
        static_cast<int>(snap.anchor_global.size()) != n_anchors) {
      throw UsageError(where + "node count differs from the dataset header");
    }
    for (const auto& p : snap.target_local)
      if (!p.allFinite()) throw UsageError(where + "non-finite target position");
    for (const auto& p : snap.anchor_global)
      if (!p.allFinite()) throw UsageError(where + "non-finite anchor position");
    std::set<std::pair<int, int>> directed;
    for (const auto& e : snap.tt_edges) {
      if (e.i < 0 || e.i >= n_targets || e.j < 0 || e.j >= n_targets || e.i == e.j) {
        throw UsageError(where + "bad target-target edge");
      }
      if (!(e.range >= 0.0) || !std::isfinite(e.range)) throw UsageError(where + "bad range");
      if (!directed.emplace(e.i, e.j).second) throw UsageError(where + "duplicate edge");
    }
    for (const auto& e : snap.tt_edges) {
      if (!directed.count({e.j, e.i})) {
        throw UsageError(where + "edge " + std::to_string(e.i) + "->" + std::to_string(e.j) +
                         " has no reverse measurement");
      }
    }
    for (const auto& e : snap.ta_edges) {
      if (e.i < 0 || e.i >= n_targets || e.a < 0 || e.a >= n_anchors) {
        throw UsageError(where + "bad target-anchor edge");
      }
      if (!(e.range >= 0.0) || !std::isfinite(e.range)) throw UsageError(where + "bad range");
    }
  }
}

template <int Dim>
std::vector<bool> check_union_connectivity(const NetworkDataset<Dim>& data) {
  const int n = data.n_targets;
  // Anchors are nodes n..n+r-1.
  DisjointSets sets(n + data.n_anchors);
  for (const auto& snap : data.snapshots) {
    for (const auto& e : snap.tt_edges) sets.unite(e.i, e.j);
    for (const auto& e : snap.ta_edges) sets.unite(e.i, n + e.a);
  }
  std::vector<bool> anchored_root(n + data.n_anchors, false);
  for (int a = 0; a < data.n_anchors; ++a) anchored_root[sets.find(n + a)] = true;
  std::vector<bool> connected(n);
  for (int i = 0; i < n; ++i) connected[i] = anchored_root[sets.find(i)];
  return connected;
}

template <int Dim>
bool is_fixed_graph(const NetworkDataset<Dim>& data) {
  if (data.snapshots.empty()) return true;
  const auto reference = edge_keys(data.snapshots.front());
  return std::all_of(data.snapshots.begin() + 1, data.snapshots.end(),
                     [&](const auto& snap) { return edge_keys(snap) == reference; });
}

template <int Dim>
std::vector<int> anchor_measurement_counts(const NetworkDataset<Dim>& data) {
  std::vector<int> counts(data.n_targets, 0);
  for (const auto& snap : data.snapshots)
    for (const auto& e : snap.ta_edges) ++counts[e.i];
  return counts;
}

template <int Dim>
double average_degree(const NetworkDataset<Dim>& data) {
  std::set<EdgeKey> all;
  for (const auto& snap : data.snapshots) {
    const auto keys = edge_keys(snap);
    all.insert(keys.begin(), keys.end());
  }
  const int nodes = data.n_targets + data.n_anchors;
  return nodes == 0 ? 0.0 : static_cast<double>(all.size()) / nodes;
}

template <int Dim>
NetworkDataset<Dim> restrict_to_targets(const NetworkDataset<Dim>& data,
                                        const std::vector<bool>& keep,
                                        std::vector<int>* old_index) {
  if (static_cast<int>(keep.size()) != data.n_targets) {
    throw UsageError("restrict_to_targets: mask size differs from target count");
  }
  std::vector<int> new_index(data.n_targets, -1);
  std::vector<int> kept;
  for (int i = 0; i < data.n_targets; ++i) {
    if (keep[i]) {
      new_index[i] = static_cast<int>(kept.size());
      kept.push_back(i);
    }
  }
  NetworkDataset<Dim> out;
  out.n_targets = static_cast<int>(kept.size());
  out.n_anchors = data.n_anchors;
  for (const auto& snap : data.snapshots) {
    NetworkSnapshot<Dim> s;
    s.t = snap.t;
    s.anchor_global = snap.anchor_global;
    for (int i : kept) s.target_local.push_back(snap.target_local[i]);
    for (const auto& e : snap.tt_edges) {
      if (new_index[e.i] >= 0 && new_index[e.j] >= 0) {
        s.tt_edges.push_back({new_index[e.i], new_index[e.j], e.range});
      }
    }
    for (const auto& e : snap.ta_edges) {
      if (new_index[e.i] >= 0) s.ta_edges.push_back({new_index[e.i], e.a, e.range});
    }
    out.snapshots.push_back(std::move(s));
  }
  if (old_index) *old_index = kept;
  return out;
}

#define COALIGN_INSTANTIATE(D)                                                            \
  template struct NetworkDataset<D>;                                                      \
  template std::vector<bool> check_union_connectivity<D>(const NetworkDataset<D>&);       \
  template bool is_fixed_graph<D>(const NetworkDataset<D>&);                              \
  template std::vector<int> anchor_measurement_counts<D>(const NetworkDataset<D>&);       \
  template double average_degree<D>(const NetworkDataset<D>&);                            \
  template NetworkDataset<D> restrict_to_targets<D>(const NetworkDataset<D>&,             \
                                                    const std::vector<bool>&, std::vector<int>*);

COALIGN_INSTANTIATE(2)
COALIGN_INSTANTIATE(3)

#undef COALIGN_INSTANTIATE

}  // namespace coalign
