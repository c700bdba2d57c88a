#pragma once

// Text formats for datasets and JSON scenario configs.
//
// Two-node file:
//   dim 2
//   # t p_l[0..d) p_g[0..d) r
//   1 0.5 1.2 3.0 4.0 2.5
//
// Network file:
//   dim 2
//   targets 3
//   anchors 1
//   t 1
//   target 0 x y        (local frame, one line per target)
//   anchor 0 x y        (global frame, one line per anchor)
//   tt 0 1 0.97         (one line per direction)
//   ta 0 0 1.4
//   t 2
//   ...
//
// Blank lines and text after '#' are ignored. Numbers are written with 17
// significant digits so a write/read round trip is exact.

#include <iosfwd>
#include <string>
#include <variant>

#include "coalign/network.hpp"
#include "coalign/simulator.hpp"
#include "coalign/two_node.hpp"

namespace coalign {

using AnyTwoNodeDataset = std::variant<TwoNodeDataset<2>, TwoNodeDataset<3>>;
using AnyNetworkDataset = std::variant<NetworkDataset<2>, NetworkDataset<3>>;

/// Throws ParseError with the offending line number. The result is validated.
AnyTwoNodeDataset read_two_node(std::istream& in);
AnyNetworkDataset read_network(std::istream& in);

template <int Dim>
void write_two_node(std::ostream& out, const TwoNodeDataset<Dim>& data);
template <int Dim>
void write_network(std::ostream& out, const NetworkDataset<Dim>& data);

AnyTwoNodeDataset load_two_node(const std::string& path);
AnyNetworkDataset load_network(const std::string& path);

/// JSON object whose keys are the Scenario field names. Missing keys keep
/// their defaults; unknown keys and wrong types raise ParseError. "snr_db"
/// also accepts the string "inf".
Scenario scenario_from_json(const std::string& text);
Scenario load_scenario(const std::string& path);
std::string scenario_to_json(const Scenario& scenario);

}  // namespace coalign
