#pragma once

#include <array>
#include <map>
#include <optional>
#include <vector>

#include "ghzsim/circuit.hpp"
#include "ghzsim/fock.hpp"
#include "ghzsim/sources.hpp"

namespace ghzsim {

/// Per-detector (n_H, n_V) photon counts, summed over distinguishability indices.
struct DetectionOutcome {
  std::array<std::pair<uint8_t, uint8_t>, 3> counts{};

  bool accepted() const {
    for (auto [h, v] : counts)
      if (h + v != 1) return false;
    return true;
  }
  /// For accepted outcomes: bit k set iff detector k saw V. Range 0..7.
  int pattern() const {
    int p = 0;
    for (int k = 0; k < 3; ++k)
      if (counts[static_cast<size_t>(k)].second == 1) p |= 1 << k;
    return p;
  }
  friend auto operator<=>(const DetectionOutcome&, const DetectionOutcome&) = default;
};

/// Outcome-dependent GHZ sign: pattern -> eps in {+1, -1}.
struct SignTable {
  std::array<int8_t, 8> eps{1, 1, 1, 1, 1, 1, 1, 1};
  std::array<double, 8> ideal_fidelity{};  // diagnostics from derivation
};

/// Partitions a run() output by detection outcome; only accepted outcomes
/// (exactly one photon at each detector) are returned. Sub-states keep their
/// unnormalized amplitudes, so total mass equals the acceptance probability.
std::map<DetectionOutcome, PureState> classify(const PureState& state, const Netlist& netlist);

/// Runs the ideal circuit once and picks the sign maximizing each accepted
/// pattern's fidelity; throws if any pattern cannot reach fidelity 1 within 1e-9.
SignTable derive_sign_table(const Netlist& netlist);

/// Accepted-component measures of one mixture branch.
///  - herald_mass: three single-photon detections, any output contents.
///  - success: additionally exactly one photon in each GHZ output channel
///    (the component whose fidelity the GHZ overlap measures). Table-level
///    success probabilities are built from this mass.
///  - fidelity_numerator: outcome-sign-corrected GHZ overlap mass.
struct BranchMeasures {
  double success = 0.0;
  double fidelity_numerator = 0.0;
  double herald_mass = 0.0;
};

BranchMeasures branch_measures(const PureState& state, const Netlist& netlist, const SignTable& signs);

struct MixtureResult {
  std::optional<double> fidelity;  // empty when no branch succeeded
  double success = 0.0;            // conditioned on the covered mass
  double success_normalized = 0.0;
  double herald = 0.0;
};

/// Probability-weighted fold in the given branch order:
/// success = sum Pr*success_e / covered, fidelity = sum Pr*num_e / sum Pr*success_e.
MixtureResult mixture_measures(std::span<const std::pair<Event, BranchMeasures>> branches, double covered_mass);

}  // namespace ghzsim
