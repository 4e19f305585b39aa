#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "ghzsim/fock.hpp"

namespace ghzsim {

enum class LossCategory : uint8_t { Prep = 0, Ops = 1, Det = 2 };

const char* to_string(LossCategory c);
std::optional<LossCategory> loss_category_from_string(const std::string& s);

struct Waveplate {
  uint16_t channel;
  double angle;  // radians
};

struct Pbs {
  uint16_t in1, in2, out1, out2;
};

struct LossSite {
  std::string id;
  uint16_t channel;
  LossCategory category;
};

struct Detector {
  std::string id;
  uint16_t channel;
};

using Element = std::variant<Waveplate, Pbs, LossSite, Detector>;

/// Ordered element list over named channels. Loss sites get dedicated loss
/// channels starting right after the declared ones (one per site, never reused).
struct Netlist {
  std::vector<std::string> channel_names;
  std::vector<Element> elements;
  std::vector<uint16_t> source_channels;
  std::vector<uint16_t> output_channels;

  uint16_t channel_count() const { return static_cast<uint16_t>(channel_names.size()); }
  int channel_index(const std::string& name) const;  // -1 if unknown

  std::vector<const LossSite*> loss_sites() const;
  std::vector<const Detector*> detectors() const;
  int loss_site_ordinal(const std::string& id) const;  // -1 if unknown

  /// Dedicated loss channel for the site with the given ordinal.
  uint16_t loss_channel(int site_ordinal) const {
    return static_cast<uint16_t>(channel_names.size() + static_cast<size_t>(site_ordinal));
  }
};

struct Violation {
  int element_index;  // -1 for netlist-level problems
  std::string message;
};

/// Checks structural invariants; violations are returned, not thrown.
std::vector<Violation> validate_netlist(const Netlist& n);

struct CanonicalOptions {
  bool ops_after_waveplates = true;  // one Ops site after every waveplate
  bool ops_on_pbs_outputs = true;    // one Ops site on every PBS output arm
  bool det_on_outputs = true;        // Det sites on x0,x3,x5 as well as d1,d2,d3
};

/// The shipped three-fusion GHZ netlist: six H-prepared sources, three PBS
/// fusion layers with 45-degree plates, heralds on d1,d2,d3, GHZ on x0,x3,x5.
/// Loss-site placement follows `opt`; defaults are the calibrated placement.
Netlist canonical_ghz_netlist(const CanonicalOptions& opt = {});

struct RunOptions {
  double prune_epsilon = 0.0;
};

/// Applies elements in order. A loss site acts only when its ordinal bit is set
/// in `triggered_losses`; detectors never modify the state.
PureState run(const Netlist& n, const PureState& input, uint64_t triggered_losses, const RunOptions& opt = {});

/// Single-photon unitary over (channel, pol) modes implied by the waveplate/PBS
/// sequence; loss sites and detectors are ignored. Mode index = 2*channel + pol.
Eigen::MatrixXcd lossless_mode_unitary(const Netlist& n);

/// Permanent via Ryser's formula with Gray-code iteration.
Complex permanent(const Eigen::MatrixXcd& m);

/// <out|U|in> for the mode unitary, evaluated per distinguishability sector as
/// perm(U_sub)/sqrt(prod n_in! prod n_out!). Zero on photon-count mismatch.
Complex oracle_amplitude(const Eigen::MatrixXcd& unitary, const FockBasisState& input, const FockBasisState& output);

}  // namespace ghzsim
