#include "ghzsim/herald.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ghzsim {

namespace {

struct ChannelSets {
  std::array<uint16_t, 3> det;
  std::array<uint16_t, 3> out;
};

ChannelSets channel_sets(const Netlist& n) {
  const auto dets = n.detectors();
  if (dets.size() != 3 || n.output_channels.size() != 3)
    throw std::invalid_argument("netlist must declare 3 detectors and 3 output channels");
  ChannelSets cs{};
  for (size_t i = 0; i < 3; ++i) cs.det[i] = dets[i]->channel;
  for (size_t i = 0; i < 3; ++i) cs.out[i] = n.output_channels[i];
  return cs;
}

std::optional<DetectionOutcome> outcome_of(const FockBasisState& b, const ChannelSets& cs) {
  DetectionOutcome oc{};
  for (int k = 0; k < 3; ++k) {
    auto [lo, hi] = b.channel_range(cs.det[static_cast<size_t>(k)]);
    uint8_t h = 0, v = 0;
    for (int i = lo; i < hi; ++i) {
      if (ModeKey::unpack(b.mode(i)).pol == Pol::H)
        ++h;
      else
        ++v;
    }
    if (h + v != 1) return std::nullopt;  // only accepted outcomes are classified
    oc.counts[static_cast<size_t>(k)] = {h, v};
  }
  return oc;
}

// environment = everything but the output photons' polarizations; the output
// photons' distinguishability indices stay part of the environment
struct EnvEntry {
  FockBasisState env;           // non-output modes
  std::array<uint8_t, 3> dist;  // output photon internal indices
  int pattern;
  bool all_v;
  Complex amp;
};

// returns entries for sixfold GHZ-candidate terms, and accumulates masses
void scan_terms(const PureState& state, const ChannelSets& cs, double& herald_mass, double& sixfold_mass,
                std::vector<EnvEntry>& ghz_entries) {
  std::vector<uint16_t> env_modes;
  for (const Term& t : state.terms()) {
    const auto oc = outcome_of(t.state, cs);
    if (!oc) continue;
    const double w = std::norm(t.amp);
    herald_mass += w;

    std::array<uint8_t, 3> dist{};
    std::array<int, 3> pol{};
    bool sixfold = true;
    for (int k = 0; k < 3 && sixfold; ++k) {
      auto [lo, hi] = t.state.channel_range(cs.out[static_cast<size_t>(k)]);
      if (hi - lo != 1) {
        sixfold = false;
        break;
      }
      const ModeKey m = ModeKey::unpack(t.state.mode(lo));
      dist[static_cast<size_t>(k)] = m.dist;
      pol[static_cast<size_t>(k)] = static_cast<int>(m.pol);
    }
    if (!sixfold) continue;
    sixfold_mass += w;

    const bool all_h = pol[0] == 0 && pol[1] == 0 && pol[2] == 0;
    const bool all_v = pol[0] == 1 && pol[1] == 1 && pol[2] == 1;
    if (!all_h && !all_v) continue;

    env_modes.clear();
    for (uint16_t pm : t.state.modes()) {
      const uint16_t ch = ModeKey::unpack(pm).channel;
      if (ch != cs.out[0] && ch != cs.out[1] && ch != cs.out[2]) env_modes.push_back(pm);
    }
    ghz_entries.push_back(
        {FockBasisState::from_modes(env_modes), dist, oc->pattern(), all_v, t.amp});
  }
}

double ghz_numerator(std::vector<EnvEntry>& entries, const SignTable& signs) {
  std::sort(entries.begin(), entries.end(), [](const EnvEntry& a, const EnvEntry& b) {
    if (auto c = a.env <=> b.env; c != 0) return c < 0;
    return a.dist < b.dist;
  });
  double num = 0.0;
  size_t i = 0;
  while (i < entries.size()) {
    size_t j = i;
    Complex a_h{0.0, 0.0}, a_v{0.0, 0.0};
    while (j < entries.size() && entries[j].env == entries[i].env && entries[j].dist == entries[i].dist) {
      (entries[j].all_v ? a_v : a_h) += entries[j].amp;
      ++j;
    }
    const double eps = signs.eps[static_cast<size_t>(entries[i].pattern)];
    num += 0.5 * std::norm(a_h + eps * a_v);
    i = j;
  }
  return num;
}

}  // namespace

std::map<DetectionOutcome, PureState> classify(const PureState& state, const Netlist& netlist) {
  const ChannelSets cs = channel_sets(netlist);
  std::map<DetectionOutcome, PureState> out;
  for (const Term& t : state.terms()) {
    if (const auto oc = outcome_of(t.state, cs)) out[*oc].mutable_terms().push_back(t);
  }
  for (auto& [oc, s] : out) s.canonicalize();
  return out;
}

SignTable derive_sign_table(const Netlist& netlist) {
  const ChannelSets cs = channel_sets(netlist);
  const EmissionEvent ideal_emission;
  const PureState input = build_input_state(ideal_emission, gram_coefficients(1.0, kSources), netlist);
  const PureState out = run(netlist, input, 0);

  auto by_outcome = classify(out, netlist);
  SignTable table;
  std::array<bool, 8> seen{};
  for (const auto& [oc, sub] : by_outcome) {
    const int pat = oc.pattern();
    double herald = 0.0, sixfold = 0.0;
    std::vector<EnvEntry> entries;
    scan_terms(sub, cs, herald, sixfold, entries);

    SignTable plus, minus;
    minus.eps.fill(-1);
    auto ent = entries;
    const double f_plus = ghz_numerator(ent, plus) / herald;
    ent = entries;
    const double f_minus = ghz_numerator(ent, minus) / herald;
    const bool use_plus = f_plus >= f_minus;
    table.eps[static_cast<size_t>(pat)] = use_plus ? 1 : -1;
    table.ideal_fidelity[static_cast<size_t>(pat)] = use_plus ? f_plus : f_minus;
    seen[static_cast<size_t>(pat)] = true;
  }
  for (int p = 0; p < 8; ++p) {
    if (!seen[static_cast<size_t>(p)])
      throw std::runtime_error("derive_sign_table: accepted pattern " + std::to_string(p) + " never occurs");
    if (std::abs(table.ideal_fidelity[static_cast<size_t>(p)] - 1.0) > 1e-9)
      throw std::runtime_error("derive_sign_table: pattern " + std::to_string(p) + " reaches fidelity " +
                               std::to_string(table.ideal_fidelity[static_cast<size_t>(p)]) +
                               " only; waveplate/PBS conventions need calibration");
  }
  return table;
}

BranchMeasures branch_measures(const PureState& state, const Netlist& netlist, const SignTable& signs) {
  const ChannelSets cs = channel_sets(netlist);
  BranchMeasures m;
  std::vector<EnvEntry> entries;
  scan_terms(state, cs, m.herald_mass, m.success, entries);
  m.fidelity_numerator = ghz_numerator(entries, signs);
  return m;
}

MixtureResult mixture_measures(std::span<const std::pair<Event, BranchMeasures>> branches, double covered_mass) {
  if (!(covered_mass > 0.0)) throw std::invalid_argument("mixture_measures: covered mass must be positive");
  double ps = 0.0, pn = 0.0, ph = 0.0;
  for (const auto& [e, bm] : branches) {
    ps += e.probability * bm.success;
    pn += e.probability * bm.fidelity_numerator;
    ph += e.probability * bm.herald_mass;
  }
  MixtureResult r;
  r.success = ps / covered_mass;
  r.success_normalized = r.success * 32.0;
  r.herald = ph / covered_mass;
  if (ps > 0.0) r.fidelity = pn / ps;
  return r;
}

}  // namespace ghzsim
