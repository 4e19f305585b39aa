#include "ghzsim/sources.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numbers>
#include <queue>
#include <stdexcept>

namespace ghzsim {

GramCoefficients gram_coefficients(double overlap, int n) {
  if (overlap < 0.0 || overlap > 1.0) throw std::invalid_argument("gram_coefficients: overlap outside [0,1]");
  if (n < 1 || n > kMaxPhotons) throw std::invalid_argument("gram_coefficients: bad count");
  GramCoefficients g;
  g.n = n;
  g.rows = Eigen::MatrixXd::Zero(n, n);
  if (overlap == 1.0) {
    g.rows.col(0).setOnes();
    return g;
  }
  Eigen::MatrixXd gram = Eigen::MatrixXd::Constant(n, n, overlap);
  gram.diagonal().setOnes();
  Eigen::LLT<Eigen::MatrixXd> llt(gram);
  if (llt.info() != Eigen::Success) throw std::runtime_error("gram_coefficients: Cholesky failed");
  g.rows = llt.matrixL();
  return g;
}

double event_probability(const Event& e, double g2, std::span<const double> site_probs) {
  double p = 1.0;
  for (int i = 0; i < kSources; ++i) p *= (e.emission.m[static_cast<size_t>(i)] == 2) ? g2 : (1.0 - g2);
  for (size_t s = 0; s < site_probs.size(); ++s)
    p *= (e.losses >> s) & 1ull ? site_probs[s] : (1.0 - site_probs[s]);
  return p;
}

bool event_lex_less(const Event& a, const Event& b) {
  for (int i = 0; i < kSources; ++i) {
    const uint8_t ma = a.emission.m[static_cast<size_t>(i)];
    const uint8_t mb = b.emission.m[static_cast<size_t>(i)];
    if (ma != mb) return ma < mb;
  }
  uint64_t la = a.losses, lb = b.losses;
  while (la != 0 || lb != 0) {
    if (la == 0) return true;   // a's sorted loss list is a strict prefix
    if (lb == 0) return false;
    const int ba = std::countr_zero(la);
    const int bb = std::countr_zero(lb);
    if (ba != bb) return ba < bb;
    la &= la - 1;
    lb &= lb - 1;
  }
  return false;
}

namespace {

struct Deviation {
  double ratio;   // deviant/baseline probability, in (0, 1]
  bool emission;  // true: flips source `bit` to double; false: flips loss site `bit`
  int bit;
};

struct Node {
  double prob;
  uint64_t loss_mask;  // deviations applied, as masks relative to baseline
  uint8_t em_mask;
  int last_dev;  // index into the deviation table
};

}  // namespace

EventList enumerate_events(double g2, std::span<const double> site_probs, double coverage, size_t max_events) {
  if (!(coverage > 0.0) || coverage > 1.0) throw std::invalid_argument("enumerate_events: coverage outside (0,1]");
  if (g2 < 0.0 || g2 >= 1.0) throw std::invalid_argument("enumerate_events: g2 outside [0,1)");
  for (double p : site_probs)
    if (p < 0.0 || p >= 1.0) throw std::invalid_argument("enumerate_events: site probability outside [0,1)");
  if (site_probs.size() > 64) throw std::invalid_argument("enumerate_events: more than 64 loss sites");

  // baseline = most likely value per dimension; deviations flip one dimension
  double base_prob = 1.0;
  uint8_t base_em = 0;
  uint64_t base_loss = 0;
  std::vector<Deviation> devs;
  for (int i = 0; i < kSources; ++i) {
    const bool dbl = g2 > 0.5;
    if (dbl) base_em = static_cast<uint8_t>(base_em | (1u << i));
    const double likely = dbl ? g2 : 1.0 - g2;
    const double other = dbl ? 1.0 - g2 : g2;
    base_prob *= likely;
    if (other > 0.0) devs.push_back({other / likely, true, i});
  }
  for (size_t s = 0; s < site_probs.size(); ++s) {
    const bool trig = site_probs[s] > 0.5;
    if (trig) base_loss |= 1ull << s;
    const double likely = trig ? site_probs[s] : 1.0 - site_probs[s];
    const double other = trig ? 1.0 - site_probs[s] : site_probs[s];
    base_prob *= likely;
    if (other > 0.0) devs.push_back({other / likely, false, static_cast<int>(s)});
  }
  std::sort(devs.begin(), devs.end(), [](const Deviation& a, const Deviation& b) { return a.ratio > b.ratio; });

  auto to_event = [&](const Node& n) {
    Event e;
    e.emission = EmissionEvent::from_mask(static_cast<uint8_t>(base_em ^ n.em_mask));
    e.losses = base_loss ^ n.loss_mask;
    e.probability = n.prob;
    return e;
  };

  auto node_less = [&](const Node& a, const Node& b) {
    if (a.prob != b.prob) return a.prob < b.prob;  // max-heap on probability
    Event ea = to_event(a), eb = to_event(b);
    return event_lex_less(eb, ea);  // lex-smaller first
  };
  std::priority_queue<Node, std::vector<Node>, decltype(node_less)> pq(node_less);

  pq.push({base_prob, 0, 0, -1});
  EventList out;
  double cum = 0.0;
  while (!pq.empty() && out.events.size() < max_events) {
    Node n = pq.top();
    pq.pop();
    out.events.push_back(to_event(n));
    cum += n.prob;
    const int next = n.last_dev + 1;
    if (next < static_cast<int>(devs.size())) {
      auto apply = [&](Node m, int d) {
        if (devs[static_cast<size_t>(d)].emission)
          m.em_mask = static_cast<uint8_t>(m.em_mask ^ (1u << devs[static_cast<size_t>(d)].bit));
        else
          m.loss_mask ^= 1ull << devs[static_cast<size_t>(d)].bit;
        return m;
      };
      // extend: add the next deviation on top of this one
      Node ext = apply(n, next);
      ext.prob = n.prob * devs[static_cast<size_t>(next)].ratio;
      ext.last_dev = next;
      pq.push(ext);
      // slide: replace the last deviation by the next one
      if (n.last_dev >= 0) {
        Node sld = apply(apply(n, n.last_dev), next);
        sld.prob = n.prob / devs[static_cast<size_t>(n.last_dev)].ratio * devs[static_cast<size_t>(next)].ratio;
        sld.last_dev = next;
        pq.push(sld);
      }
    }
    if (cum >= coverage - 1e-15) break;
  }
  out.covered_mass = cum;
  return out;
}

PureState build_input_state(const EmissionEvent& e, const GramCoefficients& g, const Netlist& netlist) {
  if (g.n != kSources) throw std::invalid_argument("build_input_state: need coefficients for 6 sources");
  if (netlist.source_channels.size() != static_cast<size_t>(kSources))
    throw std::invalid_argument("build_input_state: netlist must declare 6 sources");

  std::vector<Term> terms;
  terms.push_back({FockBasisState{}, Complex{1.0, 0.0}});

  std::vector<Term> next;
  std::vector<uint16_t> modes;
  for (int i = 0; i < kSources; ++i) {
    const uint16_t ch = netlist.source_channels[static_cast<size_t>(i)];
    next.clear();
    for (const Term& t : terms) {
      if (e.m[static_cast<size_t>(i)] == 1) {
        for (int j = 0; j <= i; ++j) {
          const double c = g.coeff(i, j);
          if (c == 0.0) continue;
          modes.assign(t.state.modes().begin(), t.state.modes().end());
          modes.push_back(ModeKey(ch, Pol::H, static_cast<uint8_t>(j)).packed());
          std::sort(modes.begin(), modes.end());
          next.push_back({FockBasisState::from_modes(modes), t.amp * c});
        }
      } else {
        for (int j1 = 0; j1 <= i; ++j1) {
          for (int j2 = j1; j2 <= i; ++j2) {
            const double c1 = g.coeff(i, j1), c2 = g.coeff(i, j2);
            if (c1 == 0.0 || c2 == 0.0) continue;
            const double w = (j1 == j2) ? c1 * c2 : std::numbers::sqrt2 * c1 * c2;
            modes.assign(t.state.modes().begin(), t.state.modes().end());
            modes.push_back(ModeKey(ch, Pol::H, static_cast<uint8_t>(j1)).packed());
            modes.push_back(ModeKey(ch, Pol::H, static_cast<uint8_t>(j2)).packed());
            std::sort(modes.begin(), modes.end());
            next.push_back({FockBasisState::from_modes(modes), t.amp * w});
          }
        }
      }
    }
    terms.swap(next);
  }
  PureState s(std::move(terms));
  s.canonicalize();
  return s;
}

PureState labeled_input_state(const EmissionEvent& e, const Netlist& netlist) {
  std::vector<ModeKey> photons;
  for (int i = 0; i < kSources; ++i) {
    const uint16_t ch = netlist.source_channels[static_cast<size_t>(i)];
    for (int k = 0; k < e.m[static_cast<size_t>(i)]; ++k)
      photons.emplace_back(ch, Pol::H, static_cast<uint8_t>(i));
  }
  return make_basis_state(photons);
}

}  // namespace ghzsim
