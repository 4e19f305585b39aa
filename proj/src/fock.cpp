#include "ghzsim/fock.hpp"

#include <algorithm>
#include <cmath>

namespace ghzsim {

namespace {

constexpr std::array<double, kMaxPhotons + 1> kFact = {1.,     1.,      2.,       6.,        24.,       120.,
                                                       720.,   5040.,   40320.,   362880.,   3628800.,  39916800.,
                                                       479001600.};

double sqrt_fact(int n) { return std::sqrt(kFact[static_cast<size_t>(n)]); }

// product over multiplicities m of sqrt(m!) for a sorted packed-mode run
double sqrt_occ_fact(std::span<const uint16_t> sorted) {
  double f = 1.0;
  size_t i = 0;
  while (i < sorted.size()) {
    size_t j = i;
    while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
    f *= sqrt_fact(static_cast<int>(j - i));
    i = j;
  }
  return f;
}

}  // namespace

std::pair<int, int> FockBasisState::channel_range(uint16_t channel) const {
  const uint16_t lo = static_cast<uint16_t>(channel << 4);
  const uint16_t hi = static_cast<uint16_t>((channel << 4) | 0xF);
  int b = 0;
  while (b < n_ && modes_[static_cast<size_t>(b)] < lo) ++b;
  int e = b;
  while (e < n_ && modes_[static_cast<size_t>(e)] <= hi) ++e;
  return {b, e};
}

double FockBasisState::occupation_factorial() const {
  double f = 1.0;
  int i = 0;
  while (i < n_) {
    int j = i;
    while (j < n_ && modes_[static_cast<size_t>(j)] == modes_[static_cast<size_t>(i)]) ++j;
    f *= kFact[static_cast<size_t>(j - i)];
    i = j;
  }
  return f;
}

double PureState::squared_norm() const {
  double n = 0.0;
  for (const Term& t : terms_) n += std::norm(t.amp);
  return n;
}

Complex PureState::amplitude(const FockBasisState& b) const {
  auto it = std::lower_bound(terms_.begin(), terms_.end(), b,
                             [](const Term& t, const FockBasisState& key) { return t.state < key; });
  if (it != terms_.end() && it->state == b) return it->amp;
  return {0.0, 0.0};
}

void PureState::canonicalize(double prune_epsilon) {
  std::sort(terms_.begin(), terms_.end(), [](const Term& a, const Term& b) { return a.state < b.state; });
  size_t w = 0;
  size_t i = 0;
  while (i < terms_.size()) {
    FockBasisState key = terms_[i].state;
    Complex sum = terms_[i].amp;
    size_t j = i + 1;
    while (j < terms_.size() && terms_[j].state == key) {
      sum += terms_[j].amp;
      ++j;
    }
    if (std::abs(sum) > prune_epsilon || (prune_epsilon == 0.0 && sum != Complex{0.0, 0.0})) {
      terms_[w++] = {key, sum};
    }
    i = j;
  }
  terms_.resize(w);
}

PureState make_basis_state(std::span<const ModeKey> photons) {
  if (photons.size() > kMaxPhotons) throw std::invalid_argument("make_basis_state: more than 12 photons");
  std::vector<uint16_t> packed;
  packed.reserve(photons.size());
  for (const ModeKey& m : photons) packed.push_back(m.packed());
  std::sort(packed.begin(), packed.end());
  PureState s;
  s.mutable_terms().push_back({FockBasisState::from_modes(packed), Complex{1.0, 0.0}});
  return s;
}

PureState apply_polarization_rotation(const PureState& s, uint16_t channel, double angle, double prune_epsilon) {
  if (!std::isfinite(angle)) throw std::invalid_argument("apply_polarization_rotation: angle not finite");
  const double c = std::cos(angle);
  const double sn = std::sin(angle);

  std::vector<Term> out;
  out.reserve(s.size() * 2);

  std::array<uint16_t, kMaxPhotons> scratch{};
  for (const Term& t : s.terms()) {
    auto [b, e] = t.state.channel_range(channel);
    const int k = e - b;
    if (k == 0) {
      out.push_back(t);
      continue;
    }
    auto modes = t.state.modes();
    // polynomial coefficient relative to the affected channel's occupations
    const Complex amp0 = t.amp / sqrt_occ_fact(modes.subspan(static_cast<size_t>(b), static_cast<size_t>(k)));

    // expand the k affected creation operators over {H, V}; 2^k branches
    const uint32_t branches = 1u << k;
    for (uint32_t mask = 0; mask < branches; ++mask) {
      double coeff = 1.0;
      for (int i = 0; i < k; ++i) {
        const ModeKey m = ModeKey::unpack(modes[static_cast<size_t>(b + i)]);
        const bool to_v = (mask >> i) & 1u;
        if (m.pol == Pol::H) {
          coeff *= to_v ? sn : c;
        } else {
          coeff *= to_v ? c : -sn;
        }
        scratch[static_cast<size_t>(i)] =
            static_cast<uint16_t>((static_cast<uint16_t>(channel) << 4) | (static_cast<uint16_t>(to_v) << 3) | m.dist);
      }
      if (coeff == 0.0) continue;
      std::sort(scratch.begin(), scratch.begin() + k);
      // rebuild full sorted mode list
      std::array<uint16_t, kMaxPhotons> full{};
      int w = 0;
      for (int i = 0; i < b; ++i) full[static_cast<size_t>(w++)] = modes[static_cast<size_t>(i)];
      for (int i = 0; i < k; ++i) full[static_cast<size_t>(w++)] = scratch[static_cast<size_t>(i)];
      for (int i = e; i < t.state.photons(); ++i) full[static_cast<size_t>(w++)] = modes[static_cast<size_t>(i)];
      // affected channel's new modes stay contiguous in [b, b+k); list remains sorted
      const double conv = sqrt_occ_fact({scratch.data(), static_cast<size_t>(k)});
      out.push_back({FockBasisState::from_modes({full.data(), static_cast<size_t>(w)}), amp0 * (coeff * conv)});
    }
  }
  PureState r(std::move(out));
  r.canonicalize(prune_epsilon);
  return r;
}

PureState apply_pbs(const PureState& s, uint16_t in1, uint16_t in2, uint16_t out1, uint16_t out2) {
  if (in1 == in2 || out1 == out2) throw std::invalid_argument("apply_pbs: ports must be distinct");
  std::vector<Term> out;
  out.reserve(s.size());
  std::array<uint16_t, kMaxPhotons> full{};
  for (const Term& t : s.terms()) {
    auto modes = t.state.modes();
    for (size_t i = 0; i < modes.size(); ++i) {
      ModeKey m = ModeKey::unpack(modes[i]);
      if (m.channel == in1) {
        m.channel = (m.pol == Pol::H) ? out1 : out2;
      } else if (m.channel == in2) {
        m.channel = (m.pol == Pol::H) ? out2 : out1;
      }
      full[i] = m.packed();
    }
    std::sort(full.begin(), full.begin() + static_cast<long>(modes.size()));
    out.push_back({FockBasisState::from_modes({full.data(), modes.size()}), t.amp});
  }
  PureState r(std::move(out));
  r.canonicalize();
  return r;
}

PureState apply_loss(const PureState& s, uint16_t channel, uint16_t loss_channel, double prune_epsilon) {
  std::vector<Term> out;
  out.reserve(s.size() * 2);
  std::array<uint16_t, kMaxPhotons> full{};
  for (const Term& t : s.terms()) {
    auto [b, e] = t.state.channel_range(channel);
    const int n_total = e - b;
    if (t.state.channel_count(loss_channel) != 0)
      throw std::logic_error("apply_loss: loss channel already occupied");
    if (n_total == 0) {
      out.push_back(t);
      continue;
    }
    auto modes = t.state.modes();
    const double inv_sqrt_n = 1.0 / std::sqrt(static_cast<double>(n_total));
    int i = b;
    while (i < e) {
      int j = i;
      while (j < e && modes[static_cast<size_t>(j)] == modes[static_cast<size_t>(i)]) ++j;
      const int mult = j - i;
      // move one photon of this (s,d) to the loss channel
      const ModeKey m = ModeKey::unpack(modes[static_cast<size_t>(i)]);
      int w = 0;
      for (int q = 0; q < t.state.photons(); ++q) {
        if (q == i) continue;  // removed photon
        full[static_cast<size_t>(w++)] = modes[static_cast<size_t>(q)];
      }
      full[static_cast<size_t>(w++)] = ModeKey(loss_channel, m.pol, m.dist).packed();
      std::sort(full.begin(), full.begin() + w);
      out.push_back({FockBasisState::from_modes({full.data(), static_cast<size_t>(w)}),
                     t.amp * (std::sqrt(static_cast<double>(mult)) * inv_sqrt_n)});
      i = j;
    }
  }
  PureState r(std::move(out));
  r.canonicalize(prune_epsilon);
  return r;
}

PureState apply_partial_loss(const PureState& s, uint16_t channel, uint16_t loss_channel, double probability,
                             double prune_epsilon) {
  if (probability < 0.0 || probability > 1.0)
    throw std::invalid_argument("apply_partial_loss: probability outside [0,1]");
  const double keep = std::sqrt(1.0 - probability);
  const double lose = std::sqrt(probability);

  std::vector<Term> out;
  out.reserve(s.size() * 2);
  std::array<uint16_t, kMaxPhotons> scratch{};
  for (const Term& t : s.terms()) {
    auto [b, e] = t.state.channel_range(channel);
    const int k = e - b;
    if (k == 0) {
      out.push_back(t);
      continue;
    }
    if (t.state.channel_count(loss_channel) != 0)
      throw std::logic_error("apply_partial_loss: loss channel already occupied");
    auto modes = t.state.modes();
    const Complex amp0 = t.amp / sqrt_occ_fact(modes.subspan(static_cast<size_t>(b), static_cast<size_t>(k)));
    const uint32_t branches = 1u << k;
    for (uint32_t mask = 0; mask < branches; ++mask) {
      double coeff = 1.0;
      for (int i = 0; i < k; ++i) {
        const ModeKey m = ModeKey::unpack(modes[static_cast<size_t>(b + i)]);
        const bool lost = (mask >> i) & 1u;
        coeff *= lost ? lose : keep;
        scratch[static_cast<size_t>(i)] = ModeKey(lost ? loss_channel : channel, m.pol, m.dist).packed();
      }
      if (coeff == 0.0) continue;
      std::sort(scratch.begin(), scratch.begin() + k);
      std::array<uint16_t, kMaxPhotons> full{};
      int w = 0;
      for (int i = 0; i < b; ++i) full[static_cast<size_t>(w++)] = modes[static_cast<size_t>(i)];
      for (int i = e; i < t.state.photons(); ++i) full[static_cast<size_t>(w++)] = modes[static_cast<size_t>(i)];
      for (int i = 0; i < k; ++i) full[static_cast<size_t>(w++)] = scratch[static_cast<size_t>(i)];
      std::sort(full.begin(), full.begin() + w);
      const double conv = sqrt_occ_fact({scratch.data(), static_cast<size_t>(k)});
      out.push_back({FockBasisState::from_modes({full.data(), static_cast<size_t>(w)}), amp0 * (coeff * conv)});
    }
  }
  PureState r(std::move(out));
  r.canonicalize(prune_epsilon);
  return r;
}

Complex inner_product(const PureState& a, const PureState& b) {
  Complex acc{0.0, 0.0};
  const auto& ta = a.terms();
  const auto& tb = b.terms();
  size_t i = 0, j = 0;
  while (i < ta.size() && j < tb.size()) {
    if (ta[i].state < tb[j].state) {
      ++i;
    } else if (tb[j].state < ta[i].state) {
      ++j;
    } else {
      acc += std::conj(ta[i].amp) * tb[j].amp;
      ++i;
      ++j;
    }
  }
  return acc;
}

}  // namespace ghzsim
