#pragma once

#include <array>
#include <complex>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace ghzsim {

using Complex = std::complex<double>;

inline constexpr int kMaxPhotons = 12;
inline constexpr int kMaxDistIndex = 5;

enum class Pol : uint8_t { H = 0, V = 1 };

/// One second-quantized mode: (spatial channel, polarization, distinguishability index).
struct ModeKey {
  uint16_t channel = 0;
  Pol pol = Pol::H;
  uint8_t dist = 0;

  ModeKey() = default;
  ModeKey(uint16_t ch, Pol p, uint8_t d) : channel(ch), pol(p), dist(d) {
    if (d > kMaxDistIndex) throw std::invalid_argument("ModeKey: dist_index out of range");
    if (ch > (0xFFFF >> 4)) throw std::invalid_argument("ModeKey: channel id too large");
  }

  /// Packed 16-bit id; ordering by packed id groups a channel's modes contiguously.
  uint16_t packed() const { return static_cast<uint16_t>((channel << 4) | (static_cast<uint16_t>(pol) << 3) | dist); }
  static ModeKey unpack(uint16_t v) {
    ModeKey m;
    m.channel = static_cast<uint16_t>(v >> 4);
    m.pol = static_cast<Pol>((v >> 3) & 1);
    m.dist = static_cast<uint8_t>(v & 7);
    return m;
  }
  friend bool operator==(const ModeKey&, const ModeKey&) = default;
};

/// Canonically ordered photon multiset; equal entries encode occupation > 1.
/// Total photon number is capped at kMaxPhotons (six sources, two photons each).
class FockBasisState {
 public:
  FockBasisState() { modes_.fill(0xFFFF); }

  static FockBasisState from_modes(std::span<const uint16_t> packed_sorted) {
    if (packed_sorted.size() > kMaxPhotons) throw std::invalid_argument("FockBasisState: photon number > 12");
    FockBasisState b;
    b.n_ = static_cast<uint8_t>(packed_sorted.size());
    for (size_t i = 0; i < packed_sorted.size(); ++i) b.modes_[i] = packed_sorted[i];
    return b;
  }

  int photons() const { return n_; }
  uint16_t mode(int i) const { return modes_[static_cast<size_t>(i)]; }
  std::span<const uint16_t> modes() const { return {modes_.data(), n_}; }

  /// Photons occupying `channel` form a contiguous run; returns [begin, end).
  std::pair<int, int> channel_range(uint16_t channel) const;
  int channel_count(uint16_t channel) const {
    auto [b, e] = channel_range(channel);
    return e - b;
  }

  friend auto operator<=>(const FockBasisState& a, const FockBasisState& b) {
    if (auto c = a.n_ <=> b.n_; c != 0) return c;
    return a.modes_ <=> b.modes_;
  }
  friend bool operator==(const FockBasisState& a, const FockBasisState& b) {
    return a.n_ == b.n_ && a.modes_ == b.modes_;
  }

  /// Product of factorials of mode multiplicities (bosonic normalization helper).
  double occupation_factorial() const;

 private:
  std::array<uint16_t, kMaxPhotons> modes_;
  uint8_t n_ = 0;
};

struct Term {
  FockBasisState state;
  Complex amp;
};

/// Sparse pure state: terms sorted by basis state, no exact-zero amplitudes stored.
/// Elementary maps may additionally drop |amp| < prune_epsilon when asked.
class PureState {
 public:
  PureState() = default;
  explicit PureState(std::vector<Term> terms) : terms_(std::move(terms)) {}

  static PureState vacuum() {
    PureState s;
    s.terms_.push_back({FockBasisState{}, Complex{1.0, 0.0}});
    return s;
  }

  const std::vector<Term>& terms() const { return terms_; }
  std::vector<Term>& mutable_terms() { return terms_; }
  size_t size() const { return terms_.size(); }

  double squared_norm() const;
  Complex amplitude(const FockBasisState& b) const;

  /// Sorts, merges duplicate keys, drops amplitudes with |amp| <= eps (eps 0 drops exact zeros).
  void canonicalize(double prune_epsilon = 0.0);

 private:
  std::vector<Term> terms_;
};

/// Single-basis-state builder; repeated keys become occupation counts, amplitude 1.
PureState make_basis_state(std::span<const ModeKey> photons);

/// a†_{c,H,d} -> cos(t) a†_{c,H,d} + sin(t) a†_{c,V,d};  a†_{c,V,d} -> -sin(t) a†_{c,H,d} + cos(t) a†_{c,V,d}.
PureState apply_polarization_rotation(const PureState& s, uint16_t channel, double angle, double prune_epsilon = 0.0);

/// Mode permutation: H transmits (in1->out1, in2->out2), V crosses (in1->out2, in2->out1).
PureState apply_pbs(const PureState& s, uint16_t in1, uint16_t in2, uint16_t out1, uint16_t out2);

/// Moves one photon from `channel` to the fresh `loss_channel` with amplitude
/// sqrt(n_{k,s,d}/N_k) per occupied (s,d); identity on components with N_k = 0.
PureState apply_loss(const PureState& s, uint16_t channel, uint16_t loss_channel, double prune_epsilon = 0.0);

/// Loss purification beamsplitter: a†_{k,s,d} -> sqrt(1-p) a†_{k,s,d} + sqrt(p) a†_{l,s,d}.
/// Every photon crossing the site is attenuated independently.
PureState apply_partial_loss(const PureState& s, uint16_t channel, uint16_t loss_channel, double probability,
                             double prune_epsilon = 0.0);

Complex inner_product(const PureState& a, const PureState& b);

}  // namespace ghzsim
