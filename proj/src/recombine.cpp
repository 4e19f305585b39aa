#include "ghzsim/recombine.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_map>
#include <vector>

namespace ghzsim {

void OverlapPoly::add(const OverlapPoly& p, double w) {
  degree = std::max(degree, p.degree);
  for (int i = 0; i <= p.degree; ++i) c[static_cast<size_t>(i)] += w * p.c[static_cast<size_t>(i)];
}

OverlapPoly operator*(const OverlapPoly& a, const OverlapPoly& b) {
  OverlapPoly r;
  r.degree = a.degree + b.degree;
  if (r.degree > kMaxPhotons) throw std::logic_error("OverlapPoly: degree overflow");
  for (int i = 0; i <= a.degree; ++i) {
    const double ai = a.c[static_cast<size_t>(i)];
    if (ai == 0.0) continue;
    for (int j = 0; j <= b.degree; ++j) r.c[static_cast<size_t>(i + j)] += ai * b.c[static_cast<size_t>(j)];
  }
  return r;
}

namespace {

constexpr std::array<double, kMaxPhotons + 1> kFact = {1.,     1.,      2.,       6.,        24.,       120.,
                                                       720.,   5040.,   40320.,   362880.,   3628800.,  39916800.,
                                                       479001600.};

OverlapPoly poly_one() {
  OverlapPoly p;
  p.c[0] = 1.0;
  return p;
}

// permanent of the label-overlap matrix between two label multisets, as a
// polynomial in v (entry 1 when labels match, v otherwise)
OverlapPoly perm_poly(std::span<const uint8_t> a, std::span<const uint8_t> b) {
  if (a.empty()) return poly_one();
  OverlapPoly total;
  total.degree = static_cast<int>(a.size());
  std::array<uint8_t, kMaxPhotons> rest{};
  for (size_t k = 0; k < b.size(); ++k) {
    if (k > 0 && b[k] == b[k - 1]) continue;  // group identical columns
    int mult = 0;
    for (size_t q = 0; q < b.size(); ++q) mult += (b[q] == b[k]);
    int w = 0;
    for (size_t q = 0; q < b.size(); ++q) {
      if (q == k) continue;
      rest[static_cast<size_t>(w++)] = b[q];
    }
    const OverlapPoly sub = perm_poly(a.subspan(1), {rest.data(), b.size() - 1});
    if (a[0] == b[k]) {
      for (int i = 0; i <= sub.degree; ++i) total.c[static_cast<size_t>(i)] += mult * sub.c[static_cast<size_t>(i)];
    } else {
      for (int i = 0; i <= sub.degree; ++i)
        total.c[static_cast<size_t>(i + 1)] += mult * sub.c[static_cast<size_t>(i)];
    }
  }
  return total;
}

uint64_t pack_labels(std::span<const uint8_t> v) {
  uint64_t key = static_cast<uint64_t>(v.size());
  for (size_t i = 0; i < v.size(); ++i) key |= static_cast<uint64_t>(v[i] + 1) << (4 + 4 * i);
  return key;
}

struct SlotPairKey {
  uint64_t a, b;
  bool operator==(const SlotPairKey&) const = default;
};

struct SlotPairHash {
  size_t operator()(const SlotPairKey& k) const {
    return std::hash<uint64_t>{}(k.a * 0x9E3779B97F4A7C15ull ^ k.b);
  }
};

// normalized slot contraction: perm(Omega[A,B]) / sqrt(prod mult_A! prod mult_B!)
const OverlapPoly& slot_poly(std::span<const uint8_t> a, std::span<const uint8_t> b) {
  thread_local std::unordered_map<SlotPairKey, OverlapPoly, SlotPairHash> memo;
  const SlotPairKey key{pack_labels(a), pack_labels(b)};
  auto it = memo.find(key);
  if (it != memo.end()) return it->second;

  OverlapPoly p = perm_poly(a, b);
  double norm = 1.0;
  auto occ = [&](std::span<const uint8_t> v) {
    size_t i = 0;
    while (i < v.size()) {
      size_t j = i;
      while (j < v.size() && v[j] == v[i]) ++j;
      norm *= kFact[j - i];
      i = j;
    }
  };
  occ(a);
  occ(b);
  const double inv = 1.0 / std::sqrt(norm);
  for (int i = 0; i <= p.degree; ++i) p.c[static_cast<size_t>(i)] *= inv;
  return memo.emplace(key, p).first->second;
}

struct Entry {
  // slot structure of the non-output part: packed modes with dist bits cleared,
  // plus the aligned label list (sorted within each slot by construction)
  std::array<uint16_t, kMaxPhotons> slots{};
  std::array<uint8_t, kMaxPhotons> labels{};
  uint8_t n_env = 0;
  std::array<uint8_t, 3> out_dist{};
  uint8_t out_pols = 0;  // bit k: output k is V
  uint8_t det_pattern = 0;
  Complex amp;
};

bool same_env(const Entry& a, const Entry& b) {
  return a.n_env == b.n_env && std::equal(a.slots.begin(), a.slots.begin() + a.n_env, b.slots.begin());
}

// contraction of the non-output slots plus the per-channel output pairing
OverlapPoly pair_poly(const Entry& a, const Entry& b, bool with_outputs) {
  OverlapPoly g = poly_one();
  size_t i = 0;
  while (i < a.n_env) {
    size_t j = i;
    while (j < a.n_env && a.slots[j] == a.slots[i]) ++j;
    g = g * slot_poly({a.labels.data() + i, j - i}, {b.labels.data() + i, j - i});
    i = j;
  }
  if (with_outputs) {
    for (int k = 0; k < 3; ++k) {
      if (a.out_dist[static_cast<size_t>(k)] != b.out_dist[static_cast<size_t>(k)]) {
        OverlapPoly v;
        v.degree = 1;
        v.c[1] = 1.0;
        g = g * v;
      }
    }
  }
  return g;
}

}  // namespace

MeasurePolys contract_labeled_output(const PureState& labeled_output, const Netlist& netlist, const SignTable& signs,
                                     bool want_herald) {
  const auto dets = netlist.detectors();
  if (dets.size() != 3 || netlist.output_channels.size() != 3)
    throw std::invalid_argument("contract_labeled_output: need 3 detectors and 3 outputs");
  std::array<uint16_t, 3> det_ch{};
  std::array<uint16_t, 3> out_ch{};
  for (size_t i = 0; i < 3; ++i) det_ch[i] = dets[i]->channel;
  for (size_t i = 0; i < 3; ++i) out_ch[i] = netlist.output_channels[i];

  MeasurePolys result;
  std::vector<Entry> six_entries;
  std::vector<Entry> herald_entries;

  for (const Term& t : labeled_output.terms()) {
    result.photons = std::max(result.photons, t.state.photons());
    // herald acceptance and detector pattern
    uint8_t det_pattern = 0;
    bool herald_ok = true;
    for (int k = 0; k < 3 && herald_ok; ++k) {
      auto [lo, hi] = t.state.channel_range(det_ch[static_cast<size_t>(k)]);
      if (hi - lo != 1) {
        herald_ok = false;
        break;
      }
      if (ModeKey::unpack(t.state.mode(lo)).pol == Pol::V) det_pattern = static_cast<uint8_t>(det_pattern | (1u << k));
    }
    if (!herald_ok) continue;

    Entry ent;
    ent.det_pattern = det_pattern;
    ent.amp = t.amp;

    bool sixfold = true;
    for (int k = 0; k < 3; ++k) {
      auto [lo, hi] = t.state.channel_range(out_ch[static_cast<size_t>(k)]);
      if (hi - lo != 1) {
        sixfold = false;
        break;
      }
      const ModeKey m = ModeKey::unpack(t.state.mode(lo));
      ent.out_dist[static_cast<size_t>(k)] = m.dist;
      if (m.pol == Pol::V) ent.out_pols = static_cast<uint8_t>(ent.out_pols | (1u << k));
    }

    if (want_herald) {
      Entry h;
      h.det_pattern = det_pattern;
      h.amp = t.amp;
      int w = 0;
      for (uint16_t pm : t.state.modes()) {
        h.slots[static_cast<size_t>(w)] = static_cast<uint16_t>(pm & ~7u);
        h.labels[static_cast<size_t>(w)] = static_cast<uint8_t>(pm & 7u);
        ++w;
      }
      h.n_env = static_cast<uint8_t>(w);
      herald_entries.push_back(h);
    }
    if (!sixfold) continue;

    int w = 0;
    for (uint16_t pm : t.state.modes()) {
      const uint16_t ch = ModeKey::unpack(pm).channel;
      if (ch == out_ch[0] || ch == out_ch[1] || ch == out_ch[2]) continue;
      ent.slots[static_cast<size_t>(w)] = static_cast<uint16_t>(pm & ~7u);
      ent.labels[static_cast<size_t>(w)] = static_cast<uint8_t>(pm & 7u);
      ++w;
    }
    ent.n_env = static_cast<uint8_t>(w);
    six_entries.push_back(ent);
  }

  // bucket by (environment pattern, output polarizations)
  auto bucket_less = [](const Entry& a, const Entry& b) {
    if (a.n_env != b.n_env) return a.n_env < b.n_env;
    if (auto c = std::lexicographical_compare_three_way(a.slots.begin(), a.slots.begin() + a.n_env, b.slots.begin(),
                                                        b.slots.begin() + b.n_env);
        c != 0)
      return c < 0;
    return a.out_pols < b.out_pols;
  };
  std::sort(six_entries.begin(), six_entries.end(), bucket_less);

  size_t env_begin = 0;
  while (env_begin < six_entries.size()) {
    size_t env_end = env_begin;
    while (env_end < six_entries.size() && same_env(six_entries[env_end], six_entries[env_begin])) ++env_end;

    // diagonal families per output-polarization vector
    size_t i = env_begin;
    while (i < env_end) {
      size_t j = i;
      while (j < env_end && six_entries[j].out_pols == six_entries[i].out_pols) ++j;
      for (size_t p = i; p < j; ++p) {
        for (size_t q = p; q < j; ++q) {
          const OverlapPoly g = pair_poly(six_entries[p], six_entries[q], true);
          const double w = (p == q) ? std::norm(six_entries[p].amp)
                                    : 2.0 * (std::conj(six_entries[p].amp) * six_entries[q].amp).real();
          result.success.add(g, w);
        }
      }
      i = j;
    }

    // GHZ numerator: 1/2 (HHH diag + VVV diag) + eps * cross
    auto range_of = [&](uint8_t pols) {
      size_t lo = env_begin;
      while (lo < env_end && six_entries[lo].out_pols != pols) ++lo;
      size_t hi = lo;
      while (hi < env_end && six_entries[hi].out_pols == pols) ++hi;
      return std::pair<size_t, size_t>{lo, hi};
    };
    const auto [h_lo, h_hi] = range_of(0);
    const auto [v_lo, v_hi] = range_of(7);
    for (size_t p = h_lo; p < h_hi; ++p)
      for (size_t q = p; q < h_hi; ++q) {
        const OverlapPoly g = pair_poly(six_entries[p], six_entries[q], true);
        const double w = (p == q) ? std::norm(six_entries[p].amp)
                                  : 2.0 * (std::conj(six_entries[p].amp) * six_entries[q].amp).real();
        result.ghz.add(g, 0.5 * w);
      }
    for (size_t p = v_lo; p < v_hi; ++p)
      for (size_t q = p; q < v_hi; ++q) {
        const OverlapPoly g = pair_poly(six_entries[p], six_entries[q], true);
        const double w = (p == q) ? std::norm(six_entries[p].amp)
                                  : 2.0 * (std::conj(six_entries[p].amp) * six_entries[q].amp).real();
        result.ghz.add(g, 0.5 * w);
      }
    if (h_lo < h_hi && v_lo < v_hi) {
      const double eps = signs.eps[six_entries[h_lo].det_pattern];
      for (size_t p = h_lo; p < h_hi; ++p)
        for (size_t q = v_lo; q < v_hi; ++q) {
          const OverlapPoly g = pair_poly(six_entries[p], six_entries[q], true);
          result.ghz.add(g, eps * (std::conj(six_entries[p].amp) * six_entries[q].amp).real());
        }
    }
    env_begin = env_end;
  }

  if (want_herald) {
    std::sort(herald_entries.begin(), herald_entries.end(), bucket_less);
    size_t b = 0;
    while (b < herald_entries.size()) {
      size_t e = b;
      while (e < herald_entries.size() && same_env(herald_entries[e], herald_entries[b])) ++e;
      for (size_t p = b; p < e; ++p)
        for (size_t q = p; q < e; ++q) {
          const OverlapPoly g = pair_poly(herald_entries[p], herald_entries[q], false);
          const double w = (p == q) ? std::norm(herald_entries[p].amp)
                                    : 2.0 * (std::conj(herald_entries[p].amp) * herald_entries[q].amp).real();
          result.herald.add(g, w);
        }
      b = e;
    }
  }
  return result;
}

}  // namespace ghzsim
