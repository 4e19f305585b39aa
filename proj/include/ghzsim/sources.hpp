#pragma once

#include <Eigen/Dense>
#include <array>
#include <bit>
#include <cstdint>
#include <span>
#include <vector>

#include "ghzsim/circuit.hpp"
#include "ghzsim/fock.hpp"

namespace ghzsim {

inline constexpr int kSources = 6;

/// Lower-triangular rows expressing photon i's internal wavefunction over the
/// orthonormal spanning set e_0..e_i, from the uniform-overlap Gram matrix.
struct GramCoefficients {
  int n = 0;
  Eigen::MatrixXd rows;  // n x n, row i has entries for j <= i

  double coeff(int i, int j) const { return rows(i, j); }
};

/// Cholesky rows of the n x n matrix with 1 on the diagonal and v elsewhere.
/// v = 1 collapses every row onto e_0; v = 0 is the identity.
GramCoefficients gram_coefficients(double overlap, int n);

/// Photons emitted per source; entries are 1 or 2 (higher orders are not modeled).
struct EmissionEvent {
  std::array<uint8_t, kSources> m{1, 1, 1, 1, 1, 1};

  int doubles() const {
    int d = 0;
    for (uint8_t x : m) d += (x == 2);
    return d;
  }
  int photons() const { return kSources + doubles(); }
  uint8_t mask() const {
    uint8_t b = 0;
    for (int i = 0; i < kSources; ++i)
      if (m[static_cast<size_t>(i)] == 2) b = static_cast<uint8_t>(b | (1u << i));
    return b;
  }
  static EmissionEvent from_mask(uint8_t bits) {
    EmissionEvent e;
    for (int i = 0; i < kSources; ++i)
      if (bits & (1u << i)) e.m[static_cast<size_t>(i)] = 2;
    return e;
  }
};

/// One (emission vector, triggered-loss set) pair. Loss sites are addressed by
/// ordinal bit; the event machinery supports up to 64 sites per netlist.
struct Event {
  EmissionEvent emission;
  uint64_t losses = 0;
  double probability = 0.0;

  int triggered() const { return std::popcount(losses); }
};

double event_probability(const Event& e, double g2, std::span<const double> site_probs);

struct EventList {
  std::vector<Event> events;
  double covered_mass = 0.0;
};

/// Events ordered by probability descending, ties broken lexicographically on
/// (emission vector, sorted loss set); truncated at the first prefix with
/// cumulative probability >= coverage. Zero-probability events are never listed.
EventList enumerate_events(double g2, std::span<const double> site_probs, double coverage,
                           size_t max_events = 20'000'000);

/// Event ordering predicate used for ties (after the probability comparison).
bool event_lex_less(const Event& a, const Event& b);

/// prod_i (A_i^dagger)^{m_i}/sqrt(m_i!) |vac> with A_i^dagger = sum_j c[i][j] a^dagger_{source_i,H,j},
/// expanded in the sparse Fock basis. Both photons of a double emission share row i.
PureState build_input_state(const EmissionEvent& e, const GramCoefficients& g, const Netlist& netlist);

/// Input with each source's photons carrying that source's index as the
/// distinguishability label; equals build_input_state at overlap 0.
PureState labeled_input_state(const EmissionEvent& e, const Netlist& netlist);

}  // namespace ghzsim
