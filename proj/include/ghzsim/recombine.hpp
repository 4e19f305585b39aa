#pragma once

#include <array>
#include <cstdint>

#include "ghzsim/circuit.hpp"
#include "ghzsim/fock.hpp"
#include "ghzsim/herald.hpp"

namespace ghzsim {

/// Dense polynomial in the pairwise overlap v, degree <= photon number.
struct OverlapPoly {
  std::array<double, kMaxPhotons + 1> c{};
  int degree = 0;

  double operator()(double v) const {
    double r = 0.0;
    for (int i = degree; i >= 0; --i) r = r * v + c[static_cast<size_t>(i)];
    return r;
  }
  void add(const OverlapPoly& p, double w);
  friend OverlapPoly operator*(const OverlapPoly& a, const OverlapPoly& b);
};

/// Branch measures as polynomials in the uniform pairwise overlap. Evaluating
/// at v reproduces branch_measures() on the overlap-v input state exactly:
/// one labeled circuit run covers every overlap value.
struct MeasurePolys {
  OverlapPoly success;  // sixfold-accepted mass
  OverlapPoly ghz;      // sign-corrected GHZ numerator
  OverlapPoly herald;   // all-zero unless requested
  int photons = 0;

  BranchMeasures at(double v) const { return {success(v), ghz(v), herald(v)}; }
};

/// Contracts the run() output of a source-labeled input (photon of source i
/// carries distinguishability index i) against the uniform-overlap Gram
/// structure. Pairs of accepted components with matching mode patterns are
/// weighted by per-slot permanents of the label-overlap matrix.
MeasurePolys contract_labeled_output(const PureState& labeled_output, const Netlist& netlist, const SignTable& signs,
                                     bool want_herald = false);

}  // namespace ghzsim
