#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "ghzsim/circuit.hpp"
#include "ghzsim/herald.hpp"
#include "ghzsim/recombine.hpp"
#include "ghzsim/sources.hpp"

namespace ghzsim {

struct ParameterRange {
  double min = 0.0, max = 0.0, def = 0.0;
};

/// Parameter regime: ranges and defaults for the five error parameters.
struct Regime {
  std::string name;
  ParameterRange ovl, g2, p_prep, p_ops, p_det;

  const ParameterRange& range(const std::string& param) const;
};

const std::vector<Regime>& builtin_regimes();
const Regime* find_regime(const std::string& name);

struct LossProbs {
  double prep = 0.0, ops = 0.0, det = 0.0;
};

/// Simplified loss model: p_T = p_L * max_T + (1 - p_L) * min_T per loss type.
LossProbs simplified_loss(double p_l, const Regime& r);

struct PointParams {
  double ovl = 1.0;
  double g2 = 0.0;
  LossProbs loss;
};

enum class LossSemantics : uint8_t {
  kPerSiteEvents,      // Bernoulli event per loss site; triggered site moves one photon
  kPerPhotonPurified,  // every photon crosses a partial-loss purification at each site
};

struct EngineConfig {
  double coverage = 0.98;
  int max_doubles = 2;  // emission events with more simultaneous doubles are mass-only
  double prune_epsilon = 0.0;
  int threads = 0;  // 0: hardware concurrency
  LossSemantics loss_semantics = LossSemantics::kPerSiteEvents;
};

struct PointMeasures {
  std::optional<double> fidelity;
  double success = 0.0;
  double success_normalized = 0.0;
  double covered_mass = 0.0;
  size_t simulated_branches = 0;
};

struct CacheEntry {
  MeasurePolys polys;
};

/// Mixture evaluator with a per-event measure cache.
///
/// Events are folded by probability class: classes of equal-probability events
/// are included in decreasing per-event probability until the requested
/// coverage is reached (whole classes, so covered mass is >= coverage).
/// Only events that can reach a sixfold pattern (triggered sites == doubles,
/// photon counting) are simulated; the rest contribute probability mass only.
class MeasureEngine {
 public:
  MeasureEngine(Netlist netlist, EngineConfig cfg);
  ~MeasureEngine();

  const Netlist& netlist() const { return netlist_; }
  const SignTable& signs() const { return signs_; }
  const EngineConfig& config() const { return cfg_; }

  /// Amplitude-reuse route: one labeled run per event, recombined per overlap.
  PointMeasures evaluate(const PointParams& p);

  /// Reference route: per event, the overlap-expanded input is built and run
  /// directly, measures taken from branch_measures. Same event selection.
  PointMeasures evaluate_direct(const PointParams& p);

  /// Number of cached per-event measure records.
  size_t cache_size() const;

  /// Serialized cache entries (event key + polynomial coefficients).
  std::vector<std::pair<std::pair<uint8_t, uint64_t>, MeasurePolys>> export_cache() const;
  void import_cache(const std::vector<std::pair<std::pair<uint8_t, uint64_t>, MeasurePolys>>& entries);

 private:
  struct Impl;
  PointMeasures evaluate_impl_(const PointParams& p, bool direct);
  PointMeasures evaluate_per_photon_(const PointParams& p);
  MeasurePolys run_purified_event_(uint8_t emission_mask, const LossProbs& loss);
  void ensure_class_polys_(size_t measure_class_slot);

  Netlist netlist_;
  EngineConfig cfg_;
  SignTable signs_;
  std::unique_ptr<Impl> impl_;
};

struct AxisSpec {
  std::string param;  // ovl | g2 | p_l | p_prep | p_ops | p_det
  std::vector<double> values;
};

struct GridPoint {
  PointParams params;
  std::optional<double> p_l;  // set when the simplified model drives the loss probs
  PointMeasures measures;
};

/// Complete cartesian grid; points in row-major order, last axis fastest.
struct MeasureGrid {
  std::vector<AxisSpec> axes;
  std::vector<GridPoint> points;

  size_t axis_index(const std::string& param) const;  // throws if absent
  size_t point_index(std::span<const size_t> coords) const;
};

struct SweepOptions {
  bool simplified = false;  // p_l axis drives prep/ops/det via simplified_loss
};

/// Evaluates the cartesian grid with the amplitude-reuse engine; unspecified
/// parameters sit at the regime defaults (p_l at 0.5 under the simplified model).
MeasureGrid sweep(MeasureEngine& engine, const Regime& r, std::span<const AxisSpec> axes, const SweepOptions& opt = {});

enum class Measure : uint8_t { kFidelity, kSuccessNormalized };

/// Eq.-style relative image range on a grid: variation along `param` with the
/// other axes snapped to the regime defaults, over the full-grid variation.
/// Empty when the full-grid variation vanishes.
std::optional<double> relative_image_range(const MeasureGrid& grid, const Regime& r, const std::string& param,
                                           Measure m);

/// Pearson correlation under the uniform grid distribution. With
/// orient_one_minus the result is negated, matching Corr(1-p, m) = -Corr(p, m).
std::optional<double> correlation_coefficient(const MeasureGrid& grid, const std::string& param, Measure m,
                                              bool orient_one_minus);

struct InfluenceEntry {
  double fidelity = 0.0;
  double success = 0.0;
};

struct InfluenceOptions {
  bool paper_grid = true;  // 0.25% overlap steps, 201-point g2/p_L axes
  int coarse_points = 21;  // per-axis density when paper_grid is false
};

struct InfluenceReport {
  // simplified loss model (three parameters)
  InfluenceEntry corr_ovl, corr_g2, corr_pl;  // g2 and p_L with 1-p orientation
  InfluenceEntry delta_ovl, delta_g2, delta_pl;
  // full model, one loss type varied at a time
  InfluenceEntry delta_prep, delta_ops, delta_det;

  double min_covered_mass = 1.0;
  size_t grid_points = 0;
};

InfluenceReport influence_report(MeasureEngine& engine, const Regime& r, const InfluenceOptions& opt = {});

struct RegimeExtremes {
  double fidelity_min = 0.0, fidelity_max = 0.0;
  double success_min = 0.0, success_max = 0.0;
};

/// Measures at the parameter-box corners plus the default point. With
/// `simplified` the box is (ovl, g2, p_L), otherwise all five parameters.
RegimeExtremes regime_extremes(MeasureEngine& engine, const Regime& r, bool simplified);

/// Site probabilities by category for every loss site of a netlist, in site order.
std::vector<double> site_probabilities(const Netlist& n, const LossProbs& loss);

}  // namespace ghzsim
