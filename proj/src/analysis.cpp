#include "ghzsim/analysis.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <functional>
#include <limits>
#include <mutex>
#include <numeric>
#include <stdexcept>
#include <thread>

namespace ghzsim {

namespace {

double nan_value() { return std::numeric_limits<double>::quiet_NaN(); }

int hardware_threads(int requested) {
  if (requested > 0) return requested;
  const unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 4 : static_cast<int>(hc);
}

void parallel_for(int threads, size_t n, const std::function<void(size_t)>& fn) {
  if (n == 0) return;
  const int team = std::min<int>(threads, static_cast<int>(n));
  if (team <= 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(team));
  for (int t = 0; t < team; ++t) {
    pool.emplace_back([&] {
      for (;;) {
        const size_t i = next.fetch_add(1);
        if (i >= n) return;
        fn(i);
      }
    });
  }
  for (auto& th : pool) th.join();
}

constexpr double kBinom6[7] = {1, 6, 15, 20, 15, 6, 1};

double binom(int n, int k) {
  if (k < 0 || k > n) return 0.0;
  double r = 1.0;
  for (int i = 0; i < k; ++i) r = r * static_cast<double>(n - i) / static_cast<double>(i + 1);
  return r;
}

}  // namespace

const ParameterRange& Regime::range(const std::string& param) const {
  if (param == "ovl") return ovl;
  if (param == "g2") return g2;
  if (param == "p_prep") return p_prep;
  if (param == "p_ops") return p_ops;
  if (param == "p_det") return p_det;
  if (param == "p_l") {
    static const ParameterRange pl{0.0, 1.0, 0.5};
    return pl;
  }
  throw std::invalid_argument("unknown parameter: " + param);
}

const std::vector<Regime>& builtin_regimes() {
  static const std::vector<Regime> regimes = {
      {"spdc",
       {0.9725, 0.995, 0.99},
       {0.010, 0.020, 0.015},
       {0.050, 0.150, 0.100},
       {0.010, 0.020, 0.015},
       {0.050, 0.150, 0.100}},
      {"solid-state",
       {0.8825, 0.9925, 0.94},
       {0.000075, 0.021, 0.0025},
       {0.026, 0.114, 0.070},
       {0.010, 0.020, 0.015},
       {0.050, 0.150, 0.100}},
      {"close-to-optimal",
       {0.99, 1.0, 0.995},
       {0.0, 0.020, 0.010},
       {0.0, 0.040, 0.020},
       {0.0, 0.005, 0.0025},
       {0.0, 0.040, 0.020}},
  };
  return regimes;
}

const Regime* find_regime(const std::string& name) {
  for (const Regime& r : builtin_regimes())
    if (r.name == name) return &r;
  return nullptr;
}

LossProbs simplified_loss(double p_l, const Regime& r) {
  if (p_l < 0.0 || p_l > 1.0) throw std::invalid_argument("simplified_loss: p_L outside [0,1]");
  return {p_l * r.p_prep.max + (1.0 - p_l) * r.p_prep.min, p_l * r.p_ops.max + (1.0 - p_l) * r.p_ops.min,
          p_l * r.p_det.max + (1.0 - p_l) * r.p_det.min};
}

std::vector<double> site_probabilities(const Netlist& n, const LossProbs& loss) {
  std::vector<double> probs;
  for (const LossSite* s : n.loss_sites()) {
    switch (s->category) {
      case LossCategory::Prep: probs.push_back(loss.prep); break;
      case LossCategory::Ops: probs.push_back(loss.ops); break;
      case LossCategory::Det: probs.push_back(loss.det); break;
    }
  }
  return probs;
}

// ---------------------------------------------------------------------------

struct EventKeyHash {
  size_t operator()(const std::pair<uint8_t, uint64_t>& k) const {
    return std::hash<uint64_t>{}(k.second * 0x9E3779B97F4A7C15ull + k.first);
  }
};

struct MeasureEngine::Impl {
  // loss sites grouped by category; the class fold runs over per-category counts
  std::array<std::vector<int>, 3> sites_by_cat;  // ordinals
  int n_sites = 0;

  struct ClassId {
    int doubles;
    std::array<int, 3> k;  // triggered per category
  };
  std::vector<ClassId> classes;

  struct MeasureClass {
    ClassId id;
    std::vector<std::pair<uint8_t, uint64_t>> members;  // (emission mask, loss mask)
    MeasurePolys summed;
    std::once_flag fill_once;
    std::atomic<bool> ready{false};
  };
  std::vector<std::unique_ptr<MeasureClass>> measure_classes;  // indexed by class list position
  std::unordered_map<size_t, size_t> measure_class_of;         // class index -> measure_classes slot

  mutable std::mutex cache_mutex;
  std::unordered_map<std::pair<uint8_t, uint64_t>, CacheEntry, EventKeyHash> event_cache;

  // per-photon semantics: cache keyed by (emission, loss prob bit patterns)
  struct PhotonKeyHash {
    size_t operator()(const std::array<uint64_t, 4>& k) const {
      size_t h = 0;
      for (uint64_t v : k) h = h * 0x100000001B3ull + std::hash<uint64_t>{}(v);
      return h;
    }
  };
  std::unordered_map<std::array<uint64_t, 4>, CacheEntry, PhotonKeyHash> photon_cache;

  int threads = 1;
};

MeasureEngine::~MeasureEngine() = default;

MeasureEngine::MeasureEngine(Netlist netlist, EngineConfig cfg)
    : netlist_(std::move(netlist)), cfg_(cfg), signs_(derive_sign_table(netlist_)), impl_(new Impl) {
  const auto sites = netlist_.loss_sites();
  if (sites.size() > 64) throw std::invalid_argument("MeasureEngine: more than 64 loss sites");
  impl_->n_sites = static_cast<int>(sites.size());
  for (int i = 0; i < impl_->n_sites; ++i)
    impl_->sites_by_cat[static_cast<size_t>(sites[static_cast<size_t>(i)]->category)].push_back(i);
  impl_->threads = hardware_threads(cfg_.threads);

  const int n0 = static_cast<int>(impl_->sites_by_cat[0].size());
  const int n1 = static_cast<int>(impl_->sites_by_cat[1].size());
  const int n2 = static_cast<int>(impl_->sites_by_cat[2].size());
  for (int d = 0; d <= kSources; ++d)
    for (int k0 = 0; k0 <= n0; ++k0)
      for (int k1 = 0; k1 <= n1; ++k1)
        for (int k2 = 0; k2 <= n2; ++k2) impl_->classes.push_back({d, {k0, k1, k2}});

  // measure classes: triggered sites == doubles (photon counting plus the
  // occupied-site property of the canonical layout), doubles capped by config
  for (size_t ci = 0; ci < impl_->classes.size(); ++ci) {
    const auto& c = impl_->classes[ci];
    const int L = c.k[0] + c.k[1] + c.k[2];
    if (L != c.doubles || c.doubles > cfg_.max_doubles) continue;
    auto mc = std::make_unique<Impl::MeasureClass>();
    mc->id = c;

    // emission masks in lexicographic order of the emission vector
    std::vector<uint8_t> ems;
    for (uint8_t m = 0; m < 64; ++m)
      if (std::popcount(m) == c.doubles) ems.push_back(m);
    std::sort(ems.begin(), ems.end(), [](uint8_t a, uint8_t b) {
      Event ea, eb;
      ea.emission = EmissionEvent::from_mask(a);
      eb.emission = EmissionEvent::from_mask(b);
      return event_lex_less(ea, eb);
    });

    // loss masks: per-category combinations
    std::vector<uint64_t> loss_masks{0};
    for (int cat = 0; cat < 3; ++cat) {
      const auto& ords = impl_->sites_by_cat[static_cast<size_t>(cat)];
      const int kk = c.k[static_cast<size_t>(cat)];
      if (kk == 0) continue;
      std::vector<uint64_t> combos;
      std::vector<int> pick(static_cast<size_t>(kk));
      std::iota(pick.begin(), pick.end(), 0);
      for (;;) {
        uint64_t m = 0;
        for (int p : pick) m |= 1ull << ords[static_cast<size_t>(p)];
        combos.push_back(m);
        int i = kk - 1;
        while (i >= 0 && pick[static_cast<size_t>(i)] == static_cast<int>(ords.size()) - kk + i) --i;
        if (i < 0) break;
        ++pick[static_cast<size_t>(i)];
        for (int j = i + 1; j < kk; ++j) pick[static_cast<size_t>(j)] = pick[static_cast<size_t>(j - 1)] + 1;
      }
      std::vector<uint64_t> merged;
      merged.reserve(loss_masks.size() * combos.size());
      for (uint64_t a : loss_masks)
        for (uint64_t b : combos) merged.push_back(a | b);
      loss_masks.swap(merged);
    }
    std::sort(loss_masks.begin(), loss_masks.end(), [](uint64_t a, uint64_t b) {
      Event ea, eb;
      ea.losses = a;
      eb.losses = b;
      return event_lex_less(ea, eb);
    });

    mc->members.reserve(ems.size() * loss_masks.size());
    for (uint8_t em : ems)
      for (uint64_t lm : loss_masks) mc->members.emplace_back(em, lm);

    impl_->measure_class_of[ci] = impl_->measure_classes.size();
    impl_->measure_classes.push_back(std::move(mc));
  }
}

size_t MeasureEngine::cache_size() const {
  std::lock_guard<std::mutex> lock(impl_->cache_mutex);
  return impl_->event_cache.size();
}

namespace {

MeasurePolys compute_event_polys(const Netlist& netlist, const SignTable& signs, const EngineConfig& cfg,
                                 uint8_t emission_mask, uint64_t losses) {
  const EmissionEvent em = EmissionEvent::from_mask(emission_mask);
  const PureState input = labeled_input_state(em, netlist);
  const PureState out = run(netlist, input, losses, {cfg.prune_epsilon});
  return contract_labeled_output(out, netlist, signs, false);
}

}  // namespace

void MeasureEngine::import_cache(const std::vector<std::pair<std::pair<uint8_t, uint64_t>, MeasurePolys>>& entries) {
  std::lock_guard<std::mutex> lock(impl_->cache_mutex);
  for (const auto& [key, polys] : entries) impl_->event_cache[key] = CacheEntry{polys};
}

std::vector<std::pair<std::pair<uint8_t, uint64_t>, MeasurePolys>> MeasureEngine::export_cache() const {
  std::lock_guard<std::mutex> lock(impl_->cache_mutex);
  std::vector<std::pair<std::pair<uint8_t, uint64_t>, MeasurePolys>> out;
  out.reserve(impl_->event_cache.size());
  for (const auto& [key, entry] : impl_->event_cache) out.emplace_back(key, entry.polys);
  std::sort(out.begin(), out.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  return out;
}

// ---------------------------------------------------------------------------

namespace {

struct ClassWalkItem {
  size_t class_index;
  double event_prob;
  double mass;
};

}  // namespace

PointMeasures MeasureEngine::evaluate(const PointParams& p) {
  if (cfg_.loss_semantics == LossSemantics::kPerPhotonPurified) return evaluate_per_photon_(p);
  return evaluate_impl_(p, false);
}

PointMeasures MeasureEngine::evaluate_direct(const PointParams& p) {
  if (cfg_.loss_semantics == LossSemantics::kPerPhotonPurified)
    throw std::invalid_argument("evaluate_direct: only per-site event semantics");
  return evaluate_impl_(p, true);
}

PointMeasures MeasureEngine::evaluate_impl_(const PointParams& p, bool direct) {
  if (p.ovl < 0 || p.ovl > 1 || p.g2 < 0 || p.g2 >= 1)
    throw std::invalid_argument("evaluate: parameters outside range");
  const std::array<double, 3> cat_p = {p.loss.prep, p.loss.ops, p.loss.det};
  for (double q : cat_p)
    if (q < 0 || q >= 1) throw std::invalid_argument("evaluate: loss probability outside [0,1)");

  const std::array<size_t, 3> n_cat = {impl_->sites_by_cat[0].size(), impl_->sites_by_cat[1].size(),
                                       impl_->sites_by_cat[2].size()};

  // per-class probabilities at this parameter point
  std::vector<ClassWalkItem> walk;
  walk.reserve(impl_->classes.size());
  for (size_t ci = 0; ci < impl_->classes.size(); ++ci) {
    const auto& c = impl_->classes[ci];
    double ep = std::pow(p.g2, c.doubles) * std::pow(1.0 - p.g2, kSources - c.doubles);
    double mult = kBinom6[c.doubles];
    for (int cat = 0; cat < 3; ++cat) {
      const int n = static_cast<int>(n_cat[static_cast<size_t>(cat)]);
      const int k = c.k[static_cast<size_t>(cat)];
      ep *= std::pow(cat_p[static_cast<size_t>(cat)], k) * std::pow(1.0 - cat_p[static_cast<size_t>(cat)], n - k);
      mult *= binom(n, k);
    }
    const double mass = ep * mult;
    if (mass <= 0.0) continue;
    walk.push_back({ci, ep, mass});
  }
  std::sort(walk.begin(), walk.end(), [](const ClassWalkItem& a, const ClassWalkItem& b) {
    if (a.event_prob != b.event_prob) return a.event_prob > b.event_prob;
    return a.class_index < b.class_index;
  });

  const std::vector<double> site_probs = site_probabilities(netlist_, p.loss);
  GramCoefficients gram;
  if (direct) gram = gram_coefficients(p.ovl, kSources);

  PointMeasures out;
  double covered = 0.0, ps = 0.0, pn = 0.0;
  for (const ClassWalkItem& item : walk) {
    covered += item.mass;
    auto mc_it = impl_->measure_class_of.find(item.class_index);
    if (mc_it != impl_->measure_class_of.end()) {
      Impl::MeasureClass& mc = *impl_->measure_classes[mc_it->second];
      out.simulated_branches += mc.members.size();
      if (!direct) {
        ensure_class_polys_(mc_it->second);
        ps += item.event_prob * mc.summed.success(p.ovl);
        pn += item.event_prob * mc.summed.ghz(p.ovl);
      } else {
        for (const auto& [em_mask, loss_mask] : mc.members) {
          const PureState input = build_input_state(EmissionEvent::from_mask(em_mask), gram, netlist_);
          const PureState st = run(netlist_, input, loss_mask, {cfg_.prune_epsilon});
          const BranchMeasures bm = branch_measures(st, netlist_, signs_);
          ps += item.event_prob * bm.success;
          pn += item.event_prob * bm.fidelity_numerator;
        }
      }
    }
    if (covered >= cfg_.coverage - 1e-12) break;
  }
  out.covered_mass = covered;
  out.success = covered > 0 ? ps / covered : 0.0;
  out.success_normalized = out.success * 32.0;
  if (ps > 0) out.fidelity = pn / ps;
  return out;
}

void MeasureEngine::ensure_class_polys_(size_t measure_class_slot) {
  Impl::MeasureClass& mc = *impl_->measure_classes[measure_class_slot];
  if (mc.ready.load(std::memory_order_acquire)) return;
  std::call_once(mc.fill_once, [&] {
    // compute missing event polynomials in parallel, then sum in member order
    std::vector<size_t> missing;
    {
      std::lock_guard<std::mutex> lock(impl_->cache_mutex);
      for (size_t i = 0; i < mc.members.size(); ++i)
        if (!impl_->event_cache.count(mc.members[i])) missing.push_back(i);
    }
    std::vector<std::pair<size_t, MeasurePolys>> computed(missing.size());
    parallel_for(impl_->threads, missing.size(), [&](size_t j) {
      const auto& [em, lm] = mc.members[missing[j]];
      computed[j] = {missing[j], compute_event_polys(netlist_, signs_, cfg_, em, lm)};
    });
    {
      std::lock_guard<std::mutex> lock(impl_->cache_mutex);
      for (auto& [idx, polys] : computed) impl_->event_cache[mc.members[idx]] = CacheEntry{polys};
      for (const auto& member : mc.members) {
        const auto& polys = impl_->event_cache[member].polys;
        mc.summed.success.add(polys.success, 1.0);
        mc.summed.ghz.add(polys.ghz, 1.0);
        mc.summed.photons = std::max(mc.summed.photons, polys.photons);
      }
    }
    mc.ready.store(true, std::memory_order_release);
  });
}

// ---------------------------------------------------------------------------
// per-photon purified-loss semantics: only emission events are enumerated;
// every loss site acts as a partial-loss purification on every branch

PointMeasures MeasureEngine::evaluate_per_photon_(const PointParams& p) {
  struct EmItem {
    uint8_t mask;
    double prob;
  };
  std::vector<EmItem> items;
  for (uint8_t m = 0; m < 64; ++m) {
    const int d = std::popcount(m);
    const double prob = std::pow(p.g2, d) * std::pow(1.0 - p.g2, kSources - d);
    if (prob > 0.0) items.push_back({m, prob});
  }
  std::sort(items.begin(), items.end(), [](const EmItem& a, const EmItem& b) {
    if (a.prob != b.prob) return a.prob > b.prob;
    Event ea, eb;
    ea.emission = EmissionEvent::from_mask(a.mask);
    eb.emission = EmissionEvent::from_mask(b.mask);
    return event_lex_less(ea, eb);
  });

  const std::array<uint64_t, 3> prob_bits = {std::bit_cast<uint64_t>(p.loss.prep),
                                             std::bit_cast<uint64_t>(p.loss.ops),
                                             std::bit_cast<uint64_t>(p.loss.det)};
  PointMeasures out;
  double covered = 0.0, ps = 0.0, pn = 0.0;
  for (const EmItem& item : items) {
    covered += item.prob;
    if (std::popcount(item.mask) <= cfg_.max_doubles) {
      const std::array<uint64_t, 4> key = {item.mask, prob_bits[0], prob_bits[1], prob_bits[2]};
      const MeasurePolys* polys = nullptr;
      {
        std::lock_guard<std::mutex> lock(impl_->cache_mutex);
        auto it = impl_->photon_cache.find(key);
        if (it != impl_->photon_cache.end()) polys = &it->second.polys;
      }
      if (!polys) {
        const MeasurePolys computed = run_purified_event_(item.mask, p.loss);
        std::lock_guard<std::mutex> lock(impl_->cache_mutex);
        polys = &impl_->photon_cache.emplace(key, CacheEntry{computed}).first->second.polys;
      }
      out.simulated_branches += 1;
      ps += item.prob * polys->success(p.ovl);
      pn += item.prob * polys->ghz(p.ovl);
    }
    if (covered >= cfg_.coverage - 1e-12) break;
  }
  out.covered_mass = covered;
  out.success = covered > 0 ? ps / covered : 0.0;
  out.success_normalized = out.success * 32.0;
  if (ps > 0) out.fidelity = pn / ps;
  return out;
}

MeasurePolys MeasureEngine::run_purified_event_(uint8_t emission_mask, const LossProbs& loss) {
  const EmissionEvent em = EmissionEvent::from_mask(emission_mask);
  PureState state = labeled_input_state(em, netlist_);
  const int photons = em.photons();
  const int budget = photons - 2 * static_cast<int>(netlist_.output_channels.size());
  const uint16_t first_loss = netlist_.channel_count();

  auto prune_lost = [&](PureState& s) {
    auto& terms = s.mutable_terms();
    std::erase_if(terms, [&](const Term& t) {
      int lost = 0;
      for (uint16_t pm : t.state.modes())
        if (ModeKey::unpack(pm).channel >= first_loss) ++lost;
      return lost > budget;
    });
  };

  int ordinal = 0;
  for (const Element& e : netlist_.elements) {
    if (const auto* w = std::get_if<Waveplate>(&e)) {
      state = apply_polarization_rotation(state, w->channel, w->angle, cfg_.prune_epsilon);
    } else if (const auto* pb = std::get_if<Pbs>(&e)) {
      state = apply_pbs(state, pb->in1, pb->in2, pb->out1, pb->out2);
    } else if (const auto* s = std::get_if<LossSite>(&e)) {
      double q = 0.0;
      switch (s->category) {
        case LossCategory::Prep: q = loss.prep; break;
        case LossCategory::Ops: q = loss.ops; break;
        case LossCategory::Det: q = loss.det; break;
      }
      if (q > 0.0) {
        state = apply_partial_loss(state, s->channel, netlist_.loss_channel(ordinal), q, cfg_.prune_epsilon);
        prune_lost(state);
      }
      ++ordinal;
    }
  }
  return contract_labeled_output(state, netlist_, signs_, false);
}

// ---------------------------------------------------------------------------

size_t MeasureGrid::axis_index(const std::string& param) const {
  for (size_t i = 0; i < axes.size(); ++i)
    if (axes[i].param == param) return i;
  throw std::invalid_argument("grid has no axis " + param);
}

size_t MeasureGrid::point_index(std::span<const size_t> coords) const {
  size_t idx = 0;
  for (size_t a = 0; a < axes.size(); ++a) idx = idx * axes[a].values.size() + coords[a];
  return idx;
}

MeasureGrid sweep(MeasureEngine& engine, const Regime& r, std::span<const AxisSpec> axes, const SweepOptions& opt) {
  static const std::vector<std::string> kKnown = {"ovl", "g2", "p_l", "p_prep", "p_ops", "p_det"};
  for (const AxisSpec& a : axes) {
    if (a.values.empty()) throw std::invalid_argument("sweep: empty axis " + a.param);
    if (std::find(kKnown.begin(), kKnown.end(), a.param) == kKnown.end())
      throw std::invalid_argument("sweep: unknown axis " + a.param);
    if (a.param == "p_l" && !opt.simplified)
      throw std::invalid_argument("sweep: the p_l axis requires the simplified loss model");
    if (opt.simplified && (a.param == "p_prep" || a.param == "p_ops" || a.param == "p_det"))
      throw std::invalid_argument("sweep: per-type loss axes conflict with the simplified model");
  }

  MeasureGrid grid;
  grid.axes.assign(axes.begin(), axes.end());
  size_t total = 1;
  for (const AxisSpec& a : axes) total *= a.values.size();
  grid.points.resize(total);

  const int threads = hardware_threads(engine.config().threads);
  parallel_for(threads, total, [&](size_t idx) {
    std::vector<size_t> coords(axes.size());
    size_t rem = idx;
    for (size_t a = axes.size(); a-- > 0;) {
      coords[a] = rem % axes[a].values.size();
      rem /= axes[a].values.size();
    }
    PointParams p;
    p.ovl = r.ovl.def;
    p.g2 = r.g2.def;
    std::optional<double> p_l;
    if (opt.simplified) p_l = 0.5;
    LossProbs explicit_loss{r.p_prep.def, r.p_ops.def, r.p_det.def};
    for (size_t a = 0; a < axes.size(); ++a) {
      const double v = axes[a].values[coords[a]];
      const std::string& name = axes[a].param;
      if (name == "ovl")
        p.ovl = v;
      else if (name == "g2")
        p.g2 = v;
      else if (name == "p_l")
        p_l = v;
      else if (name == "p_prep")
        explicit_loss.prep = v;
      else if (name == "p_ops")
        explicit_loss.ops = v;
      else
        explicit_loss.det = v;
    }
    GridPoint& gp = grid.points[idx];
    if (p_l) {
      p.loss = simplified_loss(*p_l, r);
      gp.p_l = *p_l;
    } else {
      p.loss = explicit_loss;
    }
    gp.params = p;
    gp.measures = engine.evaluate(p);
  });
  return grid;
}

namespace {

double measure_value(const GridPoint& gp, Measure m) {
  if (m == Measure::kFidelity) return gp.measures.fidelity.value_or(nan_value());
  return gp.measures.success_normalized;
}

size_t nearest_index(std::span<const double> values, double target) {
  size_t best = 0;
  double dist = std::abs(values[0] - target);
  for (size_t i = 1; i < values.size(); ++i) {
    const double d = std::abs(values[i] - target);
    if (d < dist) {
      best = i;
      dist = d;
    }
  }
  return best;
}

}  // namespace

std::optional<double> relative_image_range(const MeasureGrid& grid, const Regime& r, const std::string& param,
                                           Measure m) {
  const size_t axis = grid.axis_index(param);
  // other axes snapped to the regime defaults
  std::vector<size_t> coords(grid.axes.size());
  for (size_t a = 0; a < grid.axes.size(); ++a) {
    if (a == axis) continue;
    coords[a] = nearest_index(grid.axes[a].values, r.range(grid.axes[a].param).def);
  }
  double line_min = std::numeric_limits<double>::infinity();
  double line_max = -line_min;
  for (size_t i = 0; i < grid.axes[axis].values.size(); ++i) {
    coords[axis] = i;
    const double v = measure_value(grid.points[grid.point_index(coords)], m);
    if (std::isnan(v)) continue;
    line_min = std::min(line_min, v);
    line_max = std::max(line_max, v);
  }
  double all_min = std::numeric_limits<double>::infinity();
  double all_max = -all_min;
  for (const GridPoint& gp : grid.points) {
    const double v = measure_value(gp, m);
    if (std::isnan(v)) continue;
    all_min = std::min(all_min, v);
    all_max = std::max(all_max, v);
  }
  const double den = all_max - all_min;
  if (!(den > 0.0)) return std::nullopt;
  return (line_max - line_min) / den;
}

std::optional<double> correlation_coefficient(const MeasureGrid& grid, const std::string& param, Measure m,
                                              bool orient_one_minus) {
  const size_t axis = grid.axis_index(param);
  const auto& values = grid.axes[axis].values;
  if (values.size() < 2) return std::nullopt;

  const double n_points = static_cast<double>(grid.points.size());
  double p_mean = 0.0;
  for (double v : values) p_mean += v;
  p_mean /= static_cast<double>(values.size());

  double m_mean = 0.0;
  for (const GridPoint& gp : grid.points) m_mean += measure_value(gp, m);
  m_mean /= n_points;

  // uniform-weight sums over the complete grid
  double cov = 0.0, var_m = 0.0;
  std::vector<size_t> coords(grid.axes.size());
  for (size_t idx = 0; idx < grid.points.size(); ++idx) {
    size_t rem = idx;
    for (size_t a = grid.axes.size(); a-- > 0;) {
      coords[a] = rem % grid.axes[a].values.size();
      rem /= grid.axes[a].values.size();
    }
    const double pv = values[coords[axis]];
    const double mv = measure_value(grid.points[idx], m);
    cov += (pv - p_mean) * (mv - m_mean);
    var_m += (mv - m_mean) * (mv - m_mean);
  }
  cov /= n_points;
  var_m /= n_points;
  double var_p = 0.0;
  for (double v : values) var_p += (v - p_mean) * (v - p_mean);
  var_p /= static_cast<double>(values.size());

  if (!(var_p > 0.0) || !(var_m > 0.0)) return std::nullopt;
  const double corr = cov / std::sqrt(var_p * var_m);
  return orient_one_minus ? -corr : corr;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<double> linspace(double lo, double hi, int n) {
  std::vector<double> v;
  v.reserve(static_cast<size_t>(n));
  if (n == 1) {
    v.push_back(lo);
    return v;
  }
  for (int i = 0; i < n; ++i) v.push_back(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1));
  return v;
}

std::vector<double> overlap_axis(const Regime& r, bool paper_grid, int coarse_points) {
  if (!paper_grid) return linspace(r.ovl.min, r.ovl.max, coarse_points);
  std::vector<double> v;
  const double step = 0.0025;  // 0.25% steps
  for (double x = r.ovl.min; x <= r.ovl.max + 1e-12; x += step) v.push_back(std::min(x, r.ovl.max));
  return v;
}

}  // namespace

RegimeExtremes regime_extremes(MeasureEngine& engine, const Regime& r, bool simplified) {
  std::vector<PointParams> corners;
  auto pick = [](const ParameterRange& pr, int bit) { return bit ? pr.max : pr.min; };
  if (simplified) {
    for (int c = 0; c < 8; ++c) {
      PointParams p;
      p.ovl = pick(r.ovl, c & 1);
      p.g2 = pick(r.g2, (c >> 1) & 1);
      p.loss = simplified_loss((c >> 2) & 1 ? 1.0 : 0.0, r);
      corners.push_back(p);
    }
    corners.push_back({r.ovl.def, r.g2.def, simplified_loss(0.5, r)});
  } else {
    for (int c = 0; c < 32; ++c) {
      PointParams p;
      p.ovl = pick(r.ovl, c & 1);
      p.g2 = pick(r.g2, (c >> 1) & 1);
      p.loss = {pick(r.p_prep, (c >> 2) & 1), pick(r.p_ops, (c >> 3) & 1), pick(r.p_det, (c >> 4) & 1)};
      corners.push_back(p);
    }
    corners.push_back({r.ovl.def, r.g2.def, {r.p_prep.def, r.p_ops.def, r.p_det.def}});
  }
  RegimeExtremes ex;
  ex.fidelity_min = ex.success_min = std::numeric_limits<double>::infinity();
  ex.fidelity_max = ex.success_max = -ex.fidelity_min;
  for (const PointParams& p : corners) {
    // g2 = 1 is outside the engine's domain; clamp just below
    PointParams q = p;
    if (q.g2 >= 1.0) q.g2 = std::nextafter(1.0, 0.0);
    const PointMeasures pm = engine.evaluate(q);
    if (pm.fidelity) {
      ex.fidelity_min = std::min(ex.fidelity_min, *pm.fidelity);
      ex.fidelity_max = std::max(ex.fidelity_max, *pm.fidelity);
    }
    ex.success_min = std::min(ex.success_min, pm.success_normalized);
    ex.success_max = std::max(ex.success_max, pm.success_normalized);
  }
  return ex;
}

InfluenceReport influence_report(MeasureEngine& engine, const Regime& r, const InfluenceOptions& opt) {
  InfluenceReport rep;

  const int n_fine = opt.paper_grid ? 201 : opt.coarse_points;
  std::vector<AxisSpec> axes = {
      {"ovl", overlap_axis(r, opt.paper_grid, opt.coarse_points)},
      {"g2", linspace(r.g2.min, r.g2.max, n_fine)},
      {"p_l", linspace(0.0, 1.0, n_fine)},
  };
  const MeasureGrid grid = sweep(engine, r, axes, {.simplified = true});
  rep.grid_points = grid.points.size();
  for (const GridPoint& gp : grid.points) rep.min_covered_mass = std::min(rep.min_covered_mass, gp.measures.covered_mass);

  auto entry_corr = [&](const std::string& param, bool flip) {
    return InfluenceEntry{correlation_coefficient(grid, param, Measure::kFidelity, flip).value_or(nan_value()),
                          correlation_coefficient(grid, param, Measure::kSuccessNormalized, flip).value_or(nan_value())};
  };
  auto entry_delta = [&](const std::string& param) {
    return InfluenceEntry{relative_image_range(grid, r, param, Measure::kFidelity).value_or(nan_value()),
                          relative_image_range(grid, r, param, Measure::kSuccessNormalized).value_or(nan_value())};
  };
  rep.corr_ovl = entry_corr("ovl", false);
  rep.corr_g2 = entry_corr("g2", true);
  rep.corr_pl = entry_corr("p_l", true);
  rep.delta_ovl = entry_delta("ovl");
  rep.delta_g2 = entry_delta("g2");
  rep.delta_pl = entry_delta("p_l");

  // full model: one loss type varied along its range, everything else at the
  // defaults; denominator from the full-model box corners and observed values
  const RegimeExtremes full = regime_extremes(engine, r, false);
  double f_min = full.fidelity_min, f_max = full.fidelity_max;
  double s_min = full.success_min, s_max = full.success_max;

  struct Line {
    std::string param;
    InfluenceEntry* entry;
  };
  std::array<Line, 3> lines = {Line{"p_prep", &rep.delta_prep}, Line{"p_ops", &rep.delta_ops},
                               Line{"p_det", &rep.delta_det}};
  struct LineRange {
    double f_lo, f_hi, s_lo, s_hi;
  };
  std::array<LineRange, 3> ranges{};
  for (size_t li = 0; li < lines.size(); ++li) {
    const ParameterRange& pr = r.range(lines[li].param);
    std::vector<AxisSpec> line_axis = {{lines[li].param, linspace(pr.min, pr.max, n_fine)}};
    const MeasureGrid lg = sweep(engine, r, line_axis, {.simplified = false});
    LineRange lr{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(),
                 std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
    for (const GridPoint& gp : lg.points) {
      const double f = gp.measures.fidelity.value_or(nan_value());
      if (!std::isnan(f)) {
        lr.f_lo = std::min(lr.f_lo, f);
        lr.f_hi = std::max(lr.f_hi, f);
        f_min = std::min(f_min, f);
        f_max = std::max(f_max, f);
      }
      lr.s_lo = std::min(lr.s_lo, gp.measures.success_normalized);
      lr.s_hi = std::max(lr.s_hi, gp.measures.success_normalized);
      s_min = std::min(s_min, gp.measures.success_normalized);
      s_max = std::max(s_max, gp.measures.success_normalized);
    }
    ranges[li] = lr;
  }
  for (size_t li = 0; li < lines.size(); ++li) {
    lines[li].entry->fidelity = (f_max - f_min) > 0 ? (ranges[li].f_hi - ranges[li].f_lo) / (f_max - f_min) : nan_value();
    lines[li].entry->success = (s_max - s_min) > 0 ? (ranges[li].s_hi - ranges[li].s_lo) / (s_max - s_min) : nan_value();
  }
  return rep;
}

}  // namespace ghzsim
