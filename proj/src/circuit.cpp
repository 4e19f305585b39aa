#include "ghzsim/circuit.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <set>

namespace ghzsim {

const char* to_string(LossCategory c) {
  switch (c) {
    case LossCategory::Prep: return "prep";
    case LossCategory::Ops: return "ops";
    case LossCategory::Det: return "det";
  }
  return "?";
}

std::optional<LossCategory> loss_category_from_string(const std::string& s) {
  if (s == "prep") return LossCategory::Prep;
  if (s == "ops") return LossCategory::Ops;
  if (s == "det") return LossCategory::Det;
  return std::nullopt;
}

int Netlist::channel_index(const std::string& name) const {
  for (size_t i = 0; i < channel_names.size(); ++i)
    if (channel_names[i] == name) return static_cast<int>(i);
  return -1;
}

std::vector<const LossSite*> Netlist::loss_sites() const {
  std::vector<const LossSite*> v;
  for (const Element& e : elements)
    if (const auto* s = std::get_if<LossSite>(&e)) v.push_back(s);
  return v;
}

std::vector<const Detector*> Netlist::detectors() const {
  std::vector<const Detector*> v;
  for (const Element& e : elements)
    if (const auto* d = std::get_if<Detector>(&e)) v.push_back(d);
  return v;
}

int Netlist::loss_site_ordinal(const std::string& id) const {
  int ord = 0;
  for (const Element& e : elements) {
    if (const auto* s = std::get_if<LossSite>(&e)) {
      if (s->id == id) return ord;
      ++ord;
    }
  }
  return -1;
}

std::vector<Violation> validate_netlist(const Netlist& n) {
  std::vector<Violation> out;
  const uint16_t nch = n.channel_count();
  auto known = [&](uint16_t ch) { return ch < nch; };

  if (n.source_channels.size() != 6)
    out.push_back({-1, "expected exactly 6 source channels"});
  if (n.output_channels.size() != 3)
    out.push_back({-1, "expected exactly 3 output channels"});
  for (uint16_t c : n.source_channels)
    if (!known(c)) out.push_back({-1, "undeclared source channel"});
  for (uint16_t c : n.output_channels)
    if (!known(c)) out.push_back({-1, "undeclared output channel"});

  std::set<std::string> site_ids, det_ids;
  std::set<uint16_t> dead;  // channels consumed by a detector
  std::set<uint16_t> live(n.source_channels.begin(), n.source_channels.end());
  int det_count = 0;

  for (size_t i = 0; i < n.elements.size(); ++i) {
    const int idx = static_cast<int>(i);
    auto check_live_use = [&](uint16_t ch) {
      if (dead.count(ch)) out.push_back({idx, "detector not terminal: channel used after detection"});
    };
    if (const auto* w = std::get_if<Waveplate>(&n.elements[i])) {
      if (!known(w->channel)) out.push_back({idx, "waveplate on undeclared channel"});
      if (!std::isfinite(w->angle)) out.push_back({idx, "waveplate angle not finite"});
      check_live_use(w->channel);
    } else if (const auto* p = std::get_if<Pbs>(&n.elements[i])) {
      for (uint16_t ch : {p->in1, p->in2, p->out1, p->out2})
        if (!known(ch)) out.push_back({idx, "pbs port on undeclared channel"});
      if (p->in1 == p->in2) out.push_back({idx, "pbs input ports must differ"});
      if (p->out1 == p->out2) out.push_back({idx, "pbs output ports must differ"});
      check_live_use(p->in1);
      check_live_use(p->in2);
      const bool out1_fresh = p->out1 == p->in1 || p->out1 == p->in2 || !live.count(p->out1);
      const bool out2_fresh = p->out2 == p->in1 || p->out2 == p->in2 || !live.count(p->out2);
      if (!out1_fresh || !out2_fresh)
        out.push_back({idx, "pbs output routed into an occupied channel"});
      live.erase(p->in1);
      live.erase(p->in2);
      live.insert(p->out1);
      live.insert(p->out2);
    } else if (const auto* s = std::get_if<LossSite>(&n.elements[i])) {
      if (!known(s->channel)) out.push_back({idx, "loss site on undeclared channel"});
      if (!site_ids.insert(s->id).second) out.push_back({idx, "duplicate loss site id"});
      check_live_use(s->channel);
    } else if (const auto* d = std::get_if<Detector>(&n.elements[i])) {
      if (!known(d->channel)) out.push_back({idx, "detector on undeclared channel"});
      if (!det_ids.insert(d->id).second) out.push_back({idx, "duplicate detector id"});
      check_live_use(d->channel);
      dead.insert(d->channel);
      live.erase(d->channel);
      ++det_count;
    }
  }
  if (det_count != 3) out.push_back({-1, "expected exactly 3 detectors"});
  for (uint16_t c : n.output_channels)
    if (dead.count(c)) out.push_back({-1, "output channel consumed by a detector"});
  return out;
}

Netlist canonical_ghz_netlist(const CanonicalOptions& opt) {
  Netlist n;
  n.channel_names = {"c0", "c1", "c2", "c3", "c4", "c5", "a1", "x0", "x3", "b1",
                     "x5", "cl", "a2", "d1", "d2", "d3"};
  auto ch = [&](const char* name) { return static_cast<uint16_t>(n.channel_index(name)); };
  const double theta = std::numbers::pi / 4.0;

  auto loss = [&](LossCategory cat, const std::string& tag, uint16_t channel) {
    n.elements.push_back(LossSite{std::string(to_string(cat)) + "_" + tag, channel, cat});
  };
  auto wp = [&](const char* c) {
    n.elements.push_back(Waveplate{ch(c), theta});
    if (opt.ops_after_waveplates) loss(LossCategory::Ops, std::string("w") + c, ch(c));
  };
  auto pbs = [&](const char* i1, const char* i2, const char* o1, const char* o2) {
    n.elements.push_back(Pbs{ch(i1), ch(i2), ch(o1), ch(o2)});
    if (opt.ops_on_pbs_outputs) {
      loss(LossCategory::Ops, o1, ch(o1));
      loss(LossCategory::Ops, o2, ch(o2));
    }
  };

  n.source_channels = {ch("c0"), ch("c1"), ch("c2"), ch("c3"), ch("c4"), ch("c5")};
  n.output_channels = {ch("x0"), ch("x3"), ch("x5")};

  for (const char* c : {"c0", "c1", "c2", "c3", "c4", "c5"}) loss(LossCategory::Prep, c, ch(c));
  for (const char* c : {"c0", "c1", "c2", "c3", "c4", "c5"}) wp(c);
  pbs("c0", "c1", "a1", "x0");
  pbs("c2", "c3", "x3", "b1");
  pbs("c4", "c5", "x5", "cl");
  for (const char* c : {"a1", "x0", "x3", "b1", "x5", "cl"}) wp(c);
  pbs("a1", "b1", "a2", "d1");
  wp("d1");
  pbs("a2", "cl", "d3", "d2");
  wp("d2");
  wp("d3");
  loss(LossCategory::Det, "d1", ch("d1"));
  loss(LossCategory::Det, "d2", ch("d2"));
  loss(LossCategory::Det, "d3", ch("d3"));
  if (opt.det_on_outputs) {
    loss(LossCategory::Det, "x0", ch("x0"));
    loss(LossCategory::Det, "x3", ch("x3"));
    loss(LossCategory::Det, "x5", ch("x5"));
  }
  n.elements.push_back(Detector{"D1", ch("d1")});
  n.elements.push_back(Detector{"D2", ch("d2")});
  n.elements.push_back(Detector{"D3", ch("d3")});
  return n;
}

PureState run(const Netlist& n, const PureState& input, uint64_t triggered_losses, const RunOptions& opt) {
  PureState state = input;
  int site_ordinal = 0;
  for (const Element& e : n.elements) {
    if (const auto* w = std::get_if<Waveplate>(&e)) {
      state = apply_polarization_rotation(state, w->channel, w->angle, opt.prune_epsilon);
    } else if (const auto* p = std::get_if<Pbs>(&e)) {
      state = apply_pbs(state, p->in1, p->in2, p->out1, p->out2);
    } else if (const auto* s = std::get_if<LossSite>(&e)) {
      if (triggered_losses & (1ull << site_ordinal))
        state = apply_loss(state, s->channel, n.loss_channel(site_ordinal), opt.prune_epsilon);
      ++site_ordinal;
    }
    // detectors leave the state untouched; heralding happens downstream
  }
  return state;
}

Eigen::MatrixXcd lossless_mode_unitary(const Netlist& n) {
  const int dim = 2 * n.channel_count();
  Eigen::MatrixXcd u = Eigen::MatrixXcd::Identity(dim, dim);
  auto mode = [](uint16_t ch, int pol) { return 2 * static_cast<int>(ch) + pol; };
  for (const Element& e : n.elements) {
    if (const auto* w = std::get_if<Waveplate>(&e)) {
      Eigen::MatrixXcd g = Eigen::MatrixXcd::Identity(dim, dim);
      const double c = std::cos(w->angle), s = std::sin(w->angle);
      const int h = mode(w->channel, 0), v = mode(w->channel, 1);
      g(h, h) = c;
      g(v, h) = s;
      g(h, v) = -s;
      g(v, v) = c;
      u = g * u;
    } else if (const auto* p = std::get_if<Pbs>(&e)) {
      // H transmits, V crosses; complete to a full mode permutation so that
      // unused output modes keep the matrix unitary
      std::vector<std::pair<int, int>> map = {
          {mode(p->in1, 0), mode(p->out1, 0)},
          {mode(p->in2, 0), mode(p->out2, 0)},
          {mode(p->in1, 1), mode(p->out2, 1)},
          {mode(p->in2, 1), mode(p->out1, 1)},
      };
      std::set<int> domain, image;
      for (auto [a, b] : map) {
        domain.insert(a);
        image.insert(b);
      }
      std::vector<int> img_only, dom_only;
      for (int m : image)
        if (!domain.count(m)) img_only.push_back(m);
      for (int m : domain)
        if (!image.count(m)) dom_only.push_back(m);
      for (size_t i = 0; i < img_only.size(); ++i) map.emplace_back(img_only[i], dom_only[i]);
      Eigen::MatrixXcd perm = Eigen::MatrixXcd::Identity(dim, dim);
      for (auto [a, b] : map) {
        perm(a, a) = 0;
        perm(b, b) = 0;
      }
      for (auto [a, b] : map) perm(b, a) = 1;
      u = perm * u;
    }
  }
  return u;
}

Complex permanent(const Eigen::MatrixXcd& m) {
  const int n = static_cast<int>(m.rows());
  if (n == 0) return {1.0, 0.0};
  if (n != m.cols()) throw std::invalid_argument("permanent: matrix must be square");
  // Ryser with Gray code: perm = (-1)^n sum_S (-1)^|S| prod_i sum_{j in S} m(i,j)
  std::vector<Complex> row_sum(static_cast<size_t>(n), Complex{0.0, 0.0});
  Complex total{0.0, 0.0};
  uint64_t gray = 0;
  double sign = 1.0;
  const uint64_t count = 1ull << n;
  for (uint64_t k = 1; k < count; ++k) {
    const uint64_t new_gray = k ^ (k >> 1);
    const uint64_t diff = gray ^ new_gray;
    const int j = std::countr_zero(diff);
    const bool added = new_gray & diff;
    for (int i = 0; i < n; ++i) {
      if (added)
        row_sum[static_cast<size_t>(i)] += m(i, j);
      else
        row_sum[static_cast<size_t>(i)] -= m(i, j);
    }
    gray = new_gray;
    sign = (std::popcount(new_gray) % 2 == 0) ? 1.0 : -1.0;
    Complex prod{1.0, 0.0};
    for (int i = 0; i < n; ++i) prod *= row_sum[static_cast<size_t>(i)];
    total += sign * prod;
  }
  if (n % 2 == 1) total = -total;
  return total;
}

Complex oracle_amplitude(const Eigen::MatrixXcd& unitary, const FockBasisState& input, const FockBasisState& output) {
  if (input.photons() != output.photons()) return {0.0, 0.0};

  // split photons by distinguishability sector
  std::map<uint8_t, std::pair<std::vector<int>, std::vector<int>>> sectors;  // d -> (in modes, out modes)
  for (uint16_t pm : input.modes()) {
    const ModeKey m = ModeKey::unpack(pm);
    sectors[m.dist].first.push_back(2 * m.channel + static_cast<int>(m.pol));
  }
  for (uint16_t pm : output.modes()) {
    const ModeKey m = ModeKey::unpack(pm);
    sectors[m.dist].second.push_back(2 * m.channel + static_cast<int>(m.pol));
  }

  Complex amp{1.0, 0.0};
  for (const auto& [d, io] : sectors) {
    const auto& in = io.first;
    const auto& out = io.second;
    if (in.size() != out.size()) return {0.0, 0.0};
    const int k = static_cast<int>(in.size());
    Eigen::MatrixXcd sub(k, k);
    for (int r = 0; r < k; ++r)
      for (int c = 0; c < k; ++c) sub(r, c) = unitary(out[static_cast<size_t>(r)], in[static_cast<size_t>(c)]);
    amp *= permanent(sub);
  }
  const double norm = std::sqrt(input.occupation_factorial() * output.occupation_factorial());
  return amp / norm;
}

}  // namespace ghzsim
