#include "ghzsim/io.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include "json.hpp"

namespace ghzsim {

using nlohmann::json;

namespace {

json element_to_json(const Netlist& n, const Element& e) {
  json j;
  if (const auto* w = std::get_if<Waveplate>(&e)) {
    j["type"] = "wp";
    j["channel"] = n.channel_names[w->channel];
    j["angle_deg"] = w->angle * 180.0 / std::numbers::pi;
  } else if (const auto* p = std::get_if<Pbs>(&e)) {
    j["type"] = "pbs";
    j["in"] = {n.channel_names[p->in1], n.channel_names[p->in2]};
    j["out"] = {n.channel_names[p->out1], n.channel_names[p->out2]};
  } else if (const auto* s = std::get_if<LossSite>(&e)) {
    j["type"] = "loss";
    j["site"] = s->id;
    j["channel"] = n.channel_names[s->channel];
    j["category"] = to_string(s->category);
  } else if (const auto* d = std::get_if<Detector>(&e)) {
    j["type"] = "det";
    j["id"] = d->id;
    j["channel"] = n.channel_names[d->channel];
  }
  return j;
}

uint16_t require_channel(const Netlist& n, const json& j, const char* key) {
  const std::string name = j.at(key).get<std::string>();
  const int idx = n.channel_index(name);
  if (idx < 0) throw std::runtime_error("netlist: undeclared channel '" + name + "'");
  return static_cast<uint16_t>(idx);
}

}  // namespace

std::string netlist_to_json(const Netlist& n) {
  json j;
  j["channels"] = n.channel_names;
  json sources = json::array(), outputs = json::array();
  for (uint16_t c : n.source_channels) sources.push_back(n.channel_names[c]);
  for (uint16_t c : n.output_channels) outputs.push_back(n.channel_names[c]);
  j["sources"] = sources;
  j["outputs"] = outputs;
  json elements = json::array();
  for (const Element& e : n.elements) elements.push_back(element_to_json(n, e));
  j["elements"] = elements;
  return j.dump(2) + "\n";
}

Netlist netlist_from_json(const std::string& json_text) {
  const json j = json::parse(json_text);
  Netlist n;
  n.channel_names = j.at("channels").get<std::vector<std::string>>();
  for (const auto& s : j.at("sources")) {
    const int idx = n.channel_index(s.get<std::string>());
    if (idx < 0) throw std::runtime_error("netlist: undeclared source channel");
    n.source_channels.push_back(static_cast<uint16_t>(idx));
  }
  for (const auto& s : j.at("outputs")) {
    const int idx = n.channel_index(s.get<std::string>());
    if (idx < 0) throw std::runtime_error("netlist: undeclared output channel");
    n.output_channels.push_back(static_cast<uint16_t>(idx));
  }
  for (const auto& je : j.at("elements")) {
    const std::string type = je.at("type").get<std::string>();
    if (type == "wp") {
      n.elements.push_back(Waveplate{require_channel(n, je, "channel"),
                                     je.at("angle_deg").get<double>() * std::numbers::pi / 180.0});
    } else if (type == "pbs") {
      const auto& in = je.at("in");
      const auto& out = je.at("out");
      if (in.size() != 2 || out.size() != 2) throw std::runtime_error("netlist: pbs needs 2 inputs and 2 outputs");
      auto ch = [&](const json& v) {
        const int idx = n.channel_index(v.get<std::string>());
        if (idx < 0) throw std::runtime_error("netlist: undeclared pbs channel");
        return static_cast<uint16_t>(idx);
      };
      n.elements.push_back(Pbs{ch(in[0]), ch(in[1]), ch(out[0]), ch(out[1])});
    } else if (type == "loss") {
      const auto cat = loss_category_from_string(je.at("category").get<std::string>());
      if (!cat) throw std::runtime_error("netlist: unknown loss category");
      n.elements.push_back(LossSite{je.at("site").get<std::string>(), require_channel(n, je, "channel"), *cat});
    } else if (type == "det") {
      n.elements.push_back(Detector{je.at("id").get<std::string>(), require_channel(n, je, "channel")});
    } else {
      throw std::runtime_error("netlist: unknown element type '" + type + "'");
    }
  }
  return n;
}

Netlist load_netlist(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open netlist file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return netlist_from_json(ss.str());
}

void save_netlist(const Netlist& n, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write netlist file " + path.string());
  out << netlist_to_json(n);
}

uint64_t netlist_hash(const Netlist& n) {
  const std::string text = netlist_to_json(n);
  uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return h;
}

namespace {

void write_double(std::ostream& os, double v) {
  if (std::isnan(v)) return;  // empty field
  char buf[32];
  snprintf(buf, sizeof buf, "%.17g", v);
  os << buf;
}

}  // namespace

void write_grid_csv(const MeasureGrid& grid, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "ovl,g2,p_prep,p_ops,p_det,p_l,fidelity,success,success_normalized,covered_mass\n";
  for (const GridPoint& gp : grid.points) {
    write_double(out, gp.params.ovl);
    out << ',';
    write_double(out, gp.params.g2);
    out << ',';
    write_double(out, gp.params.loss.prep);
    out << ',';
    write_double(out, gp.params.loss.ops);
    out << ',';
    write_double(out, gp.params.loss.det);
    out << ',';
    write_double(out, gp.p_l ? *gp.p_l : std::numeric_limits<double>::quiet_NaN());
    out << ',';
    write_double(out, gp.measures.fidelity ? *gp.measures.fidelity : std::numeric_limits<double>::quiet_NaN());
    out << ',';
    write_double(out, gp.measures.success);
    out << ',';
    write_double(out, gp.measures.success_normalized);
    out << ',';
    write_double(out, gp.measures.covered_mass);
    out << '\n';
  }
}

MeasureGrid read_grid_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string header;
  if (!std::getline(in, header)) throw std::runtime_error("empty CSV " + path.string());

  MeasureGrid grid;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::optional<double>> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      if (cell.empty())
        f.push_back(std::nullopt);
      else
        f.push_back(std::stod(cell));
    }
    while (f.size() < 10) f.push_back(std::nullopt);
    GridPoint gp;
    gp.params.ovl = f[0].value_or(1.0);
    gp.params.g2 = f[1].value_or(0.0);
    gp.params.loss = {f[2].value_or(0.0), f[3].value_or(0.0), f[4].value_or(0.0)};
    gp.p_l = f[5];
    if (f[6]) gp.measures.fidelity = *f[6];
    gp.measures.success = f[7].value_or(0.0);
    gp.measures.success_normalized = f[8].value_or(0.0);
    gp.measures.covered_mass = f[9].value_or(0.0);
    grid.points.push_back(gp);
  }
  return grid;
}

namespace {

constexpr uint32_t kCacheMagic = 0x47485A43;  // "GHZC"
constexpr uint32_t kCacheVersion = 1;

}  // namespace

void save_cache(const MeasureEngine& engine, uint64_t hash, const std::filesystem::path& path) {
  const auto entries = engine.export_cache();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write cache " + path.string());
  auto put = [&](const void* p, size_t n) { out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); };
  put(&kCacheMagic, 4);
  put(&kCacheVersion, 4);
  put(&hash, 8);
  const uint64_t count = entries.size();
  put(&count, 8);
  for (const auto& [key, polys] : entries) {
    put(&key.first, 1);
    put(&key.second, 8);
    const int32_t photons = polys.photons;
    put(&photons, 4);
    auto put_poly = [&](const OverlapPoly& p) {
      const int32_t deg = p.degree;
      put(&deg, 4);
      put(p.c.data(), sizeof(double) * p.c.size());
    };
    put_poly(polys.success);
    put_poly(polys.ghz);
    put_poly(polys.herald);
  }
}

bool load_cache(MeasureEngine& engine, uint64_t hash, const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return false;
  auto get = [&](void* p, size_t n) {
    in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    return static_cast<size_t>(in.gcount()) == n;
  };
  uint32_t magic = 0, version = 0;
  uint64_t file_hash = 0, count = 0;
  if (!get(&magic, 4) || magic != kCacheMagic) return false;
  if (!get(&version, 4) || version != kCacheVersion) return false;
  if (!get(&file_hash, 8) || file_hash != hash) return false;
  if (!get(&count, 8)) return false;

  std::vector<std::pair<std::pair<uint8_t, uint64_t>, MeasurePolys>> entries;
  entries.reserve(count);
  for (uint64_t i = 0; i < count; ++i) {
    std::pair<uint8_t, uint64_t> key;
    MeasurePolys polys;
    int32_t photons = 0;
    if (!get(&key.first, 1) || !get(&key.second, 8) || !get(&photons, 4)) return false;
    polys.photons = photons;
    auto get_poly = [&](OverlapPoly& p) {
      int32_t deg = 0;
      if (!get(&deg, 4)) return false;
      p.degree = deg;
      return get(p.c.data(), sizeof(double) * p.c.size());
    };
    if (!get_poly(polys.success) || !get_poly(polys.ghz) || !get_poly(polys.herald)) return false;
    entries.emplace_back(key, polys);
  }
  engine.import_cache(entries);
  return true;
}

RunConfig run_config_from_json(const std::string& json_text) {
  const json j = json::parse(json_text);
  RunConfig c;
  if (j.contains("netlist")) c.netlist = j["netlist"].get<std::string>();
  if (j.contains("regime")) c.regime = j["regime"].get<std::string>();
  auto opt = [&](const char* key) -> std::optional<double> {
    if (j.contains(key)) return j[key].get<double>();
    return std::nullopt;
  };
  c.ovl = opt("ovl");
  c.g2 = opt("g2");
  c.p_prep = opt("p_prep");
  c.p_ops = opt("p_ops");
  c.p_det = opt("p_det");
  c.p_l = opt("p_l");
  if (j.contains("simplified_loss")) c.simplified = j["simplified_loss"].get<bool>();
  if (j.contains("coverage")) c.coverage = j["coverage"].get<double>();
  if (j.contains("max_doubles")) c.max_doubles = j["max_doubles"].get<int>();
  if (j.contains("threads")) c.threads = j["threads"].get<int>();
  if (j.contains("grid")) c.grid = j["grid"].get<std::string>();
  if (j.contains("out")) c.out = j["out"].get<std::string>();
  if (j.contains("cache")) c.cache = j["cache"].get<std::string>();
  if (j.contains("loss_semantics")) c.loss_semantics = j["loss_semantics"].get<std::string>();
  return c;
}

}  // namespace ghzsim
