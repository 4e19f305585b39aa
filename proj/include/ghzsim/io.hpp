#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "ghzsim/analysis.hpp"
#include "ghzsim/circuit.hpp"

namespace ghzsim {

/// Netlist file schema:
/// {"channels":[...], "sources":[...], "outputs":[...],
///  "elements":[{"type":"wp","channel":"c0","angle_deg":45},
///              {"type":"pbs","in":["c0","c1"],"out":["a1","x0"]},
///              {"type":"loss","site":"prep_c0","channel":"c0","category":"prep"},
///              {"type":"det","id":"D1","channel":"d1"}]}
std::string netlist_to_json(const Netlist& n);
Netlist netlist_from_json(const std::string& json_text);

Netlist load_netlist(const std::filesystem::path& path);
void save_netlist(const Netlist& n, const std::filesystem::path& path);

/// FNV-1a over the canonical JSON serialization; keys the measure cache.
uint64_t netlist_hash(const Netlist& n);

/// CSV emission: header row, '.' decimal separator, newline-terminated rows,
/// row order follows the grid's row-major point order.
void write_grid_csv(const MeasureGrid& grid, const std::filesystem::path& path);

/// Parses a sweep CSV back into grid points (axes are not reconstructed).
MeasureGrid read_grid_csv(const std::filesystem::path& path);

/// Versioned binary measure cache; safe to delete at any time.
void save_cache(const MeasureEngine& engine, uint64_t netlist_hash, const std::filesystem::path& path);
/// Returns false when the file is absent or keyed by a different netlist.
bool load_cache(MeasureEngine& engine, uint64_t netlist_hash, const std::filesystem::path& path);

/// Run configuration file (same JSON schema family as the netlist file).
struct RunConfig {
  std::string netlist = "canonical";  // path or "canonical"
  std::optional<std::string> regime;
  std::optional<double> ovl, g2, p_prep, p_ops, p_det;
  bool simplified = false;
  std::optional<double> p_l;
  double coverage = 0.98;
  int max_doubles = 2;
  int threads = 0;
  std::string grid;  // axis spec, e.g. "ovl=0.9725:0.995:10,g2=0.01:0.02:201"
  std::string out;
  std::string cache;
  std::string loss_semantics = "per-site";  // or "per-photon"
};

RunConfig run_config_from_json(const std::string& json_text);

}  // namespace ghzsim
