#include "opal/cost_model.hpp"

#include <cmath>
#include <numeric>

#include "opal/error.hpp"

namespace opal {
namespace {

constexpr std::array<Component, kComponentCount> kComponents{
    Component::kComputeLanes, Component::kDataDistributors, Component::kSoftmaxUnit, Component::kQuantizer,
    Component::kFpAdderTree};

struct ScalarField {
  const char* key;
  double UnitCosts::*field;
};

constexpr std::array<ScalarField, 9> kScalarFields{{
    {"clock_hz", &UnitCosts::clock_hz},
    {"buffer_energy_pj_per_byte", &UnitCosts::buffer_energy_pj_per_byte},
    {"buffer_leakage_mw_per_kib", &UnitCosts::buffer_leakage_mw_per_kib},
    {"fp_mac_energy_multiplier", &UnitCosts::fp_mac_energy_multiplier},
    {"softmax_area_saving", &UnitCosts::softmax_area_saving},
    {"softmax_power_saving", &UnitCosts::softmax_power_saving},
    {"softmax_elements_per_cycle", &UnitCosts::softmax_elements_per_cycle},
    {"quantizer_blocks_per_cycle", &UnitCosts::quantizer_blocks_per_cycle},
    {"baseline_macs_per_cycle", &UnitCosts::baseline_macs_per_cycle},
}};

size_t idx(Component c) { return static_cast<size_t>(c); }

}  // namespace

const char* to_string(Component c) {
  switch (c) {
    case Component::kComputeLanes: return "compute_lanes";
    case Component::kDataDistributors: return "data_distributors";
    case Component::kSoftmaxUnit: return "softmax_unit";
    case Component::kQuantizer: return "quantizer";
    case Component::kFpAdderTree: return "fp_adder_tree";
  }
  return "?";
}

const char* to_string(Scheme s) {
  switch (s) {
    case Scheme::kOpal: return "opal";
    case Scheme::kOwq: return "owq";
    case Scheme::kBf16: return "bf16";
  }
  return "?";
}

double UnitCosts::total_area() const {
  return std::accumulate(components.begin(), components.end(), 0.0,
                         [](double s, const ComponentCost& c) { return s + c.area_um2; });
}

double UnitCosts::total_power() const {
  return std::accumulate(components.begin(), components.end(), 0.0,
                         [](double s, const ComponentCost& c) { return s + c.power_mw; });
}

void validate(const UnitCosts& costs) {
  if (!(costs.clock_hz > 0.0) || !std::isfinite(costs.clock_hz)) {
    throw ConfigError("clock_hz: must be positive, got " + format_double(costs.clock_hz));
  }
  for (Component c : kComponents) {
    if (!(costs[c].area_um2 >= 0.0) || !(costs[c].power_mw >= 0.0)) {
      throw ConfigError(std::string(to_string(c)) + ": area and power must be non-negative");
    }
  }
  for (const auto& f : kScalarFields) {
    if (!(costs.*f.field >= 0.0) || !std::isfinite(costs.*f.field)) {
      throw ConfigError(std::string(f.key) + ": must be a non-negative number");
    }
  }
  if (costs.softmax_area_saving >= 1.0 || costs.softmax_power_saving >= 1.0) {
    throw ConfigError("softmax savings must be below 1");
  }
  if (costs.softmax_elements_per_cycle <= 0.0 || costs.quantizer_blocks_per_cycle <= 0.0 ||
      costs.baseline_macs_per_cycle <= 0.0) {
    throw ConfigError("throughput constants must be positive");
  }
}

UnitCosts unit_costs_from_kv(const KvFile& kv) {
  UnitCosts costs;
  std::vector<std::string> known;
  for (Component c : kComponents) {
    const std::string area_key = std::string("area_um2.") + to_string(c);
    const std::string power_key = std::string("power_mw.") + to_string(c);
    costs[c].area_um2 = kv.get_double(area_key, costs[c].area_um2);
    costs[c].power_mw = kv.get_double(power_key, costs[c].power_mw);
    known.push_back(area_key);
    known.push_back(power_key);
  }
  for (const auto& f : kScalarFields) {
    costs.*f.field = kv.get_double(f.key, costs.*f.field);
    known.emplace_back(f.key);
  }
  const auto unknown = kv.unknown_keys(known);
  if (!unknown.empty()) {
    throw ConfigError(unknown.front() + ": unknown unit-cost key");
  }
  validate(costs);
  return costs;
}

UnitCosts load_unit_costs(const std::filesystem::path& path) { return unit_costs_from_kv(KvFile::load(path)); }

KvFile unit_costs_to_kv(const UnitCosts& costs) {
  KvFile kv;
  for (Component c : kComponents) {
    kv.set(std::string("area_um2.") + to_string(c), costs[c].area_um2);
    kv.set(std::string("power_mw.") + to_string(c), costs[c].power_mw);
  }
  for (const auto& f : kScalarFields) kv.set(f.key, costs.*f.field);
  return kv;
}

ComponentCost conventional_softmax(const UnitCosts& costs) {
  const ComponentCost& log2 = costs[Component::kSoftmaxUnit];
  return {log2.area_um2 / (1.0 - costs.softmax_area_saving), log2.power_mw / (1.0 - costs.softmax_power_saving)};
}

Activity activity_for(const TraceCounts& trace, const UnitCosts& costs, Scheme scheme) {
  validate(costs);
  Activity a;
  const Traffic& traffic = trace.traffic(scheme);
  a.traffic_bytes = traffic.total();
  a.footprint_bytes = traffic.footprint_bytes;
  const double softmax_cycles = std::ceil(static_cast<double>(trace.softmax_elements) / costs.softmax_elements_per_cycle);
  a.active_cycles[idx(Component::kSoftmaxUnit)] = softmax_cycles;

  const CoreGeometry geo;
  if (scheme == Scheme::kOpal) {
    const double core = static_cast<double>(trace.counters.total_cycles());
    const double quant = std::ceil(static_cast<double>(trace.quantizer_blocks) / costs.quantizer_blocks_per_cycle);
    // Lane power is for all lanes busy; a pass that fills only some lanes
    // costs proportionally less.
    const double lane_equivalent = static_cast<double>(trace.counters.lane_busy_cycles) / static_cast<double>(geo.lanes);
    a.active_cycles[idx(Component::kComputeLanes)] = lane_equivalent;
    a.active_cycles[idx(Component::kDataDistributors)] = lane_equivalent;
    a.active_cycles[idx(Component::kFpAdderTree)] = core;
    a.active_cycles[idx(Component::kQuantizer)] = quant;
    a.wall_cycles = core + softmax_cycles + quant;
    return a;
  }
  // Baselines: every MAC in bfloat16 on the same core scaled up, so lanes and
  // operand distribution cost the multiplier times a low-low INT MAC each.
  const auto macs = static_cast<double>(trace.counters.total_macs());
  const double core = std::ceil(macs / costs.baseline_macs_per_cycle);
  a.fp_lane_cycles = macs * costs.fp_mac_energy_multiplier / static_cast<double>(geo.macs_per_cycle(MuMode::kLowLow));
  a.active_cycles[idx(Component::kDataDistributors)] = a.fp_lane_cycles;
  a.active_cycles[idx(Component::kFpAdderTree)] = core;
  a.wall_cycles = core + softmax_cycles;
  return a;
}

double CostReport::energy(const std::string& component) const {
  for (const auto& l : lines) {
    if (l.component == component) return l.energy_j;
  }
  throw ConfigError("no cost line named " + component);
}

CostReport estimate(const Activity& activity, const UnitCosts& costs, Scheme scheme) {
  validate(costs);
  CostReport r;
  r.scheme = to_string(scheme);
  const double period = 1.0 / costs.clock_hz;
  for (Component c : kComponents) {
    ComponentCost unit = costs[c];
    if (scheme != Scheme::kOpal) {
      if (c == Component::kSoftmaxUnit) unit = conventional_softmax(costs);
      if (c == Component::kQuantizer) unit = {};
    }
    double cycles = activity.active_cycles[idx(c)];
    if (c == Component::kComputeLanes) cycles += activity.fp_lane_cycles;
    r.lines.push_back({to_string(c), unit.power_mw * 1e-3 * cycles * period, unit.area_um2});
  }
  r.lines.push_back({"buffer_dynamic", activity.traffic_bytes * costs.buffer_energy_pj_per_byte * 1e-12, 0.0});
  const double leakage_w = costs.buffer_leakage_mw_per_kib * 1e-3 * activity.footprint_bytes / 1024.0;
  r.lines.push_back({"buffer_leakage", leakage_w * activity.wall_cycles * period, 0.0});

  // Sum with long double so the total equals the component sum to the last bit
  // of the reported double.
  long double total = 0.0L;
  long double area = 0.0L;
  for (const auto& l : r.lines) {
    total += l.energy_j;
    area += l.area_um2;
  }
  r.total_energy_j = static_cast<double>(total);
  r.total_area_um2 = static_cast<double>(area);
  r.dynamic_energy_j = static_cast<double>(total - static_cast<long double>(r.lines.back().energy_j));
  return r;
}

CostReport estimate(const TraceCounts& trace, const UnitCosts& costs, Scheme scheme) {
  return estimate(activity_for(trace, costs, scheme), costs, scheme);
}

std::vector<AreaRow> area_report(const UnitCosts& costs) {
  validate(costs);
  const double area = costs.total_area();
  const double power = costs.total_power();
  std::vector<AreaRow> rows;
  for (Component c : kComponents) {
    rows.push_back({to_string(c), costs[c].area_um2, area > 0 ? 100.0 * costs[c].area_um2 / area : 0.0,
                    costs[c].power_mw, power > 0 ? 100.0 * costs[c].power_mw / power : 0.0});
  }
  return rows;
}

std::string cost_csv(const std::vector<CostReport>& reports) {
  std::string out = "component,energy_J,area_um2,percent\n";
  for (const auto& r : reports) {
    auto line = [&](const std::string& name, double e, double a) {
      const double pct = r.total_energy_j > 0 ? 100.0 * (e / r.total_energy_j) : 0.0;
      out += r.scheme + "." + name + "," + format_double(e) + "," + format_double(a) + "," + format_double(pct) + "\n";
    };
    for (const auto& l : r.lines) line(l.component, l.energy_j, l.area_um2);
    line("total", r.total_energy_j, r.total_area_um2);
  }
  return out;
}

}  // namespace opal
