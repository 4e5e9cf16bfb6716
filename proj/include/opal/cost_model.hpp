// Analytical area/energy model: activity counts times per-unit constants.
//
// Defaults are the per-component synthesis figures of one W4A4/7 core. Energy
// of a core component is power * active_cycles / clock. The global buffer
// costs energy per byte moved plus leakage proportional to its resident
// footprint for the wall-clock duration. Absolute joules depend on the assumed
// clock and buffer constants; comparisons between schemes on the same trace
// are the meaningful output.

#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "opal/kv_file.hpp"
#include "opal/runner.hpp"

namespace opal {

enum class Component { kComputeLanes, kDataDistributors, kSoftmaxUnit, kQuantizer, kFpAdderTree };
inline constexpr size_t kComponentCount = 5;

const char* to_string(Component c);

struct ComponentCost {
  double area_um2 = 0.0;
  double power_mw = 0.0;
};

struct UnitCosts {
  std::array<ComponentCost, kComponentCount> components{{
      {670126.34, 229.65},  // compute lanes
      {139713.48, 63.20},   // data distributors
      {76330.92, 27.62},    // log2-based softmax unit
      {34670.88, 14.11},    // MX-OPAL quantizer
      {8470.80, 1.28},      // FP adder tree
  }};
  double clock_hz = 1e9;
  double buffer_energy_pj_per_byte = 5.0;
  double buffer_leakage_mw_per_kib = 0.1;
  /// Energy of one bfloat16 MAC relative to a low-low INT MAC.
  double fp_mac_energy_multiplier = 4.0;
  /// Area and power the log2 softmax unit saves against a conventional one.
  double softmax_area_saving = 0.323;
  double softmax_power_saving = 0.357;
  double softmax_elements_per_cycle = 8.0;
  double quantizer_blocks_per_cycle = 1.0;
  /// Throughput of the bfloat16 baseline datapath.
  double baseline_macs_per_cycle = 256.0;

  const ComponentCost& operator[](Component c) const { return components[static_cast<size_t>(c)]; }
  ComponentCost& operator[](Component c) { return components[static_cast<size_t>(c)]; }
  double total_area() const;
  double total_power() const;
};

/// Throws ConfigError for negative constants or a non-positive clock.
void validate(const UnitCosts& costs);

/// Reads overrides from a key=value file: area_um2.<component>,
/// power_mw.<component>, and the scalar field names of UnitCosts.
UnitCosts unit_costs_from_kv(const KvFile& kv);
UnitCosts load_unit_costs(const std::filesystem::path& path);
KvFile unit_costs_to_kv(const UnitCosts& costs);

/// Conventional (exp + divide) softmax unit implied by the savings ratios.
ComponentCost conventional_softmax(const UnitCosts& costs);

/// Busy cycles per unit plus buffer activity; what estimate() consumes.
struct Activity {
  std::array<double, kComponentCount> active_cycles{};
  /// Extra compute-lane cycles for work done in bfloat16 units (baselines).
  double fp_lane_cycles = 0.0;
  double wall_cycles = 0.0;
  double traffic_bytes = 0.0;
  double footprint_bytes = 0.0;
};

/// Activity of `scheme` executing the trace. OPAL lanes are charged for
/// lane-equivalent busy cycles. The baselines run every MAC on bfloat16 units
/// at baseline_macs_per_cycle with lanes and distributors charged
/// fp_mac_energy_multiplier low-low MACs each; they have no quantizer and use
/// a conventional softmax.
Activity activity_for(const TraceCounts& trace, const UnitCosts& costs, Scheme scheme);

struct EnergyLine {
  std::string component;
  double energy_j = 0.0;
  double area_um2 = 0.0;
};

struct CostReport {
  std::string scheme;
  std::vector<EnergyLine> lines;  ///< core components, then buffer_dynamic, buffer_leakage
  double total_energy_j = 0.0;
  double total_area_um2 = 0.0;
  double dynamic_energy_j = 0.0;  ///< everything except buffer leakage

  double energy(const std::string& component) const;
};

CostReport estimate(const Activity& activity, const UnitCosts& costs, Scheme scheme = Scheme::kOpal);
CostReport estimate(const TraceCounts& trace, const UnitCosts& costs, Scheme scheme = Scheme::kOpal);

struct AreaRow {
  std::string component;
  double area_um2 = 0.0;
  double area_percent = 0.0;
  double power_mw = 0.0;
  double power_percent = 0.0;
};

std::vector<AreaRow> area_report(const UnitCosts& costs);

const char* to_string(Scheme s);

/// "component,energy_J,area_um2,percent" rows, component prefixed by scheme;
/// percent is the share of that scheme's total energy.
std::string cost_csv(const std::vector<CostReport>& reports);

}  // namespace opal
