#include <doctest.h>

#include <cmath>

#include "opal/cost_model.hpp"
#include "opal/error.hpp"

using namespace opal;

TEST_CASE("zero activity leaves only leakage") {
  UnitCosts u;
  Activity a;
  a.footprint_bytes = 1024.0;
  a.wall_cycles = 1e6;
  const CostReport r = estimate(a, u);
  CHECK(r.dynamic_energy_j == 0.0);
  // 0.1 mW/KiB * 1 KiB for 1 ms.
  CHECK(r.total_energy_j == doctest::Approx(1e-7));
  CHECK(r.energy("buffer_leakage") == doctest::Approx(1e-7));
}

TEST_CASE("one core busy for a million cycles") {
  UnitCosts u;
  Activity a;
  a.active_cycles.fill(1e6);
  const CostReport r = estimate(a, u);
  // 335.85 mW printed total; the component powers sum to 335.86.
  CHECK(u.total_power() == doctest::Approx(335.86));
  CHECK(r.dynamic_energy_j == doctest::Approx(335.86e-6));
  CHECK(r.total_energy_j == doctest::Approx(335.86e-6));
  CHECK(std::fabs(r.dynamic_energy_j - 335.85e-6) < 0.011e-6);
}

TEST_CASE("energy is linear in activity") {
  UnitCosts u;
  Activity a;
  a.active_cycles = {1000, 900, 50, 20, 1000};
  a.traffic_bytes = 4096;
  a.footprint_bytes = 2048;
  a.wall_cycles = 5000;
  Activity twice = a;
  for (double& c : twice.active_cycles) c *= 2;
  twice.traffic_bytes *= 2;
  const CostReport r1 = estimate(a, u);
  const CostReport r2 = estimate(twice, u);
  CHECK(r2.dynamic_energy_j == doctest::Approx(2 * r1.dynamic_energy_j).epsilon(1e-15));
  CHECK(r2.energy("buffer_leakage") == r1.energy("buffer_leakage"));

  UnitCosts slow = u;
  slow.clock_hz = 5e8;
  CHECK(estimate(a, slow).energy("compute_lanes") == doctest::Approx(2 * r1.energy("compute_lanes")));
}

TEST_CASE("area and power shares") {
  const auto rows = area_report(UnitCosts{});
  CHECK(rows[0].component == "compute_lanes");
  CHECK(std::fabs(rows[0].area_percent - 72.11) < 0.05);
  CHECK(std::fabs(rows[0].power_percent - 68.38) < 0.05);

  UnitCosts flat;
  for (auto& c : flat.components) c = {10.0, 2.0};
  for (const AreaRow& r : area_report(flat)) {
    CHECK(r.area_percent == doctest::Approx(20.0));
    CHECK(r.power_percent == doctest::Approx(20.0));
  }
}

TEST_CASE("conventional softmax implied by the stated savings") {
  const UnitCosts u;
  const ComponentCost conv = conventional_softmax(u);
  CHECK(1.0 - u[Component::kSoftmaxUnit].area_um2 / conv.area_um2 == doctest::Approx(0.323));
  CHECK(1.0 - u[Component::kSoftmaxUnit].power_mw / conv.power_mw == doctest::Approx(0.357));
}

TEST_CASE("scheme ordering on the same trace") {
  const UnitCosts u;
  DecoderConfig c4;
  DecoderConfig c3;
  c3.profile = PrecisionProfile::w3a3_5();
  const TraceCounts t4 = run_generation_trace(c4, 8);
  const TraceCounts t3 = run_generation_trace(c3, 8);
  const double w3 = estimate(t3, u, Scheme::kOpal).total_energy_j;
  const double w4 = estimate(t4, u, Scheme::kOpal).total_energy_j;
  const double owq = estimate(t4, u, Scheme::kOwq).total_energy_j;
  const double bf16 = estimate(t4, u, Scheme::kBf16).total_energy_j;
  CHECK(w3 < w4);
  CHECK(w4 < owq);
  CHECK(owq < bf16);
  // Lower activation width never raises buffer traffic energy.
  CHECK(estimate(t3, u, Scheme::kOpal).energy("buffer_dynamic") <=
        estimate(t4, u, Scheme::kOpal).energy("buffer_dynamic"));
}

TEST_CASE("report totals equal component sums") {
  const TraceCounts t = run_generation_trace(DecoderConfig{}, 2);
  const CostReport r = estimate(t, UnitCosts{}, Scheme::kOpal);
  double sum = 0.0;
  for (const auto& l : r.lines) sum += l.energy_j;
  CHECK(r.total_energy_j == doctest::Approx(sum).epsilon(1e-15));
  const std::string csv = cost_csv({r});
  CHECK(csv.rfind("component,energy_J,area_um2,percent\n", 0) == 0);
  CHECK(csv.find("opal.total,") != std::string::npos);
}

TEST_CASE("unit costs from key=value") {
  const KvFile kv = KvFile::parse("clock_hz=2e9\npower_mw.quantizer=20\n");
  const UnitCosts u = unit_costs_from_kv(kv);
  CHECK(u.clock_hz == 2e9);
  CHECK(u[Component::kQuantizer].power_mw == 20.0);
  CHECK(u[Component::kComputeLanes].power_mw == 229.65);
  CHECK(unit_costs_from_kv(unit_costs_to_kv(u)).clock_hz == 2e9);
  CHECK_THROWS_AS(unit_costs_from_kv(KvFile::parse("clock_hz=0\n")), ConfigError);
  CHECK_THROWS_AS(unit_costs_from_kv(KvFile::parse("bogus=1\n")), ConfigError);
  CHECK_THROWS_AS(unit_costs_from_kv(KvFile::parse("power_mw.quantizer=-1\n")), ConfigError);
}
