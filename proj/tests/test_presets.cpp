#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "pipetone/characterize.hpp"

using namespace pipetone;

// The bundled presets model the runs we surveyed; these tests pin down the
// survey facts the rest of the toolkit depends on (band availability, spread,
// drive levels). Seeds are frozen so every measured number is reproducible.

namespace {

PipeRunModel preset(const std::string& name) {
  return load_preset(std::string(PIPETONE_PRESET_DIR) + "/" + name + ".json");
}

double ft(double feet) { return feet * 0.3048; }

SweepConfig band_cfg(double lo, double hi, double step) {
  SweepConfig cfg;
  cfg.f_min_hz = lo;
  cfg.f_max_hz = hi;
  cfg.step_hz = step;
  cfg.tone_dur_s = 0.5;
  cfg.pad_dur_s = 0.25;
  return cfg;
}

}  // namespace

TEST_CASE("bundled presets load with the surveyed tap layouts", "[presets]") {
  const auto ident = preset("identity");
  REQUIRE(ident.name == "identity");
  REQUIRE(ident.distances_m == std::vector<double>{10.0, 50.0, 100.0});
  REQUIRE(ident.noise_white == 0.0);
  REQUIRE(ident.noise_pink == 0.0);
  REQUIRE(ident.dispersion_sigma_hz == 0.0);

  const auto ocs = preset("OCS");
  REQUIRE(ocs.distances_m.size() == 7);
  REQUIRE(ocs.distances_m.front() == Catch::Approx(6.096));
  REQUIRE(ocs.distances_m.back() == Catch::Approx(51.816));

  REQUIRE(preset("OCDS").distances_m.size() == 4);
  REQUIRE(preset("NCS").distances_m.size() == 5);

  const auto ncr = preset("NCR");
  REQUIRE(ncr.distances_m.size() == 3);
  REQUIRE(ncr.distances_m.front() == Catch::Approx(ft(30.3)));

  REQUIRE(preset("RG").medium_speed_mps == 3000.0);
  const auto rw = preset("RW");
  REQUIRE(rw.distances_m.size() == 3);
  REQUIRE(rw.medium_speed_mps == 3810.0);  // copper, not steel
}

TEST_CASE("office run gain dips at 120 ft and recovers at the far tap", "[presets]") {
  // The surveyed 17 kHz column is deliberately non-monotone in distance:
  // the farthest tap hears the tone better than the 120 ft one.
  const auto ocs = preset("OCS");
  const double near_gain = gain_at(ocs, 17000.0, ft(120.0));
  const double far_gain = gain_at(ocs, 17000.0, ft(170.0));
  REQUIRE(near_gain == Catch::Approx(0.40));
  REQUIRE(far_gain == Catch::Approx(0.55));
  REQUIRE(near_gain < far_gain);

  // Same ordering end to end through the signal chain, not just in the grid.
  const auto tone = gen_tone(17000.0, 1.0, 0.5, 0.25, 44100.0);
  const auto spec_near =
      spectrum(propagate(tone, ocs, ft(120.0), true, 606).buffer, Window::hann);
  const auto spec_far =
      spectrum(propagate(tone, ocs, ft(170.0), true, 607).buffer, Window::hann);
  const double peak_near = main_peak(spec_near, 16900.0, 17100.0).magnitude;
  const double peak_far = main_peak(spec_far, 16900.0, 17100.0).magnitude;
  REQUIRE(peak_near < peak_far);
}

TEST_CASE("single-floor runs clear the 12-18 kHz survey band together", "[presets]") {
  const auto cfg = band_cfg(12000.0, 18000.0, 500.0);
  std::vector<BandwidthReport> reports;
  for (const char* name : {"OCS", "OCDS", "NCS", "RG", "RW"}) {
    reports.push_back(run_sweep(preset(name), cfg, 4242));
    REQUIRE(reports.back().passing().size() == 13);
  }
  REQUIRE(global_bandwidth(reports).size() == 13);

  // Adding the riser run cuts the common band down to its surveyed windows,
  // and an intersection can only ever shrink.
  const auto with_riser = [&] {
    auto all = reports;
    all.push_back(run_sweep(preset("NCR"), cfg, 4242));
    return all;
  }();
  const auto common = global_bandwidth(with_riser);
  REQUIRE(common == std::vector<double>{12000.0, 12500.0, 13000.0, 15000.0});
  const auto wide = global_bandwidth(reports);
  for (double f : common) REQUIRE(std::find(wide.begin(), wide.end(), f) != wide.end());
}

TEST_CASE("riser run passes only its surveyed windows", "[presets]") {
  const auto report = run_sweep(preset("NCR"), band_cfg(2000.0, 16000.0, 1000.0), 777);
  std::vector<double> expected;
  for (double f = 3000.0; f <= 13000.0; f += 1000.0) expected.push_back(f);
  expected.push_back(15000.0);
  REQUIRE(report.passing() == expected);
}

TEST_CASE("quietest workable level matches the surveyed ladder step", "[presets]") {
  const auto ladder = volume_ladder();

  const auto rw = preset("RW");
  const auto rw_level = min_volume(rw, rw.max_distance_m(), ladder, 6.0, 20260101);
  REQUIRE(rw_level.usable);
  REQUIRE(rw_level.amplitude == Catch::Approx(0.12));

  const auto ncs = preset("NCS");
  const auto ncs_level = min_volume(ncs, ncs.max_distance_m(), ladder, 6.0, 20260101);
  REQUIRE(ncs_level.usable);
  REQUIRE(ncs_level.amplitude == Catch::Approx(0.20));

  // The office run's floor is so quiet that the lowest ladder step already
  // clears it; the noisy steel run needs a louder drive than the copper one.
  const auto ocs = preset("OCS");
  const auto ocs_level = min_volume(ocs, ocs.max_distance_m(), ladder, 6.0, 20260101);
  REQUIRE(ocs_level.usable);
  REQUIRE(ocs_level.amplitude == Catch::Approx(0.02));
  REQUIRE(rw_level.amplitude < ncs_level.amplitude);
}

TEST_CASE("worst-case spreading on the noisy steel run sets the pitch", "[presets]") {
  SweepConfig cfg = band_cfg(15000.0, 20000.0, 100.0);
  cfg.tone_dur_s = 1.0;
  const auto profile = dispersion_profile(preset("NCS"), cfg, 555);
  REQUIRE(profile.freqs_hz.size() == 51);
  REQUIRE(profile.distances_m.size() == 5);

  double worst = 0.0;
  for (const auto& row : profile.widths_hz)
    for (double w : row) worst = std::max(worst, w);
  REQUIRE(worst > 70.0);
  REQUIRE(worst < 95.0);
  REQUIRE(min_separation(profile, 15000.0, 20000.0) == 100.0);
}
