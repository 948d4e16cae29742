#pragma once

#include <string>
#include <utility>
#include <vector>

#include "faultloc/emtsim.hpp"
#include "faultloc/netmodel.hpp"

namespace faultloc::presets {

/// Scenario-generation recipe: either a full cross of impedances x angles or
/// an explicit list of (impedance, angle) pairs.
struct GridSpec {
    std::string name;
    std::vector<double> dg_levels;
    std::vector<net::PhaseSet> phase_sets = net::PhaseSet::all_combinations();
    std::vector<double> impedances_ohm;
    std::vector<double> angles_deg;
    std::vector<std::pair<double, double>> zf_angle_pairs;  // used when non-empty
    double spacing_m = 500.0;
    double fault_time_s = 0.025;
    double load_scale = 1.0;

    std::size_t scenario_count() const;  // scenarios per location
    std::vector<net::FaultScenario> expand(const net::NetworkModel& model) const;
    std::string describe() const;
};

struct Preset {
    std::string name;
    GridSpec grid;
    emt::SimConfig sim;
};

/// Full-scale recipe: fs 0.67 MHz, 2 DG levels x 7 phase sets x 4 impedances
/// x 3 angles x 38 locations = 6384 records.
Preset paper_preset();

/// Reduced recipe for desk runs: fs 0.67 MHz / 16, one DG level and angle,
/// two impedances; 532 records.
Preset desk_preset();

/// Out-of-grid scenario recipe (new DG level, impedances and angles), 532
/// records at the base preset's sampling rate.
Preset robustness_dataset1(const Preset& base);

/// In-grid scenario recipe with all loads scaled by +30%.
Preset robustness_dataset2(const Preset& base);

}  // namespace faultloc::presets
