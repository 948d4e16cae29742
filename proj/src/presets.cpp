#include "faultloc/presets.hpp"

#include <sstream>

#include "faultloc/errors.hpp"

namespace faultloc::presets {

std::size_t GridSpec::scenario_count() const {
    const std::size_t combos =
        zf_angle_pairs.empty() ? impedances_ohm.size() * angles_deg.size() : zf_angle_pairs.size();
    return dg_levels.size() * phase_sets.size() * combos;
}

std::vector<net::FaultScenario> GridSpec::expand(const net::NetworkModel& model) const {
    const auto locations = net::enumerate_fault_locations(model, spacing_m);
    if (locations.empty()) fail_validation("grid spacing places no fault locations");
    if (!zf_angle_pairs.empty()) {
        std::vector<net::FaultScenario> out;
        for (const auto& [zf, angle] : zf_angle_pairs) {
            auto part = net::scenario_grid(dg_levels, phase_sets, {zf}, {angle}, locations,
                                           fault_time_s, load_scale);
            out.insert(out.end(), part.begin(), part.end());
        }
        return out;
    }
    return net::scenario_grid(dg_levels, phase_sets, impedances_ohm, angles_deg, locations,
                              fault_time_s, load_scale);
}

std::string GridSpec::describe() const {
    std::ostringstream os;
    os << name << ": dg={";
    for (double d : dg_levels) os << d << ",";
    os << "} phases=" << phase_sets.size();
    if (zf_angle_pairs.empty()) {
        os << " zf={";
        for (double z : impedances_ohm) os << z << ",";
        os << "} theta={";
        for (double a : angles_deg) os << a << ",";
        os << "}";
    } else {
        os << " (zf,theta)={";
        for (const auto& [z, a] : zf_angle_pairs) os << "(" << z << "," << a << "),";
        os << "}";
    }
    os << " spacing=" << spacing_m << "m load_scale=" << load_scale;
    return os.str();
}

Preset paper_preset() {
    Preset p;
    p.name = "paper-scale";
    p.grid.name = "paper";
    p.grid.dg_levels = {0.10, 0.50};
    p.grid.impedances_ohm = {0.01, 0.1, 1.0, 10.0};
    p.grid.angles_deg = {45.0, 90.0, 135.0};
    p.sim.sampling_frequency_hz = 0.67e6;
    p.sim.duration_s = 0.1;
    p.sim.fault_time_s = 0.025;
    return p;
}

Preset desk_preset() {
    Preset p;
    p.name = "desk-scale";
    p.grid.name = "desk";
    p.grid.dg_levels = {0.10};
    p.grid.impedances_ohm = {0.1, 1.0};
    p.grid.angles_deg = {90.0};
    p.sim.sampling_frequency_hz = 0.67e6 / 16.0;  // 41.875 kHz
    p.sim.duration_s = 0.1;
    p.sim.fault_time_s = 0.025;
    return p;
}

Preset robustness_dataset1(const Preset& base) {
    Preset p = base;
    p.name = base.name + "-robustness1";
    p.grid.name = "robustness1";
    p.grid.dg_levels = {0.30};
    p.grid.impedances_ohm.clear();
    p.grid.angles_deg.clear();
    p.grid.zf_angle_pairs = {{0.5, 70.0}, {5.0, 110.0}};
    p.grid.load_scale = 1.0;
    return p;
}

Preset robustness_dataset2(const Preset& base) {
    Preset p = base;
    p.name = base.name + "-robustness2";
    p.grid.name = "robustness2";
    p.grid.dg_levels = {0.10};
    p.grid.impedances_ohm.clear();
    p.grid.angles_deg.clear();
    // in-grid impedances paired with in-grid angles; only the loads change
    if (base.grid.angles_deg.size() > 1)
        p.grid.zf_angle_pairs = {{0.1, base.grid.angles_deg[0]}, {1.0, base.grid.angles_deg[1]}};
    else
        p.grid.zf_angle_pairs = {{0.1, base.grid.angles_deg[0]}, {1.0, base.grid.angles_deg[0]}};
    p.grid.load_scale = 1.3;
    return p;
}

}  // namespace faultloc::presets
