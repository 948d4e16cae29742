#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace faultloc::net {

// ---------------------------------------------------------------------------
// Phases
// ---------------------------------------------------------------------------

/// Non-empty subset of {a,b,c}; bit0=a, bit1=b, bit2=c.
struct PhaseSet {
    std::uint8_t mask = 0;

    static PhaseSet from_name(const std::string& name);  // "a".."abc"
    std::string name() const;
    bool has(int phase) const { return (mask >> phase) & 1u; }  // 0=a,1=b,2=c
    int count() const;
    bool valid() const { return mask >= 1 && mask <= 7; }

    /// Canonical class index 0..6 in the order a,b,c,ab,ac,bc,abc.
    int class_index() const;
    static PhaseSet from_class_index(int idx);
    static const std::vector<PhaseSet>& all_combinations();

    friend bool operator==(PhaseSet l, PhaseSet r) { return l.mask == r.mask; }
};

// ---------------------------------------------------------------------------
// Network data (20 kV distribution test system)
// ---------------------------------------------------------------------------

struct GridSource {
    double voltage_kv = 20.0;       // line-to-line
    double frequency_hz = 60.0;
    double x_over_r = 10.0;
    // Thevenin stiffness of the upstream grid; the data tables call it an
    // infinite grid, so the default keeps the substation within 1% of nominal
    // at full load.
    double short_circuit_mva = 10000.0;
    double emf_pu = 1.0;
};

struct DgSource {
    int bus = 8;
    double voltage_kv = 3.5;
    double rated_mva = 20.0;
    double frequency_hz = 60.0;
    double transient_reactance_pu = 0.25;  // on machine rating
    double x_over_r = 20.0;
    double emf_pu = 1.0;
};

struct Transformer {
    std::string name;
    std::string from, to;  // bus id as string, or "grid"/"dg"/"load<N>"
    double rated_mva = 10.0;
    double hv_kv = 20.0, lv_kv = 0.4;
    std::string connection = "Yg-Yg";
    double leakage_pu = 0.06;  // on own rating
    double x_over_r = 10.0;
};

/// Conductor data plus the effective per-km electrical parameters.
/// Inductance and capacitance are derived from single-conductor geometry
/// (log-spacing formulas with a configurable geometric mean distance) and a
/// Carson earth-return resistance term, unless explicitly overridden.
struct LineParams {
    double dc_resistance_ohm_per_km = 0.065;
    double inner_radius_cm = 0.14;
    double outer_radius_cm = 0.8;
    double gmd_m = 1.0;

    // Effective values; <0 means "derive from the geometry above".
    double earth_resistance_ohm_per_km = -1.0;
    double series_inductance_h_per_km = -1.0;
    double shunt_capacitance_f_per_km = -1.0;

    /// Fills the three effective fields that are still unset, using
    /// frequency-dependent earth-return resistance.
    void derive(double frequency_hz);

    double series_resistance_ohm_per_km() const {
        return dc_resistance_ohm_per_km + earth_resistance_ohm_per_km;
    }
};

struct LineSection {
    int from_bus = 0, to_bus = 0;
    int path_id = 0;       // 1..6
    double length_km = 0;
};

struct Load {
    int bus = 0;
    double p_mw = 0, q_kvar = 0;
    std::string connection = "Yg";
    std::string model = "constant_z";
};

struct NetworkModel {
    std::vector<int> buses;  // 1..11
    GridSource grid;
    DgSource dg;
    std::vector<Transformer> transformers;
    LineParams line_params;
    std::vector<LineSection> lines;
    std::vector<Load> loads;

    double total_load_p_mw() const;
    double total_load_q_kvar() const;
    double total_line_length_km() const;

    /// Throws a validation Error naming the first failed check.
    void validate() const;

    bool operator==(const NetworkModel&) const;
};

// ---------------------------------------------------------------------------
// Paths and fault placement
// ---------------------------------------------------------------------------

/// A route from the substation (bus 1) to one of the six path termini.
/// `sections` indexes into NetworkModel::lines along the whole route,
/// including trunk sections owned by other paths.
struct PathGeometry {
    int path_id = 0;
    std::vector<int> sections;           // route order, substation outward
    std::vector<double> cum_start_km;    // route offset of each section start
    double route_length_km = 0;

    /// Indices (into `sections`) of the sections this path owns.
    std::vector<int> owned;
};

/// All six routes plus the concatenated walk used for location placement.
class PathTable {
public:
    explicit PathTable(const NetworkModel& model);

    const PathGeometry& path(int path_id) const;
    double max_route_km() const { return max_route_km_; }

    /// Resolves (path, distance-from-substation) to a point on a section:
    /// returns the section index into model.lines and the offset from its
    /// from_bus end, in km. Throws on out-of-range distance.
    struct SectionPoint {
        int section = 0;
        double offset_km = 0;
    };
    SectionPoint resolve(int path_id, double distance_m) const;

private:
    std::vector<PathGeometry> paths_;
    double max_route_km_ = 0;
};

struct FaultLocation {
    int path_id = 0;
    double distance_m = 0;  // from the substation along the owning path

    friend bool operator==(const FaultLocation& l, const FaultLocation& r) {
        return l.path_id == r.path_id && l.distance_m == r.distance_m;
    }
};

struct FaultScenario {
    double dg_penetration = 0.10;   // fraction of total load dispatched to DG
    PhaseSet faulted_phases;        // non-empty subset of {a,b,c}
    double fault_impedance_ohm = 0.1;
    double inception_angle_deg = 90.0;  // phase-a source angle at switch-on
    int path_id = 1;
    double distance_m = 500.0;
    double fault_time_s = 0.025;    // earliest switch-on candidate
    double load_scale = 1.0;        // system state knob for robustness studies

    void validate(const NetworkModel& model, const PathTable& paths) const;
    std::string id() const;  // deterministic record id
};

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

NetworkModel default_network();

NetworkModel load_network(const std::filesystem::path& config_file);
NetworkModel parse_network(const std::string& json_text);
std::string serialize_network(const NetworkModel& model);
void save_network(const NetworkModel& model, const std::filesystem::path& file);

/// Places candidate fault locations every `spacing_m` meters along the
/// concatenated walk of all sections (path 1 trunk first, then each lateral),
/// labelling each position with the path owning the section it falls on.
/// Deterministic, sorted by (path_id, distance).
std::vector<FaultLocation> enumerate_fault_locations(const NetworkModel& model,
                                                     double spacing_m);

/// Cartesian product of the scenario axes with the location list.
std::vector<FaultScenario> scenario_grid(
    const std::vector<double>& dg_levels,
    const std::vector<PhaseSet>& phase_sets,
    const std::vector<double>& impedances_ohm,
    const std::vector<double>& angles_deg,
    const std::vector<FaultLocation>& locations,
    double fault_time_s = 0.025,
    double load_scale = 1.0);

}  // namespace faultloc::net
