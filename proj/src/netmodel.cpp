#include "faultloc/netmodel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "faultloc/errors.hpp"

namespace faultloc::net {

using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// PhaseSet
// ---------------------------------------------------------------------------

PhaseSet PhaseSet::from_name(const std::string& name) {
    PhaseSet ps;
    for (char c : name) {
        switch (c) {
            case 'a': ps.mask |= 1; break;
            case 'b': ps.mask |= 2; break;
            case 'c': ps.mask |= 4; break;
            default: fail_validation("invalid phase name '" + name + "'");
        }
    }
    if (!ps.valid()) fail_validation("empty phase set '" + name + "'");
    return ps;
}

std::string PhaseSet::name() const {
    std::string s;
    if (mask & 1) s += 'a';
    if (mask & 2) s += 'b';
    if (mask & 4) s += 'c';
    return s;
}

int PhaseSet::count() const {
    return ((mask >> 0) & 1) + ((mask >> 1) & 1) + ((mask >> 2) & 1);
}

const std::vector<PhaseSet>& PhaseSet::all_combinations() {
    static const std::vector<PhaseSet> all = {
        {1}, {2}, {4}, {3}, {5}, {6}, {7}};  // a,b,c,ab,ac,bc,abc
    return all;
}

int PhaseSet::class_index() const {
    const auto& all = all_combinations();
    for (std::size_t i = 0; i < all.size(); ++i)
        if (all[i].mask == mask) return static_cast<int>(i);
    fail_validation("phase set has no class index");
}

PhaseSet PhaseSet::from_class_index(int idx) {
    const auto& all = all_combinations();
    if (idx < 0 || idx >= static_cast<int>(all.size()))
        fail_validation("phase class index out of range");
    return all[idx];
}

// ---------------------------------------------------------------------------
// LineParams
// ---------------------------------------------------------------------------

void LineParams::derive(double frequency_hz) {
    constexpr double mu0_over_2pi = 2.0e-7;       // H/m
    constexpr double two_pi_eps0 = 5.56325027e-11;  // F/m
    const double r_out_m = outer_radius_cm / 100.0;
    const double gmr_m = r_out_m * std::exp(-0.25);
    if (earth_resistance_ohm_per_km < 0)
        earth_resistance_ohm_per_km = std::numbers::pi * std::numbers::pi *
                                      frequency_hz * 1e-4;  // Carson, low frequency
    if (series_inductance_h_per_km < 0)
        series_inductance_h_per_km = mu0_over_2pi * std::log(gmd_m / gmr_m) * 1000.0;
    if (shunt_capacitance_f_per_km < 0)
        shunt_capacitance_f_per_km = two_pi_eps0 / std::log(gmd_m / r_out_m) * 1000.0;
}

// ---------------------------------------------------------------------------
// NetworkModel
// ---------------------------------------------------------------------------

double NetworkModel::total_load_p_mw() const {
    double p = 0;
    for (const auto& l : loads) p += l.p_mw;
    return p;
}

double NetworkModel::total_load_q_kvar() const {
    double q = 0;
    for (const auto& l : loads) q += l.q_kvar;
    return q;
}

double NetworkModel::total_line_length_km() const {
    double s = 0;
    for (const auto& l : lines) s += l.length_km;
    return s;
}

namespace {

constexpr double kSumTol = 1e-9;

// Expected per-path line length sums, km (the test feeder's fixed layout).
const std::map<int, double> kPathLengthKm = {
    {1, 10.0}, {2, 2.0}, {3, 1.0}, {4, 1.0}, {5, 2.0}, {6, 3.0}};
constexpr double kTotalLoadP = 37.2;   // MW
constexpr double kTotalLoadQ = 195.0;  // kVar

}  // namespace

void NetworkModel::validate() const {
    if (buses.size() != 11) fail_validation("expected 11 buses, got " + std::to_string(buses.size()));
    {
        std::set<int> ids(buses.begin(), buses.end());
        for (int b = 1; b <= 11; ++b)
            if (!ids.count(b)) fail_validation("missing bus " + std::to_string(b));
    }
    if (lines.size() != 10)
        fail_validation("expected 10 line sections, got " + std::to_string(lines.size()));

    std::map<int, double> per_path;
    for (const auto& s : lines) {
        if (s.length_km <= 0)
            fail_validation("non-positive section length on " + std::to_string(s.from_bus) + "-" +
                            std::to_string(s.to_bus));
        if (s.path_id < 1 || s.path_id > 6)
            fail_validation("section path id out of range 1..6");
        per_path[s.path_id] += s.length_km;
    }
    for (const auto& [pid, want] : kPathLengthKm) {
        const double got = per_path.count(pid) ? per_path.at(pid) : 0.0;
        if (std::abs(got - want) > kSumTol) {
            std::ostringstream os;
            os << "path " << pid << " length sum " << got << " km, expected " << want << " km";
            fail_validation(os.str());
        }
    }
    if (std::abs(total_line_length_km() - 19.0) > kSumTol)
        fail_validation("total line length must be 19 km");

    // tree rooted at bus 1: 10 edges over 11 buses, all reachable
    std::map<int, std::vector<int>> adj;
    for (const auto& s : lines) {
        adj[s.from_bus].push_back(s.to_bus);
        adj[s.to_bus].push_back(s.from_bus);
    }
    std::set<int> seen{1};
    std::vector<int> stack{1};
    while (!stack.empty()) {
        int b = stack.back();
        stack.pop_back();
        for (int nb : adj[b])
            if (seen.insert(nb).second) stack.push_back(nb);
    }
    if (seen.size() != buses.size())
        fail_validation("line graph is not a tree rooted at bus 1 (disconnected bus)");

    if (std::abs(total_load_p_mw() - kTotalLoadP) > kSumTol) {
        std::ostringstream os;
        os << "total load P " << total_load_p_mw() << " MW, expected " << kTotalLoadP << " MW";
        fail_validation(os.str());
    }
    if (std::abs(total_load_q_kvar() - kTotalLoadQ) > kSumTol) {
        std::ostringstream os;
        os << "total load Q " << total_load_q_kvar() << " kVar, expected " << kTotalLoadQ << " kVar";
        fail_validation(os.str());
    }
    for (const auto& l : loads) {
        if (!std::count(buses.begin(), buses.end(), l.bus))
            fail_validation("load on unknown bus " + std::to_string(l.bus));
    }
    if (!std::count(buses.begin(), buses.end(), dg.bus))
        fail_validation("DG on unknown bus " + std::to_string(dg.bus));
    if (grid.voltage_kv <= 0 || grid.frequency_hz <= 0 || grid.short_circuit_mva <= 0)
        fail_validation("grid source parameters must be positive");
    if (line_params.series_inductance_h_per_km <= 0 ||
        line_params.shunt_capacitance_f_per_km <= 0)
        fail_validation("line per-km parameters not derived");
}

bool NetworkModel::operator==(const NetworkModel& o) const {
    return serialize_network(*this) == serialize_network(o);
}

// ---------------------------------------------------------------------------
// PathTable
// ---------------------------------------------------------------------------

PathTable::PathTable(const NetworkModel& model) {
    // parent pointers via BFS from bus 1
    std::map<int, std::vector<std::pair<int, int>>> adj;  // bus -> (neighbor, section idx)
    for (std::size_t i = 0; i < model.lines.size(); ++i) {
        const auto& s = model.lines[i];
        adj[s.from_bus].push_back({s.to_bus, static_cast<int>(i)});
        adj[s.to_bus].push_back({s.from_bus, static_cast<int>(i)});
    }
    std::map<int, std::pair<int, int>> parent;  // bus -> (parent bus, section idx)
    std::set<int> seen{1};
    std::vector<int> stack{1};
    while (!stack.empty()) {
        int b = stack.back();
        stack.pop_back();
        for (auto [nb, si] : adj[b])
            if (seen.insert(nb).second) {
                parent[nb] = {b, si};
                stack.push_back(nb);
            }
    }

    paths_.resize(7);
    for (int pid = 1; pid <= 6; ++pid) {
        // terminus = the endpoint of this path's sections farthest from root
        int terminus = -1;
        std::size_t best_depth = 0;
        for (std::size_t i = 0; i < model.lines.size(); ++i) {
            if (model.lines[i].path_id != pid) continue;
            for (int end : {model.lines[i].from_bus, model.lines[i].to_bus}) {
                std::size_t d = 0;
                for (int b = end; b != 1; b = parent.at(b).first) ++d;
                if (terminus < 0 || d > best_depth) {
                    terminus = end;
                    best_depth = d;
                }
            }
        }
        if (terminus < 0) fail_validation("path " + std::to_string(pid) + " has no sections");

        PathGeometry geo;
        geo.path_id = pid;
        std::vector<int> route;
        for (int b = terminus; b != 1; b = parent.at(b).first) route.push_back(parent.at(b).second);
        std::reverse(route.begin(), route.end());
        double cum = 0;
        for (int si : route) {
            geo.sections.push_back(si);
            geo.cum_start_km.push_back(cum);
            cum += model.lines[si].length_km;
            if (model.lines[si].path_id == pid)
                geo.owned.push_back(static_cast<int>(geo.sections.size()) - 1);
        }
        geo.route_length_km = cum;
        max_route_km_ = std::max(max_route_km_, cum);
        paths_[pid] = std::move(geo);
    }
}

const PathGeometry& PathTable::path(int path_id) const {
    if (path_id < 1 || path_id > 6) fail_validation("path id out of range 1..6");
    return paths_[path_id];
}

PathTable::SectionPoint PathTable::resolve(int path_id, double distance_m) const {
    const auto& geo = path(path_id);
    const double d_km = distance_m / 1000.0;
    if (d_km < -1e-12 || d_km > geo.route_length_km + 1e-9)
        fail_validation("distance " + std::to_string(distance_m) + " m beyond path " +
                        std::to_string(path_id) + " route");
    for (std::size_t k = 0; k < geo.sections.size(); ++k) {
        const double start = geo.cum_start_km[k];
        const double len = geo.cum_start_km.size() == k + 1
                               ? geo.route_length_km - start
                               : geo.cum_start_km[k + 1] - start;
        if (d_km <= start + len + 1e-12) {
            return {geo.sections[k], std::clamp(d_km - start, 0.0, len)};
        }
    }
    return {geo.sections.back(), d_km - geo.cum_start_km.back()};
}

// ---------------------------------------------------------------------------
// FaultScenario
// ---------------------------------------------------------------------------

void FaultScenario::validate(const NetworkModel& model, const PathTable& paths) const {
    (void)model;
    if (!faulted_phases.valid()) fail_validation("faulted phase set must be a non-empty subset of {a,b,c}");
    if (fault_impedance_ohm <= 0) fail_validation("fault impedance must be > 0");
    if (dg_penetration < 0 || dg_penetration > 1) fail_validation("DG penetration must be in [0,1]");
    if (load_scale <= 0) fail_validation("load scale must be > 0");
    if (fault_time_s <= 0) fail_validation("fault time must be > 0");
    const auto& geo = paths.path(path_id);
    if (distance_m <= 0 || distance_m > geo.route_length_km * 1000.0 + 1e-6)
        fail_validation("fault distance beyond route length of path " + std::to_string(path_id));
}

std::string FaultScenario::id() const {
    std::string suffix;
    if (load_scale != 1.0)
        suffix = "_ls" + std::to_string(static_cast<int>(std::lround(load_scale * 100)));
    char buf[128];
    std::snprintf(buf, sizeof buf, "dg%03d_%s_zf%g_th%g_p%d_d%05d%s",
                  static_cast<int>(std::lround(dg_penetration * 100)),
                  faulted_phases.name().c_str(), fault_impedance_ohm, inception_angle_deg,
                  path_id, static_cast<int>(std::lround(distance_m)), suffix.c_str());
    return buf;
}

// ---------------------------------------------------------------------------
// Default network (test feeder data)
// ---------------------------------------------------------------------------

NetworkModel default_network() {
    NetworkModel m;
    m.buses = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11};
    m.grid = GridSource{};
    m.dg = DgSource{};
    m.transformers = {
        {"grid-bus1", "grid", "1", 60.0, 63.0, 20.0, "Yg-Yg", 0.06, 10.0},
        {"bus8-dg", "8", "dg", 10.0, 20.0, 3.5, "Yg-Yg", 0.06, 10.0},
        {"bus3-load3", "3", "load3", 10.0, 20.0, 0.4, "Yg-Yg", 0.06, 10.0},
        {"bus4-load4", "4", "load4", 10.0, 20.0, 0.4, "Yg-Yg", 0.06, 10.0},
        {"bus6-load6", "6", "load6", 10.0, 20.0, 0.4, "Yg-Yg", 0.06, 10.0},
        {"bus8-load8", "8", "load8", 10.0, 20.0, 0.4, "Yg-Yg", 0.06, 10.0},
        {"bus10-load10", "10", "load10", 10.0, 20.0, 0.4, "Yg-Yg", 0.06, 10.0},
        {"bus11-load11", "11", "load11", 10.0, 20.0, 0.4, "Yg-Yg", 0.06, 10.0},
    };
    m.line_params = LineParams{};
    m.line_params.derive(m.grid.frequency_hz);
    m.lines = {
        {1, 2, 1, 2.0}, {2, 5, 1, 1.5}, {5, 7, 1, 1.5}, {7, 9, 1, 3.0}, {9, 11, 1, 2.0},
        {2, 3, 2, 2.0}, {2, 4, 3, 1.0}, {5, 6, 4, 1.0}, {7, 8, 5, 2.0}, {9, 10, 6, 3.0},
    };
    m.loads = {
        {3, 7.5, 42.5, "Yg", "constant_z"},  {4, 7.5, 42.5, "Yg", "constant_z"},
        {6, 3.6, 12.5, "Yg", "constant_z"},  {8, 7.5, 42.5, "Yg", "constant_z"},
        {10, 7.5, 42.5, "Yg", "constant_z"}, {11, 3.6, 12.5, "Yg", "constant_z"},
    };
    m.validate();
    return m;
}

// ---------------------------------------------------------------------------
// JSON serialization
// ---------------------------------------------------------------------------

namespace {

json to_json(const NetworkModel& m) {
    json j;
    j["buses"] = m.buses;
    j["grid_source"] = {{"voltage_kv", m.grid.voltage_kv},
                        {"frequency_hz", m.grid.frequency_hz},
                        {"x_over_r", m.grid.x_over_r},
                        {"short_circuit_mva", m.grid.short_circuit_mva},
                        {"emf_pu", m.grid.emf_pu}};
    j["dg_source"] = {{"bus", m.dg.bus},
                      {"voltage_kv", m.dg.voltage_kv},
                      {"rated_mva", m.dg.rated_mva},
                      {"frequency_hz", m.dg.frequency_hz},
                      {"transient_reactance_pu", m.dg.transient_reactance_pu},
                      {"x_over_r", m.dg.x_over_r},
                      {"emf_pu", m.dg.emf_pu}};
    j["transformers"] = json::array();
    for (const auto& t : m.transformers)
        j["transformers"].push_back({{"name", t.name},
                                     {"from", t.from},
                                     {"to", t.to},
                                     {"rated_mva", t.rated_mva},
                                     {"hv_kv", t.hv_kv},
                                     {"lv_kv", t.lv_kv},
                                     {"connection", t.connection},
                                     {"leakage_pu", t.leakage_pu},
                                     {"x_over_r", t.x_over_r}});
    j["line_type"] = {{"dc_resistance_ohm_per_km", m.line_params.dc_resistance_ohm_per_km},
                      {"inner_radius_cm", m.line_params.inner_radius_cm},
                      {"outer_radius_cm", m.line_params.outer_radius_cm},
                      {"gmd_m", m.line_params.gmd_m},
                      {"earth_resistance_ohm_per_km", m.line_params.earth_resistance_ohm_per_km},
                      {"series_inductance_h_per_km", m.line_params.series_inductance_h_per_km},
                      {"shunt_capacitance_f_per_km", m.line_params.shunt_capacitance_f_per_km}};
    j["lines"] = json::array();
    for (const auto& s : m.lines)
        j["lines"].push_back({{"from", s.from_bus},
                              {"to", s.to_bus},
                              {"path", s.path_id},
                              {"length_km", s.length_km}});
    j["loads"] = json::array();
    for (const auto& l : m.loads)
        j["loads"].push_back({{"bus", l.bus},
                              {"p_mw", l.p_mw},
                              {"q_kvar", l.q_kvar},
                              {"connection", l.connection},
                              {"model", l.model}});
    return j;
}

NetworkModel from_json(const json& j) {
    NetworkModel m;
    try {
        m.buses = j.at("buses").get<std::vector<int>>();
        const auto& g = j.at("grid_source");
        m.grid.voltage_kv = g.at("voltage_kv");
        m.grid.frequency_hz = g.at("frequency_hz");
        m.grid.x_over_r = g.at("x_over_r");
        m.grid.short_circuit_mva = g.value("short_circuit_mva", 10000.0);
        m.grid.emf_pu = g.value("emf_pu", 1.0);
        const auto& d = j.at("dg_source");
        m.dg.bus = d.at("bus");
        m.dg.voltage_kv = d.at("voltage_kv");
        m.dg.rated_mva = d.at("rated_mva");
        m.dg.frequency_hz = d.value("frequency_hz", m.grid.frequency_hz);
        m.dg.transient_reactance_pu = d.value("transient_reactance_pu", 0.25);
        m.dg.x_over_r = d.value("x_over_r", 20.0);
        m.dg.emf_pu = d.value("emf_pu", 1.0);
        for (const auto& t : j.at("transformers")) {
            Transformer tr;
            tr.name = t.value("name", "");
            tr.from = t.at("from");
            tr.to = t.at("to");
            tr.rated_mva = t.at("rated_mva");
            tr.hv_kv = t.at("hv_kv");
            tr.lv_kv = t.at("lv_kv");
            tr.connection = t.value("connection", "Yg-Yg");
            tr.leakage_pu = t.value("leakage_pu", 0.06);
            tr.x_over_r = t.value("x_over_r", 10.0);
            m.transformers.push_back(tr);
        }
        const auto& lt = j.at("line_type");
        m.line_params.dc_resistance_ohm_per_km = lt.at("dc_resistance_ohm_per_km");
        m.line_params.inner_radius_cm = lt.at("inner_radius_cm");
        m.line_params.outer_radius_cm = lt.at("outer_radius_cm");
        m.line_params.gmd_m = lt.value("gmd_m", 1.0);
        m.line_params.earth_resistance_ohm_per_km = lt.value("earth_resistance_ohm_per_km", -1.0);
        m.line_params.series_inductance_h_per_km = lt.value("series_inductance_h_per_km", -1.0);
        m.line_params.shunt_capacitance_f_per_km = lt.value("shunt_capacitance_f_per_km", -1.0);
        m.line_params.derive(m.grid.frequency_hz);
        for (const auto& s : j.at("lines")) {
            LineSection ls;
            ls.from_bus = s.at("from");
            ls.to_bus = s.at("to");
            ls.path_id = s.at("path");
            ls.length_km = s.at("length_km");
            m.lines.push_back(ls);
        }
        for (const auto& l : j.at("loads")) {
            Load ld;
            ld.bus = l.at("bus");
            ld.p_mw = l.at("p_mw");
            ld.q_kvar = l.at("q_kvar");
            ld.connection = l.value("connection", "Yg");
            ld.model = l.value("model", "constant_z");
            m.loads.push_back(ld);
        }
    } catch (const json::exception& e) {
        fail_data(std::string("network config parse error: ") + e.what());
    }
    m.validate();
    return m;
}

}  // namespace

NetworkModel parse_network(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        fail_data(std::string("network config parse error: ") + e.what());
    }
    return from_json(j);
}

NetworkModel load_network(const std::filesystem::path& config_file) {
    std::ifstream in(config_file);
    if (!in) fail_data("cannot open network config " + config_file.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_network(ss.str());
}

std::string serialize_network(const NetworkModel& m) { return to_json(m).dump(2) + "\n"; }

void save_network(const NetworkModel& m, const std::filesystem::path& file) {
    std::ofstream out(file);
    if (!out) fail_data("cannot write network config " + file.string());
    out << serialize_network(m);
}

// ---------------------------------------------------------------------------
// Location placement and scenario grids
// ---------------------------------------------------------------------------

std::vector<FaultLocation> enumerate_fault_locations(const NetworkModel& model,
                                                     double spacing_m) {
    if (spacing_m <= 0) fail_validation("location spacing must be > 0");
    PathTable paths(model);

    // Concatenated walk: each path's owned sections in route order.
    struct Segment {
        int path_id;
        double route_start_m;  // distance from substation at segment start
        double length_m;
    };
    std::vector<Segment> walk;
    double total_m = 0;
    for (int pid = 1; pid <= 6; ++pid) {
        const auto& geo = paths.path(pid);
        for (int k : geo.owned) {
            const double len_km = (static_cast<std::size_t>(k + 1) < geo.cum_start_km.size()
                                       ? geo.cum_start_km[k + 1]
                                       : geo.route_length_km) -
                                  geo.cum_start_km[k];
            walk.push_back({pid, geo.cum_start_km[k] * 1000.0, len_km * 1000.0});
            total_m += len_km * 1000.0;
        }
    }

    std::vector<FaultLocation> out;
    std::size_t seg = 0;
    double seg_walk_start = 0;
    for (long long k = 1; k * spacing_m <= total_m + 1e-6; ++k) {
        const double pos = k * spacing_m;
        while (seg + 1 < walk.size() && pos > seg_walk_start + walk[seg].length_m + 1e-9) {
            seg_walk_start += walk[seg].length_m;
            ++seg;
        }
        const double offset = std::min(pos - seg_walk_start, walk[seg].length_m);
        out.push_back({walk[seg].path_id, walk[seg].route_start_m + offset});
    }
    return out;
}

std::vector<FaultScenario> scenario_grid(const std::vector<double>& dg_levels,
                                         const std::vector<PhaseSet>& phase_sets,
                                         const std::vector<double>& impedances_ohm,
                                         const std::vector<double>& angles_deg,
                                         const std::vector<FaultLocation>& locations,
                                         double fault_time_s, double load_scale) {
    if (dg_levels.empty() || phase_sets.empty() || impedances_ohm.empty() ||
        angles_deg.empty() || locations.empty())
        fail_validation("scenario grid axes must be non-empty");
    std::vector<FaultScenario> out;
    out.reserve(dg_levels.size() * phase_sets.size() * impedances_ohm.size() *
                angles_deg.size() * locations.size());
    for (double dg : dg_levels)
        for (PhaseSet ph : phase_sets)
            for (double zf : impedances_ohm)
                for (double th : angles_deg)
                    for (const auto& loc : locations) {
                        FaultScenario s;
                        s.dg_penetration = dg;
                        s.faulted_phases = ph;
                        s.fault_impedance_ohm = zf;
                        s.inception_angle_deg = th;
                        s.path_id = loc.path_id;
                        s.distance_m = loc.distance_m;
                        s.fault_time_s = fault_time_s;
                        s.load_scale = load_scale;
                        out.push_back(s);
                    }
    return out;
}

}  // namespace faultloc::net
