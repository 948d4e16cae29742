#include "faultloc/emtsim.hpp"

#include <cmath>
#include <numbers>

#include "faultloc/errors.hpp"

namespace faultloc::emt {

namespace {

constexpr double kPi = std::numbers::pi;

// ---------------------------------------------------------------------------
// Discretized per-phase network
// ---------------------------------------------------------------------------
// The three phases are modeled as identical decoupled single-conductor
// circuits over the earth return; a ground fault couples a phase to the
// reference through the fault resistance only. Lines are cascaded lumped
// pi sections.

struct RlBranch {
    int a = -1, b = -1;  // node indices, -1 = ground
    double r = 0, l = 0;
};

struct SourceBranch {
    int node = -1;
    double r = 0, l = 0;
    bool is_dg = false;
};

struct Mesh {
    int n_nodes = 0;
    int substation_node = -1;
    int dg_node = -1;
    int fault_node = -1;
    std::vector<RlBranch> branches;
    std::vector<double> shunt_c;              // per node
    std::vector<SourceBranch> sources;
    std::vector<int> section_first_branch;    // per model line section
    double omega = 0;
    double grid_emf_peak = 0;                 // phase-to-neutral, V
    double dg_emf_peak = 0;                   // magnitude when DG online
};

double transformer_leakage_ohm(const net::Transformer& t, double base_kv) {
    return t.leakage_pu * base_kv * base_kv / t.rated_mva;
}

// Splits |Z| into R + jX with the given X/R ratio.
void split_xr(double z_mag, double x_over_r, double& r, double& x) {
    r = z_mag / std::sqrt(1.0 + x_over_r * x_over_r);
    x = r * x_over_r;
}

const net::Transformer* find_transformer(const net::NetworkModel& m, const std::string& from,
                                         const std::string& to_prefix) {
    for (const auto& t : m.transformers)
        if (t.from == from && t.to.rfind(to_prefix, 0) == 0) return &t;
    return nullptr;
}

Mesh build_mesh(const net::NetworkModel& model, const net::PathTable& paths,
                const net::FaultScenario* scenario, int sections_per_km,
                double load_scale) {
    Mesh mesh;
    const double vkv = model.grid.voltage_kv;
    const double v_ll = vkv * 1e3;
    mesh.omega = 2.0 * kPi * model.grid.frequency_hz;
    mesh.grid_emf_peak = model.grid.emf_pu * v_ll * std::numbers::sqrt2 / std::numbers::sqrt3;
    mesh.dg_emf_peak = model.dg.emf_pu * v_ll * std::numbers::sqrt2 / std::numbers::sqrt3;

    std::vector<int> bus_node(12, -1);
    for (int b : model.buses) bus_node[static_cast<std::size_t>(b)] = mesh.n_nodes++;
    mesh.substation_node = bus_node[1];

    // fault placement
    int fault_section = -1;
    double fault_offset_km = 0;
    if (scenario) {
        const auto pt = paths.resolve(scenario->path_id, scenario->distance_m);
        fault_section = pt.section;
        fault_offset_km = pt.offset_km;
    }

    const double r_km = model.line_params.series_resistance_ohm_per_km();
    const double l_km = model.line_params.series_inductance_h_per_km;
    const double c_km = model.line_params.shunt_capacitance_f_per_km;

    mesh.shunt_c.assign(static_cast<std::size_t>(mesh.n_nodes) + 64, 0.0);
    auto new_node = [&]() {
        const int id = mesh.n_nodes++;
        if (static_cast<std::size_t>(mesh.n_nodes) > mesh.shunt_c.size())
            mesh.shunt_c.resize(static_cast<std::size_t>(mesh.n_nodes) + 64, 0.0);
        return id;
    };

    // cascaded pi sections between two nodes; returns nothing, stamps branches
    auto add_line_run = [&](int from, int to, double len_km, bool record_first, int section_idx) {
        const int n_seg = std::max(1, static_cast<int>(std::ceil(len_km * sections_per_km - 1e-9)));
        const double seg = len_km / n_seg;
        int prev = from;
        for (int k = 0; k < n_seg; ++k) {
            const int next = (k == n_seg - 1) ? to : new_node();
            mesh.shunt_c[static_cast<std::size_t>(prev)] += c_km * seg / 2.0;
            mesh.shunt_c[static_cast<std::size_t>(next)] += c_km * seg / 2.0;
            if (record_first && k == 0)
                mesh.section_first_branch[static_cast<std::size_t>(section_idx)] =
                    static_cast<int>(mesh.branches.size());
            mesh.branches.push_back({prev, next, r_km * seg, l_km * seg});
            prev = next;
        }
    };

    mesh.section_first_branch.assign(model.lines.size(), -1);
    for (std::size_t si = 0; si < model.lines.size(); ++si) {
        const auto& sec = model.lines[si];
        const int a = bus_node[static_cast<std::size_t>(sec.from_bus)];
        const int b = bus_node[static_cast<std::size_t>(sec.to_bus)];
        if (static_cast<int>(si) == fault_section) {
            constexpr double kSnap = 1e-9;  // km; snap the fault onto bus nodes
            if (fault_offset_km <= kSnap) {
                mesh.fault_node = a;
                add_line_run(a, b, sec.length_km, true, static_cast<int>(si));
            } else if (fault_offset_km >= sec.length_km - kSnap) {
                mesh.fault_node = b;
                add_line_run(a, b, sec.length_km, true, static_cast<int>(si));
            } else {
                const int fn = new_node();
                mesh.fault_node = fn;
                add_line_run(a, fn, fault_offset_km, true, static_cast<int>(si));
                add_line_run(fn, b, sec.length_km - fault_offset_km, false, 0);
            }
        } else {
            add_line_run(a, b, sec.length_km, true, static_cast<int>(si));
        }
    }

    // grid source behind its Thevenin impedance plus the HV transformer
    {
        double rg, xg;
        split_xr(v_ll * v_ll / (model.grid.short_circuit_mva * 1e6) * 1.0, model.grid.x_over_r, rg, xg);
        double rt = 0, xt = 0;
        if (const auto* t = find_transformer(model, "grid", "")) {
            split_xr(transformer_leakage_ohm(*t, vkv) , t->x_over_r, rt, xt);
        }
        SourceBranch s;
        s.node = mesh.substation_node;
        s.r = rg + rt;
        s.l = (xg + xt) / mesh.omega;
        s.is_dg = false;
        mesh.sources.push_back(s);
    }

    // DG: constant EMF behind transient reactance plus its transformer
    {
        double rm, xm;
        split_xr(model.dg.transient_reactance_pu * v_ll * v_ll / (model.dg.rated_mva * 1e6),
                 model.dg.x_over_r, rm, xm);
        double rt = 0, xt = 0;
        if (const auto* t = find_transformer(model, std::to_string(model.dg.bus), "dg")) {
            split_xr(transformer_leakage_ohm(*t, vkv), t->x_over_r, rt, xt);
        }
        SourceBranch s;
        s.node = bus_node[static_cast<std::size_t>(model.dg.bus)];
        mesh.dg_node = s.node;
        s.r = rm + rt;
        s.l = (xm + xt) / mesh.omega;
        s.is_dg = true;
        mesh.sources.push_back(s);
    }

    // constant-impedance loads referred to the 20 kV side, in series with
    // their distribution transformer leakage
    for (const auto& ld : model.loads) {
        const std::complex<double> s_va(ld.p_mw * 1e6 * load_scale, ld.q_kvar * 1e3 * load_scale);
        if (std::abs(s_va) < 1e-9) continue;
        const std::complex<double> z = v_ll * v_ll / std::conj(s_va);
        double rt = 0, xt = 0;
        if (const auto* t = find_transformer(model, std::to_string(ld.bus), "load")) {
            split_xr(transformer_leakage_ohm(*t, vkv), t->x_over_r, rt, xt);
        }
        RlBranch b;
        b.a = bus_node[static_cast<std::size_t>(ld.bus)];
        b.b = -1;
        b.r = z.real() + rt;
        b.l = (z.imag() + xt) / mesh.omega;
        mesh.branches.push_back(b);
    }

    mesh.shunt_c.resize(static_cast<std::size_t>(mesh.n_nodes));
    return mesh;
}

// ---------------------------------------------------------------------------
// Phasor solution on the discretized mesh (phase a, sin reference)
// ---------------------------------------------------------------------------

struct MeshPhasors {
    Eigen::VectorXcd node_v;                       // per node
    std::vector<std::complex<double>> branch_i;    // per RL branch, a->b
    std::vector<std::complex<double>> source_i;    // into the source node
    std::complex<double> grid_emf, dg_emf;
    double dg_power_w = 0;
};

MeshPhasors solve_phasors(const Mesh& mesh, bool dg_online, double dg_target_w) {
    using cd = std::complex<double>;
    const cd jw(0.0, mesh.omega);
    const int n = mesh.n_nodes;

    Eigen::MatrixXcd y = Eigen::MatrixXcd::Zero(n, n);
    for (const auto& b : mesh.branches) {
        const cd yb = 1.0 / (cd(b.r, 0) + jw * b.l);
        if (b.a >= 0) y(b.a, b.a) += yb;
        if (b.b >= 0) y(b.b, b.b) += yb;
        if (b.a >= 0 && b.b >= 0) {
            y(b.a, b.b) -= yb;
            y(b.b, b.a) -= yb;
        }
    }
    for (int k = 0; k < n; ++k) y(k, k) += jw * mesh.shunt_c[static_cast<std::size_t>(k)];
    std::vector<cd> y_src;
    for (const auto& s : mesh.sources) {
        const cd ys = 1.0 / (cd(s.r, 0) + jw * s.l);
        y_src.push_back(ys);
        if (!s.is_dg || dg_online) y(s.node, s.node) += ys;
    }

    Eigen::PartialPivLU<Eigen::MatrixXcd> lu(y);

    // sin(wt + 0) ==> peak phasor at angle -90 deg
    const cd grid_emf = std::polar(mesh.grid_emf_peak, -kPi / 2.0);

    Eigen::VectorXcd inj_grid = Eigen::VectorXcd::Zero(n);
    Eigen::VectorXcd inj_dg_unit = Eigen::VectorXcd::Zero(n);
    for (std::size_t k = 0; k < mesh.sources.size(); ++k) {
        const auto& s = mesh.sources[k];
        if (s.is_dg) {
            if (dg_online) inj_dg_unit(s.node) = y_src[k];
        } else {
            inj_grid(s.node) += y_src[k] * grid_emf;
        }
    }

    const Eigen::VectorXcd v_grid = lu.solve(inj_grid);
    cd dg_emf = 0;
    Eigen::VectorXcd v = v_grid;

    if (dg_online) {
        const Eigen::VectorXcd v_dg_unit = lu.solve(inj_dg_unit);
        cd y_d = 0;
        int dg_node = -1;
        for (std::size_t k = 0; k < mesh.sources.size(); ++k)
            if (mesh.sources[k].is_dg) {
                y_d = y_src[k];
                dg_node = mesh.sources[k].node;
            }
        const double e_mag = mesh.dg_emf_peak;
        auto power_at = [&](double delta) {
            const cd e = std::polar(e_mag, delta - kPi / 2.0);
            const cd v_bus = v_grid(dg_node) + e * v_dg_unit(dg_node);
            const cd i = (e - v_bus) * y_d;
            return 1.5 * std::real(e * std::conj(i));
        };
        // bracket the dispatch angle on the rising branch, then bisect
        double lo = -kPi / 2, hi = kPi / 2;
        double flo = power_at(lo) - dg_target_w;
        double fhi = power_at(hi) - dg_target_w;
        if (flo * fhi > 0) {
            bool found = false;
            for (int k = 0; k < 180 && !found; ++k) {
                const double a = -kPi / 2 + k * kPi / 180.0;
                const double b = a + kPi / 180.0;
                if ((power_at(a) - dg_target_w) * (power_at(b) - dg_target_w) <= 0) {
                    lo = a;
                    hi = b;
                    found = true;
                }
            }
            if (!found) fail_numerical("DG dispatch target unreachable");
        }
        for (int it = 0; it < 100; ++it) {
            const double mid = 0.5 * (lo + hi);
            const double fm = power_at(mid) - dg_target_w;
            if ((power_at(lo) - dg_target_w) * fm <= 0)
                hi = mid;
            else
                lo = mid;
        }
        const double delta = 0.5 * (lo + hi);
        dg_emf = std::polar(e_mag, delta - kPi / 2.0);
        v = v_grid + dg_emf * v_dg_unit;
    }

    MeshPhasors out;
    out.node_v = v;
    out.grid_emf = grid_emf;
    out.dg_emf = dg_emf;
    for (const auto& b : mesh.branches) {
        const cd va = b.a >= 0 ? v(b.a) : cd(0);
        const cd vb = b.b >= 0 ? v(b.b) : cd(0);
        out.branch_i.push_back((va - vb) / (cd(b.r, 0) + jw * b.l));
    }
    for (std::size_t k = 0; k < mesh.sources.size(); ++k) {
        const auto& s = mesh.sources[k];
        if (s.is_dg && !dg_online) {
            out.source_i.push_back(cd(0));
            continue;
        }
        const cd e = s.is_dg ? dg_emf : grid_emf;
        out.source_i.push_back((e - v(s.node)) * y_src[k]);
        if (s.is_dg) out.dg_power_w = 1.5 * std::real(e * std::conj(out.source_i.back()));
    }
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// SimConfig / ModalTransform / WaveformRecord
// ---------------------------------------------------------------------------

std::size_t SimConfig::sample_count() const {
    return static_cast<std::size_t>(std::llround(duration_s * sampling_frequency_hz));
}

void SimConfig::validate() const {
    if (sampling_frequency_hz <= 0) fail_validation("sampling frequency must be > 0");
    if (duration_s <= 0) fail_validation("duration must be > 0");
    if (fault_time_s >= duration_s) fail_validation("fault time must precede the end of the window");
    if (sections_per_km < 1) fail_validation("sections_per_km must be >= 1");
    // keep the level-7 detail band meaningful
    if (sampling_frequency_hz < 2.0 * 5.2e3)
        fail_validation("sampling frequency too low for the analyzed bands");
    if (sample_count() < 512) fail_validation("window too short (need at least 512 samples)");
}

const std::vector<double>& WaveformRecord::channel(int idx) const {
    switch (idx) {
        case 0: return va;
        case 1: return vb;
        case 2: return vc;
        case 3: return v0;
        case 4: return v1;
        case 5: return v2;
        default: fail_validation("channel index out of range");
    }
}

const Eigen::Matrix3d& ModalTransform::matrix() {
    static const Eigen::Matrix3d t = [] {
        const double k = std::sqrt(2.0 / 3.0);
        Eigen::Matrix3d m;
        m << k / std::numbers::sqrt2, k / std::numbers::sqrt2, k / std::numbers::sqrt2,
             k, -k / 2.0, -k / 2.0,
             0.0, k * std::numbers::sqrt3 / 2.0, -k * std::numbers::sqrt3 / 2.0;
        return m;
    }();
    return t;
}

const Eigen::Matrix3d& ModalTransform::inverse() {
    static const Eigen::Matrix3d inv = ModalTransform::matrix().transpose();
    return inv;
}

void modal_transform(std::span<const double> va, std::span<const double> vb,
                     std::span<const double> vc, std::vector<double>& v0,
                     std::vector<double>& v1, std::vector<double>& v2) {
    if (va.size() != vb.size() || vb.size() != vc.size())
        fail_validation("modal transform: channel length mismatch");
    const Eigen::Matrix3d& t = ModalTransform::matrix();
    const std::size_t n = va.size();
    v0.resize(n);
    v1.resize(n);
    v2.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const Eigen::Vector3d p(va[i], vb[i], vc[i]);
        const Eigen::Vector3d m = t * p;
        v0[i] = m(0);
        v1[i] = m(1);
        v2[i] = m(2);
    }
}

void modal_inverse(std::span<const double> v0, std::span<const double> v1,
                   std::span<const double> v2, std::vector<double>& va,
                   std::vector<double>& vb, std::vector<double>& vc) {
    if (v0.size() != v1.size() || v1.size() != v2.size())
        fail_validation("modal inverse: channel length mismatch");
    const Eigen::Matrix3d& t = ModalTransform::inverse();
    const std::size_t n = v0.size();
    va.resize(n);
    vb.resize(n);
    vc.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const Eigen::Vector3d m(v0[i], v1[i], v2[i]);
        const Eigen::Vector3d p = t * m;
        va[i] = p(0);
        vb[i] = p(1);
        vc[i] = p(2);
    }
}

// ---------------------------------------------------------------------------
// Public phasor operation
// ---------------------------------------------------------------------------

PhasorSolution steady_state_phasors(const net::NetworkModel& model, double dg_penetration,
                                    double load_scale, int sections_per_km) {
    net::PathTable paths(model);
    const Mesh mesh = build_mesh(model, paths, nullptr, sections_per_km, load_scale);
    const bool dg_online = dg_penetration > 0;
    // the dispatch target is a fraction of the actual (scaled) load
    const double target = dg_penetration * model.total_load_p_mw() * 1e6 * load_scale;
    const MeshPhasors mp = solve_phasors(mesh, dg_online, target);

    PhasorSolution out;
    out.bus_voltage.resize(11);
    for (int b = 1; b <= 11; ++b) out.bus_voltage(b - 1) = mp.node_v(b - 1);
    out.grid_emf = mp.grid_emf;
    out.dg_emf = mp.dg_emf;
    out.dg_power_w = mp.dg_power_w;
    for (std::size_t si = 0; si < model.lines.size(); ++si) {
        const int bi = mesh.section_first_branch[si];
        out.section_current.push_back(bi >= 0 ? mp.branch_i[static_cast<std::size_t>(bi)] : 0.0);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Time-domain simulation
// ---------------------------------------------------------------------------

double fault_switch_time(const net::FaultScenario& scenario, const SimConfig& cfg,
                         double frequency_hz) {
    const double period = 1.0 / frequency_hz;
    const double frac = scenario.inception_angle_deg / 360.0;
    const double k = std::ceil((scenario.fault_time_s / period - frac) - 1e-12);
    const double t = (frac + k) * period;
    const double fs = cfg.sampling_frequency_hz;
    return std::llround(t * fs) / fs;  // snap to the sample grid
}

WaveformRecord simulate_fault(const net::NetworkModel& model, const net::FaultScenario& scenario,
                              const SimConfig& cfg) {
    cfg.validate();
    net::PathTable paths(model);
    const bool faulted = scenario.faulted_phases.mask != 0;
    if (faulted) scenario.validate(model, paths);

    const Mesh mesh = build_mesh(model, paths, faulted ? &scenario : nullptr,
                                 cfg.sections_per_km, scenario.load_scale);
    const bool dg_online = scenario.dg_penetration > 0;
    const double dg_target =
        scenario.dg_penetration * model.total_load_p_mw() * 1e6 * scenario.load_scale;
    const MeshPhasors ph = solve_phasors(mesh, dg_online, dg_target);

    const double dt = cfg.dt();
    const std::size_t n_samples = cfg.sample_count();
    const double omega = mesh.omega;
    const int n = mesh.n_nodes;

    // companion coefficients
    struct RlComp {
        int a, b;
        double g, keff;
    };
    std::vector<RlComp> rl;
    for (const auto& b : mesh.branches) {
        const double denom = 2.0 * b.l + b.r * dt;
        rl.push_back({b.a, b.b, dt / denom, (2.0 * b.l - b.r * dt) / denom});
    }
    struct SrcComp {
        int node;
        double g, keff;
        bool is_dg;
        double emf_peak, emf_angle;  // e(t) = emf_peak*sin(w t + angle)
    };
    std::vector<SrcComp> src;
    for (std::size_t k = 0; k < mesh.sources.size(); ++k) {
        const auto& s = mesh.sources[k];
        if (s.is_dg && !dg_online) continue;
        const double denom = 2.0 * s.l + s.r * dt;
        const std::complex<double> e = s.is_dg ? ph.dg_emf : ph.grid_emf;
        // phasor X at angle -90deg+phi corresponds to sin(wt+phi)
        src.push_back({s.node, dt / denom, (2.0 * s.l - s.r * dt) / denom, s.is_dg,
                       std::abs(e), std::arg(e) + kPi / 2.0});
    }
    std::vector<double> gc(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) gc[static_cast<std::size_t>(k)] = 2.0 * mesh.shunt_c[static_cast<std::size_t>(k)] / dt;

    // nodal conductance matrices
    Eigen::MatrixXd g_pre = Eigen::MatrixXd::Zero(n, n);
    for (std::size_t k = 0; k < rl.size(); ++k) {
        const auto& b = rl[k];
        if (b.a >= 0) g_pre(b.a, b.a) += b.g;
        if (b.b >= 0) g_pre(b.b, b.b) += b.g;
        if (b.a >= 0 && b.b >= 0) {
            g_pre(b.a, b.b) -= b.g;
            g_pre(b.b, b.a) -= b.g;
        }
    }
    for (const auto& s : src) g_pre(s.node, s.node) += s.g;
    for (int k = 0; k < n; ++k) g_pre(k, k) += gc[static_cast<std::size_t>(k)];

    Eigen::LLT<Eigen::MatrixXd> llt_pre(g_pre);
    if (llt_pre.info() != Eigen::Success) fail_numerical("nodal matrix not positive definite");
    Eigen::LLT<Eigen::MatrixXd> llt_post;
    if (faulted) {
        Eigen::MatrixXd g_post = g_pre;
        g_post(mesh.fault_node, mesh.fault_node) += 1.0 / scenario.fault_impedance_ohm;
        llt_post.compute(g_post);
        if (llt_post.info() != Eigen::Success) fail_numerical("faulted nodal matrix not positive definite");
    }

    const double t_sw = fault_switch_time(scenario, cfg, model.grid.frequency_hz);
    const std::size_t n_sw = faulted
        ? static_cast<std::size_t>(std::llround(t_sw * cfg.sampling_frequency_hz))
        : n_samples + 1;
    if (faulted && n_sw + 16 >= n_samples)
        fail_validation("window ends before the fault transient develops");

    const double v_limit = 100.0 * mesh.grid_emf_peak;

    WaveformRecord rec;
    rec.scenario = scenario;
    rec.fs = cfg.sampling_frequency_hz;
    rec.va.resize(n_samples);
    rec.vb.resize(n_samples);
    rec.vc.resize(n_samples);

    // phase shifts a,b,c
    const double shifts[3] = {0.0, -2.0 * kPi / 3.0, 2.0 * kPi / 3.0};
    std::vector<double>* out_ch[3] = {&rec.va, &rec.vb, &rec.vc};

    for (int phase = 0; phase < 3; ++phase) {
        const std::complex<double> rot = std::polar(1.0, shifts[phase]);
        const bool phase_faulted = faulted && scenario.faulted_phases.has(phase);

        // state: branch currents and voltages at the previous step
        std::vector<double> i_rl(rl.size()), v_rl(rl.size());
        std::vector<double> i_src(src.size()), vsrc_prev(src.size());
        std::vector<double> i_c(static_cast<std::size_t>(n)), v_node(static_cast<std::size_t>(n));

        for (int k = 0; k < n; ++k) {
            v_node[static_cast<std::size_t>(k)] = std::real(ph.node_v(k) * rot);
            i_c[static_cast<std::size_t>(k)] =
                std::real(std::complex<double>(0, omega) * mesh.shunt_c[static_cast<std::size_t>(k)] *
                          ph.node_v(k) * rot);
        }
        for (std::size_t k = 0; k < rl.size(); ++k) {
            i_rl[k] = std::real(ph.branch_i[k] * rot);
            const double va0 = rl[k].a >= 0 ? v_node[static_cast<std::size_t>(rl[k].a)] : 0.0;
            const double vb0 = rl[k].b >= 0 ? v_node[static_cast<std::size_t>(rl[k].b)] : 0.0;
            v_rl[k] = va0 - vb0;
        }
        {
            std::size_t ks = 0;
            for (std::size_t k = 0; k < mesh.sources.size(); ++k) {
                if (mesh.sources[k].is_dg && !dg_online) continue;
                i_src[ks] = std::real(ph.source_i[k] * rot);
                const double e0 = src[ks].emf_peak * std::sin(src[ks].emf_angle + shifts[phase]);
                vsrc_prev[ks] = e0 - v_node[static_cast<std::size_t>(src[ks].node)];
                ++ks;
            }
        }

        (*out_ch[phase])[0] = v_node[static_cast<std::size_t>(mesh.substation_node)];

        Eigen::VectorXd rhs(n), v_new(n);
        for (std::size_t step = 1; step < n_samples; ++step) {
            const double t = static_cast<double>(step) * dt;
            rhs.setZero();
            for (std::size_t k = 0; k < rl.size(); ++k) {
                const double h = rl[k].keff * i_rl[k] + rl[k].g * v_rl[k];
                if (rl[k].a >= 0) rhs(rl[k].a) -= h;
                if (rl[k].b >= 0) rhs(rl[k].b) += h;
                i_rl[k] = h;  // stash history; completed after the solve
            }
            for (std::size_t k = 0; k < src.size(); ++k) {
                const double e = src[k].emf_peak * std::sin(omega * t + src[k].emf_angle + shifts[phase]);
                const double h = src[k].keff * i_src[k] + src[k].g * vsrc_prev[k];
                rhs(src[k].node) += src[k].g * e + h;
                i_src[k] = h;
                vsrc_prev[k] = e;  // now holds e(t); voltage updated after solve
            }
            for (int k = 0; k < n; ++k) {
                const double h = -gc[static_cast<std::size_t>(k)] * v_node[static_cast<std::size_t>(k)] -
                                 i_c[static_cast<std::size_t>(k)];
                rhs(k) -= h;
                i_c[static_cast<std::size_t>(k)] = h;
            }

            if (phase_faulted && step >= n_sw)
                v_new = llt_post.solve(rhs);
            else
                v_new = llt_pre.solve(rhs);

            // finish state updates with the new voltages
            for (std::size_t k = 0; k < rl.size(); ++k) {
                const double va1 = rl[k].a >= 0 ? v_new(rl[k].a) : 0.0;
                const double vb1 = rl[k].b >= 0 ? v_new(rl[k].b) : 0.0;
                const double vab = va1 - vb1;
                i_rl[k] += rl[k].g * vab;  // i = G v + h
                v_rl[k] = vab;
            }
            for (std::size_t k = 0; k < src.size(); ++k) {
                const double vb1 = vsrc_prev[k] - v_new(src[k].node);  // e(t) - v_a(t)
                i_src[k] += src[k].g * vb1;
                vsrc_prev[k] = vb1;
            }
            for (int k = 0; k < n; ++k) {
                i_c[static_cast<std::size_t>(k)] += gc[static_cast<std::size_t>(k)] * v_new(k);
                v_node[static_cast<std::size_t>(k)] = v_new(k);
            }

            const double v_sub = v_new(mesh.substation_node);
            if (!std::isfinite(v_sub) || std::abs(v_sub) > v_limit)
                fail_numerical("substation voltage exceeded 100x nominal peak (unstable run)");
            (*out_ch[phase])[step] = v_sub;
        }
    }

    modal_transform(rec.va, rec.vb, rec.vc, rec.v0, rec.v1, rec.v2);
    return rec;
}

}  // namespace faultloc::emt
