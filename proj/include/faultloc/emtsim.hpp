#pragma once

#include <complex>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "faultloc/netmodel.hpp"

namespace faultloc::emt {

struct SimConfig {
    double sampling_frequency_hz = 0.67e6;
    double duration_s = 0.1;
    double fault_time_s = 0.025;  // earliest switch-on candidate
    int sections_per_km = 1;      // pi-section density

    double dt() const { return 1.0 / sampling_frequency_hz; }
    std::size_t sample_count() const;
    void validate() const;
};

/// Sampled substation voltages for one scenario: the three phases plus the
/// modal channels obtained from the fixed Clarke transform.
struct WaveformRecord {
    net::FaultScenario scenario;
    double fs = 0;
    std::vector<double> va, vb, vc;
    std::vector<double> v0, v1, v2;

    std::size_t samples() const { return va.size(); }
    const std::vector<double>& channel(int idx) const;  // 0..5 = va..v2
};

/// Power-invariant Clarke transform; row 0 is the zero mode, proportional
/// to (1,1,1). Orthogonal, so the inverse is the transpose.
struct ModalTransform {
    static const Eigen::Matrix3d& matrix();
    static const Eigen::Matrix3d& inverse();
};

void modal_transform(std::span<const double> va, std::span<const double> vb,
                     std::span<const double> vc, std::vector<double>& v0,
                     std::vector<double>& v1, std::vector<double>& v2);

void modal_inverse(std::span<const double> v0, std::span<const double> v1,
                   std::span<const double> v2, std::vector<double>& va,
                   std::vector<double>& vb, std::vector<double>& vc);

/// Fundamental-frequency solution of the discretized network (phase a,
/// peak phasors, sin reference). Used to start the time-domain run in
/// steady state and exposed for load-flow sanity checks.
struct PhasorSolution {
    Eigen::VectorXcd bus_voltage;       // index 0..10 -> bus 1..11
    std::complex<double> grid_emf;
    std::complex<double> dg_emf;        // 0 when DG offline
    std::vector<std::complex<double>> section_current;  // sending-end, per line section
    double dg_power_w = 0;              // three-phase active power dispatched
};

PhasorSolution steady_state_phasors(const net::NetworkModel& model, double dg_penetration,
                                    double load_scale = 1.0, int sections_per_km = 1);

/// Time-domain simulation: balanced pre-fault steady state, then a shunt
/// resistance from each faulted phase to ground switched in at the first
/// instant >= fault_time where the phase-a source angle matches the
/// scenario's inception angle. An empty phase set runs the unfaulted
/// control case.
WaveformRecord simulate_fault(const net::NetworkModel& model, const net::FaultScenario& scenario,
                              const SimConfig& cfg);

/// Actual switching instant used for a scenario under `cfg` (sample-aligned).
double fault_switch_time(const net::FaultScenario& scenario, const SimConfig& cfg,
                         double frequency_hz);

}  // namespace faultloc::emt
