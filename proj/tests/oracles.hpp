#pragma once

// Independent reference implementations used only by tests. These stay
// deliberately naive and share no code with the library paths they check.

#include <cmath>
#include <complex>
#include <map>
#include <vector>

#include <Eigen/Dense>

#include "faultloc/netmodel.hpp"

namespace oracles {

// ---------------------------------------------------------------------------
// Naive periodized DWT: direct circular convolution then decimation, with
// the same replicate-last-sample rule for odd lengths.
// ---------------------------------------------------------------------------

struct NaiveDecomposition {
    std::vector<std::vector<double>> details;
    std::vector<double> approx;
};

inline void naive_stage(const std::vector<double>& x, const std::vector<double>& lo,
                        const std::vector<double>& hi, std::vector<double>& ca,
                        std::vector<double>& cd) {
    std::vector<double> padded = x;
    if (padded.size() % 2 != 0) padded.push_back(padded.back());
    const std::size_t n = padded.size();
    ca.assign(n / 2, 0.0);
    cd.assign(n / 2, 0.0);
    for (std::size_t i = 0; i < n / 2; ++i) {
        for (std::size_t k = 0; k < lo.size(); ++k) {
            const double v = padded[(2 * i + k) % n];
            ca[i] += lo[k] * v;
            cd[i] += hi[k] * v;
        }
    }
}

inline NaiveDecomposition naive_dwt(const std::vector<double>& signal,
                                    const std::vector<double>& lo, const std::vector<double>& hi,
                                    int levels) {
    NaiveDecomposition out;
    std::vector<double> a = signal;
    for (int j = 0; j < levels; ++j) {
        std::vector<double> ca, cd;
        naive_stage(a, lo, hi, ca, cd);
        out.details.push_back(cd);
        a = ca;
    }
    out.approx = a;
    return out;
}

// ---------------------------------------------------------------------------
// Brute-force fault location walk: lay out every owned section per path and
// count grid positions section by section.
// ---------------------------------------------------------------------------

inline std::vector<faultloc::net::FaultLocation> walk_locations(
    const faultloc::net::NetworkModel& model, double spacing_m) {
    faultloc::net::PathTable paths(model);
    struct Piece {
        int path;
        double start_m, len_m;
    };
    std::vector<Piece> pieces;
    for (int pid = 1; pid <= 6; ++pid) {
        const auto& geo = paths.path(pid);
        for (int k : geo.owned) {
            const double start = geo.cum_start_km[static_cast<std::size_t>(k)] * 1000.0;
            const double end = (static_cast<std::size_t>(k + 1) < geo.cum_start_km.size()
                                    ? geo.cum_start_km[static_cast<std::size_t>(k + 1)]
                                    : geo.route_length_km) *
                               1000.0;
            pieces.push_back({pid, start, end - start});
        }
    }
    std::vector<faultloc::net::FaultLocation> out;
    double carry = 0;  // distance already walked in previous pieces
    double next = spacing_m;
    for (const auto& piece : pieces) {
        while (next <= carry + piece.len_m + 1e-6) {
            out.push_back({piece.path, piece.start_m + (next - carry)});
            next += spacing_m;
        }
        carry += piece.len_m;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Lumped single-pi phasor solver over buses 1..11 only; an independent check
// for the fundamental-frequency solution.
// ---------------------------------------------------------------------------

struct LumpedSolution {
    Eigen::VectorXcd bus_v;  // 11 entries, peak phasors, phase a
    std::complex<double> grid_emf;
};

inline LumpedSolution lumped_phasors(const faultloc::net::NetworkModel& m, double load_scale,
                                     std::complex<double> dg_emf /*0 = offline*/) {
    using cd = std::complex<double>;
    const double w = 2.0 * M_PI * m.grid.frequency_hz;
    const double v_ll = m.grid.voltage_kv * 1e3;
    const cd jw(0, w);
    Eigen::MatrixXcd y = Eigen::MatrixXcd::Zero(11, 11);
    Eigen::VectorXcd inj = Eigen::VectorXcd::Zero(11);

    const double r_km = m.line_params.series_resistance_ohm_per_km();
    const double l_km = m.line_params.series_inductance_h_per_km;
    const double c_km = m.line_params.shunt_capacitance_f_per_km;
    for (const auto& s : m.lines) {
        const int a = s.from_bus - 1, b = s.to_bus - 1;
        const cd z = cd(r_km * s.length_km, 0) + jw * (l_km * s.length_km);
        const cd yb = 1.0 / z;
        y(a, a) += yb;
        y(b, b) += yb;
        y(a, b) -= yb;
        y(b, a) -= yb;
        const cd half_c = jw * (c_km * s.length_km / 2.0);
        y(a, a) += half_c;
        y(b, b) += half_c;
    }
    auto leakage = [&](const std::string& from, const std::string& to_prefix) {
        for (const auto& t : m.transformers)
            if (t.from == from && t.to.rfind(to_prefix, 0) == 0) {
                const double zmag = t.leakage_pu * v_ll * v_ll / (t.rated_mva * 1e6);
                const double r = zmag / std::sqrt(1.0 + t.x_over_r * t.x_over_r);
                return cd(r, r * t.x_over_r);
            }
        return cd(0, 0);
    };
    for (const auto& ld : m.loads) {
        const cd s_va(ld.p_mw * 1e6 * load_scale, ld.q_kvar * 1e3 * load_scale);
        if (std::abs(s_va) < 1e-9) continue;
        const cd z = v_ll * v_ll / std::conj(s_va) + leakage(std::to_string(ld.bus), "load");
        y(ld.bus - 1, ld.bus - 1) += 1.0 / z;
    }
    const double e_peak = m.grid.emf_pu * v_ll * std::sqrt(2.0) / std::sqrt(3.0);
    const cd grid_emf = std::polar(e_peak, -M_PI / 2.0);
    {
        const double zmag = v_ll * v_ll / (m.grid.short_circuit_mva * 1e6);
        const double r = zmag / std::sqrt(1.0 + m.grid.x_over_r * m.grid.x_over_r);
        const cd z = cd(r, r * m.grid.x_over_r) + leakage("grid", "");
        y(0, 0) += 1.0 / z;
        inj(0) += grid_emf / z;
    }
    if (std::abs(dg_emf) > 0) {
        const double xpu = m.dg.transient_reactance_pu * v_ll * v_ll / (m.dg.rated_mva * 1e6);
        const double r = xpu / std::sqrt(1.0 + m.dg.x_over_r * m.dg.x_over_r);
        const cd z = cd(r, r * m.dg.x_over_r) + leakage(std::to_string(m.dg.bus), "dg");
        y(m.dg.bus - 1, m.dg.bus - 1) += 1.0 / z;
        inj(m.dg.bus - 1) += dg_emf / z;
    }
    LumpedSolution out;
    out.bus_v = y.partialPivLu().solve(inj);
    out.grid_emf = grid_emf;
    return out;
}

// ---------------------------------------------------------------------------
// Finite-difference gradient of a scalar function of a parameter vector.
// ---------------------------------------------------------------------------

template <typename F>
Eigen::VectorXd central_difference(F&& f, const Eigen::VectorXd& x, double h) {
    Eigen::VectorXd g(x.size());
    Eigen::VectorXd probe = x;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        probe(i) = x(i) + h;
        const double fp = f(probe);
        probe(i) = x(i) - h;
        const double fm = f(probe);
        probe(i) = x(i);
        g(i) = (fp - fm) / (2.0 * h);
    }
    return g;
}

// ---------------------------------------------------------------------------
// Perceptron feasibility certificate: converges iff the labelled points are
// strictly linearly separable.
// ---------------------------------------------------------------------------

inline bool separable_2d(const std::vector<std::array<double, 2>>& points,
                         const std::vector<int>& labels, int max_updates = 100000) {
    double w0 = 0, w1 = 0, b = 0;
    int clean_passes = 0;
    int updates = 0;
    while (clean_passes < 2 && updates < max_updates) {
        bool mistake = false;
        for (std::size_t i = 0; i < points.size(); ++i) {
            const double margin =
                (labels[i] ? 1.0 : -1.0) * (w0 * points[i][0] + w1 * points[i][1] + b);
            if (margin <= 0) {
                const double sign = labels[i] ? 1.0 : -1.0;
                w0 += sign * points[i][0];
                w1 += sign * points[i][1];
                b += sign;
                ++updates;
                mistake = true;
            }
        }
        clean_passes = mistake ? 0 : clean_passes + 1;
    }
    return clean_passes >= 2;
}

// Ordinary least squares fit y = a x + b and its mean squared error.
inline double linear_fit_mse(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
    }
    const double a = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    const double b = (sy - a * sx) / n;
    double mse = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double e = y[i] - (a * x[i] + b);
        mse += e * e;
    }
    return mse / n;
}

}  // namespace oracles
