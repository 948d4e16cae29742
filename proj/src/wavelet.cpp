#include "faultloc/wavelet.hpp"

#include <cmath>
#include <numbers>

#include "faultloc/errors.hpp"
#include "faultloc/parallel.hpp"

namespace faultloc::dwt {

namespace {

// db4 scaling taps, standard orthonormal construction.
constexpr std::array<double, 8> kDb4Lo = {
    0.23037781330885523,  0.71484657055254153,  0.63088076792959036,
    -0.027983769416983849, -0.18703481171888114, 0.030841381835986965,
    0.032883011666982945, -0.010597401784997278};

std::vector<double> alternating_flip(const std::vector<double>& h) {
    const std::size_t n = h.size();
    std::vector<double> g(n);
    for (std::size_t k = 0; k < n; ++k)
        g[k] = (k % 2 == 0 ? 1.0 : -1.0) * h[n - 1 - k];
    return g;
}

double spectral_peak(const std::vector<double>& psi, int refine) {
    // direct Fourier magnitude scan over the tabulated mother wavelet
    const double dt = std::ldexp(1.0, -refine);
    double best_f = 0, best_mag = -1;
    for (double f = 0.05; f <= 1.5; f += 0.0005) {
        double re = 0, im = 0;
        for (std::size_t i = 0; i < psi.size(); ++i) {
            const double ph = 2.0 * std::numbers::pi * f * (static_cast<double>(i) * dt);
            re += psi[i] * std::cos(ph);
            im += psi[i] * std::sin(ph);
        }
        const double mag = re * re + im * im;
        if (mag > best_mag) {
            best_mag = mag;
            best_f = f;
        }
    }
    return best_f;
}

// One periodized analysis stage. Input may be odd; the last sample is
// replicated to make it even, so outputs have ceil(n/2) entries.
void analysis_stage(std::span<const double> x, const WaveletFilter& f,
                    std::vector<double>& ca, std::vector<double>& cd) {
    const std::size_t n_in = x.size();
    const std::size_t n = n_in + (n_in % 2);  // padded length
    const std::size_t half = n / 2;
    const std::size_t taps = f.length();
    ca.resize(half);
    cd.resize(half);
    auto at = [&](std::size_t idx) {
        idx %= n;
        return idx < n_in ? x[idx] : x[n_in - 1];
    };
    par::parallel_for(half, [&](std::size_t i) {
        double a = 0, d = 0;
        for (std::size_t k = 0; k < taps; ++k) {
            const double v = at(2 * i + k);
            a += v * f.lo_d[k];
            d += v * f.hi_d[k];
        }
        ca[i] = a;
        cd[i] = d;
    });
}

// Inverse of analysis_stage: reconstructs n_out samples (n_out may be odd).
std::vector<double> synthesis_stage(std::span<const double> ca, std::span<const double> cd,
                                    const WaveletFilter& f, std::size_t n_out) {
    const std::size_t half = ca.size();
    if (cd.size() != half) fail_validation("idwt: CA/CD length mismatch");
    const std::size_t n = 2 * half;
    if (n_out != n && n_out + 1 != n) fail_validation("idwt: inconsistent stage length");
    const std::size_t taps = f.length();
    std::vector<double> out(n, 0.0);
    const std::size_t wrap = ((taps / n) + 1) * n;  // keeps m + wrap - k non-negative
    par::parallel_for(n, [&](std::size_t m) {
        double acc = 0;
        // contributions from coefficients i with (m - 2i) mod N in [0, taps)
        for (std::size_t k = (m % 2 == 0) ? 0 : 1; k < taps; k += 2) {
            const std::size_t idx2 = (m + wrap - k) % n;  // = 2*i
            const std::size_t ci = idx2 / 2;
            acc += ca[ci] * f.lo_r[k] + cd[ci] * f.hi_r[k];
        }
        out[m] = acc;
    });
    out.resize(n_out);
    return out;
}

}  // namespace

void WaveletFilter::validate() const {
    const std::size_t n = length();
    if (n == 0 || n % 2 != 0) fail_validation("wavelet filter length must be even and non-zero");
    if (hi_d.size() != n || lo_r.size() != n || hi_r.size() != n)
        fail_validation("wavelet filter tap arrays must have equal length");
    double sum = 0, norm = 0;
    for (double v : lo_d) {
        sum += v;
        norm += v * v;
    }
    if (std::abs(sum - std::numbers::sqrt2) > 1e-12)
        fail_validation("low-pass taps must sum to sqrt(2)");
    if (std::abs(norm - 1.0) > 1e-11) fail_validation("low-pass taps must have unit norm");
    for (std::size_t m = 1; 2 * m < n; ++m) {
        double dot = 0;
        for (std::size_t k = 0; k + 2 * m < n; ++k) dot += lo_d[k] * lo_d[k + 2 * m];
        if (std::abs(dot) > 1e-11) fail_validation("low-pass taps violate even-shift orthogonality");
    }
    for (std::size_t k = 0; k < n; ++k) {
        const double want = (k % 2 == 0 ? 1.0 : -1.0) * lo_d[n - 1 - k];
        if (std::abs(hi_d[k] - want) > 1e-15)
            fail_validation("high-pass taps violate the quadrature-mirror relation");
    }
}

const WaveletFilter& db4() {
    static const WaveletFilter f = [] {
        WaveletFilter w;
        w.name = "db4";
        w.lo_d.assign(kDb4Lo.begin(), kDb4Lo.end());
        w.hi_d = alternating_flip(w.lo_d);
        w.lo_r = w.lo_d;
        w.hi_r = w.hi_d;
        w.validate();
        w.center_frequency = spectral_peak(wavelet_table(w, 8), 8);
        return w;
    }();
    return f;
}

const std::vector<double>& DwtDecomposition::detail(int level) const {
    if (level < 1 || level > levels) fail_validation("detail level out of range");
    return details[static_cast<std::size_t>(level) - 1];
}

DwtDecomposition dwt_multilevel(std::span<const double> signal, const WaveletFilter& filter,
                                int levels, double fs, bool keep_intermediates) {
    if (levels < 1) fail_validation("dwt: levels must be >= 1");
    if (signal.size() < (std::size_t{1} << levels))
        fail_validation("dwt: signal too short for " + std::to_string(levels) +
                        " levels (need at least 2^J samples)");
    DwtDecomposition out;
    out.levels = levels;
    out.source_length = signal.size();
    out.fs = fs;
    out.details.resize(levels);

    std::vector<double> approx(signal.begin(), signal.end());
    for (int j = 0; j < levels; ++j) {
        std::vector<double> ca;
        analysis_stage(approx, filter, ca, out.details[static_cast<std::size_t>(j)]);
        approx = std::move(ca);
        if (keep_intermediates && j + 1 < levels) out.intermediates.push_back(approx);
    }
    out.approx = std::move(approx);
    return out;
}

std::vector<double> idwt_multilevel(const DwtDecomposition& decomp, const WaveletFilter& filter) {
    if (decomp.levels < 1 || decomp.details.size() != static_cast<std::size_t>(decomp.levels))
        fail_validation("idwt: malformed decomposition");
    // per-stage lengths from the source length
    std::vector<std::size_t> len(static_cast<std::size_t>(decomp.levels) + 1);
    len[0] = decomp.source_length;
    for (int j = 1; j <= decomp.levels; ++j) len[static_cast<std::size_t>(j)] = (len[j - 1] + 1) / 2;
    for (int j = 1; j <= decomp.levels; ++j)
        if (decomp.details[static_cast<std::size_t>(j) - 1].size() != len[static_cast<std::size_t>(j)])
            fail_validation("idwt: CD_" + std::to_string(j) + " length inconsistent with source length");
    if (decomp.approx.size() != len[static_cast<std::size_t>(decomp.levels)])
        fail_validation("idwt: CA length inconsistent with source length");

    std::vector<double> approx = decomp.approx;
    for (int j = decomp.levels; j >= 1; --j)
        approx = synthesis_stage(approx, decomp.details[static_cast<std::size_t>(j) - 1], filter,
                                 len[static_cast<std::size_t>(j) - 1]);
    return approx;
}

BandSpec band_frequencies(int level, BandKind kind, double fs) {
    if (level < 1) fail_validation("band level must be >= 1");
    if (fs <= 0) fail_validation("sampling frequency must be > 0");
    BandSpec b;
    b.level = level;
    b.kind = kind;
    const double upper = std::ldexp(fs, -level);       // fs / 2^j
    const double lower = std::ldexp(fs, -(level + 1));  // fs / 2^(j+1)
    if (kind == BandKind::detail) {
        b.lo_hz = lower;
        b.hi_hz = upper;
    } else {
        b.lo_hz = 0.0;
        b.hi_hz = lower;
    }
    return b;
}

double wavelet_energy(std::span<const double> coeffs) {
    double e = 0;
    for (double c : coeffs) e += c * c;
    return e;
}

std::vector<double> wavelet_table(const WaveletFilter& filter, int refine) {
    const std::size_t taps = filter.length();
    // cascade for the scaling function on a grid of spacing 2^-m
    std::vector<double> phi{1.0};
    for (int m = 1; m <= refine; ++m) {
        const std::size_t n_new = (taps - 1) * (std::size_t{1} << m) + 1;
        std::vector<double> next(n_new, 0.0);
        const long long stride = 1LL << (m - 1);
        for (std::size_t i = 0; i < n_new; ++i) {
            double acc = 0;
            for (std::size_t k = 0; k < taps; ++k) {
                const long long src = static_cast<long long>(i) - static_cast<long long>(k) * stride;
                if (src >= 0 && src < static_cast<long long>(phi.size()))
                    acc += filter.lo_d[k] * phi[static_cast<std::size_t>(src)];
            }
            next[i] = std::numbers::sqrt2 * acc;
        }
        phi = std::move(next);
    }
    // wavelet from the refined scaling function
    const std::size_t n = (taps - 1) * (std::size_t{1} << refine) + 1;
    std::vector<double> psi(n, 0.0);
    const long long full = 1LL << refine;
    for (std::size_t i = 0; i < n; ++i) {
        double acc = 0;
        for (std::size_t k = 0; k < taps; ++k) {
            const long long src = 2 * static_cast<long long>(i) - static_cast<long long>(k) * full;
            if (src >= 0 && src < static_cast<long long>(phi.size()))
                acc += filter.hi_d[k] * phi[static_cast<std::size_t>(src)];
        }
        psi[i] = std::numbers::sqrt2 * acc;
    }
    return psi;
}

std::vector<std::vector<double>> cwt_reference(std::span<const double> signal,
                                               std::span<const double> scales,
                                               const WaveletFilter& filter, double fs) {
    for (double a : scales)
        if (a <= 0) fail_validation("cwt scales must be > 0");
    if (fs <= 0) fail_validation("cwt sampling frequency must be > 0");
    const int refine = 10;
    const std::vector<double> psi = wavelet_table(filter, refine);
    const double grid = std::ldexp(1.0, -refine);
    const double support = static_cast<double>(filter.length() - 1);
    auto psi_at = [&](double t) {
        if (t < 0.0 || t > support) return 0.0;
        const double u = t / grid;
        const std::size_t i0 = std::min(static_cast<std::size_t>(u), psi.size() - 2);
        const double w = u - static_cast<double>(i0);
        return psi[i0] * (1.0 - w) + psi[i0 + 1] * w;
    };

    const double ts = 1.0 / fs;
    const std::size_t n = signal.size();
    std::vector<std::vector<double>> coeffs(scales.size(), std::vector<double>(n, 0.0));
    for (std::size_t si = 0; si < scales.size(); ++si) {
        const double a = scales[si];          // in samples
        const double a_sec = a * ts;
        const double norm = ts / std::sqrt(a_sec);
        auto& row = coeffs[si];
        par::parallel_for(n, [&](std::size_t i) {
            // psi support maps to samples [i, i + a*(taps-1)]
            const std::size_t hi = std::min(
                n - 1, i + static_cast<std::size_t>(std::ceil(a * support)));
            double acc = 0;
            for (std::size_t m = i; m <= hi; ++m)
                acc += psi_at((static_cast<double>(m) - static_cast<double>(i)) / a) * signal[m];
            row[i] = norm * acc;
        });
    }
    return coeffs;
}

}  // namespace faultloc::dwt
