#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace faultloc::dwt {

/// Orthonormal analysis/synthesis filter pair. Only db4 ships; the struct
/// keeps the family abstraction open for other even-length orthonormal taps.
struct WaveletFilter {
    std::string name;
    std::vector<double> lo_d, hi_d;  // analysis taps
    std::vector<double> lo_r, hi_r;  // synthesis taps (equal for this bank)
    double center_frequency = 0;     // cycles/sample of the mother wavelet

    std::size_t length() const { return lo_d.size(); }

    /// Checks sum(lo_d) = sqrt(2), unit norm, even-shift orthogonality and
    /// the alternating-flip relation between lo_d and hi_d.
    void validate() const;
};

const WaveletFilter& db4();

/// Multi-level decomposition with periodic boundary handling. Odd-length
/// stages replicate their last sample before filtering, so every stage
/// halves with ceil().
struct DwtDecomposition {
    int levels = 0;
    std::vector<std::vector<double>> details;        // CD_1..CD_J
    std::vector<double> approx;                      // CA_J
    std::vector<std::vector<double>> intermediates;  // CA_1..CA_{J-1} when kept
    std::size_t source_length = 0;
    double fs = 0;

    const std::vector<double>& detail(int level) const;  // level in 1..J
};

DwtDecomposition dwt_multilevel(std::span<const double> signal, const WaveletFilter& filter,
                                int levels, double fs = 0,
                                bool keep_intermediates = false);

std::vector<double> idwt_multilevel(const DwtDecomposition& decomp,
                                    const WaveletFilter& filter);

enum class BandKind { detail, approximation };

struct BandSpec {
    int level = 0;
    BandKind kind = BandKind::detail;
    double lo_hz = 0, hi_hz = 0;
};

/// Dyadic band edges: CD_j covers [fs/2^(j+1), fs/2^j], CA_j covers
/// [0, fs/2^(j+1)].
BandSpec band_frequencies(int level, BandKind kind, double fs);

/// Sum of squared coefficients.
double wavelet_energy(std::span<const double> coeffs);

/// Direct sampled continuous transform used as a diagnostic cross-check for
/// the dyadic decomposition; not part of the feature path. Scales are in
/// samples. Returns one row per scale, each of signal length.
std::vector<std::vector<double>> cwt_reference(std::span<const double> signal,
                                               std::span<const double> scales,
                                               const WaveletFilter& filter,
                                               double fs = 1.0);

/// Mother wavelet tabulated by the filter cascade; exposed for the CWT
/// oracle and its tests. Grid spacing is 2^-refine over [0, taps-1].
std::vector<double> wavelet_table(const WaveletFilter& filter, int refine);

}  // namespace faultloc::dwt
