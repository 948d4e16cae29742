#pragma once

#include <array>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "faultloc/emtsim.hpp"

namespace faultloc::feats {

// ---------------------------------------------------------------------------
// Channels
// ---------------------------------------------------------------------------

/// The 18 per-record source channels: six time-domain voltages plus the
/// level-8 detail and approximation coefficients of each.
enum class Channel : int {
    Va, Vb, Vc, V0, V1, V2,
    VaCD8, VbCD8, VcCD8, V0CD8, V1CD8, V2CD8,
    VaCA8, VbCA8, VcCA8, V0CA8, V1CA8, V2CA8,
};
inline constexpr int kChannelCount = 18;

std::string channel_name(Channel c);
Channel channel_from_name(const std::string& name);

/// Phase/mode time channel and its wavelet channels for a given phase index
/// (0=a,1=b,2=c) or mode index (0..2).
Channel phase_time_channel(int phase);
Channel phase_cd8_channel(int phase);
Channel phase_ca8_channel(int phase);
Channel mode_time_channel(int mode);
Channel mode_cd8_channel(int mode);
Channel mode_ca8_channel(int mode);

/// All 18 channels of one record. The wavelet channels are produced by an
/// 8-level decomposition of each time channel.
class ChannelSet {
public:
    static constexpr int kLevels = 8;

    static ChannelSet from_record(const emt::WaveformRecord& record);

    const std::vector<double>& get(Channel c) const;
    double fs = 0;

private:
    std::array<std::vector<double>, kChannelCount> data_;
};

// ---------------------------------------------------------------------------
// Statistics
// ---------------------------------------------------------------------------

enum class StatKind : int { std_dev, variance, mom3, skewness, mode, energy };

std::string stat_name(StatKind k);
StatKind stat_from_name(const std::string& name);

/// Population-moment statistics. `mode` uses a Freedman-Diaconis histogram
/// (ties broken toward the bin nearest zero). Throws a validation error for
/// skewness of a zero-variance sample.
double compute_stat(StatKind kind, std::span<const double> samples);

// ---------------------------------------------------------------------------
// Feature specs
// ---------------------------------------------------------------------------

struct FeatureSpec {
    std::string name;
    std::vector<std::pair<StatKind, Channel>> items;

    std::size_t size() const { return items.size(); }
    void validate() const;  // non-empty, no duplicate (stat, channel) pairs
};

/// Fixed, versioned registry of the workflow's feature vectors:
/// "Tfp", "Ofd-a".."Ofd-ABC", "Ofp-a-H1".."Ofp-ABC-H2".
const FeatureSpec& feature_spec(const std::string& name);
std::vector<std::string> feature_spec_names();

/// Spec name used by each stage for the given fault class.
std::string phase_spec_name();                        // "Tfp"
std::string distance_spec_name(const net::PhaseSet&); // "Ofd-..."
std::string path_spec_name(const net::PhaseSet&, int group);  // group 1|2

struct FeatureVector {
    std::string spec;
    std::vector<double> values;
};

/// Evaluates a spec against a channel set, in spec order. All outputs are
/// checked finite.
FeatureVector assemble_features(const ChannelSet& channels, const FeatureSpec& spec);

// ---------------------------------------------------------------------------
// Standardization
// ---------------------------------------------------------------------------

/// Per-feature z-score with the training set's statistics. Near-constant
/// features map to zero so they cannot inject noise.
struct Scaler {
    std::vector<double> mean, sigma;

    static Scaler fit(const std::vector<std::vector<double>>& rows);
    std::vector<double> transform(std::span<const double> row) const;
};

}  // namespace faultloc::feats
