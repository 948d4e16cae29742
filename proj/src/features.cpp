#include "faultloc/features.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "faultloc/errors.hpp"
#include "faultloc/parallel.hpp"
#include "faultloc/wavelet.hpp"

namespace faultloc::feats {

// ---------------------------------------------------------------------------
// Channels
// ---------------------------------------------------------------------------

namespace {
const std::array<std::string, kChannelCount> kChannelNames = {
    "Va",    "Vb",    "Vc",    "V0",    "V1",    "V2",
    "VaCD8", "VbCD8", "VcCD8", "V0CD8", "V1CD8", "V2CD8",
    "VaCA8", "VbCA8", "VcCA8", "V0CA8", "V1CA8", "V2CA8"};
}

std::string channel_name(Channel c) { return kChannelNames[static_cast<std::size_t>(c)]; }

Channel channel_from_name(const std::string& name) {
    for (int i = 0; i < kChannelCount; ++i)
        if (kChannelNames[static_cast<std::size_t>(i)] == name) return static_cast<Channel>(i);
    fail_validation("unknown channel '" + name + "'");
}

Channel phase_time_channel(int phase) { return static_cast<Channel>(phase); }
Channel phase_cd8_channel(int phase) { return static_cast<Channel>(6 + phase); }
Channel phase_ca8_channel(int phase) { return static_cast<Channel>(12 + phase); }
Channel mode_time_channel(int mode) { return static_cast<Channel>(3 + mode); }
Channel mode_cd8_channel(int mode) { return static_cast<Channel>(9 + mode); }
Channel mode_ca8_channel(int mode) { return static_cast<Channel>(15 + mode); }

ChannelSet ChannelSet::from_record(const emt::WaveformRecord& record) {
    if (record.samples() == 0) fail_validation("empty waveform record");
    ChannelSet cs;
    cs.fs = record.fs;
    for (int ch = 0; ch < 6; ++ch) cs.data_[static_cast<std::size_t>(ch)] = record.channel(ch);
    par::parallel_for(6, [&](std::size_t ch) {
        auto dec = dwt::dwt_multilevel(cs.data_[ch], dwt::db4(), kLevels, record.fs);
        cs.data_[6 + ch] = dec.detail(kLevels);
        cs.data_[12 + ch] = std::move(dec.approx);
    });
    return cs;
}

const std::vector<double>& ChannelSet::get(Channel c) const {
    const auto& v = data_[static_cast<std::size_t>(c)];
    if (v.empty()) fail_validation("channel " + channel_name(c) + " missing");
    return v;
}

// ---------------------------------------------------------------------------
// Statistics
// ---------------------------------------------------------------------------

std::string stat_name(StatKind k) {
    switch (k) {
        case StatKind::std_dev: return "std";
        case StatKind::variance: return "var";
        case StatKind::mom3: return "mom3";
        case StatKind::skewness: return "skn";
        case StatKind::mode: return "mode";
        case StatKind::energy: return "energy";
    }
    fail_validation("bad stat kind");
}

StatKind stat_from_name(const std::string& name) {
    if (name == "std") return StatKind::std_dev;
    if (name == "var") return StatKind::variance;
    if (name == "mom3" || name == "cm3") return StatKind::mom3;
    if (name == "skn") return StatKind::skewness;
    if (name == "mode") return StatKind::mode;
    if (name == "energy") return StatKind::energy;
    fail_validation("unknown stat '" + name + "'");
}

namespace {

double mean_of(std::span<const double> x) {
    double s = 0;
    for (double v : x) s += v;
    return s / static_cast<double>(x.size());
}

double central_moment(std::span<const double> x, int order) {
    const double mu = mean_of(x);
    double s = 0;
    for (double v : x) s += std::pow(v - mu, order);
    return s / static_cast<double>(x.size());
}

// type-7 linear-interpolation quantile of sorted data
double quantile_sorted(const std::vector<double>& s, double p) {
    const double h = p * static_cast<double>(s.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(h);
    if (lo + 1 >= s.size()) return s.back();
    const double w = h - static_cast<double>(lo);
    return s[lo] * (1.0 - w) + s[lo + 1] * w;
}

// Freedman-Diaconis histogram mode; ties resolved toward the bin nearest zero.
double histogram_mode(std::span<const double> x) {
    const std::size_t n = x.size();
    if (n == 1) return x[0];
    std::vector<double> s(x.begin(), x.end());
    std::sort(s.begin(), s.end());
    const double lo = s.front(), hi = s.back();
    const double range = hi - lo;
    if (range <= 0) return lo;
    const double iqr = quantile_sorted(s, 0.75) - quantile_sorted(s, 0.25);
    double width = 2.0 * iqr / std::cbrt(static_cast<double>(n));
    if (width <= 0) width = range / std::ceil(std::sqrt(static_cast<double>(n)));
    const std::size_t nbins =
        std::min<std::size_t>(1u << 20, std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(range / width))));
    std::vector<std::size_t> counts(nbins, 0);
    for (double v : x) {
        std::size_t b = static_cast<std::size_t>((v - lo) / range * static_cast<double>(nbins));
        if (b >= nbins) b = nbins - 1;
        ++counts[b];
    }
    auto center = [&](std::size_t b) {
        return lo + (static_cast<double>(b) + 0.5) * range / static_cast<double>(nbins);
    };
    std::size_t best = 0;
    for (std::size_t b = 1; b < nbins; ++b) {
        if (counts[b] > counts[best] ||
            (counts[b] == counts[best] && std::abs(center(b)) < std::abs(center(best))))
            best = b;
    }
    return center(best);
}

}  // namespace

double compute_stat(StatKind kind, std::span<const double> samples) {
    const std::size_t n = samples.size();
    const bool needs_two = kind == StatKind::std_dev || kind == StatKind::variance ||
                           kind == StatKind::skewness || kind == StatKind::mom3;
    if (n == 0 || (needs_two && n < 2))
        fail_validation("compute_stat: too few samples for " + stat_name(kind));
    switch (kind) {
        case StatKind::variance: return central_moment(samples, 2);
        case StatKind::std_dev: return std::sqrt(central_moment(samples, 2));
        case StatKind::mom3: return central_moment(samples, 3);
        case StatKind::skewness: {
            const double sd = std::sqrt(central_moment(samples, 2));
            if (sd == 0.0) fail_validation("skewness undefined for zero-variance samples");
            return central_moment(samples, 3) / (sd * sd * sd);
        }
        case StatKind::mode: return histogram_mode(samples);
        case StatKind::energy: {
            double e = 0;
            for (double v : samples) e += v * v;
            return e;
        }
    }
    fail_validation("bad stat kind");
}

// ---------------------------------------------------------------------------
// Feature specs
// ---------------------------------------------------------------------------

void FeatureSpec::validate() const {
    if (name.empty()) fail_validation("feature spec must be named");
    if (items.empty()) fail_validation("feature spec '" + name + "' has no items");
    std::set<std::pair<int, int>> seen;
    for (const auto& [stat, ch] : items)
        if (!seen.insert({static_cast<int>(stat), static_cast<int>(ch)}).second)
            fail_validation("feature spec '" + name + "' repeats " + stat_name(stat) + "(" +
                            channel_name(ch) + ")");
}

namespace {

using SK = StatKind;

struct SpecBuilder {
    FeatureSpec spec;
    SpecBuilder(std::string name) { spec.name = std::move(name); }
    SpecBuilder& add(SK s, Channel c) {
        spec.items.push_back({s, c});
        return *this;
    }
    FeatureSpec done() {
        spec.validate();
        return spec;
    }
};

FeatureSpec make_tfp() {
    SpecBuilder b("Tfp");
    for (int p = 0; p < 3; ++p) b.add(SK::std_dev, phase_time_channel(p));
    for (int p = 0; p < 3; ++p) b.add(SK::std_dev, phase_cd8_channel(p));
    for (int p = 0; p < 3; ++p) b.add(SK::std_dev, phase_ca8_channel(p));
    for (int p = 0; p < 3; ++p) b.add(SK::energy, phase_cd8_channel(p));
    for (int p = 0; p < 3; ++p) b.add(SK::energy, phase_ca8_channel(p));
    return b.done();
}

FeatureSpec make_ofd_single(int i) {
    SpecBuilder b("Ofd-" + std::string(1, static_cast<char>('a' + i)));
    b.add(SK::variance, phase_time_channel(i));
    b.add(SK::variance, phase_cd8_channel(i));
    b.add(SK::skewness, phase_time_channel(i));
    b.add(SK::skewness, phase_cd8_channel(i));
    b.add(SK::skewness, phase_ca8_channel(i));
    b.add(SK::mom3, phase_time_channel(i));
    b.add(SK::mom3, phase_cd8_channel(i));
    b.add(SK::mom3, phase_ca8_channel(i));
    b.add(SK::energy, phase_cd8_channel(i));
    return b.done();
}

FeatureSpec make_ofd_pair(int i, int j) {
    SpecBuilder b("Ofd-" + std::string(1, static_cast<char>('a' + i)) +
                  std::string(1, static_cast<char>('a' + j)));
    b.add(SK::variance, phase_cd8_channel(i));
    b.add(SK::variance, phase_cd8_channel(j));
    b.add(SK::skewness, phase_time_channel(i));
    b.add(SK::skewness, phase_time_channel(j));
    b.add(SK::skewness, phase_ca8_channel(i));
    b.add(SK::skewness, phase_ca8_channel(j));
    b.add(SK::mom3, phase_time_channel(i));
    b.add(SK::mom3, phase_time_channel(j));
    b.add(SK::mom3, phase_cd8_channel(i));
    b.add(SK::mom3, phase_cd8_channel(j));
    b.add(SK::mom3, phase_ca8_channel(i));
    b.add(SK::mom3, phase_ca8_channel(j));
    b.add(SK::mode, phase_cd8_channel(i));
    b.add(SK::mode, phase_cd8_channel(j));
    b.add(SK::energy, phase_cd8_channel(i));
    b.add(SK::energy, phase_cd8_channel(j));
    return b.done();
}

FeatureSpec make_ofd_abc() {
    SpecBuilder b("Ofd-ABC");
    for (int p = 0; p < 3; ++p) b.add(SK::variance, phase_cd8_channel(p));
    b.add(SK::variance, mode_cd8_channel(1));
    b.add(SK::variance, mode_cd8_channel(2));
    b.add(SK::variance, mode_ca8_channel(1));
    b.add(SK::variance, mode_ca8_channel(2));
    for (int p = 0; p < 3; ++p) b.add(SK::skewness, phase_time_channel(p));
    b.add(SK::skewness, mode_time_channel(1));
    for (int p = 0; p < 3; ++p) b.add(SK::skewness, phase_ca8_channel(p));
    b.add(SK::skewness, mode_ca8_channel(1));
    b.add(SK::skewness, mode_ca8_channel(2));
    for (int p = 0; p < 3; ++p) b.add(SK::mom3, phase_time_channel(p));
    b.add(SK::mom3, mode_time_channel(1));
    for (int p = 0; p < 3; ++p) b.add(SK::mom3, phase_cd8_channel(p));
    for (int p = 0; p < 3; ++p) b.add(SK::mom3, phase_ca8_channel(p));
    b.add(SK::mom3, mode_cd8_channel(1));
    b.add(SK::mom3, mode_cd8_channel(2));
    for (int p = 0; p < 3; ++p) b.add(SK::mode, phase_cd8_channel(p));
    for (int p = 0; p < 3; ++p) b.add(SK::mode, phase_ca8_channel(p));
    b.add(SK::mode, mode_ca8_channel(2));
    for (int p = 0; p < 3; ++p) b.add(SK::energy, phase_cd8_channel(p));
    for (int p = 0; p < 3; ++p) b.add(SK::energy, phase_ca8_channel(p));
    b.add(SK::energy, mode_cd8_channel(1));
    b.add(SK::energy, mode_cd8_channel(2));
    b.add(SK::energy, mode_ca8_channel(1));
    b.add(SK::energy, mode_ca8_channel(2));
    return b.done();
}

FeatureSpec make_ofp_single(int i, int group) {
    SpecBuilder b("Ofp-" + std::string(1, static_cast<char>('a' + i)) + "-H" +
                  std::to_string(group));
    b.add(SK::variance, phase_cd8_channel(i));
    b.add(SK::variance, phase_ca8_channel(i));
    b.add(SK::skewness, phase_time_channel(i));
    b.add(SK::skewness, phase_cd8_channel(i));
    b.add(SK::mom3, phase_time_channel(i));
    b.add(SK::mom3, phase_cd8_channel(i));
    b.add(SK::mode, phase_time_channel(i));
    b.add(SK::mode, phase_ca8_channel(i));
    return b.done();
}

FeatureSpec make_ofp_pair(int i, int j, int group) {
    SpecBuilder b("Ofp-" + std::string(1, static_cast<char>('a' + i)) +
                  std::string(1, static_cast<char>('a' + j)) + "-H" + std::to_string(group));
    b.add(SK::variance, phase_time_channel(i));
    b.add(SK::variance, phase_time_channel(j));
    b.add(SK::variance, phase_cd8_channel(i));
    b.add(SK::variance, phase_cd8_channel(j));
    b.add(SK::variance, phase_ca8_channel(i));
    b.add(SK::variance, phase_ca8_channel(j));
    b.add(SK::skewness, phase_time_channel(i));
    b.add(SK::skewness, phase_time_channel(j));
    b.add(SK::skewness, phase_cd8_channel(i));
    b.add(SK::skewness, phase_cd8_channel(j));
    b.add(SK::mom3, phase_time_channel(i));
    b.add(SK::mom3, phase_time_channel(j));
    b.add(SK::mom3, phase_cd8_channel(i));
    b.add(SK::mom3, phase_cd8_channel(j));
    b.add(SK::mom3, phase_ca8_channel(i));
    b.add(SK::mom3, phase_ca8_channel(j));
    b.add(SK::mode, phase_cd8_channel(i));
    b.add(SK::mode, phase_cd8_channel(j));
    b.add(SK::energy, phase_cd8_channel(i));
    b.add(SK::energy, phase_cd8_channel(j));
    b.add(SK::energy, phase_ca8_channel(i));
    b.add(SK::energy, phase_ca8_channel(j));
    return b.done();
}

FeatureSpec make_ofp_abc(int group) {
    SpecBuilder b("Ofp-ABC-H" + std::to_string(group));
    b.add(SK::variance, mode_cd8_channel(2));
    for (int p = 0; p < 3; ++p) b.add(SK::skewness, phase_time_channel(p));
    b.add(SK::skewness, mode_time_channel(0));
    b.add(SK::skewness, mode_time_channel(1));
    for (int p = 0; p < 3; ++p) b.add(SK::skewness, phase_cd8_channel(p));
    b.add(SK::skewness, mode_cd8_channel(1));
    b.add(SK::skewness, mode_cd8_channel(2));
    for (int p = 0; p < 3; ++p) b.add(SK::mom3, phase_time_channel(p));
    b.add(SK::mom3, mode_time_channel(0));
    b.add(SK::mom3, mode_time_channel(1));
    for (int p = 0; p < 3; ++p) b.add(SK::mom3, phase_cd8_channel(p));
    b.add(SK::mom3, mode_cd8_channel(1));
    b.add(SK::mom3, mode_cd8_channel(2));
    for (int p = 0; p < 3; ++p) b.add(SK::mode, phase_cd8_channel(p));
    b.add(SK::mode, mode_cd8_channel(2));
    b.add(SK::energy, mode_cd8_channel(2));
    return b.done();
}

const std::map<std::string, FeatureSpec>& registry() {
    static const std::map<std::string, FeatureSpec> reg = [] {
        std::map<std::string, FeatureSpec> r;
        auto put = [&r](FeatureSpec s) { r.emplace(s.name, std::move(s)); };
        put(make_tfp());
        for (int i = 0; i < 3; ++i) put(make_ofd_single(i));
        put(make_ofd_pair(0, 1));
        put(make_ofd_pair(0, 2));
        put(make_ofd_pair(1, 2));
        put(make_ofd_abc());
        for (int g : {1, 2}) {
            for (int i = 0; i < 3; ++i) put(make_ofp_single(i, g));
            put(make_ofp_pair(0, 1, g));
            put(make_ofp_pair(0, 2, g));
            put(make_ofp_pair(1, 2, g));
            put(make_ofp_abc(g));
        }
        return r;
    }();
    return reg;
}

}  // namespace

const FeatureSpec& feature_spec(const std::string& name) {
    const auto& reg = registry();
    auto it = reg.find(name);
    if (it == reg.end()) fail_validation("unknown feature spec '" + name + "'");
    return it->second;
}

std::vector<std::string> feature_spec_names() {
    std::vector<std::string> names;
    for (const auto& [k, v] : registry()) names.push_back(k);
    return names;
}

std::string phase_spec_name() { return "Tfp"; }

std::string distance_spec_name(const net::PhaseSet& ps) {
    return ps.count() == 3 ? "Ofd-ABC" : "Ofd-" + ps.name();
}

std::string path_spec_name(const net::PhaseSet& ps, int group) {
    const std::string g = "-H" + std::to_string(group);
    return ps.count() == 3 ? "Ofp-ABC" + g : "Ofp-" + ps.name() + g;
}

FeatureVector assemble_features(const ChannelSet& channels, const FeatureSpec& spec) {
    spec.validate();
    FeatureVector out;
    out.spec = spec.name;
    out.values.reserve(spec.items.size());
    for (const auto& [stat, ch] : spec.items) {
        const double v = compute_stat(stat, channels.get(ch));
        if (!std::isfinite(v))
            fail_numerical("non-finite feature " + stat_name(stat) + "(" + channel_name(ch) + ")");
        out.values.push_back(v);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Scaler
// ---------------------------------------------------------------------------

Scaler Scaler::fit(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) fail_validation("scaler: no rows to fit");
    const std::size_t dim = rows[0].size();
    Scaler s;
    s.mean.assign(dim, 0.0);
    s.sigma.assign(dim, 0.0);
    for (const auto& r : rows) {
        if (r.size() != dim) fail_validation("scaler: ragged feature rows");
        for (std::size_t k = 0; k < dim; ++k) s.mean[k] += r[k];
    }
    for (std::size_t k = 0; k < dim; ++k) s.mean[k] /= static_cast<double>(rows.size());
    for (const auto& r : rows)
        for (std::size_t k = 0; k < dim; ++k) {
            const double d = r[k] - s.mean[k];
            s.sigma[k] += d * d;
        }
    for (std::size_t k = 0; k < dim; ++k) {
        s.sigma[k] = std::sqrt(s.sigma[k] / static_cast<double>(rows.size()));
        // near-constant columns carry no information; zero them out
        if (s.sigma[k] < 1e-12 * std::max(1.0, std::abs(s.mean[k]))) s.sigma[k] = 0.0;
    }
    return s;
}

std::vector<double> Scaler::transform(std::span<const double> row) const {
    if (row.size() != mean.size()) fail_validation("scaler: dimension mismatch");
    std::vector<double> out(row.size());
    for (std::size_t k = 0; k < row.size(); ++k)
        out[k] = sigma[k] > 0 ? (row[k] - mean[k]) / sigma[k] : 0.0;
    return out;
}

}  // namespace faultloc::feats
