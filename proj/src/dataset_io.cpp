#include "faultloc/dataset_io.hpp"

#include <cstdlib>
#include <cstring>
#include <ctime>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "faultloc/errors.hpp"
#include "faultloc/rng.hpp"

namespace faultloc::io {

using json = nlohmann::ordered_json;

namespace {

// All scalar fields are written little-endian; this code assumes a
// little-endian host (checked at startup of the writer).
void put_bytes(std::ostream& os, const void* p, std::size_t n) {
    os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

template <typename T>
void put(std::ostream& os, T v) {
    put_bytes(os, &v, sizeof v);
}

template <typename T>
T take(std::istream& is) {
    T v;
    is.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!is) fail_data("waveform file truncated");
    return v;
}

void check_endianness() {
    const std::uint32_t probe = 1;
    unsigned char b;
    std::memcpy(&b, &probe, 1);
    if (b != 1) fail_data("waveform container requires a little-endian host");
}

json scenario_to_json(const net::FaultScenario& s) {
    return json{{"dg_penetration", s.dg_penetration},
                {"phases", s.faulted_phases.name()},
                {"fault_impedance_ohm", s.fault_impedance_ohm},
                {"inception_angle_deg", s.inception_angle_deg},
                {"path", s.path_id},
                {"distance_m", s.distance_m},
                {"fault_time_s", s.fault_time_s},
                {"load_scale", s.load_scale}};
}

net::FaultScenario scenario_from_json(const json& j) {
    net::FaultScenario s;
    s.dg_penetration = j.at("dg_penetration");
    s.faulted_phases = net::PhaseSet::from_name(j.at("phases"));
    s.fault_impedance_ohm = j.at("fault_impedance_ohm");
    s.inception_angle_deg = j.at("inception_angle_deg");
    s.path_id = j.at("path");
    s.distance_m = j.at("distance_m");
    s.fault_time_s = j.value("fault_time_s", 0.025);
    s.load_scale = j.value("load_scale", 1.0);
    return s;
}

}  // namespace

void write_record(const emt::WaveformRecord& record, const std::filesystem::path& file) {
    check_endianness();
    const std::size_t n = record.samples();
    if (record.vb.size() != n || record.vc.size() != n || record.v0.size() != n ||
        record.v1.size() != n || record.v2.size() != n)
        fail_validation("waveform record channels have unequal lengths");
    std::ofstream os(file, std::ios::binary);
    if (!os) fail_data("cannot write waveform file " + file.string());
    put<std::uint32_t>(os, kRecordMagic);
    put<std::uint32_t>(os, kRecordVersion);
    const auto& s = record.scenario;
    put<double>(os, s.dg_penetration);
    put<std::uint8_t>(os, s.faulted_phases.mask);
    put<double>(os, s.fault_impedance_ohm);
    put<double>(os, s.inception_angle_deg);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(s.path_id));
    put<double>(os, s.distance_m);
    put<double>(os, s.fault_time_s);
    put<double>(os, s.load_scale);
    put<double>(os, record.fs);
    put<std::uint64_t>(os, static_cast<std::uint64_t>(n));
    for (const auto* ch : {&record.va, &record.vb, &record.vc, &record.v0, &record.v1, &record.v2})
        put_bytes(os, ch->data(), n * sizeof(double));
    if (!os) fail_data("short write on " + file.string());
}

emt::WaveformRecord read_record(const std::filesystem::path& file) {
    check_endianness();
    std::ifstream is(file, std::ios::binary);
    if (!is) fail_data("cannot open waveform file " + file.string());
    if (take<std::uint32_t>(is) != kRecordMagic)
        fail_data("not a waveform container: " + file.string());
    if (take<std::uint32_t>(is) != kRecordVersion)
        fail_data("unsupported waveform container version in " + file.string());
    emt::WaveformRecord rec;
    auto& s = rec.scenario;
    s.dg_penetration = take<double>(is);
    s.faulted_phases.mask = take<std::uint8_t>(is);
    s.fault_impedance_ohm = take<double>(is);
    s.inception_angle_deg = take<double>(is);
    s.path_id = static_cast<int>(take<std::uint32_t>(is));
    s.distance_m = take<double>(is);
    s.fault_time_s = take<double>(is);
    s.load_scale = take<double>(is);
    rec.fs = take<double>(is);
    const std::uint64_t n = take<std::uint64_t>(is);
    if (n == 0 || n > (1ull << 32)) fail_data("implausible sample count in " + file.string());
    for (auto* ch : {&rec.va, &rec.vb, &rec.vc, &rec.v0, &rec.v1, &rec.v2}) {
        ch->resize(n);
        is.read(reinterpret_cast<char*>(ch->data()),
                static_cast<std::streamsize>(n * sizeof(double)));
        if (!is) fail_data("waveform file truncated: " + file.string());
    }
    return rec;
}

std::string current_timestamp() {
    std::time_t t;
    if (const char* epoch = std::getenv("FAULTLOC_EPOCH"))
        t = static_cast<std::time_t>(std::atoll(epoch));
    else
        t = std::time(nullptr);
    char buf[32];
    std::tm tm_utc;
    gmtime_r(&t, &tm_utc);
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
    return buf;
}

std::uint64_t dataset_digest(const std::vector<net::FaultScenario>& scenarios,
                             const emt::SimConfig& cfg) {
    std::ostringstream os;
    os.precision(17);
    os << cfg.sampling_frequency_hz << '|' << cfg.duration_s << '|' << cfg.fault_time_s << '|'
       << cfg.sections_per_km << '|';
    for (const auto& s : scenarios) os << s.id() << ';';
    return rng::fnv1a(os.str());
}

void write_dataset_manifest(const DatasetManifest& m, const std::filesystem::path& dir) {
    json j;
    j["schema"] = m.schema;
    j["seed"] = m.seed;
    j["fs"] = m.fs;
    j["duration_s"] = m.duration_s;
    j["sections_per_km"] = m.sections_per_km;
    j["grid"] = m.grid_description;
    j["created_at"] = m.created_at;
    j["digest"] = m.digest;
    j["records"] = json::array();
    for (const auto& e : m.records) {
        json r = scenario_to_json(e.scenario);
        r["id"] = e.id;
        r["file"] = e.file;
        j["records"].push_back(std::move(r));
    }
    std::ofstream os(dir / "manifest.json");
    if (!os) fail_data("cannot write manifest in " + dir.string());
    os << j.dump(1) << '\n';
}

DatasetManifest read_dataset_manifest(const std::filesystem::path& dir) {
    std::ifstream is(dir / "manifest.json");
    if (!is) fail_data("no dataset manifest in " + dir.string());
    json j;
    try {
        is >> j;
    } catch (const json::exception& e) {
        fail_data(std::string("manifest parse error: ") + e.what());
    }
    DatasetManifest m;
    try {
        m.schema = j.at("schema");
        if (m.schema != "faultloc-dataset/1") fail_data("unsupported dataset schema " + m.schema);
        m.seed = j.at("seed");
        m.fs = j.at("fs");
        m.duration_s = j.at("duration_s");
        m.sections_per_km = j.at("sections_per_km");
        m.grid_description = j.value("grid", "");
        m.created_at = j.value("created_at", "");
        m.digest = j.at("digest");
        for (const auto& r : j.at("records")) {
            DatasetManifest::Entry e;
            e.id = r.at("id");
            e.file = r.at("file");
            e.scenario = scenario_from_json(r);
            m.records.push_back(std::move(e));
        }
    } catch (const json::exception& e) {
        fail_data(std::string("manifest field error: ") + e.what());
    }
    return m;
}

}  // namespace faultloc::io
