#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "faultloc/emtsim.hpp"

namespace faultloc::io {

// Waveform container: fixed little-endian header (scenario fields, fs, N)
// followed by the six channels as 64-bit floats.
inline constexpr std::uint32_t kRecordMagic = 0x46574c46;  // "FLWF"
inline constexpr std::uint32_t kRecordVersion = 1;

void write_record(const emt::WaveformRecord& record, const std::filesystem::path& file);
emt::WaveformRecord read_record(const std::filesystem::path& file);

struct DatasetManifest {
    std::string schema = "faultloc-dataset/1";
    std::uint64_t seed = 0;
    double fs = 0;
    double duration_s = 0;
    int sections_per_km = 1;
    std::string grid_description;
    std::string created_at;  // from FAULTLOC_EPOCH when set, for reproducible reruns
    std::uint64_t digest = 0;  // over the scenario list and sim config

    struct Entry {
        std::string id;
        std::string file;  // relative to the manifest directory
        net::FaultScenario scenario;
    };
    std::vector<Entry> records;
};

void write_dataset_manifest(const DatasetManifest& m, const std::filesystem::path& dir);
DatasetManifest read_dataset_manifest(const std::filesystem::path& dir);

std::uint64_t dataset_digest(const std::vector<net::FaultScenario>& scenarios,
                             const emt::SimConfig& cfg);

std::string current_timestamp();  // honors FAULTLOC_EPOCH

}  // namespace faultloc::io
