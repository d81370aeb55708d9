#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace rxva {

inline constexpr const char* kEngineVersion = "1.0.0";

inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::string hex64(std::uint64_t x) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(x));
    return buf;
}

//! Shortest round-trip decimal; fixed format so outputs compare bytewise.
inline std::string fmt(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

struct RunManifest {
    std::string config_hash;
    std::string engine_version = kEngineVersion;
    std::uint64_t seed = 0;
    std::size_t grid_points = 0;
    std::string subcommand;
    std::vector<std::string> outputs;
    double wall_clock_seconds = 0.0;
    static constexpr const char* file_name = "manifest.json";

    //! Header line carried by every output file.
    std::string reference() const {
        return "# manifest=" + std::string(file_name) + " config_hash=" + config_hash + " subcommand=" + subcommand +
               " seed=" + std::to_string(seed) + " grid_points=" + std::to_string(grid_points) +
               " version=" + engine_version;
    }

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["config_hash"] = config_hash;
        j["engine_version"] = engine_version;
        j["seed"] = seed;
        j["grid_points"] = grid_points;
        j["subcommand"] = subcommand;
        j["outputs"] = outputs;
        j["wall_clock_seconds"] = wall_clock_seconds;
        return j;
    }
};

class CsvWriter {
public:
    CsvWriter(const std::filesystem::path& path, const RunManifest& manifest, const std::vector<std::string>& columns)
        : out_(path, std::ios::binary) {
        if (!out_) throw std::runtime_error("cannot write '" + path.string() + "'");
        out_ << manifest.reference() << '\n';
        for (std::size_t k = 0; k < columns.size(); ++k) out_ << (k ? "," : "") << columns[k];
        out_ << '\n';
    }

    CsvWriter& cell(double x) { return raw(fmt(x)); }
    CsvWriter& cell(long long x) { return raw(std::to_string(x)); }
    CsvWriter& cell(int x) { return raw(std::to_string(x)); }
    CsvWriter& cell(const std::string& s) { return raw(s); }
    CsvWriter& cell(const char* s) { return raw(s); }

    void end_row() {
        out_ << '\n';
        first_ = true;
    }

private:
    CsvWriter& raw(const std::string& s) {
        if (!first_) out_ << ',';
        out_ << s;
        first_ = false;
        return *this;
    }

    std::ofstream out_;
    bool first_ = true;
};

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    out << text;
}

} // namespace rxva
