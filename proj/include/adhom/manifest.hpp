#pragma once
// Run manifest: every CLI invocation records its command, parameters, input
// hash, and seed beside its outputs so runs are self-describing.

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>

#include <json.hpp>

#include "adhom/common.hpp"

namespace adhom {

// Honors SOURCE_DATE_EPOCH (reproducible-builds convention) so determinism
// harnesses can pin the stamp; falls back to the current wall clock.
inline std::string manifest_timestamp() {
    std::time_t epoch = std::time(nullptr);
    if (const char* env = std::getenv("SOURCE_DATE_EPOCH")) {
        long long v = 0;
        if (parse_i64(env, v)) epoch = static_cast<std::time_t>(v);
    }
    std::tm tm{};
    gmtime_r(&epoch, &tm);
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02dZ", tm.tm_year + 1900,
                  tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec);
    return buf;
}

struct RunManifest {
    std::string command;
    std::map<std::string, std::string> parameters;
    std::uint64_t corpus_hash = 0;
    std::uint64_t master_seed = 0;
    std::string tool_version = kToolVersion;
    std::string timestamp = manifest_timestamp();

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["command"] = command;
        j["parameters"] = parameters;
        j["corpus_hash"] = to_hex(corpus_hash);
        j["master_seed"] = master_seed;
        j["tool_version"] = tool_version;
        j["timestamp"] = timestamp;
        return j;
    }

    void write(const std::filesystem::path& path) const {
        std::filesystem::create_directories(path.parent_path());
        std::ofstream out(path);
        if (!out) throw Error("cannot write manifest: " + path.string());
        out << to_json().dump(2) << "\n";
    }
};

}  // namespace adhom
