#pragma once

#include <string>
#include <vector>

#include <json.hpp>

namespace covlab {

inline constexpr const char* kToolVersion = "0.1.0";

/**
 * Written next to every output artifact. Re-running the same command with
 * the manifest's config block reproduces all outputs byte-identically;
 * only duration_seconds is allowed to differ between runs.
 */
struct RunManifest {
    std::string command;
    nlohmann::ordered_json config;  // fully resolved flag values
    std::uint64_t seed = 0;
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
    double duration_seconds = 0.0;

    std::string to_json() const;
    static RunManifest from_json_text(const std::string& text);
};

void write_manifest(const std::string& path, const RunManifest& manifest);
RunManifest read_manifest(const std::string& path);

}  // namespace covlab
