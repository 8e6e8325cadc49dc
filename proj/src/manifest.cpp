#include "covlab/manifest.hpp"

#include <fstream>

#include "covlab/error.hpp"

namespace covlab {

std::string RunManifest::to_json() const {
    nlohmann::ordered_json j;
    j["command"] = command;
    j["version"] = kToolVersion;
    j["seed"] = seed;
    j["config"] = config;
    j["inputs"] = inputs;
    j["outputs"] = outputs;
    j["duration_seconds"] = duration_seconds;
    return j.dump(2);
}

RunManifest RunManifest::from_json_text(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& ex) {
        throw Error(ErrorKind::data, "bad manifest: " + std::string(ex.what()));
    }
    RunManifest m;
    m.command = j.value("command", "");
    m.seed = j.value("seed", std::uint64_t{0});
    if (j.contains("config")) m.config = j["config"];
    m.inputs = j.value("inputs", std::vector<std::string>{});
    m.outputs = j.value("outputs", std::vector<std::string>{});
    m.duration_seconds = j.value("duration_seconds", 0.0);
    return m;
}

void write_manifest(const std::string& path, const RunManifest& manifest) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::data, "cannot open '" + path + "' for writing");
    out << manifest.to_json() << '\n';
    if (!out) throw Error(ErrorKind::data, "write failed for '" + path + "'");
}

RunManifest read_manifest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::data, "cannot open '" + path + "'");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return RunManifest::from_json_text(text);
}

}  // namespace covlab
