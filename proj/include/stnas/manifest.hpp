#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "stnas/errors.hpp"

namespace stnas {

inline constexpr const char* kVersion = "0.1.0";

// Everything needed to bit-reproduce a run: the command, its full effective
// configuration, the master seed and every derived seed, wall-clock time,
// output paths, and any degenerate events hit along the way.
struct RunManifest {
    std::string command;
    nlohmann::json config = nlohmann::json::object();
    std::uint64_t master_seed = 0;
    nlohmann::json derived_seeds = nlohmann::json::object();
    double wall_seconds = 0.0;
    std::vector<std::string> outputs;
    std::vector<std::string> degenerate_events;

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["command"] = command;
        j["config"] = config;
        j["master_seed"] = master_seed;
        j["derived_seeds"] = derived_seeds;
        j["version"] = kVersion;
        j["compiler"] = __VERSION__;
        j["wall_seconds"] = wall_seconds;
        j["outputs"] = outputs;
        j["degenerate_events"] = degenerate_events;
        return j;
    }

    void save(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw FormatError("cannot open " + path + " for writing", 0);
        out << to_json().dump(2) << "\n";
    }
};

}  // namespace stnas
