#pragma once

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace spinforge {

// Everything a run needs; command-line flags have already been folded in.
struct RunConfig {
    nlohmann::json document = nlohmann::json::object();  // the config file
    std::string experiment;                              // overrides document.experiment.name when set
    std::optional<std::uint64_t> seed;                   // overrides document.seed
    std::optional<unsigned> threads;                     // overrides document.threads
    std::filesystem::path base_dir = ".";                // relative paths in the config resolve here
};

struct Artifact {
    std::string name;
    std::string content;
};

struct RunOutput {
    std::string experiment;
    nlohmann::json manifest;  // full resolved config
    nlohmann::json summary;   // also written as <experiment>.json
    std::vector<Artifact> artifacts;
};

const std::vector<std::string>& experiment_names();

// ConfigError for bad configs, NumericalError for numerical failures. Nothing is written.
RunOutput run_experiment(const RunConfig& config);
// Creates `dir` and writes manifest.json plus every artifact.
void write_outputs(const RunOutput& output, const std::filesystem::path& dir);

// Parses a config file; malformed JSON is a ConfigError.
nlohmann::json read_config(const std::filesystem::path& path);

// Exit codes: 0 success, 2 config error, 3 numerical failure.
int run_cli(int argc, char** argv);

}  // namespace spinforge
