#pragma once

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "ctgen/ctga_builder.hpp"
#include "ctgen/inference_client.hpp"

namespace ctgen {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Shared declarative config; any subcommand flag overrides its field. All
// randomness flows from `seed`.
struct RunConfig {
    EndpointConfig endpoint;  // base_url empty until set by config or flag
    SamplingParams sampling = conditional_generation_defaults();
    uint64_t seed = kDefaultSeed;
    int max_in_flight = 4;
    // Default file locations, used when the matching flag is absent
    // (registry, records, docs, out, task_config, report, nli_templates).
    std::map<std::string, std::string> paths;
    // Per-dataset column renames for third-party records
    // ({dataset: {source column: template variable}}).
    std::map<std::string, std::map<std::string, std::string>> column_renames;

    static RunConfig load(const std::filesystem::path& path);
    void apply(const nlohmann::json& doc);
    void validate() const;

    // Flag value if set, else the configured path, else empty.
    std::string path_or(const std::string& flag_value, const std::string& key) const;
};

}  // namespace ctgen
