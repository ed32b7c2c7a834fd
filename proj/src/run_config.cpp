#include "ctgen/run_config.hpp"

#include <fstream>

namespace ctgen {

RunConfig RunConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file: " + path.string());
    nlohmann::json doc = nlohmann::json::parse(in, nullptr, false);
    if (doc.is_discarded() || !doc.is_object())
        throw ConfigError("malformed config file: " + path.string());
    RunConfig config;
    config.apply(doc);
    config.validate();
    return config;
}

void RunConfig::apply(const nlohmann::json& doc) {
    if (doc.contains("endpoint")) {
        const auto& ep = doc["endpoint"];
        endpoint.base_url = ep.value("base_url", endpoint.base_url);
        endpoint.auth_env = ep.value("auth_env", endpoint.auth_env);
        endpoint.timeout_ms = ep.value("timeout_ms", endpoint.timeout_ms);
        endpoint.max_retries = ep.value("max_retries", endpoint.max_retries);
    }
    if (doc.contains("sampling")) {
        const auto& sp = doc["sampling"];
        sampling.top_p = sp.value("top_p", sampling.top_p);
        sampling.temperature = sp.value("temperature", sampling.temperature);
        sampling.max_tokens = sp.value("max_tokens", sampling.max_tokens);
    }
    seed = doc.value("seed", seed);
    max_in_flight = doc.value("max_in_flight", max_in_flight);
    if (doc.contains("paths"))
        for (const auto& [key, value] : doc["paths"].items())
            paths[key] = value.get<std::string>();
    if (doc.contains("column_renames"))
        for (const auto& [dataset, renames] : doc["column_renames"].items())
            for (const auto& [from, to] : renames.items())
                column_renames[dataset][from] = to.get<std::string>();
}

std::string RunConfig::path_or(const std::string& flag_value, const std::string& key) const {
    if (!flag_value.empty()) return flag_value;
    auto it = paths.find(key);
    return it != paths.end() ? it->second : std::string();
}

void RunConfig::validate() const {
    if (sampling.top_p <= 0.0 || sampling.top_p > 1.0)
        throw ConfigError("sampling.top_p must be in (0, 1]");
    if (sampling.temperature < 0.0) throw ConfigError("sampling.temperature must be >= 0");
    if (sampling.max_tokens < 1) throw ConfigError("sampling.max_tokens must be >= 1");
    if (max_in_flight < 1) throw ConfigError("max_in_flight must be >= 1");
    if (endpoint.timeout_ms < 1) throw ConfigError("endpoint.timeout_ms must be >= 1");
    if (endpoint.max_retries < 0) throw ConfigError("endpoint.max_retries must be >= 0");
}

}  // namespace ctgen
