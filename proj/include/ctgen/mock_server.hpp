#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace ctgen {

// Deterministic completion endpoint for tests and offline runs. Responses are
// content-keyed (first matching rule wins, else the default), so output does
// not depend on request arrival order. When echo logprobs are requested the
// mock tokenizes per byte, which makes continuation scores hand-computable:
// score(continuation) = sum of the per-character logprobs.
struct MockRule {
    std::string if_prompt_contains;  // empty on the default rule
    std::string text;                // completion text
    double char_logprob = -1.0;
    std::map<std::string, double> char_logprobs;  // per-character overrides
    int status = 0;      // nonzero: respond with this HTTP status
    int fail_times = 0;  // with status: fail this many times, then succeed
    int delay_ms = -1;   // -1: inherit tape delay
    // Explicit logprob payload override (all three or none).
    std::vector<std::string> tokens;
    std::vector<nlohmann::json> token_logprobs;
    std::vector<size_t> text_offset;
};

struct MockTape {
    MockRule default_rule;
    std::vector<MockRule> rules;
    int delay_ms = 0;

    static MockTape load(const std::filesystem::path& path);
    static MockTape from_json(const nlohmann::json& doc);
};

class MockServer {
public:
    explicit MockServer(MockTape tape);
    ~MockServer();

    MockServer(const MockServer&) = delete;
    MockServer& operator=(const MockServer&) = delete;

    // Binds 127.0.0.1 (an ephemeral port when port == 0) and serves on a
    // background thread. Returns the bound port.
    int start(int port = 0);
    void stop();

    int port() const;

    // Introspection, also exposed over HTTP as GET /__mock__/requests,
    // GET /__mock__/stats and POST /__mock__/reset.
    nlohmann::json request_log() const;
    size_t request_count() const;
    int peak_in_flight() const;
    void reset_log();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace ctgen
