#include "ctgen/mock_server.hpp"

#include <atomic>
#include <chrono>
#include <fstream>
#include <mutex>
#include <stdexcept>
#include <thread>

#include <httplib.h>

namespace ctgen {

namespace {

using nlohmann::json;

MockRule rule_from_json(const json& obj) {
    MockRule rule;
    rule.if_prompt_contains = obj.value("if_prompt_contains", std::string());
    rule.text = obj.value("text", std::string());
    rule.char_logprob = obj.value("char_logprob", -1.0);
    if (obj.contains("char_logprobs"))
        for (const auto& [key, value] : obj["char_logprobs"].items())
            rule.char_logprobs[key] = value.get<double>();
    rule.status = obj.value("status", 0);
    rule.fail_times = obj.value("fail_times", 0);
    rule.delay_ms = obj.value("delay_ms", -1);
    if (obj.contains("tokens")) {
        rule.tokens = obj["tokens"].get<std::vector<std::string>>();
        for (const auto& v : obj["token_logprobs"]) rule.token_logprobs.push_back(v);
        rule.text_offset = obj["text_offset"].get<std::vector<size_t>>();
    }
    return rule;
}

}  // namespace

MockTape MockTape::from_json(const json& doc) {
    MockTape tape;
    tape.delay_ms = doc.value("delay_ms", 0);
    if (doc.contains("default")) tape.default_rule = rule_from_json(doc["default"]);
    if (doc.contains("rules"))
        for (const auto& r : doc["rules"]) tape.rules.push_back(rule_from_json(r));
    return tape;
}

MockTape MockTape::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read tape file: " + path.string());
    json doc = json::parse(in, nullptr, false);
    if (doc.is_discarded()) throw std::runtime_error("malformed tape file: " + path.string());
    return from_json(doc);
}

struct MockServer::Impl {
    MockTape tape;
    httplib::Server server;
    std::thread thread;
    int port = 0;

    mutable std::mutex mutex;
    json log = json::array();
    std::vector<int> fail_counters;  // parallel to tape.rules
    std::atomic<int> in_flight{0};
    std::atomic<int> peak{0};

    explicit Impl(MockTape t) : tape(std::move(t)) {
        fail_counters.resize(tape.rules.size());
        for (size_t i = 0; i < tape.rules.size(); ++i) fail_counters[i] = tape.rules[i].fail_times;
    }

    const MockRule* match(const std::string& prompt, int* rule_index) {
        for (size_t i = 0; i < tape.rules.size(); ++i) {
            if (!tape.rules[i].if_prompt_contains.empty() &&
                prompt.find(tape.rules[i].if_prompt_contains) != std::string::npos) {
                *rule_index = static_cast<int>(i);
                return &tape.rules[i];
            }
        }
        *rule_index = -1;
        return &tape.default_rule;
    }

    void handle_completions(const httplib::Request& req, httplib::Response& res) {
        int now = in_flight.fetch_add(1) + 1;
        int prev_peak = peak.load();
        while (now > prev_peak && !peak.compare_exchange_weak(prev_peak, now)) {
        }

        json body = json::parse(req.body, nullptr, false);
        if (body.is_discarded() || !body.contains("prompt") || !body["prompt"].is_string()) {
            res.status = 400;
            res.set_content("{\"error\":\"bad request\"}", "application/json");
            in_flight.fetch_sub(1);
            return;
        }
        const std::string prompt = body["prompt"].get<std::string>();
        const int max_tokens = body.value("max_tokens", 16);
        const bool echo = body.value("echo", false);
        const int logprobs = body.value("logprobs", 0);

        int rule_index = -1;
        MockRule rule;
        int remaining_failures = 0;
        {
            std::lock_guard<std::mutex> lock(mutex);
            const MockRule* matched = match(prompt, &rule_index);
            rule = *matched;
            if (rule_index >= 0 && rule.status != 0 && rule.fail_times > 0) {
                remaining_failures = fail_counters[rule_index];
                if (remaining_failures > 0) --fail_counters[rule_index];
            }

            json entry;
            entry["index"] = log.size();
            entry["prompt"] = prompt;
            entry["max_tokens"] = max_tokens;
            entry["echo"] = echo;
            entry["logprobs"] = logprobs;
            if (body.contains("temperature")) entry["temperature"] = body["temperature"];
            if (body.contains("top_p")) entry["top_p"] = body["top_p"];
            if (body.contains("stop")) entry["stop"] = body["stop"];
            entry["in_flight"] = now;
            log.push_back(std::move(entry));
        }

        int delay = rule.delay_ms >= 0 ? rule.delay_ms : tape.delay_ms;
        if (delay > 0) std::this_thread::sleep_for(std::chrono::milliseconds(delay));

        if (rule.status != 0 && (rule.fail_times == 0 || remaining_failures > 0)) {
            res.status = rule.status;
            res.set_content("{\"error\":\"mock failure\"}", "application/json");
            in_flight.fetch_sub(1);
            return;
        }

        std::string generated = max_tokens == 0 ? std::string() : rule.text;
        if (body.contains("stop") && body["stop"].is_array()) {
            for (const auto& stop : body["stop"]) {
                if (!stop.is_string()) continue;
                size_t at = generated.find(stop.get<std::string>());
                if (at != std::string::npos) generated = generated.substr(0, at);
            }
        }

        json choice;
        choice["index"] = 0;
        choice["finish_reason"] = "stop";
        choice["text"] = echo ? prompt + generated : generated;

        if (logprobs > 0) {
            json lp;
            if (!rule.tokens.empty()) {
                lp["tokens"] = rule.tokens;
                lp["token_logprobs"] = rule.token_logprobs;
                lp["text_offset"] = rule.text_offset;
            } else {
                // Per-byte tokenization over the echoed text.
                json tokens = json::array();
                json token_logprobs = json::array();
                json text_offset = json::array();
                const std::string scored = echo ? prompt + generated : generated;
                const size_t base = echo ? 0 : prompt.size();
                for (size_t i = 0; i < scored.size(); ++i) {
                    std::string ch(1, scored[i]);
                    tokens.push_back(ch);
                    auto it = rule.char_logprobs.find(ch);
                    token_logprobs.push_back(it != rule.char_logprobs.end() ? it->second
                                                                            : rule.char_logprob);
                    text_offset.push_back(base + i);
                }
                lp["tokens"] = std::move(tokens);
                lp["token_logprobs"] = std::move(token_logprobs);
                lp["text_offset"] = std::move(text_offset);
            }
            choice["logprobs"] = std::move(lp);
        }

        json response;
        response["id"] = "mock";
        response["object"] = "text_completion";
        response["choices"] = json::array({choice});
        res.set_content(response.dump(), "application/json");
        in_flight.fetch_sub(1);
    }
};

MockServer::MockServer(MockTape tape) : impl_(std::make_unique<Impl>(std::move(tape))) {
    impl_->server.Post("/completions", [this](const httplib::Request& req, httplib::Response& res) {
        impl_->handle_completions(req, res);
    });
    impl_->server.Get("/__mock__/requests", [this](const httplib::Request&, httplib::Response& res) {
        res.set_content(request_log().dump(), "application/json");
    });
    impl_->server.Get("/__mock__/stats", [this](const httplib::Request&, httplib::Response& res) {
        nlohmann::json stats;
        stats["count"] = request_count();
        stats["peak_in_flight"] = peak_in_flight();
        res.set_content(stats.dump(), "application/json");
    });
    impl_->server.Post("/__mock__/reset", [this](const httplib::Request&, httplib::Response& res) {
        reset_log();
        res.set_content("{}", "application/json");
    });
}

MockServer::~MockServer() { stop(); }

int MockServer::start(int port) {
    if (port == 0) {
        impl_->port = impl_->server.bind_to_any_port("127.0.0.1");
        if (impl_->port < 0) throw std::runtime_error("mock server failed to bind");
    } else {
        if (!impl_->server.bind_to_port("127.0.0.1", port))
            throw std::runtime_error("mock server failed to bind port " + std::to_string(port));
        impl_->port = port;
    }
    impl_->thread = std::thread([this]() { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
    return impl_->port;
}

void MockServer::stop() {
    if (impl_ && impl_->thread.joinable()) {
        impl_->server.stop();
        impl_->thread.join();
    }
}

int MockServer::port() const { return impl_->port; }

nlohmann::json MockServer::request_log() const {
    std::lock_guard<std::mutex> lock(impl_->mutex);
    return impl_->log;
}

size_t MockServer::request_count() const {
    std::lock_guard<std::mutex> lock(impl_->mutex);
    return impl_->log.size();
}

int MockServer::peak_in_flight() const { return impl_->peak.load(); }

void MockServer::reset_log() {
    std::lock_guard<std::mutex> lock(impl_->mutex);
    impl_->log = nlohmann::json::array();
    impl_->peak.store(0);
    for (size_t i = 0; i < impl_->tape.rules.size(); ++i)
        impl_->fail_counters[i] = impl_->tape.rules[i].fail_times;
}

}  // namespace ctgen
