#include "ctgen/inference_client.hpp"

#include <chrono>
#include <cstdlib>

#include <httplib.h>
#include <json.hpp>

namespace ctgen {

namespace {

using nlohmann::json;

json build_request_body(const std::string& prompt, const SamplingParams& params, bool echo,
                        int logprobs) {
    json body;
    body["prompt"] = prompt;
    body["max_tokens"] = params.max_tokens;
    body["temperature"] = params.temperature;
    body["top_p"] = params.top_p;
    if (!params.stop.empty()) body["stop"] = params.stop;
    if (echo) body["echo"] = true;
    if (logprobs > 0) body["logprobs"] = logprobs;
    return body;
}

std::vector<TokenLogprob> parse_logprobs(const json& lp) {
    if (!lp.contains("tokens") || !lp.contains("token_logprobs") || !lp.contains("text_offset"))
        throw NoLogprobSupport();
    const auto& tokens = lp["tokens"];
    const auto& probs = lp["token_logprobs"];
    const auto& offsets = lp["text_offset"];
    if (tokens.size() != probs.size() || tokens.size() != offsets.size())
        throw ClientError("logprob arrays have inconsistent lengths");
    std::vector<TokenLogprob> out;
    out.reserve(tokens.size());
    for (size_t i = 0; i < tokens.size(); ++i) {
        TokenLogprob t;
        t.token = tokens[i].get<std::string>();
        t.logprob = probs[i].is_null() ? 0.0 : probs[i].get<double>();
        t.offset = offsets[i].get<size_t>();
        out.push_back(std::move(t));
    }
    return out;
}

}  // namespace

InferenceClient::InferenceClient(EndpointConfig cfg, int max_in_flight)
    : cfg_(std::move(cfg)), max_in_flight_(max_in_flight) {
    if (cfg_.base_url.empty()) throw ClientError("endpoint base URL is empty");
    if (max_in_flight_ < 1) throw ClientError("max_in_flight must be >= 1");
}

ScoredCompletion InferenceClient::complete(const std::string& prompt,
                                           const SamplingParams& params) const {
    return complete_raw(prompt, params, /*echo=*/false, /*logprobs=*/0);
}

namespace {

json post_completions(const EndpointConfig& cfg, const json& body) {
    int backoff = cfg.backoff_base_ms;
    std::string last_error;
    for (int attempt = 0; attempt <= cfg.max_retries; ++attempt) {
        if (attempt > 0) {
            std::this_thread::sleep_for(std::chrono::milliseconds(backoff));
            backoff = std::min(backoff * 2, cfg.backoff_cap_ms);
        }
        httplib::Client client(cfg.base_url);
        client.set_connection_timeout(std::chrono::milliseconds(cfg.timeout_ms));
        client.set_read_timeout(std::chrono::milliseconds(cfg.timeout_ms));
        client.set_write_timeout(std::chrono::milliseconds(cfg.timeout_ms));
        httplib::Headers headers;
        if (!cfg.auth_env.empty()) {
            if (const char* token = std::getenv(cfg.auth_env.c_str()); token && *token)
                headers.emplace("Authorization", std::string("Bearer ") + token);
        }
        auto res = client.Post("/completions", headers, body.dump(), "application/json");
        if (!res) {
            last_error = "connection failed: " + httplib::to_string(res.error());
            continue;  // transient
        }
        if (res->status >= 200 && res->status < 300) {
            json parsed = json::parse(res->body, nullptr, false);
            if (parsed.is_discarded()) throw ClientError("endpoint returned malformed JSON");
            return parsed;
        }
        if (res->status >= 400 && res->status < 500) throw EndpointError(res->status, res->body);
        last_error = "status " + std::to_string(res->status);
    }
    throw RetriesExhausted("retries exhausted: " + last_error);
}

}  // namespace

ScoredCompletion InferenceClient::complete_raw(const std::string& prompt,
                                               const SamplingParams& params, bool echo,
                                               int logprobs) const {
    json body = build_request_body(prompt, params, echo, logprobs);
    json response = post_completions(cfg_, body);

    if (!response.contains("choices") || !response["choices"].is_array() ||
        response["choices"].empty())
        throw ClientError("endpoint response has no choices");
    const json& choice = response["choices"][0];
    if (!choice.contains("text") || !choice["text"].is_string())
        throw ClientError("endpoint choice has no text");

    ScoredCompletion out;
    std::string full_text = choice["text"].get<std::string>();
    if (echo) {
        // With echo the returned text includes the prompt.
        out.text = full_text.size() >= prompt.size() ? full_text.substr(prompt.size()) : "";
    } else {
        out.text = std::move(full_text);
    }

    if (logprobs > 0) {
        if (!choice.contains("logprobs") || choice["logprobs"].is_null()) throw NoLogprobSupport();
        auto all = parse_logprobs(choice["logprobs"]);
        for (auto& t : all) {
            if (echo && t.offset < prompt.size())
                out.echo_logprobs.push_back(std::move(t));
            else
                out.token_logprobs.push_back(std::move(t));
        }
    }
    return out;
}

double InferenceClient::score_continuation(const std::string& prompt,
                                           const std::string& continuation) const {
    return score_continuation_detail(prompt, continuation).first;
}

std::pair<double, size_t> InferenceClient::score_continuation_detail(
    const std::string& prompt, const std::string& continuation) const {
    if (continuation.empty()) return {0.0, 0};

    SamplingParams params;
    params.max_tokens = 0;
    params.temperature = 0.0;
    params.top_p = 1.0;

    const std::string full = prompt + continuation;
    json body = build_request_body(full, params, /*echo=*/true, /*logprobs=*/1);
    json response = post_completions(cfg_, body);
    if (!response.contains("choices") || response["choices"].empty())
        throw ClientError("endpoint response has no choices");
    const json& choice = response["choices"][0];
    if (!choice.contains("logprobs") || choice["logprobs"].is_null()) throw NoLogprobSupport();
    auto tokens = parse_logprobs(choice["logprobs"]);

    const size_t boundary = prompt.size();
    double total = 0.0;
    size_t n_continuation_tokens = 0;
    bool boundary_aligned = prompt.empty();
    for (const auto& t : tokens) {
        if (t.offset == boundary) boundary_aligned = true;
        if (t.offset >= boundary) {
            total += t.logprob;
            ++n_continuation_tokens;
        }
    }
    if (!boundary_aligned) throw BoundaryMismatch();
    return {total, n_continuation_tokens};
}

std::vector<Outcome<ScoredCompletion>> InferenceClient::complete_batch(
    const std::vector<std::string>& prompts, const SamplingParams& params) const {
    return run_bounded<ScoredCompletion>(
        prompts.size(), max_in_flight_,
        [&](size_t i) { return complete(prompts[i], params); });
}

std::vector<Outcome<double>> InferenceClient::score_batch(
    const std::vector<std::pair<std::string, std::string>>& requests) const {
    return run_bounded<double>(requests.size(), max_in_flight_, [&](size_t i) {
        return score_continuation(requests[i].first, requests[i].second);
    });
}

}  // namespace ctgen
