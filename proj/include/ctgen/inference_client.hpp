#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace ctgen {

struct SamplingParams {
    double top_p = 0.95;
    double temperature = 0.5;
    int max_tokens = 256;
    std::vector<std::string> stop;
};

inline SamplingParams conditional_generation_defaults() { return SamplingParams{}; }
inline SamplingParams greedy_extraction_defaults() {
    return SamplingParams{1.0, 0.0, 64, {"\n"}};
}

struct TokenLogprob {
    std::string token;
    double logprob = 0.0;
    size_t offset = 0;  // byte offset into the echoed text
};

struct ScoredCompletion {
    std::string text;
    std::vector<TokenLogprob> token_logprobs;  // generated tokens
    std::vector<TokenLogprob> echo_logprobs;   // prompt tokens when echo requested
};

class ClientError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class EndpointError : public ClientError {
public:
    EndpointError(int status, const std::string& body)
        : ClientError("endpoint returned status " + std::to_string(status) + ": " + body),
          status_(status),
          body_(body) {}
    int status() const { return status_; }
    const std::string& body() const { return body_; }

private:
    int status_;
    std::string body_;
};

class TimeoutError : public ClientError {
public:
    using ClientError::ClientError;
};

class RetriesExhausted : public ClientError {
public:
    using ClientError::ClientError;
};

class NoLogprobSupport : public ClientError {
public:
    NoLogprobSupport() : ClientError("endpoint response carries no logprobs") {}
};

class BoundaryMismatch : public ClientError {
public:
    BoundaryMismatch()
        : ClientError("token offsets do not align with the prompt/continuation boundary") {}
};

struct EndpointConfig {
    std::string base_url;       // e.g. http://127.0.0.1:8000
    std::string auth_env;       // environment variable holding the bearer token
    int timeout_ms = 30000;
    int max_retries = 3;        // transient failures only; 4xx never retries
    int backoff_base_ms = 100;  // doubled per attempt, capped at backoff_cap_ms
    int backoff_cap_ms = 2000;
};

template <typename T>
struct Outcome {
    std::optional<T> value;
    std::string error;

    bool ok() const { return value.has_value(); }
};

// Talks the open completion wire contract: POST <base>/completions with
// prompt/max_tokens/temperature/top_p/logprobs/echo/stop; scoring uses
// prompt-echo logprobs in natural-log units. Shareable across workers; every
// request is independent.
class InferenceClient {
public:
    explicit InferenceClient(EndpointConfig cfg, int max_in_flight = 1);

    ScoredCompletion complete(const std::string& prompt, const SamplingParams& params) const;

    // Sum of token loglikelihoods attributable to `continuation` appended to
    // `prompt`; the boundary is resolved from endpoint-reported offsets.
    double score_continuation(const std::string& prompt, const std::string& continuation) const;
    // Same, also reporting the number of continuation tokens.
    std::pair<double, size_t> score_continuation_detail(const std::string& prompt,
                                                        const std::string& continuation) const;

    std::vector<Outcome<ScoredCompletion>> complete_batch(const std::vector<std::string>& prompts,
                                                          const SamplingParams& params) const;
    std::vector<Outcome<double>> score_batch(
        const std::vector<std::pair<std::string, std::string>>& requests) const;

    int max_in_flight() const { return max_in_flight_; }
    const EndpointConfig& config() const { return cfg_; }

private:
    ScoredCompletion complete_raw(const std::string& prompt, const SamplingParams& params,
                                  bool echo, int logprobs) const;

    EndpointConfig cfg_;
    int max_in_flight_;
};

// Runs fn(0..n-1) with bounded concurrency; results land at their request
// index regardless of completion order and per-item failures stay isolated.
template <typename R>
std::vector<Outcome<R>> run_bounded(size_t n, int max_in_flight,
                                    const std::function<R(size_t)>& fn) {
    if (max_in_flight < 1) throw ClientError("max_in_flight must be >= 1");
    std::vector<Outcome<R>> results(n);
    if (n == 0) return results;
    std::atomic<size_t> cursor{0};
    auto worker = [&]() {
        while (true) {
            size_t i = cursor.fetch_add(1);
            if (i >= n) return;
            try {
                results[i].value = fn(i);
            } catch (const std::exception& e) {
                results[i].error = e.what();
            } catch (...) {
                results[i].error = "unknown error";
            }
        }
    };
    size_t workers = std::min<size_t>(static_cast<size_t>(max_in_flight), n);
    if (workers == 1) {
        worker();
        return results;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    return results;
}

}  // namespace ctgen
