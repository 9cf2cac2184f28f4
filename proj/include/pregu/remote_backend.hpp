#pragma once

#include <memory>
#include <mutex>
#include <string>

#include "pregu/backend.hpp"

namespace pregu {

// Connection settings for a completion server. The auth token and endpoint
// can come from a JSON config file; PREGU_ENDPOINT / PREGU_API_TOKEN
// environment variables override either.
struct RemoteConfig {
    std::string endpoint = "http://127.0.0.1:8080/complete";
    std::string api_token;
    int timeout_ms = 30000;
    int retries = 2;
    int max_context = 8192;

    static RemoteConfig from_json_file(const std::string& path);
    void apply_env_overrides();
};

// Client for inference servers exposing per-step top-K log-probabilities.
//
// Request:  {"prompt": str, "max_tokens": int, "temperature": float,
//            "top_logprobs": int}
// Response: {"text": str, "steps": [{"token": str,
//            "top_logprobs": [{"token": str, "logprob": float}, ...]}, ...]}
//
// The server tokenizes; token ids on this side are interned lazily from the
// strings the server returns. Embedding injection is not possible over the
// wire, so supports_soft_prefix is false and Stage 2 cannot run against this
// backend.
class RemoteBackend : public ModelBackend {
public:
    explicit RemoteBackend(RemoteConfig config);
    ~RemoteBackend() override;

    const Vocabulary& vocab() const override { return vocab_; }
    BackendCapabilities capabilities() const override;
    std::vector<int> context_tokens(const std::string& text) const override;
    TokenDistribution next_distribution(const SoftPrefix& context,
                                        int top_k) const override;
    std::vector<double> embed_token(int token_id) const override;
    std::vector<int> generate_greedy(const SoftPrefix& context,
                                     int max_tokens) const override;
    std::optional<int> eos_id() const override { return std::nullopt; }
    int max_context() const override { return config_.max_context; }

private:
    struct Step {
        std::string token;
        std::vector<std::pair<std::string, double>> top_logprobs;
    };
    std::vector<Step> complete(const std::string& prompt, int max_tokens,
                               double temperature, int top_logprobs) const;
    int intern(const std::string& token) const;

    RemoteConfig config_;
    std::string host_;  // scheme://host:port
    std::string path_;  // request path
    mutable std::mutex vocab_mutex_;
    mutable Vocabulary vocab_;
};

}  // namespace pregu
