#include "pregu/remote_backend.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>

#include <httplib.h>
#include <json.hpp>

#include "pregu/errors.hpp"

namespace pregu {

using Json = nlohmann::json;

RemoteConfig RemoteConfig::from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open remote config: " + path);
    Json j = Json::parse(in, nullptr, false);
    if (j.is_discarded()) throw InputError("remote config is not valid JSON: " + path);
    RemoteConfig c;
    if (j.contains("endpoint")) c.endpoint = j.at("endpoint").get<std::string>();
    if (j.contains("api_token")) c.api_token = j.at("api_token").get<std::string>();
    if (j.contains("timeout_ms")) c.timeout_ms = j.at("timeout_ms").get<int>();
    if (j.contains("retries")) c.retries = j.at("retries").get<int>();
    if (j.contains("max_context")) c.max_context = j.at("max_context").get<int>();
    c.apply_env_overrides();
    return c;
}

void RemoteConfig::apply_env_overrides() {
    if (const char* ep = std::getenv("PREGU_ENDPOINT")) endpoint = ep;
    if (const char* tok = std::getenv("PREGU_API_TOKEN")) api_token = tok;
}

RemoteBackend::RemoteBackend(RemoteConfig config)
    : config_(std::move(config)), vocab_({}, Vocabulary::Join::concat) {
    // split "http://host:port/some/path" into client base and request path
    auto scheme_end = config_.endpoint.find("://");
    if (scheme_end == std::string::npos)
        throw InputError("endpoint must include a scheme: " + config_.endpoint);
    auto path_start = config_.endpoint.find('/', scheme_end + 3);
    if (path_start == std::string::npos) {
        host_ = config_.endpoint;
        path_ = "/";
    } else {
        host_ = config_.endpoint.substr(0, path_start);
        path_ = config_.endpoint.substr(path_start);
    }
}

RemoteBackend::~RemoteBackend() = default;

BackendCapabilities RemoteBackend::capabilities() const {
    return BackendCapabilities{/*supports_soft_prefix=*/false,
                               /*supports_logprobs=*/true, /*embedding_dim=*/0};
}

int RemoteBackend::intern(const std::string& token) const {
    std::lock_guard<std::mutex> lock(vocab_mutex_);
    return vocab_.intern(token);
}

std::vector<int> RemoteBackend::context_tokens(const std::string& text) const {
    // the server tokenizes; the whole prompt travels as one interned unit
    return {intern(text)};
}

std::vector<RemoteBackend::Step> RemoteBackend::complete(const std::string& prompt,
                                                         int max_tokens,
                                                         double temperature,
                                                         int top_logprobs) const {
    Json request{{"prompt", prompt},
                 {"max_tokens", max_tokens},
                 {"temperature", temperature},
                 {"top_logprobs", top_logprobs}};
    const std::string body = request.dump();

    std::string last_error;
    for (int attempt = 0; attempt <= config_.retries; ++attempt) {
        httplib::Client client(host_);
        client.set_connection_timeout(config_.timeout_ms / 1000,
                                      (config_.timeout_ms % 1000) * 1000);
        client.set_read_timeout(config_.timeout_ms / 1000,
                                (config_.timeout_ms % 1000) * 1000);
        httplib::Headers headers;
        if (!config_.api_token.empty())
            headers.emplace("Authorization", "Bearer " + config_.api_token);
        auto res = client.Post(path_, headers, body, "application/json");
        if (!res) {
            last_error = "transport failure: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status >= 500) {
            last_error = "server error " + std::to_string(res->status);
            continue;
        }
        if (res->status != 200)
            throw InputError("completion request rejected with status " +
                             std::to_string(res->status) + ": " + res->body);

        Json j = Json::parse(res->body, nullptr, false);
        if (j.is_discarded() || !j.contains("steps"))
            throw BackendError("malformed completion response", false);
        std::vector<Step> steps;
        for (const auto& sj : j.at("steps")) {
            Step step;
            step.token = sj.value("token", "");
            if (sj.contains("top_logprobs"))
                for (const auto& lj : sj.at("top_logprobs"))
                    step.top_logprobs.emplace_back(lj.at("token").get<std::string>(),
                                                   lj.at("logprob").get<double>());
            steps.push_back(std::move(step));
        }
        return steps;
    }
    throw BackendError("completion failed after " + std::to_string(config_.retries + 1) +
                           " attempts: " + last_error,
                       true);
}

TokenDistribution RemoteBackend::next_distribution(const SoftPrefix& context,
                                                   int top_k) const {
    if (top_k < 1) throw InputError("next_distribution requires top_k >= 1");
    if (context.injected_embedding)
        throw CapabilityError("remote backend cannot condition on an injected embedding");
    std::string prompt;
    {
        std::lock_guard<std::mutex> lock(vocab_mutex_);
        if (static_cast<int>(context.hard_tokens.size()) > config_.max_context)
            throw InputError("context exceeds remote max length");
        prompt = vocab_.detokenize(context.hard_tokens);
    }
    auto steps = complete(prompt, 1, 1.0, top_k);
    if (steps.empty() || steps.front().top_logprobs.empty())
        throw BackendError("server returned no logprobs", false);

    TokenDistribution dist;
    for (const auto& [token, logprob] : steps.front().top_logprobs)
        dist.entries.push_back({intern(token), std::exp(logprob)});
    dist.truncated = true;  // the server's tail is unknown even if short
    dist.canonicalize();
    return dist;
}

std::vector<double> RemoteBackend::embed_token(int) const {
    throw CapabilityError("remote backend does not expose token embeddings");
}

std::vector<int> RemoteBackend::generate_greedy(const SoftPrefix& context,
                                                int max_tokens) const {
    if (max_tokens < 1) throw InputError("generate_greedy requires max_tokens >= 1");
    if (context.injected_embedding)
        throw CapabilityError("remote backend cannot condition on an injected embedding");
    std::string prompt;
    {
        std::lock_guard<std::mutex> lock(vocab_mutex_);
        prompt = vocab_.detokenize(context.hard_tokens);
    }
    auto steps = complete(prompt, max_tokens, 0.0, 1);
    std::vector<int> out;
    out.reserve(steps.size());
    for (const auto& step : steps) out.push_back(intern(step.token));
    return out;
}

}  // namespace pregu
