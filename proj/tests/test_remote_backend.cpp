#include <doctest.h>

#include <atomic>
#include <cmath>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "pregu/errors.hpp"
#include "pregu/remote_backend.hpp"

using namespace pregu;

namespace {

// Scripted completion server covering the wire format.
class MockServer {
public:
    MockServer() {
        server_.Post("/complete", [this](const httplib::Request& req,
                                         httplib::Response& res) {
            ++requests_;
            last_auth_ = req.get_header_value("Authorization");
            if (fail_next_ > 0) {
                --fail_next_;
                res.status = 503;
                return;
            }
            auto body = nlohmann::json::parse(req.body);
            last_prompt_ = body.at("prompt").get<std::string>();
            int max_tokens = body.at("max_tokens").get<int>();
            int top = body.at("top_logprobs").get<int>();

            nlohmann::json steps = nlohmann::json::array();
            const char* script[] = {" The", " answer", " is", " 42"};
            int n = std::min<int>(max_tokens, 4);
            for (int i = 0; i < n; ++i) {
                nlohmann::json lp = nlohmann::json::array();
                // head token gets p ~0.7, alternatives decay
                for (int j = 0; j < top && j < 4; ++j) {
                    std::string tok = j == 0 ? script[i] : " alt" + std::to_string(j);
                    lp.push_back({{"token", tok}, {"logprob", std::log(0.7 / (1 << j))}});
                }
                steps.push_back({{"token", script[i]}, {"top_logprobs", lp}});
            }
            nlohmann::json out{{"text", " The answer is 42"}, {"steps", steps}};
            res.set_content(out.dump(), "application/json");
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~MockServer() {
        server_.stop();
        thread_.join();
    }

    RemoteConfig config() const {
        RemoteConfig c;
        c.endpoint = "http://127.0.0.1:" + std::to_string(port_) + "/complete";
        c.retries = 2;
        c.timeout_ms = 2000;
        return c;
    }

    std::atomic<int> requests_{0};
    std::atomic<int> fail_next_{0};
    std::string last_prompt_;
    std::string last_auth_;

private:
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

}  // namespace

TEST_CASE("remote next_distribution parses, sorts, and marks truncation") {
    MockServer server;
    RemoteBackend backend(server.config());
    auto ctx = backend.context_tokens("Q: what is 6*7?");
    auto dist = backend.next_distribution(SoftPrefix::of(ctx), 3);
    CHECK(dist.truncated);
    REQUIRE(dist.entries.size() == 3);
    CHECK(dist.entries[0].prob == doctest::Approx(0.7));
    CHECK(dist.entries[1].prob == doctest::Approx(0.35));
    CHECK(dist.entries[0].prob >= dist.entries[1].prob);
    CHECK(backend.vocab().token(dist.entries[0].token_id) == " The");
    CHECK(server.last_prompt_ == "Q: what is 6*7?");
}

TEST_CASE("remote greedy generation interns server tokens in order") {
    MockServer server;
    RemoteBackend backend(server.config());
    auto ctx = backend.context_tokens("prompt");
    auto toks = backend.generate_greedy(SoftPrefix::of(ctx), 8);
    REQUIRE(toks.size() == 4);
    CHECK(backend.vocab().detokenize(toks) == " The answer is 42");
}

TEST_CASE("remote transport failures retry, then surface as retryable") {
    MockServer server;
    RemoteBackend backend(server.config());
    server.fail_next_ = 2;  // two 503s, third attempt succeeds
    auto ctx = backend.context_tokens("p");
    auto dist = backend.next_distribution(SoftPrefix::of(ctx), 2);
    CHECK(dist.entries.size() == 2);
    CHECK(server.requests_ == 3);

    server.fail_next_ = 100;  // exhausts every retry
    try {
        backend.next_distribution(SoftPrefix::of(ctx), 2);
        FAIL("expected BackendError");
    } catch (const BackendError& e) {
        CHECK(e.retryable());
    }
}

TEST_CASE("remote capability surface") {
    MockServer server;
    RemoteBackend backend(server.config());
    auto caps = backend.capabilities();
    CHECK(!caps.supports_soft_prefix);
    CHECK(caps.supports_logprobs);
    CHECK_THROWS_AS(backend.embed_token(0), CapabilityError);
    SoftPrefix injected;
    injected.hard_tokens = backend.context_tokens("p");
    injected.injected_embedding = std::vector<double>(4, 0.0);
    CHECK_THROWS_AS(backend.next_distribution(injected, 2), CapabilityError);
    CHECK_THROWS_AS(backend.generate_greedy(injected, 2), CapabilityError);
}

TEST_CASE("remote auth token rides the Authorization header") {
    MockServer server;
    auto cfg = server.config();
    cfg.api_token = "sekrit";
    RemoteBackend backend(cfg);
    backend.next_distribution(SoftPrefix::of(backend.context_tokens("p")), 2);
    CHECK(server.last_auth_ == "Bearer sekrit");
}
