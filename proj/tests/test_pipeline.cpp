#include <doctest.h>

#include <cmath>

#include "pregu/errors.hpp"
#include "pregu/pipeline.hpp"
#include "pregu/toy_backend.hpp"

using namespace pregu;

namespace {

// Toy semantics, but pretends embedding injection is unavailable.
class NoSoftPrefixBackend : public ModelBackend {
public:
    NoSoftPrefixBackend() : inner_(toy::fixture_spec()) {}
    const Vocabulary& vocab() const override { return inner_.vocab(); }
    BackendCapabilities capabilities() const override {
        return BackendCapabilities{false, true, 0};
    }
    std::vector<int> context_tokens(const std::string& text) const override {
        return inner_.context_tokens(text);
    }
    TokenDistribution next_distribution(const SoftPrefix& c, int k) const override {
        return inner_.next_distribution(c, k);
    }
    std::vector<double> embed_token(int) const override {
        throw CapabilityError("no embeddings");
    }
    std::vector<int> generate_greedy(const SoftPrefix& c, int m) const override {
        return inner_.generate_greedy(c, m);
    }
    std::optional<int> eos_id() const override { return inner_.eos_id(); }
    int max_context() const override { return inner_.max_context(); }

private:
    ToyBackend inner_;
};

RunConfig fixture_run_config(std::uint64_t seed) {
    RunConfig cfg;
    cfg.sampling.max_tokens = 24;
    cfg.bo.latent_dim = 8;  // toy embeddings are 16-dimensional
    cfg.bo.sigma = 0.15;
    cfg.verifier_m = 8;
    cfg.master_seed = seed;
    cfg.prompt_template = PromptTemplate{"{question}"};
    return cfg;
}

Candidate mk(int path, double verifier, double coherence, const char* answer) {
    Candidate c;
    c.path_index = path;
    c.reward = combined_reward(verifier, coherence);
    c.extracted = ExtractedAnswer{answer, answer, TaskKind::numeric};
    return c;
}

}  // namespace

TEST_CASE("select_final: argmax, ties to lowest path index, singletons") {
    std::vector<Candidate> c{mk(0, 0.3, 0.0, "1"), mk(1, 0.9, 0.0, "2"),
                             mk(2, 0.5, 0.0, "3")};
    CHECK(select_final(c) == 1);
    std::vector<Candidate> tie{mk(0, 0.7, 0.0, "1"), mk(1, 0.7, 0.0, "2")};
    CHECK(select_final(tie) == 0);
    std::vector<Candidate> one{mk(0, 0.1, 0.0, "1")};
    CHECK(select_final(one) == 0);
    CHECK_THROWS_AS(select_final({}), InputError);
}

TEST_CASE("select_final prefers parseable candidates, falls back to lowest path") {
    std::vector<Candidate> c{mk(1, 0.9, 0.9, "2"), mk(2, 0.1, 0.1, "3")};
    c[0].extracted.reset();  // unparseable despite the big reward
    CHECK(select_final(c) == 1);
    c[1].extracted.reset();  // everything failed: lowest path index wins
    CHECK(select_final(c) == 0);
}

TEST_CASE("selection is invariant under common positive scaling of both rewards") {
    Rng rng(17);
    for (int trial = 0; trial < 1000; ++trial) {
        int n = 2 + static_cast<int>(rng.below(6));
        std::vector<Candidate> base;
        for (int i = 0; i < n; ++i)
            base.push_back(
                mk(i, rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0), "7"));
        int before = select_final(base);
        double lambda = rng.uniform(0.05, 0.95);  // keeps scaled values in [0,1]
        std::vector<Candidate> scaled;
        for (int i = 0; i < n; ++i)
            scaled.push_back(mk(i, base[static_cast<std::size_t>(i)].reward.verifier * lambda,
                                base[static_cast<std::size_t>(i)].reward.coherence * lambda,
                                "7"));
        CHECK(select_final(scaled) == before);
    }
}

TEST_CASE("run_pregu end-to-end on an easy fixture item") {
    ToyBackend backend(toy::fixture_spec());
    auto cfg = fixture_run_config(1001);
    auto res = run_pregu("num-002", "compute the last digit of 3 plus 2", backend, cfg);
    CHECK(res.candidates.size() == 5);
    CHECK(res.selected_answer == "5");
    for (const auto& c : res.candidates) {
        CHECK(c.refined);  // every fixture path halts
        CHECK(c.reward.combined >= 0.0);
        CHECK(c.reward.combined <= 2.0);
    }
    // selection maximizes combined reward: verify by direct scan
    int best = res.selected_index;
    for (const auto& c : res.candidates)
        if (c.extracted)
            CHECK(res.candidates[static_cast<std::size_t>(best)].reward.combined >=
                  c.reward.combined);
    CHECK(res.timings.total_ms > 0.0);
}

TEST_CASE("run_pregu with unattainable tau degrades to best-of-N sampling") {
    ToyBackend backend(toy::fixture_spec());
    auto cfg = fixture_run_config(1002);
    cfg.uncertainty.tau = 99.0;
    auto res = run_pregu("q", "compute the last digit of 3 plus 4", backend, cfg);
    CHECK(res.candidates.size() == 5);
    for (const auto& c : res.candidates) CHECK(!c.refined);
    CHECK(res.refinements.empty());
    CHECK(res.selected_answer == "7");
}

TEST_CASE("run_pregu is deterministic: same master seed, any worker count") {
    ToyBackend backend(toy::fixture_spec());
    auto cfg = fixture_run_config(4242);
    auto a = run_pregu("q", "compute the last digit of 3 plus 8", backend, cfg);
    auto b = run_pregu("q", "compute the last digit of 3 plus 8", backend, cfg);
    CHECK(a.canonical_json().dump() == b.canonical_json().dump());

    cfg.n_workers = 4;
    auto c = run_pregu("q", "compute the last digit of 3 plus 8", backend, cfg);
    CHECK(a.canonical_json().dump() == c.canonical_json().dump());
}

TEST_CASE("hard fixture item: a correct candidate exists and wins when verified") {
    // rigged scenario: greedy answers 1 (hasty +4), careful paths answer 0;
    // with this seed the verifier samples favor 0 and selection recovers it
    ToyBackend backend(toy::fixture_spec());
    auto cfg = fixture_run_config(1);
    auto res = run_pregu("num-007", "compute the last digit of 3 plus 7", backend, cfg);
    bool has_correct = false;
    for (const auto& c : res.candidates)
        if (c.extracted && c.extracted->normalized == "0") has_correct = true;
    REQUIRE(has_correct);
    CHECK(res.selected_answer == "0");

    // whatever the seed, the winner is the reward argmax over the candidates
    for (std::uint64_t seed : {2ULL, 7ULL, 11ULL}) {
        auto r = run_pregu("num-007", "compute the last digit of 3 plus 7", backend,
                           fixture_run_config(seed));
        int expect = 0;
        for (int i = 1; i < static_cast<int>(r.candidates.size()); ++i) {
            const auto& cur = r.candidates[static_cast<std::size_t>(i)];
            const auto& best = r.candidates[static_cast<std::size_t>(expect)];
            if (cur.extracted &&
                (!best.extracted || cur.reward.combined > best.reward.combined))
                expect = i;
        }
        CHECK(r.selected_index == expect);
    }
}

TEST_CASE("pipeline refuses Stage 2 on a backend without soft prefixes") {
    NoSoftPrefixBackend backend;
    auto cfg = fixture_run_config(1);
    CHECK_THROWS_WITH_AS(
        run_pregu("q", "compute the last digit of 3 plus 5", backend, cfg),
        doctest::Contains("supports_soft_prefix"), CapabilityError);

    // the documented fallback scores plain greedy continuations instead
    cfg.allow_unrefined_fallback = true;
    auto res = run_pregu("q", "compute the last digit of 3 plus 5", backend, cfg);
    CHECK(res.candidates.size() == 5);
    for (const auto& c : res.candidates) CHECK(!c.refined);
    CHECK(res.selected_answer == "8");
}

TEST_CASE("config json round-trip") {
    auto cfg = fixture_run_config(5);
    cfg.uncertainty.tau = 2.5;
    cfg.bo.rounds = 7;
    cfg.task_kind = TaskKind::boolean;
    auto back = RunConfig::from_json(cfg.to_json());
    CHECK(back.uncertainty.tau == 2.5);
    CHECK(back.bo.rounds == 7);
    CHECK(back.bo.latent_dim == 8);
    CHECK(back.verifier_m == 8);
    CHECK(back.master_seed == 5);
    CHECK(back.task_kind == TaskKind::boolean);
    CHECK(back.prompt_template.text == "{question}");
}
