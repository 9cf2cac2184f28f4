#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <optional>

#include "pregu/errors.hpp"
#include "pregu/rng.hpp"
#include "pregu/uncertainty.hpp"

using namespace pregu;

namespace {

TokenDistribution dist_of(std::vector<double> probs, bool truncated = false) {
    TokenDistribution d;
    for (std::size_t i = 0; i < probs.size(); ++i)
        d.entries.push_back({static_cast<int>(i), probs[i]});
    d.truncated = truncated;
    d.canonicalize();
    return d;
}

TokenDistribution random_dist(Rng& rng, int n) {
    std::vector<double> p(static_cast<std::size_t>(n));
    double z = 0.0;
    for (double& v : p) {
        v = -std::log(1.0 - rng.uniform());
        z += v;
    }
    for (double& v : p) v /= z;
    return dist_of(p);
}

// independent full-sum oracle
double entropy_oracle(const TokenDistribution& d) {
    double h = 0.0;
    for (const auto& e : d.entries)
        if (e.prob > 0.0) h -= e.prob * std::log(e.prob) / std::log(2.0);
    return h;
}

}  // namespace

TEST_CASE("entropy of uniform-over-8 is 3 bits") {
    auto d = dist_of(std::vector<double>(8, 0.125));
    CHECK(shannon_entropy(d) == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("entropy of one-hot is 0") {
    auto d = dist_of({1.0});
    CHECK(shannon_entropy(d) == 0.0);
}

TEST_CASE("entropy of [0.9, 0.1]") {
    // -0.9*log2(0.9) - 0.1*log2(0.1), by calculator: 0.46899559
    auto d = dist_of({0.9, 0.1}, true);
    CHECK(shannon_entropy(d) == doctest::Approx(0.46899559).epsilon(1e-7));
}

TEST_CASE("entropy rejects probabilities outside [0,1]") {
    TokenDistribution d;
    d.entries.push_back({0, 1.2});
    d.truncated = true;
    CHECK_THROWS_AS(shannon_entropy(d), InputError);
    TokenDistribution neg;
    neg.entries.push_back({0, -0.1});
    neg.truncated = true;
    CHECK_THROWS_AS(shannon_entropy(neg), InputError);
}

TEST_CASE("truncated entropy omits tail terms without renormalizing") {
    auto full = dist_of({0.5, 0.3, 0.2});
    auto top2 = full.top_k(2);
    CHECK(top2.truncated);
    double expect = -(0.5 * std::log2(0.5) + 0.3 * std::log2(0.3));
    CHECK(shannon_entropy(top2) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("entropy is monotone in the truncation level") {
    Rng rng(41);
    for (int trial = 0; trial < 200; ++trial) {
        auto d = random_dist(rng, 2 + static_cast<int>(rng.below(40)));
        for (int k = 1; k < static_cast<int>(d.entries.size()); ++k) {
            double hk = shannon_entropy(d.top_k(k));
            double hk1 = shannon_entropy(d.top_k(k + 1));
            CHECK(hk1 >= hk - 1e-12);
        }
    }
}

TEST_CASE("top_k >= vocab matches the full-sum oracle within 1e-9") {
    Rng rng(42);
    for (int trial = 0; trial < 1000; ++trial) {
        auto d = random_dist(rng, 2 + static_cast<int>(rng.below(60)));
        auto truncated = d.top_k(static_cast<int>(d.entries.size()) + 5);
        CHECK(!truncated.truncated);
        CHECK(std::abs(shannon_entropy(truncated) - entropy_oracle(d)) < 1e-9);
    }
}

// The log2(K) bound holds for K >= 3. For K in {1, 2} a sub-1/e head breaks
// it (uniform-over-3 truncated to its top 2 carries ~1.057 bits), so the
// property is checked from K = 3 up.
TEST_CASE("top-K entropy is at most log2(K) for K >= 3") {
    Rng rng(43);
    for (int trial = 0; trial < 500; ++trial) {
        auto d = random_dist(rng, 3 + static_cast<int>(rng.below(50)));
        for (int k = 3; k <= static_cast<int>(d.entries.size()); ++k)
            CHECK(shannon_entropy(d.top_k(k)) <= std::log2(static_cast<double>(k)) + 1e-9);
    }
}

TEST_CASE("detect_halt basics") {
    UncertaintyConfig cfg;
    cfg.tau = 3.0;

    cfg.t_min = 0;
    CHECK(detect_halt(EntropyTrace{{1, 1, 4, 1}}, cfg) == 2);
    CHECK(detect_halt(EntropyTrace{{1, 2, 1}}, cfg) == std::nullopt);

    cfg.t_min = 2;
    CHECK(detect_halt(EntropyTrace{{4, 1, 1, 4}}, cfg) == 3);

    cfg.t_min = 0;
    CHECK(detect_halt(EntropyTrace{{}}, cfg) == std::nullopt);
    // crossing exactly at tau counts
    CHECK(detect_halt(EntropyTrace{{3.0}}, cfg) == 0);
}

TEST_CASE("detect_halt matches a linear-scan oracle on random traces") {
    Rng rng(44);
    UncertaintyConfig cfg;
    for (int trial = 0; trial < 10000; ++trial) {
        EntropyTrace trace;
        int len = static_cast<int>(rng.below(12));
        for (int i = 0; i < len; ++i) trace.values.push_back(rng.uniform(0.0, 6.0));
        cfg.tau = rng.uniform(0.5, 5.5);
        cfg.t_min = static_cast<int>(rng.below(6));

        std::optional<int> expect;
        for (int t = 0; t < len; ++t) {
            if (t < cfg.t_min) continue;
            if (trace.values[static_cast<std::size_t>(t)] >= cfg.tau) {
                expect = t;
                break;
            }
        }
        CHECK(detect_halt(trace, cfg) == expect);
    }
}

TEST_CASE("uncertainty config validation") {
    UncertaintyConfig bad;
    bad.tau = 0.0;
    CHECK_THROWS_AS(bad.validate(), InputError);
    bad = UncertaintyConfig{};
    bad.top_k = 0;
    CHECK_THROWS_AS(bad.validate(), InputError);
    bad = UncertaintyConfig{};
    bad.t_min = -1;
    CHECK_THROWS_AS(bad.validate(), InputError);
}
