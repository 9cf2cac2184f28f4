#pragma once

#include <optional>
#include <vector>

namespace pregu {

struct TokenProb {
    int token_id = -1;
    double prob = 0.0;
    bool operator==(const TokenProb&) const = default;
};

// Next-token distribution, possibly the top-K head of the full one.
// Entries are kept sorted by probability descending, token id ascending on
// ties, so entries.front() is the deterministic argmax.
struct TokenDistribution {
    std::vector<TokenProb> entries;
    bool truncated = false;

    const TokenProb& argmax() const;

    // Sorts entries into canonical order and checks basic sanity
    // (probabilities in [0,1], no duplicate ids, full sums to 1).
    void canonicalize();

    // Keeps the k most probable entries; marks truncated when dropping mass.
    TokenDistribution top_k(int k) const;
};

struct BackendCapabilities {
    bool supports_soft_prefix = false;
    bool supports_logprobs = false;
    int embedding_dim = 0;
};

// Conditioning context: hard token ids, plus optionally one continuous
// embedding occupying the next position (the Stage 2 injection point).
struct SoftPrefix {
    std::vector<int> hard_tokens;
    std::optional<std::vector<double>> injected_embedding;

    static SoftPrefix of(std::vector<int> tokens) {
        return SoftPrefix{std::move(tokens), std::nullopt};
    }
};

}  // namespace pregu
