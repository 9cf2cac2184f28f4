#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "pregu/backend.hpp"

namespace pregu {

// Order-2 softmax n-gram model over a small word vocabulary. The next-token
// distribution is a function of the last two positions only. Rows not set
// explicitly are softmaxes of seeded random logits; explicit rows are exact
// probability vectors, which is what makes one-hot chains and hand-computed
// entropy traces possible in tests.
struct ToyModelSpec {
    std::vector<std::string> tokens;
    std::string eos_token = "<eos>";
    int embedding_dim = 16;
    std::uint64_t seed = 0x5eedf00dULL;
    double default_logit_scale = 1.5;
    // Sharpness of the inverse-distance interpolation used when a continuous
    // embedding is injected. Higher = closer to nearest-prototype behaviour.
    double shepard_power = 6.0;
    // (prev2, prev1) -> explicit probability row over the vocabulary.
    std::map<std::pair<int, int>, std::vector<double>> rows;
    // token id -> explicit embedding (others drawn at random, unit norm).
    std::map<int, std::vector<double>> embeddings;
};

// Incremental construction helper for test fixtures.
class ToyModelBuilder {
public:
    explicit ToyModelBuilder(std::vector<std::string> tokens,
                             std::string eos_token = "<eos>");

    int id(const std::string& token) const;

    // Assigns probabilities to the (prev2, prev1) row; unlisted tokens share
    // the leftover mass uniformly (zero leftover makes the row exact).
    ToyModelBuilder& row(const std::string& prev2, const std::string& prev1,
                         const std::vector<std::pair<std::string, double>>& probs);
    ToyModelBuilder& one_hot(const std::string& prev2, const std::string& prev1,
                             const std::string& next);
    ToyModelBuilder& embedding(const std::string& token, std::vector<double> vec);
    ToyModelBuilder& embedding_dim(int d);
    ToyModelBuilder& seed(std::uint64_t s);

    ToyModelSpec build() const { return spec_; }

private:
    ToyModelSpec spec_;
};

class ToyBackend : public ModelBackend {
public:
    explicit ToyBackend(ToyModelSpec spec);

    const Vocabulary& vocab() const override { return vocab_; }
    BackendCapabilities capabilities() const override;
    std::vector<int> context_tokens(const std::string& text) const override {
        return vocab_.tokenize(text);
    }
    TokenDistribution next_distribution(const SoftPrefix& context,
                                        int top_k) const override;
    std::vector<double> embed_token(int token_id) const override;
    std::vector<int> generate_greedy(const SoftPrefix& context,
                                     int max_tokens) const override;
    std::optional<int> eos_id() const override { return eos_id_; }
    int max_context() const override { return 4096; }

    // Root-mean-square embedding norm; the auto perturbation scale is
    // derived from this.
    double embedding_rms() const;

private:
    // Row lookup for hard (prev2, prev1); bos_ id stands in for missing
    // positions at the start of the context.
    const std::vector<double>& hard_row(int prev2, int prev1) const;
    // Interpolation weights of an injected embedding against the token
    // prototypes (inverse-distance, exact at prototypes).
    std::vector<double> soft_weights(const std::vector<double>& x) const;
    // Distribution at the position right after the context, honouring an
    // injected embedding at the final or penultimate slot.
    std::vector<double> next_probs(const SoftPrefix& context,
                                   const std::vector<int>& generated) const;

    Vocabulary vocab_;
    int vocab_size_ = 0;
    int bos_ = 0;  // = vocab_size_, virtual id for "before the context"
    std::optional<int> eos_id_;
    int embedding_dim_ = 0;
    double shepard_power_ = 6.0;
    std::vector<std::vector<double>> rows_;        // (V+1)^2 rows of length V
    std::vector<std::vector<double>> embeddings_;  // V rows of length D
};

namespace toy {

// The bundled fixture model: 36 word symbols, engineered reasoning chains
// for two synthetic task families (last-digit arithmetic and boolean
// negation), one high-entropy branch point per chain, and an embedding
// geometry that lets latent perturbations repair a hasty first step.
ToyModelSpec fixture_spec();

// Row constants of the fixture's branch-point distribution, exposed so tests
// can recompute its entropy independently.
struct FixtureBranch {
    double top_connective;     // p("for")
    double other_connective;   // each of the 7 remaining connectives
    double result_token;       // each digit / boolean result token
    double repair_token;       // p("recheck")
    double answer_marker;      // p("Answer:")
};
FixtureBranch fixture_branch_row();

}  // namespace toy

}  // namespace pregu
