#pragma once

#include <optional>
#include <vector>

#include "pregu/types.hpp"
#include "pregu/vocab.hpp"

namespace pregu {

// Generative model interface. Implementations must be safe for concurrent
// read-only inference: no call below mutates observable state.
class ModelBackend {
public:
    virtual ~ModelBackend() = default;

    virtual const Vocabulary& vocab() const = 0;
    virtual BackendCapabilities capabilities() const = 0;

    // Context ids for a prompt string. The toy model splits on its word
    // vocabulary; a remote backend leaves tokenization to the server and
    // interns the prompt as one opaque unit.
    virtual std::vector<int> context_tokens(const std::string& text) const = 0;

    // Distribution over the next token after the context, truncated to the
    // top_k most probable entries when top_k < vocabulary size.
    virtual TokenDistribution next_distribution(const SoftPrefix& context,
                                                int top_k) const = 0;

    // Input embedding row for a token; requires supports_soft_prefix.
    virtual std::vector<double> embed_token(int token_id) const = 0;

    // Argmax decoding until EOS or max_tokens, ties broken by lowest token
    // id. The EOS token itself is not part of the returned sequence.
    virtual std::vector<int> generate_greedy(const SoftPrefix& context,
                                             int max_tokens) const = 0;

    virtual std::optional<int> eos_id() const = 0;
    virtual int max_context() const = 0;
};

}  // namespace pregu
