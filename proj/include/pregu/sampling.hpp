#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "pregu/backend.hpp"
#include "pregu/rng.hpp"

namespace pregu {

struct SamplingConfig {
    double temperature = 0.6;
    std::optional<double> first_token_temperature;  // FIRE only
    int max_tokens = 256;
    std::uint64_t seed = 0;

    void validate() const;
};

// Draws from the (possibly truncated) distribution sharpened to temperature
// T: weights p^(1/T), renormalized over the entries present. T below 1e-9
// degenerates to argmax.
int sample_token(const TokenDistribution& dist, double temperature, Rng& rng);

// Samples a completion token by token until EOS or max_tokens. The
// distribution at each step is requested at top_k; first_temperature, when
// given, applies to the first generated token only.
std::vector<int> sample_completion(const ModelBackend& backend,
                                   const std::vector<int>& context, int max_tokens,
                                   double temperature,
                                   std::optional<double> first_temperature, int top_k,
                                   Rng& rng);

}  // namespace pregu
