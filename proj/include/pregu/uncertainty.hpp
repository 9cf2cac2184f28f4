#pragma once

#include <optional>
#include <vector>

#include "pregu/types.hpp"

namespace pregu {

// Per-step entropies in bits, indexed by generation step (0-based).
struct EntropyTrace {
    std::vector<double> values;
};

struct UncertaintyConfig {
    double tau = 3.0;  // bits
    int top_k = 50;
    int t_min = 5;

    void validate() const;
};

// -sum p*log2(p) over the entries present. A top-K truncation simply omits
// the tail terms of the full sum; nothing is renormalized. Zero-probability
// entries contribute zero.
double shannon_entropy(const TokenDistribution& dist);

// Smallest index t with t >= t_min and trace[t] >= tau, if any.
std::optional<int> detect_halt(const EntropyTrace& trace, const UncertaintyConfig& cfg);

}  // namespace pregu
