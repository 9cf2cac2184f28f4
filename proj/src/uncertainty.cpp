#include "pregu/uncertainty.hpp"

#include <cmath>
#include <string>

#include "pregu/errors.hpp"

namespace pregu {

void UncertaintyConfig::validate() const {
    if (!(tau > 0.0)) throw InputError("tau must be positive");
    if (top_k < 1) throw InputError("top_k must be >= 1");
    if (t_min < 0) throw InputError("t_min must be >= 0");
}

double shannon_entropy(const TokenDistribution& dist) {
    if (dist.entries.empty()) throw InputError("entropy of empty distribution");
    double h = 0.0;
    for (const auto& e : dist.entries) {
        if (!(e.prob >= 0.0 && e.prob <= 1.0 + 1e-12))
            throw InputError("probability outside [0,1]: " + std::to_string(e.prob));
        if (e.prob > 0.0) h -= e.prob * std::log2(e.prob);
    }
    return std::max(h, 0.0);
}

std::optional<int> detect_halt(const EntropyTrace& trace, const UncertaintyConfig& cfg) {
    cfg.validate();
    for (int t = std::max(cfg.t_min, 0); t < static_cast<int>(trace.values.size()); ++t)
        if (trace.values[static_cast<std::size_t>(t)] >= cfg.tau) return t;
    return std::nullopt;
}

}  // namespace pregu
