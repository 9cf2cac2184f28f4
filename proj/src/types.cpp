#include "pregu/types.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_set>

#include "pregu/errors.hpp"

namespace pregu {

const TokenProb& TokenDistribution::argmax() const {
    if (entries.empty()) throw InputError("argmax of empty distribution");
    return entries.front();
}

void TokenDistribution::canonicalize() {
    std::unordered_set<int> seen;
    double sum = 0.0;
    for (const auto& e : entries) {
        if (!(e.prob >= 0.0 && e.prob <= 1.0 + 1e-12))
            throw InputError("probability outside [0,1]: " + std::to_string(e.prob));
        if (!seen.insert(e.token_id).second)
            throw InputError("duplicate token id in distribution: " +
                             std::to_string(e.token_id));
        sum += e.prob;
    }
    if (!truncated && !entries.empty() && std::abs(sum - 1.0) > 1e-9)
        throw InputError("full distribution sums to " + std::to_string(sum));
    std::sort(entries.begin(), entries.end(), [](const TokenProb& a, const TokenProb& b) {
        if (a.prob != b.prob) return a.prob > b.prob;
        return a.token_id < b.token_id;
    });
}

TokenDistribution TokenDistribution::top_k(int k) const {
    if (k < 1) throw InputError("top_k requires k >= 1");
    TokenDistribution out;
    if (k >= static_cast<int>(entries.size())) {
        out.entries = entries;
        out.truncated = truncated;
        return out;
    }
    out.entries.assign(entries.begin(), entries.begin() + k);
    out.truncated = true;
    return out;
}

}  // namespace pregu
