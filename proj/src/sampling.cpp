#include "pregu/sampling.hpp"

#include <cmath>

#include "pregu/errors.hpp"

namespace pregu {

void SamplingConfig::validate() const {
    if (!(temperature > 0.0)) throw InputError("temperature must be positive");
    if (first_token_temperature && !(*first_token_temperature > 0.0))
        throw InputError("first_token_temperature must be positive");
    if (max_tokens < 1) throw InputError("max_tokens must be >= 1");
}

int sample_token(const TokenDistribution& dist, double temperature, Rng& rng) {
    if (dist.entries.empty()) throw InputError("sampling from empty distribution");
    if (temperature < 1e-9) return dist.argmax().token_id;

    // p^(1/T) in log space; entries with p == 0 stay impossible.
    std::vector<double> w(dist.entries.size(), 0.0);
    double mx = -1e300;
    for (std::size_t i = 0; i < dist.entries.size(); ++i) {
        double p = dist.entries[i].prob;
        if (p <= 0.0) continue;
        w[i] = std::log(p) / temperature;
        mx = std::max(mx, w[i]);
    }
    double z = 0.0;
    for (std::size_t i = 0; i < dist.entries.size(); ++i) {
        double p = dist.entries[i].prob;
        w[i] = p > 0.0 ? std::exp(w[i] - mx) : 0.0;
        z += w[i];
    }
    double u = rng.uniform() * z;
    double acc = 0.0;
    for (std::size_t i = 0; i < dist.entries.size(); ++i) {
        acc += w[i];
        if (u < acc) return dist.entries[i].token_id;
    }
    return dist.entries.back().token_id;
}

std::vector<int> sample_completion(const ModelBackend& backend,
                                   const std::vector<int>& context, int max_tokens,
                                   double temperature,
                                   std::optional<double> first_temperature, int top_k,
                                   Rng& rng) {
    if (max_tokens < 1) throw InputError("max_tokens must be >= 1");
    std::vector<int> ctx = context;
    std::vector<int> out;
    const auto eos = backend.eos_id();
    for (int t = 0; t < max_tokens; ++t) {
        auto dist = backend.next_distribution(SoftPrefix::of(ctx), top_k);
        double temp = (t == 0 && first_temperature) ? *first_temperature : temperature;
        int tok = sample_token(dist, temp, rng);
        if (eos && tok == *eos) break;
        out.push_back(tok);
        ctx.push_back(tok);
    }
    return out;
}

}  // namespace pregu
