#include "pregu/toy_backend.hpp"

#include <algorithm>
#include <cmath>

#include "pregu/errors.hpp"
#include "pregu/rng.hpp"

namespace pregu {

// ---------------------------------------------------------------------------
// ToyModelBuilder

ToyModelBuilder::ToyModelBuilder(std::vector<std::string> tokens, std::string eos_token) {
    spec_.tokens = std::move(tokens);
    spec_.eos_token = std::move(eos_token);
}

int ToyModelBuilder::id(const std::string& token) const {
    for (int i = 0; i < static_cast<int>(spec_.tokens.size()); ++i)
        if (spec_.tokens[static_cast<std::size_t>(i)] == token) return i;
    throw InputError("builder: unknown token '" + token + "'");
}

ToyModelBuilder& ToyModelBuilder::row(
    const std::string& prev2, const std::string& prev1,
    const std::vector<std::pair<std::string, double>>& probs) {
    std::vector<double> r(spec_.tokens.size(), 0.0);
    double listed = 0.0;
    for (const auto& [tok, p] : probs) {
        if (p < 0.0) throw InputError("builder: negative probability");
        r[static_cast<std::size_t>(id(tok))] = p;
        listed += p;
    }
    if (listed > 1.0 + 1e-9) throw InputError("builder: row mass exceeds 1");
    double leftover = 1.0 - listed;
    if (leftover > 1e-12) {
        int unlisted = 0;
        for (double v : r)
            if (v == 0.0) ++unlisted;
        for (double& v : r)
            if (v == 0.0) v = leftover / unlisted;
    }
    double sum = 0.0;
    for (double v : r) sum += v;
    for (double& v : r) v /= sum;
    spec_.rows[{id(prev2), id(prev1)}] = std::move(r);
    return *this;
}

ToyModelBuilder& ToyModelBuilder::one_hot(const std::string& prev2,
                                          const std::string& prev1,
                                          const std::string& next) {
    return row(prev2, prev1, {{next, 1.0}});
}

ToyModelBuilder& ToyModelBuilder::embedding(const std::string& token,
                                            std::vector<double> vec) {
    spec_.embeddings[id(token)] = std::move(vec);
    return *this;
}

ToyModelBuilder& ToyModelBuilder::embedding_dim(int d) {
    spec_.embedding_dim = d;
    return *this;
}

ToyModelBuilder& ToyModelBuilder::seed(std::uint64_t s) {
    spec_.seed = s;
    return *this;
}

// ---------------------------------------------------------------------------
// ToyBackend

ToyBackend::ToyBackend(ToyModelSpec spec)
    : vocab_(spec.tokens, Vocabulary::Join::space),
      vocab_size_(static_cast<int>(spec.tokens.size())),
      bos_(vocab_size_),
      embedding_dim_(spec.embedding_dim),
      shepard_power_(spec.shepard_power) {
    if (vocab_size_ < 2) throw InputError("toy model needs at least 2 tokens");
    if (embedding_dim_ < 1) throw InputError("toy model embedding_dim must be positive");
    eos_id_ = vocab_.id(spec.eos_token);

    // All rows are materialised up front so the backend is immutable (and
    // therefore trivially safe for concurrent callers) afterwards.
    const int side = vocab_size_ + 1;
    rows_.resize(static_cast<std::size_t>(side) * side);
    for (int a = 0; a < side; ++a) {
        for (int b = 0; b < side; ++b) {
            auto& r = rows_[static_cast<std::size_t>(a) * side + b];
            auto it = spec.rows.find({a, b});
            if (it != spec.rows.end()) {
                if (static_cast<int>(it->second.size()) != vocab_size_)
                    throw InputError("toy row has wrong width");
                r = it->second;
                continue;
            }
            Rng rng(derive_seed(spec.seed, "toy-row",
                                static_cast<std::uint64_t>(a) * side + b));
            std::vector<double> logits(static_cast<std::size_t>(vocab_size_));
            double mx = -1e300;
            for (double& l : logits) {
                l = rng.normal(0.0, spec.default_logit_scale);
                mx = std::max(mx, l);
            }
            r.resize(static_cast<std::size_t>(vocab_size_));
            double z = 0.0;
            for (int v = 0; v < vocab_size_; ++v) {
                r[static_cast<std::size_t>(v)] = std::exp(logits[static_cast<std::size_t>(v)] - mx);
                z += r[static_cast<std::size_t>(v)];
            }
            for (double& p : r) p /= z;
        }
    }

    embeddings_.resize(static_cast<std::size_t>(vocab_size_));
    for (int v = 0; v < vocab_size_; ++v) {
        auto it = spec.embeddings.find(v);
        if (it != spec.embeddings.end()) {
            if (static_cast<int>(it->second.size()) != embedding_dim_)
                throw InputError("toy embedding has wrong dimension");
            embeddings_[static_cast<std::size_t>(v)] = it->second;
            continue;
        }
        Rng rng(derive_seed(spec.seed, "toy-embed", static_cast<std::uint64_t>(v)));
        std::vector<double> e(static_cast<std::size_t>(embedding_dim_));
        double norm2 = 0.0;
        for (double& x : e) {
            x = rng.normal();
            norm2 += x * x;
        }
        double inv = 1.0 / std::sqrt(std::max(norm2, 1e-30));
        for (double& x : e) x *= inv;
        embeddings_[static_cast<std::size_t>(v)] = std::move(e);
    }
}

BackendCapabilities ToyBackend::capabilities() const {
    return BackendCapabilities{/*supports_soft_prefix=*/true,
                               /*supports_logprobs=*/true, embedding_dim_};
}

const std::vector<double>& ToyBackend::hard_row(int prev2, int prev1) const {
    const int side = vocab_size_ + 1;
    if (prev2 < 0 || prev2 > vocab_size_ || prev1 < 0 || prev1 > vocab_size_)
        throw InputError("toy context token out of range");
    return rows_[static_cast<std::size_t>(prev2) * side + prev1];
}

std::vector<double> ToyBackend::soft_weights(const std::vector<double>& x) const {
    if (static_cast<int>(x.size()) != embedding_dim_)
        throw InputError("injected embedding has wrong dimension");
    std::vector<double> logw(static_cast<std::size_t>(vocab_size_));
    double mx = -1e300;
    for (int v = 0; v < vocab_size_; ++v) {
        const auto& e = embeddings_[static_cast<std::size_t>(v)];
        double d2 = 0.0;
        for (int i = 0; i < embedding_dim_; ++i) {
            double diff = x[static_cast<std::size_t>(i)] - e[static_cast<std::size_t>(i)];
            d2 += diff * diff;
        }
        if (d2 < 1e-24) {
            // exactly (or indistinguishably) at a prototype: behave as that token
            std::vector<double> w(static_cast<std::size_t>(vocab_size_), 0.0);
            w[static_cast<std::size_t>(v)] = 1.0;
            return w;
        }
        logw[static_cast<std::size_t>(v)] = -0.5 * shepard_power_ * std::log(d2);
        mx = std::max(mx, logw[static_cast<std::size_t>(v)]);
    }
    double z = 0.0;
    std::vector<double> w(static_cast<std::size_t>(vocab_size_));
    for (int v = 0; v < vocab_size_; ++v) {
        w[static_cast<std::size_t>(v)] = std::exp(logw[static_cast<std::size_t>(v)] - mx);
        z += w[static_cast<std::size_t>(v)];
    }
    for (double& v : w) v /= z;
    return w;
}

std::vector<double> ToyBackend::next_probs(const SoftPrefix& context,
                                           const std::vector<int>& generated) const {
    // Effective positions: hard tokens, optional injected embedding, then
    // whatever this generation pass has produced. Only the last two matter.
    const auto& hard = context.hard_tokens;
    const std::size_t n_hard = hard.size();
    const bool injected = context.injected_embedding.has_value();
    const std::size_t total = n_hard + (injected ? 1 : 0) + generated.size();

    auto token_at = [&](std::size_t pos) -> int {  // valid only for non-injected slots
        if (pos < n_hard) return hard[pos];
        return generated[pos - n_hard - (injected ? 1 : 0)];
    };
    const std::size_t inj_pos = n_hard;  // position of the embedding, when present

    auto slot = [&](std::size_t back) -> std::ptrdiff_t {
        return static_cast<std::ptrdiff_t>(total) - 1 - static_cast<std::ptrdiff_t>(back);
    };
    const std::ptrdiff_t p1 = slot(0);  // last
    const std::ptrdiff_t p2 = slot(1);  // one before last

    const bool p1_soft = injected && p1 == static_cast<std::ptrdiff_t>(inj_pos);
    const bool p2_soft = injected && p2 == static_cast<std::ptrdiff_t>(inj_pos);

    auto hard_id = [&](std::ptrdiff_t pos) -> int {
        if (pos < 0) return bos_;
        return token_at(static_cast<std::size_t>(pos));
    };

    if (!p1_soft && !p2_soft) return hard_row(hard_id(p2), hard_id(p1));

    const auto w = soft_weights(*context.injected_embedding);
    std::vector<double> mixed(static_cast<std::size_t>(vocab_size_), 0.0);
    for (int u = 0; u < vocab_size_; ++u) {
        double wu = w[static_cast<std::size_t>(u)];
        if (wu <= 0.0) continue;
        const auto& r = p1_soft ? hard_row(hard_id(p2), u) : hard_row(u, hard_id(p1));
        for (int v = 0; v < vocab_size_; ++v)
            mixed[static_cast<std::size_t>(v)] += wu * r[static_cast<std::size_t>(v)];
    }
    return mixed;
}

TokenDistribution ToyBackend::next_distribution(const SoftPrefix& context,
                                                int top_k) const {
    if (top_k < 1) throw InputError("next_distribution requires top_k >= 1");
    if (static_cast<int>(context.hard_tokens.size()) > max_context())
        throw InputError("context exceeds toy backend max length");
    auto probs = next_probs(context, {});
    TokenDistribution dist;
    dist.entries.reserve(probs.size());
    for (int v = 0; v < vocab_size_; ++v)
        if (probs[static_cast<std::size_t>(v)] > 0.0)
            dist.entries.push_back({v, probs[static_cast<std::size_t>(v)]});
    dist.truncated = false;
    dist.canonicalize();
    return dist.top_k(std::min(top_k, static_cast<int>(dist.entries.size())));
}

std::vector<double> ToyBackend::embed_token(int token_id) const {
    if (token_id < 0 || token_id >= vocab_size_)
        throw InputError("embed_token: id out of range");
    return embeddings_[static_cast<std::size_t>(token_id)];
}

std::vector<int> ToyBackend::generate_greedy(const SoftPrefix& context,
                                             int max_tokens) const {
    if (max_tokens < 1) throw InputError("generate_greedy requires max_tokens >= 1");
    std::vector<int> out;
    out.reserve(static_cast<std::size_t>(max_tokens));
    while (static_cast<int>(out.size()) < max_tokens) {
        auto probs = next_probs(context, out);
        int best = 0;
        for (int v = 1; v < vocab_size_; ++v)
            if (probs[static_cast<std::size_t>(v)] > probs[static_cast<std::size_t>(best)])
                best = v;  // scan order breaks ties toward the lowest id
        if (eos_id_ && best == *eos_id_) break;
        out.push_back(best);
    }
    return out;
}

double ToyBackend::embedding_rms() const {
    double acc = 0.0;
    for (const auto& e : embeddings_) {
        double n2 = 0.0;
        for (double x : e) n2 += x * x;
        acc += n2;
    }
    return std::sqrt(acc / static_cast<double>(embeddings_.size()));
}

// ---------------------------------------------------------------------------
// Fixture model

namespace toy {

FixtureBranch fixture_branch_row() {
    return FixtureBranch{0.10, 0.09, 0.018, 0.038, 0.016};
}

ToyModelSpec fixture_spec() {
    const std::vector<std::string> tokens = {
        "0", "1", "2", "3", "4", "5", "6", "7", "8", "9",          // 0-9
        "yes", "no",                                                // 10-11
        "true", "false",                                            // 12-13
        "directly", "carefully", "stepwise",                        // 14-16
        "for", "given", "since", "first", "according", "then", "so", "thus",  // 17-24
        "recheck",                                                  // 25
        "Answer:",                                                  // 26
        "<eos>",                                                    // 27
        "compute", "the", "last", "digit", "of", "plus", "opposite", "decide",  // 28-35
    };
    ToyModelBuilder b(tokens);
    b.seed(0xF1C70125ULL).embedding_dim(16);

    auto digit = [&](int v) { return tokens[static_cast<std::size_t>(v % 10)]; };
    const std::vector<std::string> results = {"0", "1", "2", "3", "4", "5", "6", "7",
                                              "8", "9", "true", "false"};
    const std::vector<std::string> connectives = {"for",       "given", "since", "first",
                                                  "according", "then",  "so",    "thus"};
    const std::vector<std::string> approaches = {"directly", "carefully", "stepwise"};

    // Question entry points. "plus <y>" ends a last-digit problem, "of
    // <yes|no>" ends a negation problem. Half of each family has a tempting
    // hasty approach whose argmax computation is wrong; sampling still splits
    // mass across the careful approaches, which is what gives the verifier
    // signal downstream.
    for (int y = 0; y <= 9; ++y) {
        if (y <= 4)
            b.row("plus", digit(y), {{"carefully", 0.55}, {"stepwise", 0.45}});
        else
            b.row("plus", digit(y),
                  {{"directly", 0.40}, {"carefully", 0.35}, {"stepwise", 0.25}});
    }
    b.row("of", "yes", {{"carefully", 0.55}, {"stepwise", 0.45}});
    b.row("of", "no", {{"directly", 0.40}, {"carefully", 0.35}, {"stepwise", 0.25}});

    // The single computation step. A hasty "directly" adds 4 instead of 3
    // (numeric) or forgets the negation (boolean).
    for (int y = 0; y <= 9; ++y) {
        b.one_hot(digit(y), "directly", digit(y + 4));
        b.one_hot(digit(y), "carefully", digit(y + 3));
        b.one_hot(digit(y), "stepwise", digit(y + 3));
    }
    b.one_hot("yes", "directly", "true");
    b.one_hot("yes", "carefully", "false");
    b.one_hot("yes", "stepwise", "false");
    b.one_hot("no", "directly", "false");
    b.one_hot("no", "carefully", "true");
    b.one_hot("no", "stepwise", "true");

    // Carry discipline: the running result token is re-emitted around every
    // filler so it always survives in the order-2 state.
    for (const auto& a : approaches)
        for (const auto& r : results) b.one_hot(a, r, "so");
    for (const auto& r : results) {
        b.one_hot("so", r, r);
        for (const auto& c : connectives) b.one_hot(r, c, r);
        b.one_hot(r, "Answer:", r);
        b.one_hot("Answer:", r, "<eos>");
    }

    // Branch point: a repeated result token means the chain has settled and
    // must pick the next discourse move. This is the one genuinely flat
    // distribution in every fixture chain, the spot PREGU halts on.
    const FixtureBranch br = fixture_branch_row();
    std::vector<std::pair<std::string, double>> spike;
    spike.emplace_back("for", br.top_connective);
    for (const auto& c : connectives)
        if (c != "for") spike.emplace_back(c, br.other_connective);
    for (const auto& r : results) spike.emplace_back(r, br.result_token);
    spike.emplace_back("recheck", br.repair_token);
    spike.emplace_back("Answer:", br.answer_marker);
    for (const auto& r1 : results)
        for (const auto& r2 : results) {
            if (r1 == r2)
                b.row(r1, r2, spike);
            else
                b.one_hot(r1, r2, "Answer:");  // a corrected value concludes
        }

    // "recheck" revises the carried result: digits step back by one (undoing
    // the hasty +4 against the intended +3), booleans flip.
    for (int y = 0; y <= 9; ++y) b.one_hot(digit(y), "recheck", digit(y + 9));
    b.one_hot("true", "recheck", "false");
    b.one_hot("false", "recheck", "true");
    // "so" is excluded here: (so, result) stays a carry row, so a sampled
    // "so" at the branch point just re-enters the carry loop.
    for (const auto& r : results) {
        b.one_hot("recheck", r, "Answer:");
        for (const auto& c : connectives)
            if (c != "so") b.one_hot(c, r, "Answer:");
    }

    // Embedding geometry: the eight connectives sit on a shell of radius
    // 0.55 around "recheck", so a modest perturbation of a connective
    // embedding can cross into the revision basin even after a random
    // projection throws away part of the direction.
    ToyModelSpec spec = b.build();
    Rng geom(derive_seed(spec.seed, "fixture-geometry"));
    auto unit = [&]() {
        std::vector<double> v(16);
        double n2 = 0.0;
        for (double& x : v) {
            x = geom.normal();
            n2 += x * x;
        }
        double inv = 1.0 / std::sqrt(std::max(n2, 1e-30));
        for (double& x : v) x *= inv;
        return v;
    };
    const std::vector<double> center = unit();
    spec.embeddings[b.id("recheck")] = center;
    const double shell = 0.55;
    for (const auto& c : connectives) {
        auto dir = unit();
        std::vector<double> e(16);
        for (int i = 0; i < 16; ++i)
            e[static_cast<std::size_t>(i)] =
                center[static_cast<std::size_t>(i)] + shell * dir[static_cast<std::size_t>(i)];
        spec.embeddings[b.id(c)] = e;
    }
    return spec;
}

}  // namespace toy

}  // namespace pregu
