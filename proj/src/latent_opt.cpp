#include "pregu/latent_opt.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pregu/errors.hpp"

namespace pregu {

ProjectionOperator make_projection(int embedding_dim, int latent_dim,
                                   std::uint64_t seed) {
    if (latent_dim < 1) throw InputError("projection latent_dim must be >= 1");
    if (latent_dim > embedding_dim)
        throw InputError("projection latent_dim " + std::to_string(latent_dim) +
                         " exceeds embedding_dim " + std::to_string(embedding_dim));
    ProjectionOperator op;
    op.seed = seed;
    op.matrix.resize(embedding_dim, latent_dim);
    Rng rng(seed);
    const double scale = 1.0 / std::sqrt(static_cast<double>(latent_dim));
    for (int r = 0; r < embedding_dim; ++r)
        for (int c = 0; c < latent_dim; ++c) op.matrix(r, c) = rng.normal() * scale;
    return op;
}

LatentPoint lift(const Eigen::VectorXd& base, const ProjectionOperator& projection,
                 const Eigen::VectorXd& delta) {
    if (delta.size() != projection.latent_dim())
        throw InputError("delta dimension does not match projection");
    if (base.size() != projection.embedding_dim())
        throw InputError("base embedding dimension does not match projection");
    LatentPoint p;
    p.delta = delta;
    p.lifted_embedding = base + projection.matrix * delta;
    return p;
}

void SurrogateState::add(const Eigen::VectorXd& delta, double reward) {
    if (!inputs_.empty() && inputs_.front().size() != delta.size())
        throw InputError("surrogate observation dimension mismatch");
    inputs_.push_back(delta);
    targets_.push_back(reward);
}

double SurrogateState::best_observed() const {
    if (targets_.empty()) throw InputError("no observations yet");
    return *std::max_element(targets_.begin(), targets_.end());
}

namespace {

double se_kernel(const GpKernel& k, const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    double d2 = (a - b).squaredNorm();
    return k.signal_variance * std::exp(-0.5 * d2 / (k.length_scale * k.length_scale));
}

// Shared Cholesky of the Gram matrix for repeated posterior queries.
struct GpSolver {
    Eigen::LLT<Eigen::MatrixXd> llt;
    Eigen::VectorXd alpha;
    const SurrogateState* state;

    explicit GpSolver(const SurrogateState& s) : state(&s) {
        const int n = s.size();
        Eigen::MatrixXd gram(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j <= i; ++j) {
                double v = se_kernel(s.kernel(), s.inputs()[static_cast<std::size_t>(i)],
                                     s.inputs()[static_cast<std::size_t>(j)]);
                gram(i, j) = v;
                gram(j, i) = v;
            }
        gram.diagonal().array() += s.jitter();
        llt.compute(gram);
        if (llt.info() != Eigen::Success)
            throw NumericalError(
                "GP Gram matrix not positive definite after jitter " +
                std::to_string(s.jitter()) + " with " + std::to_string(n) +
                " observations");
        Eigen::VectorXd y(n);
        for (int i = 0; i < n; ++i) y(i) = s.targets()[static_cast<std::size_t>(i)];
        alpha = llt.solve(y);
    }

    GpPosterior query(const Eigen::VectorXd& q) const {
        const int n = state->size();
        Eigen::VectorXd ks(n);
        for (int i = 0; i < n; ++i)
            ks(i) = se_kernel(state->kernel(), state->inputs()[static_cast<std::size_t>(i)], q);
        double mean = ks.dot(alpha);
        double var = state->kernel().signal_variance - ks.dot(llt.solve(ks));
        if (var < 0.0) {
            if (var < -1e-9)
                throw NumericalError("GP posterior variance " + std::to_string(var));
            var = 0.0;
        }
        return GpPosterior{mean, std::sqrt(var)};
    }
};

double norm_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI); }
double norm_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

}  // namespace

GpPosterior gp_posterior(const SurrogateState& state, const Eigen::VectorXd& query) {
    if (state.empty()) throw InputError("gp_posterior requires at least one observation");
    return GpSolver(state).query(query);
}

double expected_improvement(double mean, double stddev, double best_so_far, double xi) {
    if (stddev < 0.0) throw InputError("negative stddev");
    const double gain = mean - best_so_far - xi;
    if (stddev < 1e-12) return std::max(gain, 0.0);
    const double u = gain / stddev;
    return std::max(gain * norm_cdf(u) + stddev * norm_pdf(u), 0.0);
}

void BOConfig::validate() const {
    if (samples_per_round < 1) throw InputError("samples_per_round must be >= 1");
    if (rounds < 1) throw InputError("rounds must be >= 1");
    if (sigma < 0.0) throw InputError("sigma must be nonnegative");
    if (candidate_pool < samples_per_round)
        throw InputError("candidate_pool must be >= samples_per_round");
    if (xi < 0.0) throw InputError("xi must be nonnegative");
    if (latent_dim < 1) throw InputError("latent_dim must be >= 1");
}

std::vector<Eigen::VectorXd> propose_batch(const SurrogateState& state,
                                           const BOConfig& cfg, double sigma, int round,
                                           Rng& rng) {
    cfg.validate();
    if (!(sigma > 0.0)) throw InputError("propose_batch needs a resolved sigma");
    if (round < 0) throw InputError("round must be nonnegative");
    const int k = cfg.samples_per_round;
    auto draw_around = [&](const Eigen::VectorXd& center, double scale) {
        Eigen::VectorXd d(cfg.latent_dim);
        for (int i = 0; i < cfg.latent_dim; ++i)
            d(i) = center(i) + rng.normal(0.0, scale);
        return d;
    };
    const Eigen::VectorXd origin = Eigen::VectorXd::Zero(cfg.latent_dim);

    if (state.empty()) {
        std::vector<Eigen::VectorXd> batch;
        batch.push_back(origin);  // unperturbed anchor
        for (int i = 1; i < k; ++i) batch.push_back(draw_around(origin, sigma));
        return batch;
    }

    // incumbent = argmax of the observations so far
    int best_idx = 0;
    for (int i = 1; i < state.size(); ++i)
        if (state.targets()[static_cast<std::size_t>(i)] >
            state.targets()[static_cast<std::size_t>(best_idx)])
            best_idx = i;
    const Eigen::VectorXd& incumbent = state.inputs()[static_cast<std::size_t>(best_idx)];
    const double local_scale = sigma * std::pow(0.7, round);

    std::vector<Eigen::VectorXd> pool;
    pool.reserve(static_cast<std::size_t>(cfg.candidate_pool));
    const int n_global = (cfg.candidate_pool + 1) / 2;
    for (int i = 0; i < n_global; ++i) pool.push_back(draw_around(origin, sigma));
    for (int i = n_global; i < cfg.candidate_pool; ++i)
        pool.push_back(draw_around(incumbent, local_scale));

    GpSolver solver(state);
    const double best = state.best_observed();
    std::vector<double> score(pool.size());
    for (std::size_t i = 0; i < pool.size(); ++i) {
        auto post = solver.query(pool[i]);
        score[i] = expected_improvement(post.mean, post.stddev, best, cfg.xi);
    }
    std::vector<std::size_t> order(pool.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });
    std::vector<Eigen::VectorXd> batch;
    for (int i = 0; i < k; ++i) batch.push_back(pool[order[static_cast<std::size_t>(i)]]);
    return batch;
}

RefineResult refine_path(const PartialPath& path, const std::string& prompt,
                         const ModelBackend& backend, const BOConfig& cfg,
                         const std::function<RewardBreakdown(const std::string&)>& reward_fn,
                         const ProjectionOperator& projection, int max_new_tokens,
                         std::uint64_t seed) {
    cfg.validate();
    if (!path.halted) throw InputError("refine_path requires a halted path");
    const auto caps = backend.capabilities();
    if (!caps.supports_soft_prefix)
        throw CapabilityError("refine_path requires supports_soft_prefix");
    if (projection.embedding_dim() != caps.embedding_dim)
        throw InputError("projection embedding_dim does not match backend");
    if (max_new_tokens < 1) throw InputError("max_new_tokens must be >= 1");

    const auto& vocab = backend.vocab();
    std::vector<int> ctx = backend.context_tokens(prompt);
    ctx.insert(ctx.end(), path.prefix_tokens.begin(), path.prefix_tokens.end());

    // Base point: the greedy continuation token at the interruption.
    auto halting = backend.next_distribution(SoftPrefix::of(ctx), 1);
    const int base_token = halting.argmax().token_id;
    const auto base_vec = backend.embed_token(base_token);
    Eigen::VectorXd base = Eigen::Map<const Eigen::VectorXd>(
        base_vec.data(), static_cast<Eigen::Index>(base_vec.size()));

    double sigma = cfg.sigma;
    if (sigma <= 0.0) {
        // 0.1 * RMS embedding norm, estimated over the vocabulary
        double acc = 0.0;
        for (int v = 0; v < vocab.size(); ++v) {
            auto e = backend.embed_token(v);
            double n2 = 0.0;
            for (double x : e) n2 += x * x;
            acc += n2;
        }
        sigma = 0.1 * std::sqrt(acc / std::max(1, vocab.size()));
        if (!(sigma > 0.0)) throw NumericalError("auto sigma collapsed to zero");
    }

    Rng rng(derive_seed(seed, "refine"));
    SurrogateState state(GpKernel{}, 1e-6);
    RefineResult result;
    result.resolved_sigma = sigma;

    for (int round = 0; round < cfg.rounds; ++round) {
        auto batch = propose_batch(state, cfg, sigma, round, rng);
        for (const auto& delta : batch) {
            RefineCandidate cand;
            cand.round = round;
            cand.delta = delta;
            try {
                auto point = lift(base, projection, delta);
                SoftPrefix soft;
                soft.hard_tokens = ctx;
                soft.injected_embedding.emplace(
                    point.lifted_embedding.data(),
                    point.lifted_embedding.data() + point.lifted_embedding.size());
                auto continuation = backend.generate_greedy(soft, max_new_tokens);
                std::vector<int> full = path.prefix_tokens;
                full.insert(full.end(), continuation.begin(), continuation.end());
                cand.text = vocab.detokenize(full);
                cand.reward = reward_fn(cand.text);
                state.add(delta, cand.reward->combined);
                if (result.best_candidate < 0 ||
                    cand.reward->combined > result.best_reward.combined) {
                    result.best_reward = *cand.reward;
                    result.best_text = cand.text;
                    result.best_candidate = static_cast<int>(result.history.size());
                }
            } catch (const Error& e) {
                cand.error = e.what();
            }
            result.history.push_back(std::move(cand));
        }
    }
    if (result.best_candidate < 0)
        throw BackendError("refine_path: every candidate failed", false);
    return result;
}

}  // namespace pregu
