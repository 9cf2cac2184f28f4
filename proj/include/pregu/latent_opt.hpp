#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "pregu/backend.hpp"
#include "pregu/decoding.hpp"
#include "pregu/reward.hpp"
#include "pregu/rng.hpp"

namespace pregu {

// Fixed random map from the d-dimensional search space into the model's
// D-dimensional embedding space. Entries are i.i.d. N(0, 1/d), so lifted
// perturbations keep roughly the norm of their coordinates.
struct ProjectionOperator {
    Eigen::MatrixXd matrix;  // D x d
    std::uint64_t seed = 0;

    int embedding_dim() const { return static_cast<int>(matrix.rows()); }
    int latent_dim() const { return static_cast<int>(matrix.cols()); }
};

ProjectionOperator make_projection(int embedding_dim, int latent_dim,
                                   std::uint64_t seed);

struct LatentPoint {
    Eigen::VectorXd delta;
    Eigen::VectorXd lifted_embedding;  // base + P * delta
    std::optional<RewardBreakdown> reward;
};

LatentPoint lift(const Eigen::VectorXd& base, const ProjectionOperator& projection,
                 const Eigen::VectorXd& delta);

struct GpKernel {
    double length_scale = 1.0;
    double signal_variance = 1.0;
};

// Zero-mean GP regression state over (delta, reward) observations with a
// squared-exponential kernel.
class SurrogateState {
public:
    SurrogateState() = default;
    SurrogateState(GpKernel kernel, double noise_jitter)
        : kernel_(kernel), jitter_(noise_jitter) {}

    void add(const Eigen::VectorXd& delta, double reward);
    int size() const { return static_cast<int>(targets_.size()); }
    bool empty() const { return targets_.empty(); }
    double best_observed() const;

    const GpKernel& kernel() const { return kernel_; }
    double jitter() const { return jitter_; }
    const std::vector<Eigen::VectorXd>& inputs() const { return inputs_; }
    const std::vector<double>& targets() const { return targets_; }

private:
    GpKernel kernel_{};
    double jitter_ = 1e-6;
    std::vector<Eigen::VectorXd> inputs_;
    std::vector<double> targets_;
};

struct GpPosterior {
    double mean = 0.0;
    double stddev = 0.0;
};

GpPosterior gp_posterior(const SurrogateState& state, const Eigen::VectorXd& query);

// Closed-form EI: (mu - best - xi) * Phi(u) + sigma * phi(u). Degenerates to
// max(mu - best - xi, 0) when sigma is zero.
double expected_improvement(double mean, double stddev, double best_so_far, double xi);

struct BOConfig {
    int samples_per_round = 5;  // k
    int rounds = 3;
    double sigma = 0.0;  // perturbation scale; 0 = 0.1 * RMS embedding norm
    int candidate_pool = 64;
    double xi = 0.01;
    int latent_dim = 50;  // d

    void validate() const;
};

// Candidate batch for one refinement round. With no observations yet the
// batch is random draws from N(0, sigma^2 I) with delta = 0 pinned first, so
// the unperturbed continuation is always evaluated. Afterwards the pool
// mixes global prior draws with a local cloud around the incumbent whose
// scale anneals by 0.7 per round (pure prior pools stall at the pool's
// nearest-draw resolution); everything is ranked by EI against the
// surrogate and the top k survive, ties by draw order.
std::vector<Eigen::VectorXd> propose_batch(const SurrogateState& state,
                                           const BOConfig& cfg, double sigma, int round,
                                           Rng& rng);

struct RefineCandidate {
    int round = 0;
    Eigen::VectorXd delta;
    std::string text;
    std::optional<RewardBreakdown> reward;  // empty = reward function failed
    std::string error;
};

struct RefineResult {
    std::string best_text;
    RewardBreakdown best_reward;
    int best_candidate = -1;
    std::vector<RefineCandidate> history;
    double resolved_sigma = 0.0;
};

// Stage 2 for one halted path: embeds the argmax token of the halting
// distribution, then runs `rounds` batches of perturbed greedy continuations
// from [prompt + prefix + lifted embedding], scoring each full candidate
// text (prefix + continuation) and updating the surrogate. Candidates whose
// reward function throws are recorded and skipped.
RefineResult refine_path(const PartialPath& path, const std::string& prompt,
                         const ModelBackend& backend, const BOConfig& cfg,
                         const std::function<RewardBreakdown(const std::string&)>& reward_fn,
                         const ProjectionOperator& projection, int max_new_tokens,
                         std::uint64_t seed);

}  // namespace pregu
