#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pregu/backend.hpp"
#include "pregu/decoding.hpp"
#include "pregu/latent_opt.hpp"
#include "pregu/reward.hpp"
#include "pregu/uncertainty.hpp"

namespace pregu {

using Json = nlohmann::ordered_json;

// Everything a run needs. Defaults: tau = 3 bits, K = 50, N = 5 paths,
// t_min = 5, k = 5 perturbations per round, d = 50.
struct RunConfig {
    UncertaintyConfig uncertainty{};
    int n_paths = 5;
    BOConfig bo{};
    SamplingConfig sampling{};
    int verifier_m = 4;
    double verifier_temperature = 0.7;
    std::uint64_t master_seed = 0;
    int n_workers = 1;
    TaskKind task_kind = TaskKind::numeric;
    PromptTemplate prompt_template{};
    // When the backend cannot inject embeddings: fail (default), or fall
    // back to scoring each halted path's plain greedy continuation.
    bool allow_unrefined_fallback = false;

    void validate() const;
    Json to_json() const;
    static RunConfig from_json(const Json& j);
};

struct Candidate {
    int path_index = 0;
    std::string text;
    RewardBreakdown reward{};
    std::optional<ExtractedAnswer> extracted;
    bool refined = false;
};

struct StageTimings {
    double stage1_ms = 0.0;
    double stage2_ms = 0.0;
    double scoring_ms = 0.0;
    double total_ms = 0.0;
};

// Step records for the run trace file: the sampled token (or, at a halt, the
// argmax of the halting distribution) with the step entropy.
struct TraceStep {
    int path_index = 0;
    int step = 0;
    std::string token;
    double entropy = 0.0;
    bool is_halt = false;
};

struct PipelineResult {
    std::string question_id;
    std::vector<Candidate> candidates;  // ordered by path_index
    int selected_index = -1;            // position in candidates
    std::string selected_answer;
    StageTimings timings{};
    // trace payloads, serialized separately from the result record
    std::vector<TraceStep> stage1_trace;
    std::vector<std::pair<int, RefineResult>> refinements;  // (path_index, history)
    std::vector<std::string> warnings;

    Json to_json() const;  // the per-question record; stable field order

    // Everything deterministic about the run (candidates, selection, traces,
    // refinement histories with text hashes) and nothing wall-clock, for
    // byte-for-byte reproducibility checks.
    Json canonical_json() const;
};

// Argmax of combined reward over candidates with a parseable answer; ties go
// to the lowest path index. Candidates without an answer only compete when
// no candidate has one.
int select_final(const std::vector<Candidate>& candidates);

// The full two-stage pipeline for one question: Stage 1 paths, Stage 2
// refinement of every halted path, reward scoring, selection.
PipelineResult run_pregu(const std::string& question_id, const std::string& question,
                         const ModelBackend& backend, const RunConfig& cfg);

}  // namespace pregu
