#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pregu/backend.hpp"
#include "pregu/reward.hpp"
#include "pregu/sampling.hpp"
#include "pregu/uncertainty.hpp"

namespace pregu {

// Zero-shot prompt template; "{question}" is the substitution point.
struct PromptTemplate {
    std::string text = "{question}";

    std::string render(const std::string& question) const;
    std::string content_hash() const;
    static PromptTemplate from_file(const std::string& path);
};

// One Stage 1 candidate. When the entropy threshold is crossed the path
// stops before sampling the uncertain token, so prefix_tokens has exactly
// halt_index entries; paths that never cross carry their full generation.
struct PartialPath {
    int path_index = 0;
    std::vector<int> prefix_tokens;
    EntropyTrace entropy_trace;
    std::optional<int> halt_index;
    bool halted = false;
    std::optional<std::string> complete_text;
    // Argmax of the halting distribution; the token the entropy spike is
    // attributed to in trace reports.
    std::optional<int> halt_argmax_token;
};

struct PathFailure {
    int path_index = 0;
    std::string message;
};

struct PartialPathSet {
    std::vector<PartialPath> paths;
    std::vector<PathFailure> failures;
};

// Samples n_paths candidate paths, each on an independent stream derived
// from (scfg.seed, path_index), halting each at most once per detect_halt.
// Path-level backend failures are recorded, not fatal, as long as at least
// one path succeeds.
PartialPathSet generate_partial_paths(const std::string& prompt,
                                      const ModelBackend& backend,
                                      const UncertaintyConfig& ucfg,
                                      const SamplingConfig& scfg, int n_paths);

// --- Baseline decoders ------------------------------------------------------

std::string decode_greedy_cot(const std::string& question, const PromptTemplate& tmpl,
                              const ModelBackend& backend, const SamplingConfig& scfg);

struct SelfConsistencyResult {
    std::string answer;                // normalized modal answer
    std::map<std::string, int> votes;  // normalized answer -> count
    std::vector<std::string> sample_texts;
    int winner_first_sample = 0;  // index of the earliest sample voting for answer
};

struct MajorityVote {
    std::string answer;
    std::map<std::string, int> votes;
    int winner_first_sample = 0;
};

// Modal answer over the extracted samples (nullopt = failed extraction).
// Ties go to the answer whose first supporting sample has the lowest index.
// Throws ExtractionError when nothing parsed.
MajorityVote majority_vote(const std::vector<std::optional<std::string>>& answers);

SelfConsistencyResult decode_self_consistency(const std::string& question,
                                              const PromptTemplate& tmpl,
                                              const ModelBackend& backend,
                                              const SamplingConfig& scfg, int n_samples,
                                              TaskKind kind);

// High temperature on the first generated token only.
std::string decode_fire(const std::string& question, const PromptTemplate& tmpl,
                        const ModelBackend& backend, const SamplingConfig& scfg);

struct CotDecodingResult {
    std::string chosen_text;
    std::vector<std::string> all_texts;
    std::vector<double> gap_scores;  // mean top1-top2 probability gap
    int chosen_index = 0;
};

// One greedy completion per top-k first token; the completion with the
// largest mean top1-top2 gap over its steps wins.
CotDecodingResult decode_cot_decoding(const std::string& question,
                                      const PromptTemplate& tmpl,
                                      const ModelBackend& backend,
                                      const SamplingConfig& scfg, int k_starts);

}  // namespace pregu
