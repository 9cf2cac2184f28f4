#pragma once

#include <optional>
#include <string>
#include <vector>

#include "pregu/backend.hpp"
#include "pregu/sampling.hpp"

namespace pregu {

enum class TaskKind { numeric, boolean, free_text };

std::string to_string(TaskKind kind);
TaskKind task_kind_from_string(const std::string& name);

struct ExtractedAnswer {
    std::string raw_span;
    std::string normalized;
    TaskKind kind = TaskKind::free_text;
};

// Both rewards live in [0,1]; combined is their unweighted sum.
struct RewardBreakdown {
    double verifier = 0.0;
    double coherence = 0.0;
    double combined = 0.0;
};

// Finds the last "Answer:" marker and normalizes the trailing span. Numeric
// spans keep the value after the final '=' of the first nonempty line when
// one is present (model outputs often restate the computation), otherwise
// the first number on that line; currency signs and thousands separators are
// stripped. Returns nullopt when there is no marker or the span does not
// parse under the task kind.
std::optional<ExtractedAnswer> extract_answer(const std::string& text, TaskKind kind);

// Normalization alone, for gold answers and tests.
std::optional<std::string> normalize_answer(const std::string& raw, TaskKind kind);

// Equality after normalization; numeric comparison tolerates 1e-6 relative
// error for non-integers.
bool answers_equal(const std::string& a, const std::string& b, TaskKind kind);

// Agreement fraction of a candidate answer against a recorded set of sample
// answers (nullopt = failed extraction = disagreement).
double verifier_agreement(const std::string& candidate_normalized,
                          const std::vector<std::optional<std::string>>& sample_answers,
                          TaskKind kind);

// Multi-generate verifier: samples m completions of the prompt, extracts
// answers, returns the fraction agreeing with the candidate.
double verifier_reward(const ExtractedAnswer& candidate, const std::string& prompt,
                       const ModelBackend& backend, int m, const SamplingConfig& scfg,
                       TaskKind kind);

// Geometric mean of per-token probabilities of text under the backend,
// conditioned on prompt: exp(mean log p). In (0,1] whenever every token has
// support.
double coherence_reward(const std::string& text, const std::string& prompt,
                        const ModelBackend& backend);

// combined = verifier + coherence, no weighting.
RewardBreakdown combined_reward(double verifier, double coherence);

}  // namespace pregu
