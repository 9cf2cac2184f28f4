#include "pregu/reward.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>

#include "pregu/errors.hpp"

namespace pregu {

std::string to_string(TaskKind kind) {
    switch (kind) {
        case TaskKind::numeric: return "numeric";
        case TaskKind::boolean: return "boolean";
        case TaskKind::free_text: return "free";
    }
    return "free";
}

TaskKind task_kind_from_string(const std::string& name) {
    if (name == "numeric") return TaskKind::numeric;
    if (name == "boolean") return TaskKind::boolean;
    if (name == "free" || name == "free_text") return TaskKind::free_text;
    throw InputError("unknown task kind: " + name);
}

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

// Strips currency signs and thousands separators around/within a number.
std::string strip_number_noise(const std::string& s) {
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i) {
        unsigned char c = static_cast<unsigned char>(s[i]);
        if (c == '$' || c == ',') continue;
        // UTF-8 pound / euro signs
        if (c == 0xC2 && i + 1 < s.size() &&
            static_cast<unsigned char>(s[i + 1]) == 0xA3) {
            ++i;
            continue;
        }
        if (c == 0xE2 && i + 2 < s.size() &&
            static_cast<unsigned char>(s[i + 1]) == 0x82 &&
            static_cast<unsigned char>(s[i + 2]) == 0xAC) {
            i += 2;
            continue;
        }
        out.push_back(s[i]);
    }
    return out;
}

// First numeric literal in the string, after noise stripping.
std::optional<double> first_number(const std::string& raw) {
    std::string s = strip_number_noise(raw);
    for (std::size_t i = 0; i < s.size(); ++i) {
        char c = s[i];
        bool start = std::isdigit(static_cast<unsigned char>(c)) ||
                     ((c == '-' || c == '+') && i + 1 < s.size() &&
                      std::isdigit(static_cast<unsigned char>(s[i + 1])));
        if (!start) continue;
        char* end = nullptr;
        double v = std::strtod(s.c_str() + i, &end);
        if (end != s.c_str() + i) return v;
    }
    return std::nullopt;
}

std::string canonical_number(double v) {
    if (std::isfinite(v) && v == std::floor(v) && std::abs(v) < 1e15) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.0f", v);
        return buf;
    }
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

std::optional<std::string> normalize_numeric(const std::string& raw) {
    std::string line = trim(raw);
    // first nonempty line of the span
    {
        std::size_t pos = 0;
        while (pos < line.size()) {
            std::size_t nl = line.find('\n', pos);
            std::string cand = trim(line.substr(pos, nl == std::string::npos
                                                         ? std::string::npos
                                                         : nl - pos));
            if (!cand.empty()) {
                line = cand;
                break;
            }
            if (nl == std::string::npos) break;
            pos = nl + 1;
        }
    }
    // "a + b = c" restatements: the value after the final '=' is the answer
    std::size_t eq = line.rfind('=');
    if (eq != std::string::npos) line = line.substr(eq + 1);
    auto v = first_number(line);
    if (!v) return std::nullopt;
    return canonical_number(*v);
}

std::optional<std::string> normalize_boolean(const std::string& raw) {
    std::string s = lower(trim(raw));
    // first word of the span
    std::size_t end = 0;
    while (end < s.size() && std::isalpha(static_cast<unsigned char>(s[end]))) ++end;
    std::string word = s.substr(0, end);
    if (word == "true" || word == "yes") return "true";
    if (word == "false" || word == "no") return "false";
    return std::nullopt;
}

std::string normalize_free(const std::string& raw) {
    std::string s = lower(trim(raw));
    std::string out;
    bool in_space = false;
    for (char c : s) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            in_space = true;
            continue;
        }
        if (in_space && !out.empty()) out.push_back(' ');
        in_space = false;
        out.push_back(c);
    }
    while (!out.empty() && out.back() == '.') out.pop_back();
    return out;
}

}  // namespace

std::optional<std::string> normalize_answer(const std::string& raw, TaskKind kind) {
    switch (kind) {
        case TaskKind::numeric: return normalize_numeric(raw);
        case TaskKind::boolean: return normalize_boolean(raw);
        case TaskKind::free_text: return normalize_free(raw);
    }
    return std::nullopt;
}

std::optional<ExtractedAnswer> extract_answer(const std::string& text, TaskKind kind) {
    static const std::string marker = "Answer:";
    std::size_t pos = text.rfind(marker);
    if (pos == std::string::npos) return std::nullopt;
    std::string span = trim(text.substr(pos + marker.size()));
    auto normalized = normalize_answer(span, kind);
    if (!normalized) return std::nullopt;
    return ExtractedAnswer{span, *normalized, kind};
}

bool answers_equal(const std::string& a, const std::string& b, TaskKind kind) {
    if (kind == TaskKind::numeric) {
        char* ea = nullptr;
        char* eb = nullptr;
        double va = std::strtod(a.c_str(), &ea);
        double vb = std::strtod(b.c_str(), &eb);
        if (ea == a.c_str() || eb == b.c_str()) return a == b;
        if (va == vb) return true;
        double scale = std::max(std::abs(va), std::abs(vb));
        return std::abs(va - vb) <= 1e-6 * scale;
    }
    return a == b;
}

double verifier_agreement(const std::string& candidate_normalized,
                          const std::vector<std::optional<std::string>>& sample_answers,
                          TaskKind kind) {
    if (sample_answers.empty()) throw InputError("verifier needs at least one sample");
    int agree = 0;
    for (const auto& ans : sample_answers)
        if (ans && answers_equal(*ans, candidate_normalized, kind)) ++agree;
    return static_cast<double>(agree) / static_cast<double>(sample_answers.size());
}

double verifier_reward(const ExtractedAnswer& candidate, const std::string& prompt,
                       const ModelBackend& backend, int m, const SamplingConfig& scfg,
                       TaskKind kind) {
    if (m < 1) throw InputError("verifier requires m >= 1");
    scfg.validate();
    const auto& vocab = backend.vocab();
    std::vector<int> ctx = backend.context_tokens(prompt);
    std::vector<std::optional<std::string>> answers;
    answers.reserve(static_cast<std::size_t>(m));
    int failures = 0;
    for (int j = 0; j < m; ++j) {
        try {
            Rng rng(derive_seed(scfg.seed, "verify", static_cast<std::uint64_t>(j)));
            auto toks = sample_completion(backend, ctx, scfg.max_tokens, scfg.temperature,
                                          std::nullopt, vocab.size(), rng);
            auto ext = extract_answer(vocab.detokenize(toks), kind);
            answers.push_back(ext ? std::optional<std::string>(ext->normalized)
                                  : std::nullopt);
        } catch (const Error&) {
            ++failures;
            answers.push_back(std::nullopt);
        }
    }
    if (failures == m) throw BackendError("verifier: all samples failed", true);
    return verifier_agreement(candidate.normalized, answers, kind);
}

double coherence_reward(const std::string& text, const std::string& prompt,
                        const ModelBackend& backend) {
    if (text.empty()) throw InputError("coherence of empty text");
    if (!backend.capabilities().supports_logprobs)
        throw CapabilityError("coherence requires per-token probabilities");
    const auto& vocab = backend.vocab();
    std::vector<int> ctx = backend.context_tokens(prompt);
    std::vector<int> ids = vocab.tokenize(text);
    if (ids.empty()) throw InputError("coherence: text has no tokens");
    double log_sum = 0.0;
    for (int id : ids) {
        auto dist = backend.next_distribution(SoftPrefix::of(ctx), vocab.size());
        double p = 0.0;
        for (const auto& e : dist.entries)
            if (e.token_id == id) {
                p = e.prob;
                break;
            }
        log_sum += p > 0.0 ? std::log(p) : -1e9;  // unsupported token sinks the score
        ctx.push_back(id);
    }
    double mean = log_sum / static_cast<double>(ids.size());
    return std::exp(mean);
}

RewardBreakdown combined_reward(double verifier, double coherence) {
    if (!(verifier >= 0.0 && verifier <= 1.0))
        throw InputError("verifier reward outside [0,1]");
    if (!(coherence >= 0.0 && coherence <= 1.0))
        throw InputError("coherence reward outside [0,1]");
    return RewardBreakdown{verifier, coherence, verifier + coherence};
}

}  // namespace pregu
