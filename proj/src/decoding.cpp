#include "pregu/decoding.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "pregu/errors.hpp"

namespace pregu {

std::string PromptTemplate::render(const std::string& question) const {
    static const std::string slot = "{question}";
    std::string out = text;
    std::size_t pos = out.find(slot);
    if (pos == std::string::npos)
        throw InputError("prompt template lacks a {question} slot");
    while (pos != std::string::npos) {
        out.replace(pos, slot.size(), question);
        pos = out.find(slot, pos + question.size());
    }
    return out;
}

std::string PromptTemplate::content_hash() const { return git_blob_hash(text); }

PromptTemplate PromptTemplate::from_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot read template file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    std::string text = ss.str();
    // template assets end with a newline; the prompt should not
    while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) text.pop_back();
    return PromptTemplate{text};
}

namespace {

PartialPath run_one_path(const std::string& prompt, const ModelBackend& backend,
                         const UncertaintyConfig& ucfg, const SamplingConfig& scfg,
                         int path_index) {
    const auto& vocab = backend.vocab();
    std::vector<int> ctx = backend.context_tokens(prompt);
    Rng rng(derive_seed(scfg.seed, "path", static_cast<std::uint64_t>(path_index)));
    const auto eos = backend.eos_id();

    PartialPath path;
    path.path_index = path_index;
    for (int t = 0; t < scfg.max_tokens; ++t) {
        auto dist = backend.next_distribution(SoftPrefix::of(ctx), ucfg.top_k);
        double h = shannon_entropy(dist);
        path.entropy_trace.values.push_back(h);
        if (t >= ucfg.t_min && h >= ucfg.tau) {
            path.halted = true;
            path.halt_index = t;
            path.halt_argmax_token = dist.argmax().token_id;
            break;
        }
        int tok = sample_token(dist, scfg.temperature, rng);
        if (eos && tok == *eos) break;
        path.prefix_tokens.push_back(tok);
        ctx.push_back(tok);
    }
    if (!path.halted) path.complete_text = vocab.detokenize(path.prefix_tokens);
    return path;
}

std::string greedy_text(const std::string& prompt, const ModelBackend& backend,
                        int max_tokens) {
    const auto& vocab = backend.vocab();
    auto ctx = backend.context_tokens(prompt);
    auto toks = backend.generate_greedy(SoftPrefix::of(ctx), max_tokens);
    return vocab.detokenize(toks);
}

}  // namespace

PartialPathSet generate_partial_paths(const std::string& prompt,
                                      const ModelBackend& backend,
                                      const UncertaintyConfig& ucfg,
                                      const SamplingConfig& scfg, int n_paths) {
    if (n_paths < 1) throw InputError("n_paths must be >= 1");
    ucfg.validate();
    scfg.validate();
    PartialPathSet out;
    for (int i = 0; i < n_paths; ++i) {
        try {
            out.paths.push_back(run_one_path(prompt, backend, ucfg, scfg, i));
        } catch (const Error& e) {
            out.failures.push_back({i, e.what()});
        }
    }
    if (out.paths.empty())
        throw BackendError("all " + std::to_string(n_paths) + " paths failed: " +
                               (out.failures.empty() ? "" : out.failures.front().message),
                           true);
    return out;
}

std::string decode_greedy_cot(const std::string& question, const PromptTemplate& tmpl,
                              const ModelBackend& backend, const SamplingConfig& scfg) {
    scfg.validate();
    return greedy_text(tmpl.render(question), backend, scfg.max_tokens);
}

MajorityVote majority_vote(const std::vector<std::optional<std::string>>& answers) {
    MajorityVote res;
    for (const auto& a : answers)
        if (a) res.votes[*a] += 1;
    if (res.votes.empty())
        throw ExtractionError("majority vote: no sample produced a parseable answer");
    int best_count = 0;
    int best_first = static_cast<int>(answers.size());
    for (std::size_t i = 0; i < answers.size(); ++i) {
        if (!answers[i]) continue;
        int count = res.votes[*answers[i]];
        auto first = static_cast<int>(
            std::find(answers.begin(), answers.end(), answers[i]) - answers.begin());
        if (count > best_count || (count == best_count && first < best_first)) {
            best_count = count;
            best_first = first;
            res.answer = *answers[i];
        }
    }
    res.winner_first_sample = best_first;
    return res;
}

SelfConsistencyResult decode_self_consistency(const std::string& question,
                                              const PromptTemplate& tmpl,
                                              const ModelBackend& backend,
                                              const SamplingConfig& scfg, int n_samples,
                                              TaskKind kind) {
    if (n_samples < 1) throw InputError("n_samples must be >= 1");
    scfg.validate();
    const auto& vocab = backend.vocab();
    const auto ctx = backend.context_tokens(tmpl.render(question));

    SelfConsistencyResult res;
    std::vector<std::optional<std::string>> answers;
    for (int i = 0; i < n_samples; ++i) {
        Rng rng(derive_seed(scfg.seed, "sc-sample", static_cast<std::uint64_t>(i)));
        auto toks = sample_completion(backend, ctx, scfg.max_tokens, scfg.temperature,
                                      std::nullopt, vocab.size(), rng);
        std::string text = vocab.detokenize(toks);
        res.sample_texts.push_back(text);
        auto ext = extract_answer(text, kind);
        answers.push_back(ext ? std::optional<std::string>(ext->normalized) : std::nullopt);
    }
    auto vote = majority_vote(answers);
    res.answer = std::move(vote.answer);
    res.votes = std::move(vote.votes);
    res.winner_first_sample = vote.winner_first_sample;
    return res;
}

std::string decode_fire(const std::string& question, const PromptTemplate& tmpl,
                        const ModelBackend& backend, const SamplingConfig& scfg) {
    scfg.validate();
    if (!scfg.first_token_temperature)
        throw InputError("FIRE requires first_token_temperature");
    const auto& vocab = backend.vocab();
    const auto ctx = backend.context_tokens(tmpl.render(question));
    Rng rng(derive_seed(scfg.seed, "fire"));
    auto toks = sample_completion(backend, ctx, scfg.max_tokens, scfg.temperature,
                                  scfg.first_token_temperature, vocab.size(), rng);
    return vocab.detokenize(toks);
}

CotDecodingResult decode_cot_decoding(const std::string& question,
                                      const PromptTemplate& tmpl,
                                      const ModelBackend& backend,
                                      const SamplingConfig& scfg, int k_starts) {
    if (k_starts < 1) throw InputError("k_starts must be >= 1");
    scfg.validate();
    const auto& vocab = backend.vocab();
    const auto ctx = backend.context_tokens(tmpl.render(question));

    auto first = backend.next_distribution(SoftPrefix::of(ctx), vocab.size());
    int k = std::min<int>(k_starts, static_cast<int>(first.entries.size()));

    auto gap = [](const TokenDistribution& d) {
        if (d.entries.size() < 2) return d.entries.empty() ? 0.0 : d.entries[0].prob;
        return d.entries[0].prob - d.entries[1].prob;
    };

    CotDecodingResult res;
    const auto eos = backend.eos_id();
    for (int s = 0; s < k; ++s) {
        std::vector<int> toks{first.entries[static_cast<std::size_t>(s)].token_id};
        double gap_sum = gap(first);
        int steps = 1;
        std::vector<int> cur = ctx;
        cur.push_back(toks[0]);
        while (static_cast<int>(toks.size()) < scfg.max_tokens) {
            auto dist = backend.next_distribution(SoftPrefix::of(cur), vocab.size());
            gap_sum += gap(dist);
            ++steps;
            int tok = dist.argmax().token_id;
            if (eos && tok == *eos) break;
            toks.push_back(tok);
            cur.push_back(tok);
        }
        res.all_texts.push_back(vocab.detokenize(toks));
        res.gap_scores.push_back(gap_sum / steps);
    }
    res.chosen_index = static_cast<int>(
        std::max_element(res.gap_scores.begin(), res.gap_scores.end()) -
        res.gap_scores.begin());
    res.chosen_text = res.all_texts[static_cast<std::size_t>(res.chosen_index)];
    return res;
}

}  // namespace pregu
