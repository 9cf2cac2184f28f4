#include "pregu/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <future>

#include "pregu/errors.hpp"

namespace pregu {

namespace {

double ms_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                     start)
        .count();
}

}  // namespace

void RunConfig::validate() const {
    uncertainty.validate();
    bo.validate();
    sampling.validate();
    if (n_paths < 1) throw InputError("n_paths must be >= 1");
    if (verifier_m < 1) throw InputError("verifier_m must be >= 1");
    if (!(verifier_temperature > 0.0))
        throw InputError("verifier_temperature must be positive");
    if (n_workers < 1) throw InputError("n_workers must be >= 1");
}

Json RunConfig::to_json() const {
    Json j;
    j["tau"] = uncertainty.tau;
    j["top_k"] = uncertainty.top_k;
    j["t_min"] = uncertainty.t_min;
    j["n_paths"] = n_paths;
    j["bo_k"] = bo.samples_per_round;
    j["bo_rounds"] = bo.rounds;
    j["bo_sigma"] = bo.sigma;
    j["bo_pool"] = bo.candidate_pool;
    j["bo_xi"] = bo.xi;
    j["bo_d"] = bo.latent_dim;
    j["temperature"] = sampling.temperature;
    if (sampling.first_token_temperature)
        j["first_token_temperature"] = *sampling.first_token_temperature;
    j["max_tokens"] = sampling.max_tokens;
    j["verifier_m"] = verifier_m;
    j["verifier_temperature"] = verifier_temperature;
    j["master_seed"] = master_seed;
    j["n_workers"] = n_workers;
    j["task_kind"] = to_string(task_kind);
    j["template"] = prompt_template.text;
    j["allow_unrefined_fallback"] = allow_unrefined_fallback;
    return j;
}

RunConfig RunConfig::from_json(const Json& j) {
    RunConfig c;
    auto get = [&](const char* key, auto& field) {
        if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("tau", c.uncertainty.tau);
    get("top_k", c.uncertainty.top_k);
    get("t_min", c.uncertainty.t_min);
    get("n_paths", c.n_paths);
    get("bo_k", c.bo.samples_per_round);
    get("bo_rounds", c.bo.rounds);
    get("bo_sigma", c.bo.sigma);
    get("bo_pool", c.bo.candidate_pool);
    get("bo_xi", c.bo.xi);
    get("bo_d", c.bo.latent_dim);
    get("temperature", c.sampling.temperature);
    if (j.contains("first_token_temperature"))
        c.sampling.first_token_temperature = j.at("first_token_temperature").get<double>();
    get("max_tokens", c.sampling.max_tokens);
    get("verifier_m", c.verifier_m);
    get("verifier_temperature", c.verifier_temperature);
    get("master_seed", c.master_seed);
    get("n_workers", c.n_workers);
    if (j.contains("task_kind"))
        c.task_kind = task_kind_from_string(j.at("task_kind").get<std::string>());
    if (j.contains("template")) c.prompt_template.text = j.at("template").get<std::string>();
    get("allow_unrefined_fallback", c.allow_unrefined_fallback);
    return c;
}

Json PipelineResult::to_json() const {
    Json j;
    j["question_id"] = question_id;
    j["candidates"] = Json::array();
    for (const auto& c : candidates) {
        Json cj;
        cj["path_index"] = c.path_index;
        cj["text"] = c.text;
        cj["verifier"] = c.reward.verifier;
        cj["coherence"] = c.reward.coherence;
        cj["combined"] = c.reward.combined;
        cj["answer"] = c.extracted ? Json(c.extracted->normalized) : Json(nullptr);
        cj["refined"] = c.refined;
        j["candidates"].push_back(std::move(cj));
    }
    j["selected_index"] = selected_index;
    j["selected_answer"] = selected_answer;
    j["timings"] = {{"stage1_ms", timings.stage1_ms},
                    {"stage2_ms", timings.stage2_ms},
                    {"scoring_ms", timings.scoring_ms},
                    {"total_ms", timings.total_ms}};
    j["warnings"] = warnings;
    return j;
}

Json PipelineResult::canonical_json() const {
    Json j = to_json();
    j.erase("timings");
    j["stage1_trace"] = Json::array();
    for (const auto& s : stage1_trace)
        j["stage1_trace"].push_back(
            {{"path", s.path_index}, {"step", s.step}, {"token", s.token},
             {"entropy", s.entropy}, {"halt", s.is_halt}});
    j["refinements"] = Json::array();
    for (const auto& [path_index, r] : refinements) {
        Json rj;
        rj["path_index"] = path_index;
        rj["sigma"] = r.resolved_sigma;
        rj["best_candidate"] = r.best_candidate;
        rj["history"] = Json::array();
        for (const auto& cand : r.history) {
            Json cj;
            cj["round"] = cand.round;
            cj["delta"] = std::vector<double>(cand.delta.data(),
                                              cand.delta.data() + cand.delta.size());
            cj["text_sha1"] = sha1_hex(cand.text);
            if (cand.reward) {
                cj["verifier"] = cand.reward->verifier;
                cj["coherence"] = cand.reward->coherence;
                cj["combined"] = cand.reward->combined;
            } else {
                cj["error"] = cand.error;
            }
            rj["history"].push_back(std::move(cj));
        }
        j["refinements"].push_back(std::move(rj));
    }
    return j;
}

int select_final(const std::vector<Candidate>& candidates) {
    if (candidates.empty()) throw InputError("select_final on empty candidate list");
    int best = -1;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        if (!candidates[i].extracted) continue;
        if (best < 0 ||
            candidates[i].reward.combined > candidates[static_cast<std::size_t>(best)].reward.combined ||
            (candidates[i].reward.combined ==
                 candidates[static_cast<std::size_t>(best)].reward.combined &&
             candidates[i].path_index < candidates[static_cast<std::size_t>(best)].path_index))
        {
            best = static_cast<int>(i);
        }
    }
    if (best >= 0) return best;
    // no candidate parsed: lowest path index wins rather than returning nothing
    best = 0;
    for (std::size_t i = 1; i < candidates.size(); ++i)
        if (candidates[i].path_index < candidates[static_cast<std::size_t>(best)].path_index)
            best = static_cast<int>(i);
    return best;
}

PipelineResult run_pregu(const std::string& question_id, const std::string& question,
                         const ModelBackend& backend, const RunConfig& cfg) {
    cfg.validate();
    const auto t_total = std::chrono::steady_clock::now();
    const auto caps = backend.capabilities();
    const auto& vocab = backend.vocab();
    const std::string prompt = cfg.prompt_template.render(question);

    PipelineResult result;
    result.question_id = question_id;

    // Stage 1: N candidate paths, halted at most once each.
    const auto t_stage1 = std::chrono::steady_clock::now();
    SamplingConfig path_cfg = cfg.sampling;
    path_cfg.seed = derive_seed(cfg.master_seed, "stage1");
    auto path_set =
        generate_partial_paths(prompt, backend, cfg.uncertainty, path_cfg, cfg.n_paths);
    for (const auto& f : path_set.failures)
        result.warnings.push_back("path " + std::to_string(f.path_index) +
                                  " failed: " + f.message);
    for (const auto& p : path_set.paths) {
        for (std::size_t t = 0; t < p.prefix_tokens.size(); ++t)
            result.stage1_trace.push_back({p.path_index, static_cast<int>(t),
                                           vocab.token(p.prefix_tokens[t]),
                                           p.entropy_trace.values[t], false});
        if (p.halted && p.halt_argmax_token)
            result.stage1_trace.push_back(
                {p.path_index, *p.halt_index, vocab.token(*p.halt_argmax_token),
                 p.entropy_trace.values[static_cast<std::size_t>(*p.halt_index)], true});
    }
    result.timings.stage1_ms = ms_since(t_stage1);

    const bool any_halted =
        std::any_of(path_set.paths.begin(), path_set.paths.end(),
                    [](const PartialPath& p) { return p.halted; });
    if (any_halted && !caps.supports_soft_prefix && !cfg.allow_unrefined_fallback)
        throw CapabilityError(
            "Stage 2 needs supports_soft_prefix, which this backend lacks; "
            "enable allow_unrefined_fallback to score plain continuations instead");

    // Verifier samples are drawn once per question; every candidate is
    // scored against the same multiset, which also keeps path workers free
    // of shared state.
    const auto t_scoring_setup = std::chrono::steady_clock::now();
    std::vector<std::optional<std::string>> verifier_answers;
    {
        std::vector<int> ctx = backend.context_tokens(prompt);
        for (int j = 0; j < cfg.verifier_m; ++j) {
            Rng rng(derive_seed(cfg.master_seed, "verifier", static_cast<std::uint64_t>(j)));
            auto toks = sample_completion(backend, ctx, cfg.sampling.max_tokens,
                                          cfg.verifier_temperature, std::nullopt,
                                          vocab.size(), rng);
            auto ext = extract_answer(vocab.detokenize(toks), cfg.task_kind);
            verifier_answers.push_back(ext ? std::optional<std::string>(ext->normalized)
                                           : std::nullopt);
        }
    }
    auto reward_fn = [&](const std::string& text) {
        auto ext = extract_answer(text, cfg.task_kind);
        double v = ext ? verifier_agreement(ext->normalized, verifier_answers, cfg.task_kind)
                       : 0.0;
        double c = coherence_reward(text, prompt, backend);
        return combined_reward(v, c);
    };
    result.timings.scoring_ms = ms_since(t_scoring_setup);

    // Stage 2: refine halted paths; unhalted paths compete on their complete
    // text. Work items are independent, merged in path order.
    const auto t_stage2 = std::chrono::steady_clock::now();
    struct PathOutcome {
        std::optional<Candidate> candidate;
        std::optional<std::pair<int, RefineResult>> refinement;
        std::string error;
    };
    auto process_path = [&](const PartialPath& path) -> PathOutcome {
        PathOutcome out;
        try {
            Candidate cand;
            cand.path_index = path.path_index;
            if (path.halted && caps.supports_soft_prefix) {
                auto projection = make_projection(
                    caps.embedding_dim, cfg.bo.latent_dim,
                    derive_seed(cfg.master_seed, "projection",
                                static_cast<std::uint64_t>(path.path_index)));
                auto refined = refine_path(
                    path, prompt, backend, cfg.bo, reward_fn, projection,
                    cfg.sampling.max_tokens,
                    derive_seed(cfg.master_seed, "refine",
                                static_cast<std::uint64_t>(path.path_index)));
                cand.text = refined.best_text;
                cand.reward = refined.best_reward;
                cand.refined = true;
                out.refinement = {path.path_index, std::move(refined)};
            } else if (path.halted) {
                // fallback: plain greedy continuation from the prefix
                std::vector<int> ctx = backend.context_tokens(prompt);
                ctx.insert(ctx.end(), path.prefix_tokens.begin(), path.prefix_tokens.end());
                auto cont = backend.generate_greedy(SoftPrefix::of(ctx),
                                                    cfg.sampling.max_tokens);
                std::vector<int> full = path.prefix_tokens;
                full.insert(full.end(), cont.begin(), cont.end());
                cand.text = vocab.detokenize(full);
                cand.reward = reward_fn(cand.text);
            } else {
                cand.text = *path.complete_text;
                cand.reward = reward_fn(cand.text);
            }
            cand.extracted = extract_answer(cand.text, cfg.task_kind);
            out.candidate = std::move(cand);
        } catch (const Error& e) {
            out.error = e.what();
        }
        return out;
    };

    std::vector<PathOutcome> outcomes(path_set.paths.size());
    if (cfg.n_workers > 1) {
        std::vector<std::future<PathOutcome>> futs;
        futs.reserve(path_set.paths.size());
        for (const auto& p : path_set.paths)
            futs.push_back(std::async(std::launch::async, process_path, std::cref(p)));
        for (std::size_t i = 0; i < futs.size(); ++i) outcomes[i] = futs[i].get();
    } else {
        for (std::size_t i = 0; i < path_set.paths.size(); ++i)
            outcomes[i] = process_path(path_set.paths[i]);
    }
    result.timings.stage2_ms = ms_since(t_stage2);

    std::string diagnostics;
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
        auto& out = outcomes[i];
        if (out.candidate) {
            result.candidates.push_back(std::move(*out.candidate));
            if (out.refinement) result.refinements.push_back(std::move(*out.refinement));
        } else {
            result.warnings.push_back("path " +
                                      std::to_string(path_set.paths[i].path_index) +
                                      " dropped: " + out.error);
            diagnostics += (diagnostics.empty() ? "" : "; ") + out.error;
        }
    }
    if (result.candidates.empty())
        throw Error("pipeline produced no scoreable candidate: " + diagnostics);

    // Selection happens only after every refinement above has completed.
    result.selected_index = select_final(result.candidates);
    const auto& chosen = result.candidates[static_cast<std::size_t>(result.selected_index)];
    result.selected_answer = chosen.extracted ? chosen.extracted->normalized : "";
    result.timings.total_ms = ms_since(t_total);
    return result;
}

}  // namespace pregu
