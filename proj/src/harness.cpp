#include "pregu/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "pregu/errors.hpp"

namespace pregu {

namespace fs = std::filesystem;

LoadResult load_dataset(const fs::path& path, TaskKind kind) {
    std::ifstream in(path);
    if (!in) throw DatasetError("cannot open dataset: " + path.string());
    LoadResult result;
    std::string line;
    int line_no = 0;
    int total = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string trimmed = line;
        trimmed.erase(0, trimmed.find_first_not_of(" \t\r"));
        if (trimmed.empty()) continue;
        ++total;
        auto reject = [&](const std::string& reason) {
            result.rejects.push_back({line_no, reason, line});
        };
        Json j = Json::parse(line, nullptr, false);
        if (j.is_discarded()) {
            reject("invalid JSON");
            continue;
        }
        if (!j.contains("id") || !j.contains("question") || !j.contains("answer")) {
            reject("missing id/question/answer field");
            continue;
        }
        BenchmarkItem item;
        item.task_kind = kind;
        try {
            item.id = j.at("id").is_string() ? j.at("id").get<std::string>()
                                             : j.at("id").dump();
            item.question = j.at("question").get<std::string>();
            std::string raw = j.at("answer").is_string() ? j.at("answer").get<std::string>()
                                                         : j.at("answer").dump();
            auto norm = normalize_answer(raw, kind);
            if (!norm) {
                reject("answer does not normalize as " + to_string(kind));
                continue;
            }
            item.gold_answer = *norm;
        } catch (const Json::exception& e) {
            reject(e.what());
            continue;
        }
        result.items.push_back(std::move(item));
    }
    if (total == 0) throw DatasetError("dataset is empty: " + path.string());
    if (result.rejects.size() * 10 > static_cast<std::size_t>(total))
        throw DatasetError("dataset has " + std::to_string(result.rejects.size()) +
                           " rejects out of " + std::to_string(total) + " lines (>10%)");
    return result;
}

std::vector<BenchmarkItem> sample_subset(const std::vector<BenchmarkItem>& items, int n,
                                         std::uint64_t seed) {
    if (n < 0 || n > static_cast<int>(items.size()))
        throw InputError("subset size " + std::to_string(n) + " exceeds dataset size " +
                         std::to_string(items.size()));
    std::vector<int> idx(items.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
    Rng rng(seed);
    // partial Fisher-Yates: the first n slots are a uniform sample
    for (int i = 0; i < n; ++i) {
        auto j = i + static_cast<int>(rng.below(idx.size() - static_cast<std::size_t>(i)));
        std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
    }
    std::vector<BenchmarkItem> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        out.push_back(items[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])]);
    return out;
}

std::string to_string(Method m) {
    switch (m) {
        case Method::pregu: return "pregu";
        case Method::cot: return "cot";
        case Method::sc: return "sc";
        case Method::fire: return "fire";
        case Method::cot_decoding: return "cot-decoding";
    }
    return "pregu";
}

Method method_from_string(const std::string& name) {
    if (name == "pregu") return Method::pregu;
    if (name == "cot") return Method::cot;
    if (name == "sc") return Method::sc;
    if (name == "fire") return Method::fire;
    if (name == "cot-decoding" || name == "cot_decoding") return Method::cot_decoding;
    throw InputError("unknown method: " + name);
}

std::string EvalSummary::format() const {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.1f ± %.1f", mean * 100.0, stddev * 100.0);
    return buf;
}

namespace {

struct ItemRecord {
    std::string id;
    std::string gold;
    std::string answer;
    bool correct = false;
    std::string error;
    Json detail;  // pipeline record for pregu runs
};

ItemRecord run_item(const BenchmarkItem& item, const ModelBackend& backend,
                    const EvalConfig& cfg, std::uint64_t item_seed,
                    std::ofstream* trace_out) {
    ItemRecord rec;
    rec.id = item.id;
    rec.gold = item.gold_answer;
    try {
        std::optional<std::string> answer;
        switch (cfg.method) {
            case Method::pregu: {
                RunConfig rc = cfg.run;
                rc.master_seed = item_seed;
                rc.task_kind = item.task_kind;
                auto res = run_pregu(item.id, item.question, backend, rc);
                answer = res.selected_answer.empty()
                             ? std::nullopt
                             : std::optional<std::string>(res.selected_answer);
                rec.detail = res.to_json();
                if (trace_out) {
                    for (const auto& s : res.stage1_trace) {
                        Json t{{"type", "stage1_step"},  {"question_id", item.id},
                               {"path", s.path_index},   {"step", s.step},
                               {"token", s.token},       {"entropy", s.entropy},
                               {"halt", s.is_halt}};
                        *trace_out << t.dump() << "\n";
                    }
                    for (const auto& [path_index, r] : res.refinements) {
                        for (const auto& c : r.history) {
                            Json t{{"type", "refinement"},
                                   {"question_id", item.id},
                                   {"path", path_index},
                                   {"round", c.round},
                                   {"delta", std::vector<double>(
                                                 c.delta.data(),
                                                 c.delta.data() + c.delta.size())},
                                   {"text_sha1", sha1_hex(c.text)}};
                            if (c.reward) {
                                t["verifier"] = c.reward->verifier;
                                t["coherence"] = c.reward->coherence;
                                t["combined"] = c.reward->combined;
                            } else {
                                t["error"] = c.error;
                            }
                            *trace_out << t.dump() << "\n";
                        }
                    }
                }
                break;
            }
            case Method::cot: {
                SamplingConfig scfg = cfg.run.sampling;
                scfg.seed = item_seed;
                auto text = decode_greedy_cot(item.question, cfg.run.prompt_template,
                                              backend, scfg);
                if (auto ext = extract_answer(text, item.task_kind)) answer = ext->normalized;
                break;
            }
            case Method::sc: {
                SamplingConfig scfg = cfg.run.sampling;
                scfg.seed = item_seed;
                auto res = decode_self_consistency(item.question, cfg.run.prompt_template,
                                                   backend, scfg, cfg.sc_samples,
                                                   item.task_kind);
                answer = res.answer;
                break;
            }
            case Method::fire: {
                SamplingConfig scfg = cfg.run.sampling;
                scfg.seed = item_seed;
                if (!scfg.first_token_temperature) scfg.first_token_temperature = 1.3;
                auto text = decode_fire(item.question, cfg.run.prompt_template, backend, scfg);
                if (auto ext = extract_answer(text, item.task_kind)) answer = ext->normalized;
                break;
            }
            case Method::cot_decoding: {
                SamplingConfig scfg = cfg.run.sampling;
                scfg.seed = item_seed;
                auto res = decode_cot_decoding(item.question, cfg.run.prompt_template,
                                               backend, scfg, cfg.cot_decoding_starts);
                if (auto ext = extract_answer(res.chosen_text, item.task_kind))
                    answer = ext->normalized;
                break;
            }
        }
        if (answer) {
            rec.answer = *answer;
            rec.correct = answers_equal(*answer, item.gold_answer, item.task_kind);
        }
    } catch (const Error& e) {
        rec.error = e.what();  // counts as incorrect, run continues
    }
    return rec;
}

}  // namespace

EvalSummary evaluate(const std::vector<BenchmarkItem>& dataset,
                     const ModelBackend& backend, const EvalConfig& cfg) {
    if (cfg.n_runs < 1) throw InputError("n_runs must be >= 1");
    if (dataset.empty()) throw DatasetError("evaluate: empty dataset");
    if (cfg.subset_size > static_cast<int>(dataset.size()))
        throw InputError("subset_size exceeds dataset size");

    EvalSummary summary;
    summary.method = to_string(cfg.method);
    summary.n_items = cfg.subset_size;

    const bool persist = !cfg.output_dir.empty();
    if (persist) fs::create_directories(cfg.output_dir);

    for (int r = 0; r < cfg.n_runs; ++r) {
        const std::uint64_t run_seed = derive_seed(cfg.run.master_seed, "run",
                                                   static_cast<std::uint64_t>(r));
        summary.seeds.push_back(run_seed);
        try {
            // Fresh subset per run, its seed tied to the run's inference seed.
            auto subset = sample_subset(dataset, cfg.subset_size,
                                        derive_seed(run_seed, "subset"));
            std::ofstream trace_out;
            fs::path trace_path;
            if (persist) {
                trace_path = cfg.output_dir / ("trace_run" + std::to_string(r) + ".jsonl");
                trace_out.open(trace_path);
            }
            const auto t0 = std::chrono::steady_clock::now();
            int correct = 0;
            std::vector<ItemRecord> records;
            for (const auto& item : subset) {
                auto rec = run_item(item, backend, cfg,
                                    derive_seed(run_seed, "item", fnv1a64(item.id)),
                                    persist ? &trace_out : nullptr);
                correct += rec.correct ? 1 : 0;
                records.push_back(std::move(rec));
            }
            const double wall_ms =
                std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                          t0)
                    .count();
            double accuracy = static_cast<double>(correct) / cfg.subset_size;
            summary.per_run_accuracy.push_back(accuracy);

            if (persist) {
                Json manifest;
                manifest["method"] = to_string(cfg.method);
                manifest["run_index"] = r;
                manifest["run_seed"] = run_seed;
                manifest["config"] = cfg.run.to_json();
                manifest["n_runs"] = cfg.n_runs;
                manifest["subset_size"] = cfg.subset_size;
                manifest["template_hash"] = cfg.run.prompt_template.content_hash();
                manifest["subset_ids"] = Json::array();
                for (const auto& item : subset) manifest["subset_ids"].push_back(item.id);
                manifest["items"] = Json::array();
                for (const auto& rec : records) {
                    Json ij{{"id", rec.id},         {"gold", rec.gold},
                            {"answer", rec.answer}, {"correct", rec.correct}};
                    if (!rec.error.empty()) ij["error"] = rec.error;
                    if (!rec.detail.is_null()) ij["pipeline"] = rec.detail;
                    manifest["items"].push_back(std::move(ij));
                }
                manifest["accuracy"] = accuracy;
                manifest["wall_ms"] = wall_ms;
                manifest["trace_file"] = trace_path.filename().string();
                std::ofstream mf(cfg.output_dir /
                                 ("manifest_run" + std::to_string(r) + ".json"));
                mf << manifest.dump(2) << "\n";
            }
        } catch (const Error&) {
            summary.partial = true;  // run aborted; accuracy excluded
        }
    }

    if (summary.per_run_accuracy.empty())
        throw Error("evaluate: every run aborted for method " + to_string(cfg.method));
    const auto& acc = summary.per_run_accuracy;
    summary.mean = std::accumulate(acc.begin(), acc.end(), 0.0) /
                   static_cast<double>(acc.size());
    if (acc.size() > 1) {
        double ss = 0.0;
        for (double a : acc) ss += (a - summary.mean) * (a - summary.mean);
        summary.stddev = std::sqrt(ss / static_cast<double>(acc.size() - 1));
    }
    return summary;
}

EntropyReport entropy_token_report(const std::vector<fs::path>& trace_files) {
    struct Acc {
        int count = 0;
        double sum = 0.0;
    };
    std::map<std::string, Acc> groups;
    EntropyReport report;
    for (const auto& file : trace_files) {
        std::ifstream in(file);
        if (!in) throw DatasetError("cannot open trace file: " + file.string());
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            Json j = Json::parse(line, nullptr, false);
            if (j.is_discarded() || j.value("type", "") != "stage1_step") continue;
            auto& acc = groups[j.at("token").get<std::string>()];
            acc.count += 1;
            acc.sum += j.at("entropy").get<double>();
            report.pairs_ingested += 1;
        }
    }
    for (const auto& [token, acc] : groups)
        report.stats.push_back({token, acc.count, acc.sum / acc.count});
    std::stable_sort(report.stats.begin(), report.stats.end(),
                     [](const TokenEntropyStat& a, const TokenEntropyStat& b) {
                         if (a.mean_entropy != b.mean_entropy)
                             return a.mean_entropy > b.mean_entropy;
                         return a.token < b.token;
                     });
    return report;
}

void write_report_csv(const EntropyReport& report, const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw DatasetError("cannot write report: " + path.string());
    out << "token,count,mean_entropy_bits\n";
    for (const auto& s : report.stats) {
        std::string escaped = s.token;
        bool quote = escaped.find_first_of(",\"\n") != std::string::npos;
        if (quote) {
            std::string q = "\"";
            for (char c : escaped) {
                if (c == '"') q += "\"\"";
                else q.push_back(c);
            }
            q += "\"";
            escaped = q;
        }
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.6f", s.mean_entropy);
        out << escaped << "," << s.count << "," << buf << "\n";
    }
}

void write_report_json(const EntropyReport& report, const fs::path& path) {
    Json j = Json::array();
    for (const auto& s : report.stats)
        j.push_back({{"token", s.token},
                     {"count", s.count},
                     {"mean_entropy_bits", s.mean_entropy}});
    std::ofstream out(path);
    if (!out) throw DatasetError("cannot write report: " + path.string());
    out << j.dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// Bundled fixtures

std::vector<BenchmarkItem> fixture_numeric_dataset() {
    // phrasings reuse fixture vocabulary so every prompt tokenizes
    static const std::vector<std::string> prefixes = {
        "",      "first", "given", "since",   "according",
        "then",  "so",    "thus",  "for",     "so then"};
    std::vector<BenchmarkItem> items;
    for (int i = 0; i < 100; ++i) {
        const int y = i % 10;
        const auto& prefix = prefixes[static_cast<std::size_t>(i / 10)];
        BenchmarkItem item;
        char id[16];
        std::snprintf(id, sizeof(id), "num-%03d", i);
        item.id = id;
        item.question = (prefix.empty() ? "" : prefix + " ") +
                        "compute the last digit of 3 plus " + std::to_string(y);
        item.gold_answer = std::to_string((y + 3) % 10);
        item.task_kind = TaskKind::numeric;
        items.push_back(std::move(item));
    }
    return items;
}

std::vector<BenchmarkItem> fixture_boolean_dataset() {
    static const std::vector<std::string> first = {"", "first", "given", "since", "thus"};
    static const std::vector<std::string> second = {"", "then", "so", "according", "for"};
    std::vector<BenchmarkItem> items;
    for (int i = 0; i < 50; ++i) {
        const bool yes = i % 2 == 0;
        const int variant = i / 2;
        std::string prefix = first[static_cast<std::size_t>(variant / 5)];
        const auto& p2 = second[static_cast<std::size_t>(variant % 5)];
        if (!p2.empty()) prefix += (prefix.empty() ? "" : " ") + p2;
        BenchmarkItem item;
        char id[16];
        std::snprintf(id, sizeof(id), "bool-%03d", i);
        item.id = id;
        item.question = (prefix.empty() ? "" : prefix + " ") + "decide the opposite of " +
                        (yes ? "yes" : "no");
        item.gold_answer = yes ? "false" : "true";
        item.task_kind = TaskKind::boolean;
        items.push_back(std::move(item));
    }
    return items;
}

void write_dataset_jsonl(const std::vector<BenchmarkItem>& items, const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw DatasetError("cannot write dataset: " + path.string());
    for (const auto& item : items) {
        Json j{{"id", item.id}, {"question", item.question}, {"answer", item.gold_answer}};
        out << j.dump() << "\n";
    }
}

fs::path make_run_directory(const fs::path& base, const std::string& label,
                            std::uint64_t seed) {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char stamp[32];
    std::strftime(stamp, sizeof(stamp), "%Y%m%d-%H%M%S", &tm);
    std::string name = std::string(stamp) + "_" + label + "_" + std::to_string(seed);
    fs::path dir = base / name;
    for (int suffix = 2; fs::exists(dir); ++suffix)
        dir = base / (name + "-" + std::to_string(suffix));
    fs::create_directories(dir);
    return dir;
}

}  // namespace pregu
