#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pregu/pipeline.hpp"

namespace pregu {

struct BenchmarkItem {
    std::string id;
    std::string question;
    std::string gold_answer;  // already normalized
    TaskKind task_kind = TaskKind::numeric;
};

struct RejectedLine {
    int line_number = 0;
    std::string reason;
    std::string content;
};

struct LoadResult {
    std::vector<BenchmarkItem> items;
    std::vector<RejectedLine> rejects;
};

// Line-delimited JSON with fields {id, question, answer}. Malformed lines go
// to the rejects report; more than 10% rejects (or an empty file) is a
// dataset error.
LoadResult load_dataset(const std::filesystem::path& path, TaskKind kind);

// Uniform sample of n items without replacement, deterministic in seed.
std::vector<BenchmarkItem> sample_subset(const std::vector<BenchmarkItem>& items, int n,
                                         std::uint64_t seed);

enum class Method { pregu, cot, sc, fire, cot_decoding };
std::string to_string(Method m);
Method method_from_string(const std::string& name);

struct EvalConfig {
    RunConfig run{};
    Method method = Method::pregu;
    int n_runs = 5;
    int subset_size = 200;
    int sc_samples = 5;          // self-consistency votes
    int cot_decoding_starts = 3; // top-k first tokens
    std::filesystem::path output_dir;  // empty = no manifests / traces
};

struct EvalSummary {
    std::string method;
    std::vector<double> per_run_accuracy;
    double mean = 0.0;
    double stddev = 0.0;  // sample standard deviation over runs
    int n_items = 0;
    std::vector<std::uint64_t> seeds;
    bool partial = false;  // a run aborted and was excluded

    // Table-style rendering: percent, one decimal, "82.6 ± 1.6".
    std::string format() const;
};

// Runs the method n_runs times, each on a fresh subset drawn with a seed
// derived from that run's seed, and aggregates accuracy. When output_dir is
// set, every run writes a manifest (full config echo, template hash, subset
// ids, per-item results, timings) plus an append-only trace file.
EvalSummary evaluate(const std::vector<BenchmarkItem>& dataset,
                     const ModelBackend& backend, const EvalConfig& cfg);

struct TokenEntropyStat {
    std::string token;
    int count = 0;
    double mean_entropy = 0.0;
};

struct EntropyReport {
    std::vector<TokenEntropyStat> stats;  // sorted by mean entropy descending
    std::size_t pairs_ingested = 0;
};

// Groups (token, entropy) pairs from Stage 1 trace files by token string.
EntropyReport entropy_token_report(const std::vector<std::filesystem::path>& trace_files);

void write_report_csv(const EntropyReport& report, const std::filesystem::path& path);
void write_report_json(const EntropyReport& report, const std::filesystem::path& path);

// Bundled desk-scale datasets the toy fixture model can actually solve:
// 100 last-digit arithmetic problems and 50 boolean negation problems.
std::vector<BenchmarkItem> fixture_numeric_dataset();
std::vector<BenchmarkItem> fixture_boolean_dataset();
void write_dataset_jsonl(const std::vector<BenchmarkItem>& items,
                         const std::filesystem::path& path);

// runs/<timestamp>_<label>_<seed>/ for a fresh run; a numeric suffix keeps
// same-second invocations apart.
std::filesystem::path make_run_directory(const std::filesystem::path& base,
                                         const std::string& label, std::uint64_t seed);

}  // namespace pregu
