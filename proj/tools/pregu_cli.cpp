// Command-line front end: PREGU runs, the four baselines, entropy reports,
// and manifest summaries.
#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>

#include "pregu/errors.hpp"
#include "pregu/harness.hpp"
#include "pregu/remote_backend.hpp"
#include "pregu/toy_backend.hpp"

namespace fs = std::filesystem;
using namespace pregu;

namespace {

struct CommonArgs {
    std::string dataset;
    std::string task_kind = "numeric";
    std::string backend = "toy";
    std::string remote_config;
    std::string config_file;
    std::string template_file;
    std::string templates_dir = "templates";
    std::string out_dir = "runs";
    std::uint64_t seed = 0;
    int runs = 5;
    int subset_size = 200;
    int workers = 1;
    // RunConfig mirrors
    double tau = -1.0;
    int top_k = -1;
    int t_min = -1;
    int n_paths = -1;
    double temperature = -1.0;
    int max_tokens = -1;
    int bo_k = -1;
    int bo_d = -1;
    int bo_rounds = -1;
    double bo_sigma = -1.0;
    int bo_pool = -1;
    int verifier_m = -1;
    double verifier_temperature = -1.0;
};

void add_common_options(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--dataset", args.dataset, "line-delimited JSON dataset")->required();
    cmd->add_option("--task-kind", args.task_kind, "numeric|boolean|free (default numeric)");
    cmd->add_option("--backend", args.backend, "toy|remote (default toy)");
    cmd->add_option("--remote-config", args.remote_config,
                    "JSON connection settings for --backend remote");
    cmd->add_option("--config", args.config_file, "JSON run configuration to start from");
    cmd->add_option("--template", args.template_file, "prompt template file");
    cmd->add_option("--templates-dir", args.templates_dir,
                    "directory of per-task templates (default ./templates)");
    cmd->add_option("--out", args.out_dir, "run output directory (default ./runs)");
    cmd->add_option("--seed", args.seed, "master seed (default 0)");
    cmd->add_option("--runs", args.runs, "independent runs (default 5)");
    cmd->add_option("--subset-size", args.subset_size,
                    "problems sampled per run (default 200)");
    cmd->add_option("--workers", args.workers, "path workers per question");
    cmd->add_option("--tau", args.tau, "entropy threshold in bits (default 3.0)");
    cmd->add_option("--top-k", args.top_k, "entropy truncation K (default 50)");
    cmd->add_option("--t-min", args.t_min, "minimum prefix length (default 5)");
    cmd->add_option("--n-paths", args.n_paths, "Stage 1 search width N (default 5)");
    cmd->add_option("--temperature", args.temperature, "sampling temperature (default 0.6)");
    cmd->add_option("--max-tokens", args.max_tokens, "generation budget per completion");
    cmd->add_option("--bo-k", args.bo_k, "perturbations per refinement round (default 5)");
    cmd->add_option("--bo-d", args.bo_d, "projected latent dimension (default 50)");
    cmd->add_option("--bo-rounds", args.bo_rounds, "refinement rounds (default 3)");
    cmd->add_option("--bo-sigma", args.bo_sigma,
                    "perturbation scale (default 0.1 x RMS embedding norm)");
    cmd->add_option("--bo-pool", args.bo_pool, "EI candidate pool (default 64)");
    cmd->add_option("--verifier-m", args.verifier_m, "verifier samples (default 4)");
    cmd->add_option("--verifier-temperature", args.verifier_temperature,
                    "verifier sampling temperature (default 0.7)");
}

std::unique_ptr<ModelBackend> make_backend(const CommonArgs& args) {
    if (args.backend == "toy") return std::make_unique<ToyBackend>(toy::fixture_spec());
    if (args.backend == "remote") {
        RemoteConfig rc;
        if (!args.remote_config.empty())
            rc = RemoteConfig::from_json_file(args.remote_config);
        else
            rc.apply_env_overrides();
        return std::make_unique<RemoteBackend>(rc);
    }
    throw InputError("unknown backend: " + args.backend);
}

PromptTemplate resolve_template(const CommonArgs& args, TaskKind kind) {
    if (!args.template_file.empty()) return PromptTemplate::from_file(args.template_file);
    std::string family = (args.backend == "toy" ? "toy_" : "") + to_string(kind);
    fs::path candidate = fs::path(args.templates_dir) / (family + ".txt");
    if (fs::exists(candidate)) return PromptTemplate::from_file(candidate.string());
    return PromptTemplate{"{question}"};
}

EvalConfig build_eval_config(const CommonArgs& args, Method method) {
    EvalConfig cfg;
    cfg.method = method;
    if (!args.config_file.empty()) {
        std::ifstream in(args.config_file);
        if (!in) throw InputError("cannot open config: " + args.config_file);
        cfg.run = RunConfig::from_json(Json::parse(in));
    }
    TaskKind kind = task_kind_from_string(args.task_kind);
    cfg.run.task_kind = kind;
    cfg.run.prompt_template = resolve_template(args, kind);
    cfg.run.master_seed = args.seed;
    cfg.run.n_workers = args.workers;
    if (args.tau >= 0) cfg.run.uncertainty.tau = args.tau;
    if (args.top_k >= 0) cfg.run.uncertainty.top_k = args.top_k;
    if (args.t_min >= 0) cfg.run.uncertainty.t_min = args.t_min;
    if (args.n_paths >= 0) cfg.run.n_paths = args.n_paths;
    if (args.temperature >= 0) cfg.run.sampling.temperature = args.temperature;
    if (args.max_tokens >= 0) cfg.run.sampling.max_tokens = args.max_tokens;
    if (args.bo_k >= 0) cfg.run.bo.samples_per_round = args.bo_k;
    if (args.bo_d >= 0) cfg.run.bo.latent_dim = args.bo_d;
    if (args.bo_rounds >= 0) cfg.run.bo.rounds = args.bo_rounds;
    if (args.bo_sigma >= 0) cfg.run.bo.sigma = args.bo_sigma;
    if (args.bo_pool >= 0) cfg.run.bo.candidate_pool = args.bo_pool;
    if (args.verifier_m >= 0) cfg.run.verifier_m = args.verifier_m;
    if (args.verifier_temperature >= 0)
        cfg.run.verifier_temperature = args.verifier_temperature;
    cfg.n_runs = args.runs;
    return cfg;
}

int run_evaluation(const CommonArgs& args, Method method, int sc_samples,
                   double fire_temperature, int cot_decoding_starts) {
    auto backend = make_backend(args);
    TaskKind kind = task_kind_from_string(args.task_kind);
    auto loaded = load_dataset(args.dataset, kind);
    if (!loaded.rejects.empty())
        std::cerr << "warning: " << loaded.rejects.size()
                  << " dataset lines rejected (first at line "
                  << loaded.rejects.front().line_number << ": "
                  << loaded.rejects.front().reason << ")\n";

    auto cfg = build_eval_config(args, method);
    cfg.sc_samples = sc_samples;
    cfg.cot_decoding_starts = cot_decoding_starts;
    if (method == Method::fire && !cfg.run.sampling.first_token_temperature)
        cfg.run.sampling.first_token_temperature = fire_temperature;
    if (args.subset_size > static_cast<int>(loaded.items.size()))
        std::cerr << "note: subset-size " << args.subset_size
                  << " clamped to dataset size " << loaded.items.size() << "\n";
    cfg.subset_size = std::min(args.subset_size, static_cast<int>(loaded.items.size()));
    cfg.output_dir = make_run_directory(args.out_dir, to_string(method), args.seed);

    auto summary = evaluate(loaded.items, *backend, cfg);
    std::cout << to_string(method) << ": " << summary.format() << "  ("
              << summary.per_run_accuracy.size() << " runs x " << summary.n_items
              << " items)\n";
    if (summary.partial) std::cerr << "warning: at least one run aborted; summary is partial\n";
    std::cout << "manifests: " << cfg.output_dir.string() << "\n";
    return 0;
}

int cmd_entropy_stats(const std::vector<std::string>& traces, const std::string& csv,
                      const std::string& json, int top) {
    std::vector<fs::path> files(traces.begin(), traces.end());
    auto report = entropy_token_report(files);
    if (report.pairs_ingested == 0)
        std::cerr << "warning: no (token, entropy) pairs found in the given traces\n";
    if (!csv.empty()) write_report_csv(report, csv);
    if (!json.empty()) write_report_json(report, json);
    std::printf("%-16s %8s %14s\n", "token", "count", "mean entropy");
    int shown = 0;
    for (const auto& s : report.stats) {
        if (top > 0 && shown++ >= top) break;
        std::printf("%-16s %8d %14.4f\n", s.token.c_str(), s.count, s.mean_entropy);
    }
    return 0;
}

int cmd_report(const std::string& runs_dir) {
    struct Rollup {
        std::vector<double> accuracies;
        int n_items = 0;
    };
    std::map<std::string, Rollup> by_method;
    for (const auto& entry : fs::recursive_directory_iterator(runs_dir)) {
        if (!entry.is_regular_file()) continue;
        const auto name = entry.path().filename().string();
        if (name.rfind("manifest_run", 0) != 0) continue;
        std::ifstream in(entry.path());
        Json manifest = Json::parse(in, nullptr, false);
        if (manifest.is_discarded()) continue;
        auto& r = by_method[manifest.value("method", "?")];
        r.accuracies.push_back(manifest.value("accuracy", 0.0));
        r.n_items = manifest.value("subset_size", 0);
    }
    if (by_method.empty()) {
        std::cerr << "no manifests under " << runs_dir << "\n";
        return 1;
    }
    std::printf("%-14s %6s %8s %14s\n", "method", "runs", "items", "accuracy");
    for (const auto& [method, r] : by_method) {
        EvalSummary s;
        s.per_run_accuracy = r.accuracies;
        double sum = 0.0;
        for (double a : r.accuracies) sum += a;
        s.mean = sum / r.accuracies.size();
        if (r.accuracies.size() > 1) {
            double ss = 0.0;
            for (double a : r.accuracies) ss += (a - s.mean) * (a - s.mean);
            s.stddev = std::sqrt(ss / (r.accuracies.size() - 1));
        }
        std::printf("%-14s %6zu %8d %14s\n", method.c_str(), r.accuracies.size(),
                    r.n_items, s.format().c_str());
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"PREGU: uncertainty-guided decoding with latent refinement"};
    app.require_subcommand(1);

    CommonArgs run_args;
    auto* run = app.add_subcommand("run", "run PREGU over a dataset");
    add_common_options(run, run_args);

    CommonArgs base_args;
    std::string method_name = "cot";
    int sc_samples = 5;
    double fire_temperature = 1.3;
    int cot_decoding_starts = 3;
    auto* baseline = app.add_subcommand("baseline", "run a baseline decoder");
    baseline->add_option("--method", method_name, "cot|sc|fire|cot-decoding")->required();
    add_common_options(baseline, base_args);
    baseline->add_option("--sc-samples", sc_samples, "self-consistency votes (default 5)");
    baseline->add_option("--fire-temperature", fire_temperature,
                         "FIRE first-token temperature (default 1.3)");
    baseline->add_option("--cot-decoding-k", cot_decoding_starts,
                         "CoT-decoding start tokens (default 3)");

    std::vector<std::string> trace_files;
    std::string stats_csv, stats_json;
    int stats_top = 20;
    auto* stats = app.add_subcommand("entropy-stats",
                                     "aggregate per-token entropy from trace files");
    stats->add_option("traces", trace_files, "trace_run*.jsonl files")->required();
    stats->add_option("--csv", stats_csv, "write the full table as CSV");
    stats->add_option("--json", stats_json, "write the full table as JSON");
    stats->add_option("--top", stats_top, "rows to print (default 20, 0 = all)");

    std::string runs_dir = "runs";
    auto* report = app.add_subcommand("report", "summarize manifests into a method table");
    report->add_option("--runs-dir", runs_dir, "directory scanned recursively");

    std::string fixtures_out = "data";
    auto* fixtures = app.add_subcommand("gen-fixtures",
                                        "write the bundled toy datasets as JSONL");
    fixtures->add_option("--out", fixtures_out, "output directory (default ./data)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed())
            return run_evaluation(run_args, Method::pregu, sc_samples, fire_temperature,
                                  cot_decoding_starts);
        if (baseline->parsed())
            return run_evaluation(base_args, method_from_string(method_name), sc_samples,
                                  fire_temperature, cot_decoding_starts);
        if (stats->parsed())
            return cmd_entropy_stats(trace_files, stats_csv, stats_json, stats_top);
        if (report->parsed()) return cmd_report(runs_dir);
        if (fixtures->parsed()) {
            fs::create_directories(fixtures_out);
            write_dataset_jsonl(fixture_numeric_dataset(),
                                fs::path(fixtures_out) / "fixture_numeric.jsonl");
            write_dataset_jsonl(fixture_boolean_dataset(),
                                fs::path(fixtures_out) / "fixture_boolean.jsonl");
            std::cout << "wrote fixture_numeric.jsonl (100 items) and "
                         "fixture_boolean.jsonl (50 items) to "
                      << fixtures_out << "\n";
            return 0;
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
