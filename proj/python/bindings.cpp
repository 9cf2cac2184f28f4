#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "pregu/errors.hpp"
#include "pregu/harness.hpp"
#include "pregu/latent_opt.hpp"
#include "pregu/toy_backend.hpp"

namespace py = pybind11;
using namespace pregu;

namespace {

TokenDistribution dist_from_pairs(const std::vector<std::pair<int, double>>& pairs,
                                  bool truncated) {
    TokenDistribution d;
    for (const auto& [id, p] : pairs) d.entries.push_back({id, p});
    d.truncated = truncated;
    d.canonicalize();
    return d;
}

std::vector<std::vector<double>> matrix_rows(const Eigen::MatrixXd& m) {
    std::vector<std::vector<double>> rows;
    rows.reserve(static_cast<std::size_t>(m.rows()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        std::vector<double> row;
        row.reserve(static_cast<std::size_t>(m.cols()));
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

Eigen::VectorXd to_vec(const std::vector<double>& v) {
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

PYBIND11_MODULE(_pregu, m) {
    m.doc() = "Uncertainty-guided decoding: entropy halting, latent-space "
              "refinement, rewards, and the toy evaluation harness.";

    py::register_exception<Error>(m, "PreguError");

    py::class_<TokenDistribution>(m, "TokenDistribution")
        .def(py::init(&dist_from_pairs), py::arg("entries"), py::arg("truncated") = false)
        .def_property_readonly("entries",
                               [](const TokenDistribution& d) {
                                   std::vector<std::pair<int, double>> out;
                                   for (const auto& e : d.entries)
                                       out.emplace_back(e.token_id, e.prob);
                                   return out;
                               })
        .def_readonly("truncated", &TokenDistribution::truncated)
        .def("top_k", &TokenDistribution::top_k, py::arg("k"));

    m.def("shannon_entropy", &shannon_entropy, py::arg("dist"),
          "Top-K Shannon entropy in bits (no renormalization of the tail).");
    m.def(
        "detect_halt",
        [](const std::vector<double>& values, double tau, int t_min) {
            UncertaintyConfig cfg;
            cfg.tau = tau;
            cfg.t_min = t_min;
            return detect_halt(EntropyTrace{values}, cfg);
        },
        py::arg("trace"), py::arg("tau") = 3.0, py::arg("t_min") = 5,
        "First index t >= t_min with trace[t] >= tau, or None.");

    m.def("expected_improvement", &expected_improvement, py::arg("mean"),
          py::arg("stddev"), py::arg("best_so_far"), py::arg("xi") = 0.0);

    py::class_<ProjectionOperator>(m, "ProjectionOperator")
        .def_property_readonly(
            "matrix", [](const ProjectionOperator& p) { return matrix_rows(p.matrix); })
        .def_readonly("seed", &ProjectionOperator::seed)
        .def_property_readonly("embedding_dim", &ProjectionOperator::embedding_dim)
        .def_property_readonly("latent_dim", &ProjectionOperator::latent_dim);
    m.def("make_projection", &make_projection, py::arg("embedding_dim"),
          py::arg("latent_dim"), py::arg("seed"));

    py::class_<SurrogateState>(m, "SurrogateState")
        .def(py::init([](double length_scale, double signal_variance, double jitter) {
                 return SurrogateState(GpKernel{length_scale, signal_variance}, jitter);
             }),
             py::arg("length_scale") = 1.0, py::arg("signal_variance") = 1.0,
             py::arg("jitter") = 1e-6)
        .def("add",
             [](SurrogateState& s, const std::vector<double>& delta, double reward) {
                 s.add(to_vec(delta), reward);
             })
        .def("size", &SurrogateState::size)
        .def("posterior", [](const SurrogateState& s, const std::vector<double>& q) {
            auto post = gp_posterior(s, to_vec(q));
            return std::make_pair(post.mean, post.stddev);
        });

    py::class_<ToyBackend>(m, "ToyBackend")
        .def(py::init([]() { return ToyBackend(toy::fixture_spec()); }))
        .def_property_readonly("vocab_size",
                               [](const ToyBackend& b) { return b.vocab().size(); })
        .def_property_readonly(
            "embedding_dim",
            [](const ToyBackend& b) { return b.capabilities().embedding_dim; })
        .def("tokenize",
             [](const ToyBackend& b, const std::string& s) { return b.context_tokens(s); })
        .def("detokenize",
             [](const ToyBackend& b, const std::vector<int>& ids) {
                 return b.vocab().detokenize(ids);
             })
        .def("token", [](const ToyBackend& b, int id) { return b.vocab().token(id); })
        .def(
            "next_distribution",
            [](const ToyBackend& b, const std::string& context, int top_k) {
                return b.next_distribution(SoftPrefix::of(b.context_tokens(context)), top_k);
            },
            py::arg("context"), py::arg("top_k") = 50)
        .def("embed_token", &ToyBackend::embed_token, py::arg("token_id"))
        .def(
            "generate_greedy",
            [](const ToyBackend& b, const std::string& context, int max_tokens,
               const std::optional<std::vector<double>>& injected_embedding) {
                SoftPrefix ctx;
                ctx.hard_tokens = b.context_tokens(context);
                ctx.injected_embedding = injected_embedding;
                return b.vocab().detokenize(b.generate_greedy(ctx, max_tokens));
            },
            py::arg("context"), py::arg("max_tokens") = 64,
            py::arg("injected_embedding") = std::nullopt);

    m.def(
        "extract_answer",
        [](const std::string& text, const std::string& kind)
            -> std::optional<std::pair<std::string, std::string>> {
            auto ext = extract_answer(text, task_kind_from_string(kind));
            if (!ext) return std::nullopt;
            return std::make_pair(ext->raw_span, ext->normalized);
        },
        py::arg("text"), py::arg("task_kind") = "numeric",
        "(raw_span, normalized) after the last 'Answer:' marker, or None.");

    py::class_<RunConfig>(m, "RunConfig")
        .def(py::init([](double tau, int top_k, int t_min, int n_paths, int bo_k,
                         int bo_rounds, double bo_sigma, int bo_d, double temperature,
                         int max_tokens, int verifier_m, double verifier_temperature,
                         std::uint64_t master_seed, const std::string& task_kind,
                         const std::string& template_text, int n_workers) {
                 RunConfig cfg;
                 cfg.uncertainty.tau = tau;
                 cfg.uncertainty.top_k = top_k;
                 cfg.uncertainty.t_min = t_min;
                 cfg.n_paths = n_paths;
                 cfg.bo.samples_per_round = bo_k;
                 cfg.bo.rounds = bo_rounds;
                 cfg.bo.sigma = bo_sigma;
                 cfg.bo.latent_dim = bo_d;
                 cfg.sampling.temperature = temperature;
                 cfg.sampling.max_tokens = max_tokens;
                 cfg.verifier_m = verifier_m;
                 cfg.verifier_temperature = verifier_temperature;
                 cfg.master_seed = master_seed;
                 cfg.task_kind = task_kind_from_string(task_kind);
                 cfg.prompt_template.text = template_text;
                 cfg.n_workers = n_workers;
                 return cfg;
             }),
             py::arg("tau") = 3.0, py::arg("top_k") = 50, py::arg("t_min") = 5,
             py::arg("n_paths") = 5, py::arg("bo_k") = 5, py::arg("bo_rounds") = 3,
             py::arg("bo_sigma") = 0.0, py::arg("bo_d") = 50,
             py::arg("temperature") = 0.6, py::arg("max_tokens") = 256,
             py::arg("verifier_m") = 4, py::arg("verifier_temperature") = 0.7,
             py::arg("master_seed") = 0, py::arg("task_kind") = "numeric",
             py::arg("template_text") = "{question}", py::arg("n_workers") = 1)
        .def("to_json", [](const RunConfig& cfg) { return cfg.to_json().dump(); });

    m.def(
        "run_pregu",
        [](const std::string& question_id, const std::string& question,
           const ToyBackend& backend, const RunConfig& cfg) {
            return run_pregu(question_id, question, backend, cfg).to_json().dump();
        },
        py::arg("question_id"), py::arg("question"), py::arg("backend"), py::arg("config"),
        "Full two-stage pipeline; returns the per-question record as a JSON string.");

    auto item_dicts = [](const std::vector<BenchmarkItem>& items) {
        py::list out;
        for (const auto& it : items) {
            py::dict d;
            d["id"] = it.id;
            d["question"] = it.question;
            d["answer"] = it.gold_answer;
            out.append(d);
        }
        return out;
    };
    m.def("fixture_numeric_dataset",
          [item_dicts]() { return item_dicts(fixture_numeric_dataset()); });
    m.def("fixture_boolean_dataset",
          [item_dicts]() { return item_dicts(fixture_boolean_dataset()); });
}
