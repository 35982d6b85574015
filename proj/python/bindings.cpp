#include <sstream>
#include <string>
#include <vector>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "cli.hpp"
#include "unislide/error.hpp"
#include "unislide/evaluation.hpp"
#include "unislide/metric_lab.hpp"
#include "unislide/narrative.hpp"
#include "unislide/pipeline.hpp"
#include "unislide/preference.hpp"
#include "unislide/scenario_eval.hpp"
#include "unislide/shared_eval.hpp"
#include "unislide/sim.hpp"
#include "unislide/task.hpp"

namespace py = pybind11;
using namespace unislide;

namespace {

// Structured results cross the boundary as JSON text; the package decodes them.

std::string load_task_json(const std::string& path) { return task::serialize_task(task::load_task(path)); }

std::string generate(const std::string& task_path, const std::string& out_dir, std::uint64_t seed,
                     const std::string& config) {
    const auto t = task::load_task(task_path);
    auto components = pipeline::ablation_config(config);
    if (!components) throw Error(Errc::precondition, "unknown ablation config " + config);
    gateway::MockScript script;
    script.seed = seed;
    auto backend = sim::make_mock(script);
    pipeline::PipelineOptions options;
    options.components = *components;
    options.seed = seed;
    const auto result = pipeline::run_pipeline(t, {backend.get()}, options, out_dir);
    nlohmann::ordered_json j;
    j["deck_hash"] = result.deck_hash;
    j["slides"] = result.deck.slides.size();
    j["warnings"] = result.warnings;
    return j.dump();
}

std::string evaluate(const std::string& task_path, const std::string& deck_dir, std::uint64_t seed, int runs,
                     double jitter) {
    const auto t = task::load_task(task_path);
    const auto deck = task::load_deck(deck_dir);
    gateway::MockScript script;
    script.seed = seed;
    script.jitter = jitter;
    auto backend = sim::make_mock(script);
    eval::EvaluationOptions options;
    options.runs = runs;
    options.seed = seed;
    return task::report_to_json(eval::evaluate_deck(deck, t, *backend, options)).dump();
}

std::string aggregate_rankings(const std::vector<std::vector<std::string>>& orderings) {
    std::vector<study::ResolvedRanking> records;
    for (std::size_t i = 0; i < orderings.size(); ++i)
        records.push_back({"a" + std::to_string(i), "c" + std::to_string(i), orderings[i]});
    nlohmann::ordered_json out = nlohmann::ordered_json::array();
    for (const auto& m : study::aggregate_rankings(records))
        out.push_back({{"method", m.method}, {"mean_points", m.mean_points}, {"rank", m.rank}, {"count", m.count}});
    return out.dump();
}

py::tuple run_cli(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    int code;
    {
        py::gil_scoped_release release;
        code = cli::run(args, out, err);
    }
    return py::make_tuple(code, out.str(), err.str());
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    static py::exception<Error> error_type(m, "UnislideError");
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            PyErr_SetString(error_type.ptr(), e.what());
        }
    });

    m.def("load_task_json", &load_task_json, py::arg("path"));
    m.def("generate_json", &generate, py::arg("task_path"), py::arg("out_dir"), py::arg("seed") = 0,
          py::arg("config") = "g");
    m.def("evaluate_json", &evaluate, py::arg("task_path"), py::arg("deck_dir"), py::arg("seed") = 0,
          py::arg("runs") = 3, py::arg("jitter") = 0.0);
    m.def("aggregate_rankings_json", &aggregate_rankings, py::arg("orderings"));
    m.def("run_cli", &run_cli, py::arg("args"));

    m.def("setting_avg", [](const std::vector<double>& shared, const std::vector<double>& scenario) {
        return eval::setting_avg(shared, scenario);
    });
    m.def("visual_integrity", [](const std::vector<bool>& defects) {
        return eval::visual_integrity(eval::DefectFlagSheet{defects});
    });
    m.def("weighted_state_mean", [](const std::vector<std::pair<double, double>>& weight_state) {
        std::vector<eval::WeightedItemState> items;
        for (const auto& [w, s] : weight_state) items.push_back({"", w, s, ""});
        return eval::weighted_state_mean(items);
    });
    m.def("spearman", &lab::spearman);
    m.def("pearson", &lab::pearson);
    m.def("icc", &study::icc, py::arg("ratings"));
    m.def("delta_percent", &lab::delta_percent);
    m.def("reliability_std", &lab::reliability_std);
    m.def("chunk_text", [](const std::string& text, std::size_t window, std::size_t overlap) {
        return narrative::chunk_text(text, window, overlap);
    }, py::arg("text"), py::arg("window") = 900, py::arg("overlap") = 200);
    m.def("ablation_configs", [] {
        std::vector<std::string> names;
        for (const auto& c : pipeline::ablation_configs()) names.push_back(c.name);
        return names;
    });
}
