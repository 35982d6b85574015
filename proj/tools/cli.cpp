#include "cli.hpp"

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <mutex>
#include <ostream>
#include <thread>

#include <CLI11.hpp>

#include "unislide/evaluation.hpp"
#include "unislide/metric_lab.hpp"
#include "unislide/pipeline.hpp"
#include "unislide/preference.hpp"
#include "unislide/sim.hpp"
#include "unislide/task.hpp"

#ifndef UNISLIDE_RENDER_SCRIPT
#define UNISLIDE_RENDER_SCRIPT "tools/playwright_render.py"
#endif

namespace unislide::cli {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

std::shared_ptr<gateway::Backend> make_backend(const std::string& spec, std::uint64_t seed) {
    if (spec == "mock" || spec.starts_with("mock:")) {
        gateway::MockScript script;
        if (spec.size() > 5) script = gateway::MockScript::load(spec.substr(5));
        script.seed = seed;
        return sim::make_mock(std::move(script));
    }
    if (spec == "http") {
        auto config = gateway::http_config_from_env();
        if (config.api_key.empty())
            throw Error(Errc::backend_unavailable, "http backend needs UNISLIDE_API_KEY");
        return std::make_shared<gateway::RetryingBackend>(std::make_shared<gateway::HttpBackend>(config), 3);
    }
    throw CLI::ValidationError("--backend", "expected mock, mock:<script.json> or http, got " + spec);
}

namespace {

struct Globals {
    std::string backend = "mock";
    std::uint64_t seed = 0;
    int runs = 3;
    std::string out;
    bool dump_intermediates = false;
    std::string renderer = "stub";
};

std::unique_ptr<visual::Renderer> make_renderer(const std::string& name) {
    if (name == "stub") return std::make_unique<visual::StubRenderer>();
    if (name == "browser") {
        const char* env = std::getenv("UNISLIDE_RENDER_SCRIPT");
        return std::make_unique<visual::BrowserRenderer>(env ? env : UNISLIDE_RENDER_SCRIPT);
    }
    throw CLI::ValidationError("--renderer", "expected stub or browser, got " + name);
}

std::string f2(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

void print_report(const task::ScoreReport& r, std::ostream& out) {
    out << r.task_id << " / " << r.deck_id << " (" << r.setting << ", " << r.runs << " runs)\n";
    for (const auto& [k, v] : r.shared) out << "  " << k << ": " << f2(v) << "\n";
    for (const auto& [k, v] : r.scenario) out << "  " << k << ": " << f2(v) << "\n";
    for (const auto& k : r.not_applicable) out << "  " << k << ": n/a\n";
    out << "  shared_mean: " << f2(r.shared_mean) << "\n  setting_avg: " << f2(r.setting_avg)
        << "  (run std " << f2(r.setting_avg_std) << ")\n";
}

pipeline::Components components_from(const std::string& config, bool no_retrieval, bool no_alignment, bool no_layout,
                                     bool no_refine) {
    auto c = pipeline::ablation_config(config);
    if (!c) throw CLI::ValidationError("--ablation", "expected one of a..g, got " + config);
    if (no_retrieval) c->evidence_retrieval = false;
    if (no_alignment) c->visual_alignment = false;
    if (no_layout) c->layout_planning = false;
    if (no_refine) c->perceptual_refinement = false;
    if (no_retrieval || no_alignment || no_layout || no_refine) c->name = "custom";
    return *c;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"unislide: document-to-slides generation and evaluation workbench", "unislide"};
    app.set_config("--config", "unislide.toml", "TOML file with defaults for any flag");
    app.require_subcommand(1);
    app.fallthrough();

    Globals g;
    app.add_option("--backend", g.backend, "mock | mock:<script.json> | http")->capture_default_str();
    app.add_option("--seed", g.seed, "Seed for every stochastic component")->capture_default_str();
    app.add_option("--runs", g.runs, "Evaluation repeats")->check(CLI::PositiveNumber)->capture_default_str();
    app.add_option("--out", g.out, "Output directory (or report file for evaluate)");
    app.add_flag("--dump-intermediates", g.dump_intermediates, "Write pipeline intermediates");
    app.add_option("--renderer", g.renderer, "stub | browser")->capture_default_str();

    // generate
    auto* gen = app.add_subcommand("generate", "Generate slide decks for tasks");
    std::vector<std::string> gen_tasks;
    std::string gen_config = "g";
    bool no_retrieval = false, no_alignment = false, no_layout = false, no_refine = false;
    int jobs = 1;
    gen->add_option("--task", gen_tasks, "Task file or directory")->required();
    gen->add_option("--ablation", gen_config, "Component configuration a..g")->capture_default_str();
    gen->add_flag("--no-retrieval", no_retrieval);
    gen->add_flag("--no-alignment", no_alignment);
    gen->add_flag("--no-layout", no_layout);
    gen->add_flag("--no-refine", no_refine);
    gen->add_option("--jobs", jobs, "Parallel tasks")->check(CLI::PositiveNumber)->capture_default_str();

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "Score a deck against its task");
    std::string ev_task, ev_deck;
    ev->add_option("--task", ev_task)->required();
    ev->add_option("--deck", ev_deck)->required();

    // validate-protocol
    auto* vp = app.add_subcommand("validate-protocol", "Perturbation, reliability and robustness checks");
    std::string vp_task, vp_judge_b;
    std::vector<std::string> vp_decks;
    double intensity = 0.3;
    vp->add_option("--task", vp_task)->required();
    vp->add_option("--deck", vp_decks, "Decks to compare; the first one is perturbed")->required();
    vp->add_option("--judge-b", vp_judge_b, "Second judge backend for robustness");
    vp->add_option("--intensity", intensity)->check(CLI::Range(0.0, 1.0))->capture_default_str();

    // ablate
    auto* ab = app.add_subcommand("ablate", "Run ablation configurations a..g");
    std::string ab_task;
    std::vector<std::string> ab_configs;
    bool ab_no_eval = false;
    ab->add_option("--task", ab_task)->required();
    ab->add_option("--configs", ab_configs, "Subset of a..g (default all)");
    ab->add_flag("--no-evaluate", ab_no_eval);

    // serve-study
    auto* ss = app.add_subcommand("serve-study", "Serve the human preference study API");
    std::string ss_root = "studies", ss_host = "127.0.0.1", ss_study;
    int ss_port = 0;
    ss->add_option("--root", ss_root, "Directory of study logs")->capture_default_str();
    ss->add_option("--host", ss_host)->capture_default_str();
    ss->add_option("--port", ss_port, "Defaults to UNISLIDE_STUDY_PORT or 8765");
    ss->add_option("--study", ss_study, "Study config JSON to create on start");

    try {
        std::vector<std::string> rev(args.rbegin(), args.rend());
        app.parse(rev);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << "\n";
        return kUsage;
    }

    try {
        if (*gen) {
            const auto comp = components_from(gen_config, no_retrieval, no_alignment, no_layout, no_refine);
            const fs::path root = g.out.empty() ? fs::path("out") : fs::path(g.out);
            std::vector<task::Task> tasks;
            for (const auto& p : gen_tasks) tasks.push_back(task::load_task(p));
            std::atomic<std::size_t> next{0};
            std::mutex io;
            std::optional<Error> failure;
            auto worker = [&] {
                for (std::size_t i; (i = next.fetch_add(1)) < tasks.size();) {
                    try {
                        auto backend = make_backend(g.backend, g.seed);
                        auto renderer = make_renderer(g.renderer);
                        pipeline::PipelineOptions opts;
                        opts.components = comp;
                        opts.seed = g.seed;
                        opts.dump_intermediates = g.dump_intermediates;
                        const auto dir = root / tasks[i].id;
                        const auto r = pipeline::run_pipeline(tasks[i], {backend.get(), nullptr, nullptr, renderer.get()},
                                                              opts, dir);
                        std::lock_guard lock(io);
                        out << tasks[i].id << ": " << r.deck.slides.size() << " slides -> " << dir.string()
                            << " (hash " << r.deck_hash.substr(0, 16) << ")\n";
                        for (const auto& w : r.warnings) err << "warning: " << w << "\n";
                    } catch (const Error& e) {
                        std::lock_guard lock(io);
                        err << tasks[i].id << ": " << e.what() << "\n";
                        if (!failure) failure = e;
                    }
                }
            };
            std::vector<std::thread> pool;
            const auto n = std::min<std::size_t>(static_cast<std::size_t>(jobs), tasks.size());
            for (std::size_t k = 1; k < n; ++k) pool.emplace_back(worker);
            worker();
            for (auto& t : pool) t.join();
            if (failure) throw *failure;
            return kOk;
        }

        if (*ev) {
            const auto t = task::load_task(ev_task);
            const auto deck = task::load_deck(ev_deck);
            auto judge = make_backend(g.backend, g.seed);
            eval::EvaluationOptions opts;
            opts.runs = g.runs;
            opts.seed = g.seed;
            const auto report = eval::evaluate_deck(deck, t, *judge, opts);
            fs::path target = g.out.empty() ? fs::path(ev_deck) / "score_report.json" : fs::path(g.out);
            if (target.extension() != ".json") target /= "score_report.json";
            task::save_report(report, target);
            print_report(report, out);
            out << "report: " << target.string() << "\n";
            return kOk;
        }

        if (*vp) {
            const auto t = task::load_task(vp_task);
            std::vector<task::Deck> decks;
            for (const auto& d : vp_decks) decks.push_back(task::load_deck(d));
            auto judge_a = make_backend(g.backend, g.seed);
            std::shared_ptr<gateway::Backend> judge_b;
            if (!vp_judge_b.empty()) judge_b = make_backend(vp_judge_b, g.seed);
            const fs::path dir = g.out.empty() ? fs::path("protocol") : fs::path(g.out);
            lab::ProtocolOptions opts;
            opts.evaluation.runs = g.runs;
            opts.evaluation.seed = g.seed;
            opts.intensity = intensity;
            opts.out_dir = dir;
            const auto report = lab::validate_protocol(t, decks, *judge_a, judge_b.get(), opts);
            const auto md = lab::protocol_markdown(report);
            task::write_file(dir / "protocol.md", md);
            task::write_file(dir / "protocol.json", lab::to_json(report).dump(2) + "\n");
            out << md;
            return kOk;
        }

        if (*ab) {
            const auto t = task::load_task(ab_task);
            std::vector<pipeline::Components> configs;
            if (ab_configs.empty()) {
                configs = pipeline::ablation_configs();
            } else {
                for (const auto& c : ab_configs) configs.push_back(components_from(c, false, false, false, false));
            }
            const fs::path root = (g.out.empty() ? fs::path("ablation") : fs::path(g.out)) / t.id;
            ojson summary;
            summary["task_id"] = t.id;
            summary["seed"] = g.seed;
            summary["configs"] = ojson::array();
            std::string md = "| Config | Retrieval | Alignment | Layout | Refine | Shared | Avg | Deck hash |\n"
                             "|---|---|---|---|---|---|---|---|\n";
            auto mark = [](bool on) { return on ? "on" : "off"; };
            for (const auto& c : configs) {
                auto backend = make_backend(g.backend, g.seed);
                auto renderer = make_renderer(g.renderer);
                pipeline::PipelineOptions opts;
                opts.components = c;
                opts.seed = g.seed;
                opts.dump_intermediates = g.dump_intermediates;
                const auto r = pipeline::run_pipeline(t, {backend.get(), nullptr, nullptr, renderer.get()}, opts,
                                                      root / c.name);
                ojson row;
                row["components"] = pipeline::to_json(c);
                row["deck_hash"] = r.deck_hash;
                bool empty = true;
                for (const auto& pg : r.grounding) empty = empty && pg.passages.empty();
                row["groundings_empty"] = empty;
                std::string shared = "-", avg = "-";
                if (!ab_no_eval) {
                    auto judge = make_backend(g.backend, g.seed);
                    eval::EvaluationOptions eo;
                    eo.runs = g.runs;
                    eo.seed = g.seed;
                    const auto rep = eval::evaluate_deck(r.deck, t, *judge, eo);
                    task::save_report(rep, root / c.name / "score_report.json");
                    row["shared_mean"] = rep.shared_mean;
                    row["setting_avg"] = rep.setting_avg;
                    shared = f2(rep.shared_mean);
                    avg = f2(rep.setting_avg);
                }
                summary["configs"].push_back(row);
                md += "| " + c.name + " | " + mark(c.evidence_retrieval) + " | " + mark(c.visual_alignment) + " | " +
                      mark(c.layout_planning) + " | " + mark(c.perceptual_refinement) + " | " + shared + " | " + avg +
                      " | " + r.deck_hash.substr(0, 12) + " |\n";
            }
            task::write_file(root / "ablation.json", summary.dump(2) + "\n");
            task::write_file(root / "ablation.md", md);
            out << md;
            return kOk;
        }

        if (*ss) {
            study::StudyStore store(ss_root);
            if (!ss_study.empty()) {
                const auto id = store.create_study(study::study_config_from_json(nlohmann::json::parse(task::read_file(ss_study))));
                out << "study: " << id << "\n";
            }
            study::StudyServer server(store);
            const int port = server.bind(ss_host, ss_port > 0 ? ss_port : study::study_port_from_env());
            out << "listening on http://" << ss_host << ":" << port << "\n" << std::flush;
            server.listen();
            return kOk;
        }
    } catch (const CLI::ValidationError& e) {
        err << "usage error: " << e.what() << "\n";
        return kUsage;
    } catch (const Error& e) {
        err << "error [" << to_string(e.code()) << "]: " << e.message() << "\n";
        return e.category() == ErrorCategory::backend ? kBackend : kData;
    } catch (const nlohmann::json::exception& e) {
        err << "error [SchemaViolation]: " << e.what() << "\n";
        return kData;
    } catch (const fs::filesystem_error& e) {
        err << "error [MissingFile]: " << e.what() << "\n";
        return kData;
    }
    return kUsage;
}

}  // namespace unislide::cli
