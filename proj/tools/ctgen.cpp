// ctgen: build conditional-task-generation corpora, drive synthetic task
// generation against a completion endpoint, and evaluate adapted models.
// Subcommands: build-ctga, generate, evaluate, inspect, mock-serve.

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "ctgen/ctga_builder.hpp"
#include "ctgen/dataset_io.hpp"
#include "ctgen/eval_harness.hpp"
#include "ctgen/inference_client.hpp"
#include "ctgen/mock_server.hpp"
#include "ctgen/run_config.hpp"
#include "ctgen/task_generator.hpp"
#include "ctgen/task_registry.hpp"
#include "ctgen/text_protocol.hpp"

namespace {

using nlohmann::json;

volatile bool g_interrupted = false;

void handle_signal(int) { g_interrupted = true; }

void install_signal_handlers() {
    std::signal(SIGINT, handle_signal);
    std::signal(SIGTERM, handle_signal);
}

// Machine-readable error summary on stderr.
int fail(const std::string& kind, const std::string& message, int code) {
    json err;
    err["error"] = kind;
    err["detail"] = message;
    std::cerr << err.dump() << std::endl;
    return code;
}

struct CommonOptions {
    std::string config_path;
    ctgen::RunConfig config;

    void load() {
        if (!config_path.empty()) config = ctgen::RunConfig::load(config_path);
    }
};

std::string format_percent(double value) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.1f", value);
    return buf;
}

int cmd_build_ctga(const CommonOptions& common, const std::string& records_path,
                   const std::string& registry_path, const std::string& out_path, uint64_t cap,
                   uint64_t seed, bool strict) {
    auto registry = ctgen::load_registry(registry_path);

    ctgen::BuildConfig cfg;
    cfg.per_dataset_cap = cap;
    cfg.seed = seed;
    cfg.column_renames = common.config.column_renames;

    ctgen::io::RecordReader records(records_path, strict);
    ctgen::io::PairWriter writer(out_path);
    ctgen::BuildStats stats;
    size_t written = ctgen::build_corpus(records, registry, cfg, writer, &stats, &g_interrupted);

    json summary;
    summary["pairs_written"] = written;
    summary["records_seen"] = stats.records_seen;
    summary["capped_skipped"] = stats.capped_skipped;
    summary["per_dataset"] = stats.per_dataset;
    summary["decode_issues"] = records.issues().size();
    std::cout << summary.dump(2) << std::endl;
    return 0;
}

int cmd_generate(const CommonOptions& common, const std::string& mode,
                 const std::string& docs_path, const std::string& task_type_name,
                 const std::string& out_path, int samples_per_doc, uint64_t seed,
                 int max_in_flight, const std::string& dataset_name,
                 const std::string& nli_templates_dir) {
    auto task_type = ctgen::parse_task_type(task_type_name);
    if (!task_type) return fail("config", "unknown task type: " + task_type_name, 2);

    ctgen::InferenceClient client(common.config.endpoint, max_in_flight);

    ctgen::io::DocumentReader docs(docs_path, dataset_name);
    ctgen::DocSource source = [&docs]() { return docs.next(); };

    std::ofstream error_log;
    std::filesystem::path error_path = out_path + ".errors.jsonl";

    ctgen::GenerateOptions options;
    options.params = common.config.sampling;
    options.samples_per_doc = samples_per_doc;
    options.seed = seed;
    options.error_sink = [&](const json& entry) {
        if (!error_log.is_open()) error_log.open(error_path, std::ios::trunc);
        error_log << entry.dump() << '\n';
    };

    ctgen::io::PairWriter writer(out_path);
    std::string dataset = dataset_name.empty()
                              ? std::filesystem::path(docs_path).stem().string()
                              : dataset_name;
    ctgen::TaskSink sink = [&](const ctgen::GeneratedTask& task) {
        writer.write(ctgen::task_to_pair(task, dataset, mode));
    };

    ctgen::GenerationStats stats;
    if (mode == "conditional") {
        stats = ctgen::generate_conditional(source, *task_type, client, options, sink,
                                            &g_interrupted);
    } else if (mode == "instruct") {
        std::vector<ctgen::tmpl::Template> nli_templates;
        if (*task_type == ctgen::TaskType::NaturalLanguageInference) {
            for (const auto& entry :
                 std::filesystem::directory_iterator(nli_templates_dir)) {
                if (entry.path().extension() == ".tmpl")
                    nli_templates.push_back(ctgen::tmpl::Template::load_file(entry.path()));
            }
            std::sort(nli_templates.begin(), nli_templates.end(),
                      [](const auto& a, const auto& b) { return a.source() < b.source(); });
            if (nli_templates.empty())
                return fail("config", "no .tmpl files in " + nli_templates_dir, 2);
        }
        stats = ctgen::generate_instruct(source, *task_type, client, options, nli_templates, sink,
                                         &g_interrupted);
    } else {
        return fail("config", "unknown mode: " + mode, 2);
    }

    json stats_doc = stats.to_json();
    stats_doc["skipped_blank_documents"] = docs.skipped_blank();
    stats_doc["duplicate_document_ids"] = docs.duplicate_ids();
    {
        std::ofstream stats_out(out_path + ".stats.json", std::ios::trunc);
        stats_out << stats_doc.dump(2) << '\n';
    }

    if (g_interrupted) {
        std::cout << stats_doc.dump(2) << std::endl;
        return fail("interrupted", "partial output kept at " + out_path + ".partial", 1);
    }
    writer.commit();
    std::cout << stats_doc.dump(2) << std::endl;
    return 0;
}

int cmd_evaluate(const CommonOptions& common, const std::string& task_config_path,
                 const std::string& report_path, uint64_t seed, int max_in_flight,
                 const std::string& f1_variant, bool length_normalize) {
    ctgen::InferenceClient client(common.config.endpoint, max_in_flight);
    ctgen::EvalTask task = ctgen::load_eval_task(task_config_path);
    task.seed = seed;
    if (!f1_variant.empty()) {
        if (f1_variant == "macro") {
            task.f1_variant = ctgen::F1Variant::Macro;
        } else if (f1_variant == "micro") {
            task.f1_variant = ctgen::F1Variant::Micro;
        } else {
            return fail("config", "unknown f1 variant: " + f1_variant, 2);
        }
    }
    if (length_normalize) task.length_normalize = true;

    ctgen::EvalReport report = ctgen::evaluate(task, client);
    {
        std::ofstream out(report_path, std::ios::trunc);
        if (!out) return fail("io", "cannot write report: " + report_path, 1);
        out << report.to_json().dump(2) << '\n';
    }

    std::cout << "kind: " << to_string(report.kind) << '\n';
    if (!report.f1_variant.empty()) std::cout << "f1 variant: " << report.f1_variant << '\n';
    for (const auto& [id, score] : report.per_template)
        std::cout << "  " << id << ": " << format_percent(score) << '\n';
    std::cout << "mean: " << format_percent(report.mean)
              << "  stderr: " << format_percent(report.stderr_)
              << "  n: " << report.n_examples << std::endl;
    return 0;
}

int cmd_inspect(const std::string& path, bool as_json) {
    ctgen::io::PairReader reader(path);
    size_t count = 0;
    std::map<std::string, size_t> per_dataset, per_task_type, per_generator, histogram;
    while (auto pair = reader.next()) {
        ++count;
        if (pair->meta.contains("dataset"))
            ++per_dataset[pair->meta["dataset"].get<std::string>()];
        if (pair->meta.contains("task_type"))
            ++per_task_type[pair->meta["task_type"].get<std::string>()];
        if (pair->meta.contains("generator"))
            ++per_generator[pair->meta["generator"].get<std::string>()];
        ++histogram[ctgen::trim(pair->output)];
    }

    // Per-label histogram: top 10 outputs by count.
    std::vector<std::pair<std::string, size_t>> top(histogram.begin(), histogram.end());
    std::sort(top.begin(), top.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    if (top.size() > 10) top.resize(10);

    json doc;
    doc["count"] = count;
    doc["decode_issues"] = reader.issues().size();
    doc["per_dataset"] = per_dataset;
    doc["per_task_type"] = per_task_type;
    doc["per_generator"] = per_generator;
    json top_json = json::array();
    for (const auto& [output, n] : top) top_json.push_back({{"output", output}, {"count", n}});
    doc["top_outputs"] = std::move(top_json);

    std::filesystem::path stats_path = path + ".stats.json";
    if (std::filesystem::exists(stats_path)) {
        std::ifstream stats_in(stats_path);
        json stats = json::parse(stats_in, nullptr, false);
        if (!stats.is_discarded()) doc["generation_stats"] = stats;
    }

    if (as_json) {
        std::cout << doc.dump(2) << std::endl;
        return 0;
    }
    std::cout << "count: " << count << '\n';
    if (!per_dataset.empty()) {
        std::cout << "datasets:\n";
        for (const auto& [k, v] : per_dataset) std::cout << "  " << k << ": " << v << '\n';
    }
    if (!per_task_type.empty()) {
        std::cout << "task types:\n";
        for (const auto& [k, v] : per_task_type) std::cout << "  " << k << ": " << v << '\n';
    }
    if (!per_generator.empty()) {
        std::cout << "generators:\n";
        for (const auto& [k, v] : per_generator) std::cout << "  " << k << ": " << v << '\n';
    }
    std::cout << "top outputs:\n";
    for (const auto& [output, n] : top) {
        std::string shown = output.size() > 60 ? output.substr(0, 57) + "..." : output;
        std::cout << "  " << n << "\t" << shown << '\n';
    }
    if (doc.contains("generation_stats"))
        std::cout << "generation stats: " << doc["generation_stats"].dump() << '\n';
    if (reader.issues().size() > 0)
        std::cout << "decode issues: " << reader.issues().size() << '\n';
    std::cout.flush();
    return 0;
}

int cmd_mock_serve(const std::string& tape_path, int port) {
    ctgen::MockServer server(ctgen::MockTape::load(tape_path));
    int bound = server.start(port);
    std::cout << "mock server listening on 127.0.0.1:" << bound << std::endl;
    while (!g_interrupted) std::this_thread::sleep_for(std::chrono::milliseconds(50));
    server.stop();
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    install_signal_handlers();

    CLI::App app{"conditional task generation toolkit"};
    app.require_subcommand(1);

    CommonOptions common;
    app.add_option("--config", common.config_path, "JSON run config (endpoint, sampling, seed)");

    // build-ctga
    auto* build = app.add_subcommand("build-ctga",
                                     "apply meta-templates to source records to build a "
                                     "generator training corpus");
    std::string records_path, registry_path, build_out;
    uint64_t cap = 100000;
    bool seed_set = false;
    uint64_t seed_flag = ctgen::kDefaultSeed;
    build->add_option("--records", records_path, "records.jsonl with dataset/fields per line")
        ->required();
    build->add_option("--registry", registry_path, "meta-template registry manifest")->required();
    build->add_option("--out", build_out, "output pairs.jsonl")->required();
    build->add_option("--cap", cap, "per-dataset example cap (default 100000)");
    build->add_option("--seed", seed_flag, "seed for template sampling and rendering")
        ->each([&seed_set](const std::string&) { seed_set = true; });

    // generate
    auto* generate = app.add_subcommand("generate",
                                        "turn unannotated documents into instruction-response "
                                        "pairs via a completion endpoint");
    std::string mode = "conditional", docs_path, task_type_name, endpoint_url, gen_out;
    std::string dataset_name, nli_dir = "assets/nli_answer_templates";
    int samples_per_doc = 1;
    int max_in_flight_flag = 0;
    generate->add_option("--mode", mode, "conditional|instruct (default conditional)");
    generate->add_option("--docs", docs_path, "documents.jsonl")->required();
    generate->add_option("--task-type", task_type_name, "target task type name")->required();
    generate->add_option("--endpoint", endpoint_url, "completion endpoint base URL");
    generate->add_option("--out", gen_out, "output pairs.jsonl")->required();
    generate->add_option("--samples-per-doc", samples_per_doc, "generations per document");
    generate->add_option("--seed", seed_flag, "seed for sampling streams")
        ->each([&seed_set](const std::string&) { seed_set = true; });
    generate->add_option("--max-in-flight", max_in_flight_flag, "bounded request concurrency");
    generate->add_option("--dataset", dataset_name, "dataset name for pair provenance");
    generate->add_option("--nli-templates", nli_dir,
                         "directory of NLI answer templates (instruct mode)");

    // evaluate
    auto* evaluate = app.add_subcommand("evaluate",
                                        "score a model over 5 prompt templates via ranked "
                                        "classification or greedy extraction");
    std::string task_config_path, report_path, f1_variant;
    bool length_normalize = false;
    evaluate->add_option("--task-config", task_config_path, "task config JSON")->required();
    evaluate->add_option("--endpoint", endpoint_url, "completion endpoint base URL");
    evaluate->add_option("--report", report_path, "output report JSON")->required();
    evaluate->add_option("--seed", seed_flag, "seed for prompt rendering")
        ->each([&seed_set](const std::string&) { seed_set = true; });
    evaluate->add_option("--max-in-flight", max_in_flight_flag, "bounded request concurrency");
    evaluate->add_option("--f1-variant", f1_variant, "macro|micro (classification reports)");
    evaluate->add_flag("--length-normalize", length_normalize,
                       "divide choice loglikelihoods by token count (off by default)");

    // inspect
    auto* inspect = app.add_subcommand("inspect", "print statistics for a pairs.jsonl file");
    std::string inspect_path;
    bool inspect_json = false;
    inspect->add_option("path", inspect_path, "pairs.jsonl to inspect")->required();
    inspect->add_flag("--json", inspect_json, "machine-readable output");

    // mock-serve
    auto* mock = app.add_subcommand("mock-serve",
                                    "serve the deterministic completion endpoint from a tape");
    std::string tape_path;
    int port = 0;
    mock->add_option("--tape", tape_path, "tape JSON file")->required();
    mock->add_option("--port", port, "port to bind (0 = auto)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << app.help() << std::endl;
        return fail("usage", e.what(), 2);
    }

    try {
        common.load();
        if (!endpoint_url.empty()) common.config.endpoint.base_url = endpoint_url;
        if (max_in_flight_flag > 0) common.config.max_in_flight = max_in_flight_flag;
        if (seed_set) common.config.seed = seed_flag;
        common.config.validate();

        if (build->parsed())
            return cmd_build_ctga(common, records_path, registry_path, build_out, cap,
                                  seed_set ? seed_flag : common.config.seed);
        if (generate->parsed()) {
            if (common.config.endpoint.base_url.empty())
                return fail("config", "no endpoint configured (use --endpoint or --config)", 2);
            return cmd_generate(common, mode, docs_path, task_type_name, gen_out, samples_per_doc,
                                common.config.seed, common.config.max_in_flight, dataset_name,
                                nli_dir);
        }
        if (evaluate->parsed()) {
            if (common.config.endpoint.base_url.empty())
                return fail("config", "no endpoint configured (use --endpoint or --config)", 2);
            return cmd_evaluate(common, task_config_path, report_path, common.config.seed,
                                common.config.max_in_flight, f1_variant, length_normalize);
        }
        if (inspect->parsed()) return cmd_inspect(inspect_path, inspect_json);
        if (mock->parsed()) return cmd_mock_serve(tape_path, port);
        return fail("usage", "no subcommand", 2);
    } catch (const ctgen::ConfigError& e) {
        return fail("config", e.what(), 2);
    } catch (const ctgen::RegistryError& e) {
        return fail("registry", e.what(), 1);
    } catch (const ctgen::tmpl::TemplateError& e) {
        return fail("template", e.what(), 1);
    } catch (const ctgen::EvalError& e) {
        return fail("evaluation", e.what(), 1);
    } catch (const ctgen::ClientError& e) {
        return fail("endpoint", e.what(), 1);
    } catch (const std::exception& e) {
        return fail("pipeline", e.what(), 1);
    }
}
