#include "ctgen/eval_harness.hpp"

#include <algorithm>
#include <fstream>

#include "ctgen/metrics.hpp"
#include "ctgen/seeded_rng.hpp"
#include "ctgen/text_protocol.hpp"

namespace ctgen {

namespace {

using nlohmann::json;

const json* resolve_field(const json& fields, std::string_view dotted) {
    const json* cur = &fields;
    size_t pos = 0;
    while (pos <= dotted.size()) {
        size_t dot = dotted.find('.', pos);
        std::string key(dotted.substr(pos, dot == std::string_view::npos ? std::string_view::npos
                                                                         : dot - pos));
        if (!cur->is_object() || !cur->contains(key)) return nullptr;
        cur = &cur->at(key);
        if (dot == std::string_view::npos) return cur;
        pos = dot + 1;
    }
    return nullptr;
}

std::vector<std::string> rendered_choices(const io::SourceRecord& record,
                                          const PromptTemplate& prompt_template,
                                          uint64_t render_seed) {
    return prompt_template.body.render_choices(
        tmpl::RenderContext(record.fields, render_seed));
}

std::string rendered_prompt(const io::SourceRecord& record, const PromptTemplate& prompt_template,
                            const std::vector<std::string>& choices, uint64_t render_seed) {
    json bindings = record.fields;
    if (!choices.empty()) bindings["answer_choices"] = choices;
    return prompt_template.body.render(tmpl::RenderContext(bindings, render_seed));
}

}  // namespace

std::string_view to_string(EvalKind kind) {
    return kind == EvalKind::RankedClassification ? "ranked_classification"
                                                  : "extractive_generation";
}

std::string_view to_string(F1Variant variant) {
    return variant == F1Variant::Macro ? "macro" : "micro";
}

json EvalReport::to_json() const {
    json out;
    out["kind"] = std::string(to_string(kind));
    if (!f1_variant.empty()) out["f1_variant"] = f1_variant;
    json per = json::array();
    for (const auto& [id, score] : per_template) per.push_back({{"template", id}, {"score", score}});
    out["per_template"] = std::move(per);
    out["mean"] = mean;
    out["stderr"] = stderr_;
    out["n_examples"] = n_examples;
    return out;
}

size_t pick_argmax(const std::vector<double>& totals) {
    if (totals.empty()) throw EvalError("argmax over empty score table");
    size_t best = 0;
    for (size_t i = 1; i < totals.size(); ++i)
        if (totals[i] > totals[best]) best = i;
    return best;
}

int ranked_classify(const io::SourceRecord& record, const PromptTemplate& prompt_template,
                    const InferenceClient& client, uint64_t render_seed, bool length_normalize) {
    auto choices = rendered_choices(record, prompt_template, render_seed);
    std::string prompt = rendered_prompt(record, prompt_template, choices, render_seed);

    std::vector<double> totals;
    totals.reserve(choices.size());
    for (const auto& choice : choices) {
        // Leading space: continuation tokenization convention on completion
        // endpoints.
        auto [total, n_tokens] = client.score_continuation_detail(prompt, " " + choice);
        if (length_normalize && n_tokens > 0) total /= static_cast<double>(n_tokens);
        totals.push_back(total);
    }
    return static_cast<int>(pick_argmax(totals));
}

std::string extractive_generate(const io::SourceRecord& record,
                                const PromptTemplate& prompt_template,
                                const InferenceClient& client, uint64_t render_seed) {
    std::string prompt = rendered_prompt(record, prompt_template, {}, render_seed);
    auto completion = client.complete(prompt, greedy_extraction_defaults());
    return trim(completion.text);
}

EvalReport evaluate(const EvalTask& task, const InferenceClient& client) {
    if (task.templates.size() != 5)
        throw EvalError("evaluation requires exactly 5 prompt templates, got " +
                        std::to_string(task.templates.size()));
    if (task.test_records.empty()) throw EvalError("no test records");
    if (task.test_records.size() != task.gold.size())
        throw EvalError("gold list does not match test records");
    if (task.kind == EvalKind::RankedClassification && task.n_labels < 2)
        throw EvalError("ranked classification needs at least 2 labels");

    EvalReport report;
    report.kind = task.kind;
    report.n_examples = task.test_records.size();
    if (task.kind == EvalKind::RankedClassification)
        report.f1_variant = std::string(to_string(task.f1_variant));

    std::vector<double> scores;
    for (size_t ti = 0; ti < task.templates.size(); ++ti) {
        const auto& prompt_template = task.templates[ti];
        const size_t n = task.test_records.size();

        if (task.kind == EvalKind::RankedClassification) {
            auto outcomes = run_bounded<int>(n, client.max_in_flight(), [&](size_t ri) {
                uint64_t render_seed = derive_seed(task.seed, {ti, ri});
                return ranked_classify(task.test_records[ri], prompt_template, client, render_seed,
                                       task.length_normalize);
            });
            std::vector<int> preds(n), golds(n);
            size_t errored = 0;
            std::string first_error;
            for (size_t ri = 0; ri < n; ++ri) {
                if (!outcomes[ri].ok()) {
                    ++errored;
                    if (first_error.empty()) first_error = outcomes[ri].error;
                    continue;
                }
                preds[ri] = *outcomes[ri].value;
                golds[ri] = task.gold[ri].label;
            }
            if (errored == n)
                throw ReportInvalid("template '" + prompt_template.id +
                                    "': every record errored: " + first_error);
            if (errored > 0)
                throw ReportInvalid("template '" + prompt_template.id + "': " +
                                    std::to_string(errored) +
                                    " records errored; refusing to score partial data (" +
                                    first_error + ")");
            double f1 = task.f1_variant == F1Variant::Macro
                            ? metrics::macro_f1(preds, golds, task.n_labels)
                            : metrics::micro_f1(preds, golds, task.n_labels);
            scores.push_back(f1 * 100.0);
        } else {
            auto outcomes = run_bounded<std::string>(n, client.max_in_flight(), [&](size_t ri) {
                uint64_t render_seed = derive_seed(task.seed, {ti, ri});
                return extractive_generate(task.test_records[ri], prompt_template, client,
                                           render_seed);
            });
            double sum = 0.0;
            size_t errored = 0;
            std::string first_error;
            for (size_t ri = 0; ri < n; ++ri) {
                if (!outcomes[ri].ok()) {
                    ++errored;
                    if (first_error.empty()) first_error = outcomes[ri].error;
                    continue;
                }
                sum += metrics::squad_f1(*outcomes[ri].value, task.gold[ri].answers);
            }
            if (errored == n)
                throw ReportInvalid("template '" + prompt_template.id +
                                    "': every record errored: " + first_error);
            if (errored > 0)
                throw ReportInvalid("template '" + prompt_template.id + "': " +
                                    std::to_string(errored) +
                                    " records errored; refusing to score partial data (" +
                                    first_error + ")");
            scores.push_back(sum / static_cast<double>(n) * 100.0);
        }
        report.per_template.emplace_back(prompt_template.id, scores.back());
    }

    auto [mean, se] = metrics::mean_stderr(scores);
    report.mean = mean;
    report.stderr_ = se;
    return report;
}

EvalTask load_eval_task(const std::filesystem::path& config_path) {
    std::ifstream in(config_path);
    if (!in) throw EvalError("cannot read task config: " + config_path.string());
    json config = json::parse(in, nullptr, false);
    if (config.is_discarded()) throw EvalError("malformed task config: " + config_path.string());

    EvalTask task;
    const auto base_dir = config_path.parent_path();

    std::string kind = config.value("kind", std::string());
    if (kind == "ranked_classification") {
        task.kind = EvalKind::RankedClassification;
    } else if (kind == "extractive_generation") {
        task.kind = EvalKind::ExtractiveGeneration;
    } else {
        throw EvalError("task config: unknown kind '" + kind + "'");
    }

    if (!config.contains("templates") || !config["templates"].is_array() ||
        config["templates"].size() != 5)
        throw EvalError("task config must name exactly 5 template files");
    for (const auto& entry : config["templates"]) {
        PromptTemplate prompt_template;
        auto path = base_dir / entry.get<std::string>();
        prompt_template.id = path.stem().string();
        prompt_template.body = tmpl::Template::load_file(path);
        task.templates.push_back(std::move(prompt_template));
    }

    if (task.kind == EvalKind::RankedClassification) {
        for (const auto& prompt_template : task.templates) {
            if (!prompt_template.body.has_choices())
                throw EvalError("template '" + prompt_template.id +
                                "' lacks answer choices required for ranked classification");
            int count = static_cast<int>(prompt_template.body.answer_choices().size());
            if (task.n_labels == 0) task.n_labels = count;
            if (count != task.n_labels)
                throw EvalError("templates disagree on the number of answer choices");
        }
    }

    if (!config.contains("test_records"))
        throw EvalError("task config missing test_records");
    std::string gold_field = config.value("gold_field", std::string());
    if (gold_field.empty()) throw EvalError("task config missing gold_field");

    std::map<std::string, int> label_mapping;
    if (config.contains("label_mapping"))
        for (const auto& [key, value] : config["label_mapping"].items())
            label_mapping[key] = value.get<int>();

    io::RecordReader reader(base_dir / config["test_records"].get<std::string>(),
                            /*strict=*/true);
    while (auto record = reader.next()) {
        const json* gold_value = resolve_field(record->fields, gold_field);
        if (!gold_value)
            throw EvalError("test record " + std::to_string(task.test_records.size() + 1) +
                            " lacks gold column '" + gold_field + "'");
        EvalGold gold;
        if (task.kind == EvalKind::RankedClassification) {
            if (gold_value->is_number_integer() || gold_value->is_number_unsigned()) {
                gold.label = gold_value->get<int>();
            } else if (gold_value->is_string()) {
                auto it = label_mapping.find(gold_value->get<std::string>());
                if (it == label_mapping.end())
                    throw EvalError("gold value '" + gold_value->get<std::string>() +
                                    "' missing from label_mapping");
                gold.label = it->second;
            } else {
                throw EvalError("gold column must hold an integer or mapped text label");
            }
            if (gold.label < 0 || gold.label >= task.n_labels)
                throw EvalError("gold label " + std::to_string(gold.label) + " out of range");
        } else {
            if (gold_value->is_string()) {
                gold.answers.push_back(gold_value->get<std::string>());
            } else if (gold_value->is_array()) {
                for (const auto& answer : *gold_value)
                    if (answer.is_string()) gold.answers.push_back(answer.get<std::string>());
            }
            if (gold.answers.empty())
                throw EvalError("gold column must hold an answer string or list of strings");
        }
        task.test_records.push_back(std::move(*record));
        task.gold.push_back(std::move(gold));
    }
    if (task.test_records.empty()) throw EvalError("test file has no records");

    std::string variant = config.value("f1_variant", "macro");
    if (variant == "macro") {
        task.f1_variant = F1Variant::Macro;
    } else if (variant == "micro") {
        task.f1_variant = F1Variant::Micro;
    } else {
        throw EvalError("unknown f1_variant '" + variant + "'");
    }
    task.length_normalize = config.value("length_normalize", false);
    task.seed = config.value("seed", kDefaultSeed);
    return task;
}

}  // namespace ctgen
