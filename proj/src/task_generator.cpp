#include "ctgen/task_generator.hpp"

#include <algorithm>

#include "ctgen/seeded_rng.hpp"
#include "ctgen/text_protocol.hpp"

namespace ctgen {

namespace {

constexpr size_t kHistogramCap = 20;

void record_response(GenerationStats& stats, const std::string& response) {
    ++stats.response_histogram[trim(response)];
}

nlohmann::json histogram_to_json(const std::map<std::string, size_t>& histogram) {
    // Top entries by count, ties lexicographic, so the stats file is stable.
    std::vector<std::pair<std::string, size_t>> entries(histogram.begin(), histogram.end());
    std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    if (entries.size() > kHistogramCap) entries.resize(kHistogramCap);
    nlohmann::json out = nlohmann::json::array();
    for (const auto& [response, count] : entries)
        out.push_back({{"response", response}, {"count", count}});
    return out;
}

void report_error(const GenerateOptions& options, const std::string& doc_id,
                  const std::string& error) {
    if (options.error_sink) options.error_sink({{"doc_id", doc_id}, {"error", error}});
}

// Pulls documents in chunks so generation streams instead of buffering the
// whole corpus.
std::vector<io::Document> pull_chunk(const DocSource& docs, size_t chunk) {
    std::vector<io::Document> out;
    out.reserve(chunk);
    while (out.size() < chunk) {
        auto doc = docs();
        if (!doc) break;
        out.push_back(std::move(*doc));
    }
    return out;
}

}  // namespace

nlohmann::json GenerationStats::to_json() const {
    nlohmann::json out;
    out["requested"] = requested;
    out["parsed"] = parsed;
    out["filtered_unparsable"] = filtered_unparsable;
    out["filtered_empty"] = filtered_empty;
    out["endpoint_errors"] = endpoint_errors;
    out["response_histogram"] = histogram_to_json(response_histogram);
    return out;
}

std::string conditional_prompt(const io::Document& doc, TaskType task_type) {
    // Must match the corpus serialization exactly; a generator trained on the
    // corpus sees its training distribution at inference time.
    std::string prompt;
    prompt += kTaskTypeHeader;
    prompt += '\n';
    prompt += to_string(task_type);
    prompt += '\n';
    prompt += kContextHeader;
    prompt += '\n';
    prompt += doc.text;
    return prompt;
}

std::pair<std::string, std::string> parse_generation(const std::string& raw,
                                                     const std::string& context) {
    auto parts = split_on_pipe(raw);
    if (!parts)
        throw Unparsable("generation lacks a " + std::string(kPipeDelimiter) + " line");
    std::string instruction = trim(parts->first);
    std::string response = trim(parts->second);
    if (instruction.empty() || response.empty()) throw EmptySide();
    // Untrusted model output: plain string replacement, never template
    // rendering.
    instruction = substitute_context(instruction, context);
    return {std::move(instruction), std::move(response)};
}

GenerationStats generate_conditional(const DocSource& docs, TaskType task_type,
                                     const InferenceClient& client, const GenerateOptions& options,
                                     const TaskSink& sink, const volatile bool* interrupted) {
    GenerationStats stats;
    const size_t chunk_size =
        std::max<size_t>(16, static_cast<size_t>(client.max_in_flight()) * 4);

    while (true) {
        if (interrupted && *interrupted) break;
        auto chunk = pull_chunk(docs, chunk_size);
        if (chunk.empty()) break;

        std::vector<std::string> prompts;
        std::vector<size_t> doc_of_prompt;
        for (size_t d = 0; d < chunk.size(); ++d) {
            for (int s = 0; s < options.samples_per_doc; ++s) {
                prompts.push_back(conditional_prompt(chunk[d], task_type));
                doc_of_prompt.push_back(d);
            }
        }

        auto outcomes = client.complete_batch(prompts, options.params);
        for (size_t i = 0; i < outcomes.size(); ++i) {
            const io::Document& doc = chunk[doc_of_prompt[i]];
            if (!outcomes[i].ok()) {
                ++stats.endpoint_errors;
                report_error(options, doc.id, outcomes[i].error);
                continue;
            }
            ++stats.requested;
            const std::string& raw = outcomes[i].value->text;
            try {
                auto [instruction, response] = parse_generation(raw, doc.text);
                if (instruction.find(doc.text) == std::string::npos)
                    throw Unparsable("instruction does not reference the context");
                GeneratedTask task{doc.id, task_type, std::move(instruction), std::move(response),
                                   raw};
                ++stats.parsed;
                record_response(stats, task.response);
                sink(task);
            } catch (const EmptySide& e) {
                ++stats.filtered_empty;
                report_error(options, doc.id, e.what());
            } catch (const Unparsable& e) {
                ++stats.filtered_unparsable;
                report_error(options, doc.id, e.what());
            }
        }
    }
    return stats;
}

std::string instruct_question_prompt(TaskType task_type) {
    switch (task_type) {
        case TaskType::YesNoQA:
            return "Generate exactly one question that can be answered by a yes or a no for the "
                   "paragraph below. The question should be parsable and enclosed in quotes "
                   "(\"\").";
        case TaskType::ExtractiveQA:
            return "Generate exactly one question that can be answered by selecting 1 to 10 words "
                   "from the paragraph below. The question should be parsable and enclosed in "
                   "quotes (\"\").";
        case TaskType::NaturalLanguageInference:
            return "Generate exactly one high-level statement or a hypothesis for the following "
                   "paragraph. The hypothesis about the paragraph can be true, false, or neither. "
                   "Make sure the output is less than 10 words. The hypothesis should be parsable "
                   "and enclosed in quotes (\"\").";
        default:
            throw GenerationError("instruct mode does not support task type: " +
                                  std::string(to_string(task_type)));
    }
}

bool instruct_mode_supports(TaskType task_type) {
    return task_type == TaskType::YesNoQA || task_type == TaskType::ExtractiveQA ||
           task_type == TaskType::NaturalLanguageInference;
}

std::string extract_quoted_span(const std::string& response) {
    size_t open = response.find('"');
    if (open == std::string::npos) throw NoQuotedSpan();
    size_t close = response.find('"', open + 1);
    if (close == std::string::npos || close == open + 1) throw NoQuotedSpan();
    return response.substr(open + 1, close - open - 1);
}

std::string instruct_generate_question(const io::Document& doc, TaskType task_type,
                                       const InferenceClient& client,
                                       const SamplingParams& params) {
    std::string prompt = instruct_question_prompt(task_type) + "\n" + doc.text;
    auto completion = client.complete(prompt, params);
    return extract_quoted_span(completion.text);
}

std::string instruct_answer_prompt(const io::Document& doc, const std::string& question,
                                   TaskType task_type,
                                   const std::vector<tmpl::Template>& nli_answer_templates,
                                   uint64_t seed) {
    if (task_type == TaskType::NaturalLanguageInference) {
        if (nli_answer_templates.empty())
            throw GenerationError("no NLI answer templates configured");
        SplitMix64 rng(derive_seed(seed, {fnv1a64("nli-answer-template"), fnv1a64(doc.id)}));
        size_t pick = static_cast<size_t>(rng.below(nli_answer_templates.size()));
        nlohmann::json bindings;
        bindings["premise"] = doc.text;
        bindings["hypothesis"] = question;
        return nli_answer_templates[pick].render(tmpl::RenderContext(bindings, seed));
    }
    return question + "\n" + doc.text;
}

std::string instruct_generate_answer(const io::Document& doc, const std::string& question,
                                     TaskType task_type, const InferenceClient& client,
                                     const SamplingParams& params,
                                     const std::vector<tmpl::Template>& nli_answer_templates,
                                     uint64_t seed) {
    std::string prompt =
        instruct_answer_prompt(doc, question, task_type, nli_answer_templates, seed);
    auto completion = client.complete(prompt, params);
    return trim(completion.text);
}

GenerationStats generate_instruct(const DocSource& docs, TaskType task_type,
                                  const InferenceClient& client, const GenerateOptions& options,
                                  const std::vector<tmpl::Template>& nli_answer_templates,
                                  const TaskSink& sink, const volatile bool* interrupted) {
    if (!instruct_mode_supports(task_type))
        throw GenerationError("instruct mode does not support task type: " +
                              std::string(to_string(task_type)));

    GenerationStats stats;
    const size_t chunk_size =
        std::max<size_t>(16, static_cast<size_t>(client.max_in_flight()) * 4);

    while (true) {
        if (interrupted && *interrupted) break;
        auto chunk = pull_chunk(docs, chunk_size);
        if (chunk.empty()) break;

        std::vector<size_t> doc_of_item;
        for (size_t d = 0; d < chunk.size(); ++d)
            for (int s = 0; s < options.samples_per_doc; ++s) doc_of_item.push_back(d);

        struct ItemResult {
            enum class Status { Ok, NoSpan, Empty } status = Status::Ok;
            GeneratedTask task;
            std::string detail;
        };
        // Parse/extract failures are ordinary results; only endpoint errors
        // escape as exceptions.
        auto outcomes = run_bounded<ItemResult>(
            doc_of_item.size(), client.max_in_flight(), [&](size_t i) {
                const io::Document& doc = chunk[doc_of_item[i]];
                std::string question_prompt =
                    instruct_question_prompt(task_type) + "\n" + doc.text;
                auto q_completion = client.complete(question_prompt, options.params);
                std::string question;
                try {
                    question = extract_quoted_span(q_completion.text);
                } catch (const NoQuotedSpan& e) {
                    return ItemResult{ItemResult::Status::NoSpan, {}, e.what()};
                }
                std::string answer_prompt = instruct_answer_prompt(
                    doc, question, task_type, nli_answer_templates, options.seed);
                auto a_completion = client.complete(answer_prompt, options.params);
                std::string answer = trim(a_completion.text);
                if (answer.empty()) return ItemResult{ItemResult::Status::Empty, {}, "empty answer"};
                GeneratedTask task{doc.id, task_type, answer_prompt, answer,
                                   q_completion.text + "\n" + a_completion.text};
                return ItemResult{ItemResult::Status::Ok, std::move(task), {}};
            });

        for (size_t i = 0; i < outcomes.size(); ++i) {
            const io::Document& doc = chunk[doc_of_item[i]];
            if (!outcomes[i].ok()) {
                ++stats.endpoint_errors;
                report_error(options, doc.id, outcomes[i].error);
                continue;
            }
            const ItemResult& result = *outcomes[i].value;
            ++stats.requested;
            switch (result.status) {
                case ItemResult::Status::Ok:
                    ++stats.parsed;
                    record_response(stats, result.task.response);
                    sink(result.task);
                    break;
                case ItemResult::Status::NoSpan:
                    ++stats.filtered_unparsable;
                    report_error(options, doc.id, result.detail);
                    break;
                case ItemResult::Status::Empty:
                    ++stats.filtered_empty;
                    report_error(options, doc.id, result.detail);
                    break;
            }
        }
    }
    return stats;
}

io::InstructionPair task_to_pair(const GeneratedTask& task, const std::string& dataset,
                                 const std::string& generator) {
    io::InstructionPair pair;
    pair.input = task.instruction;
    pair.output = task.response;
    pair.meta["dataset"] = dataset;
    pair.meta["task_type"] = std::string(to_string(task.task_type));
    pair.meta["generator"] = generator;
    pair.meta["doc_id"] = task.doc_id;
    return pair;
}

}  // namespace ctgen
