#pragma once

#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ctgen/ctga_builder.hpp"
#include "ctgen/dataset_io.hpp"
#include "ctgen/inference_client.hpp"
#include "ctgen/task_registry.hpp"
#include "ctgen/template_engine.hpp"

namespace ctgen {

class GenerationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class Unparsable : public GenerationError {
public:
    using GenerationError::GenerationError;
};

class EmptySide : public GenerationError {
public:
    EmptySide() : GenerationError("instruction or response is empty after trimming") {}
};

class NoQuotedSpan : public GenerationError {
public:
    NoQuotedSpan() : GenerationError("response contains no double-quoted span") {}
};

struct GeneratedTask {
    std::string doc_id;
    TaskType task_type = TaskType::YesNoQA;
    std::string instruction;  // context already substituted
    std::string response;
    std::string raw;  // untouched model output
};

struct GenerationStats {
    size_t requested = 0;  // model outputs that reached the parse/extract step
    size_t parsed = 0;
    size_t filtered_unparsable = 0;
    size_t filtered_empty = 0;
    size_t endpoint_errors = 0;  // outside the requested/parsed identity
    std::map<std::string, size_t> response_histogram;

    bool identity_holds() const {
        return requested == parsed + filtered_unparsable + filtered_empty;
    }
    nlohmann::json to_json() const;
};

// Prompt a generator model was trained on: exactly the corpus input framing.
std::string conditional_prompt(const io::Document& doc, TaskType task_type);

// Splits the raw output on the first delimiter line, trims both sides, and
// substitutes every {{context}} occurrence in the instruction.
std::pair<std::string, std::string> parse_generation(const std::string& raw,
                                                     const std::string& context);

struct GenerateOptions {
    SamplingParams params = conditional_generation_defaults();
    int samples_per_doc = 1;
    uint64_t seed = kDefaultSeed;
    // Receives {"doc_id", "error"} entries for endpoint failures and drops.
    std::function<void(const nlohmann::json&)> error_sink;
};

using DocSource = std::function<std::optional<io::Document>()>;
using TaskSink = std::function<void(const GeneratedTask&)>;

GenerationStats generate_conditional(const DocSource& docs, TaskType task_type,
                                     const InferenceClient& client, const GenerateOptions& options,
                                     const TaskSink& sink,
                                     const volatile bool* interrupted = nullptr);

// Instruct mode, two-step prompting: the question prompt for a task type,
// with the document appended on its own line.
std::string instruct_question_prompt(TaskType task_type);

// First double-quoted span of a model response.
std::string extract_quoted_span(const std::string& response);

std::string instruct_generate_question(const io::Document& doc, TaskType task_type,
                                       const InferenceClient& client,
                                       const SamplingParams& params);

// QA task types: question prepended to the document. NLI: one of the five
// bundled premise/hypothesis answer templates, picked per document (seeded).
std::string instruct_answer_prompt(const io::Document& doc, const std::string& question,
                                   TaskType task_type,
                                   const std::vector<tmpl::Template>& nli_answer_templates,
                                   uint64_t seed);

std::string instruct_generate_answer(const io::Document& doc, const std::string& question,
                                     TaskType task_type, const InferenceClient& client,
                                     const SamplingParams& params,
                                     const std::vector<tmpl::Template>& nli_answer_templates,
                                     uint64_t seed);

bool instruct_mode_supports(TaskType task_type);

GenerationStats generate_instruct(const DocSource& docs, TaskType task_type,
                                  const InferenceClient& client, const GenerateOptions& options,
                                  const std::vector<tmpl::Template>& nli_answer_templates,
                                  const TaskSink& sink,
                                  const volatile bool* interrupted = nullptr);

io::InstructionPair task_to_pair(const GeneratedTask& task, const std::string& dataset,
                                 const std::string& generator);

}  // namespace ctgen
