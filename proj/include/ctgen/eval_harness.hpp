#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "ctgen/ctga_builder.hpp"
#include "ctgen/dataset_io.hpp"
#include "ctgen/inference_client.hpp"
#include "ctgen/template_engine.hpp"

namespace ctgen {

class EvalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ReportInvalid : public EvalError {
public:
    using EvalError::EvalError;
};

enum class EvalKind { RankedClassification, ExtractiveGeneration };
enum class F1Variant { Macro, Micro };

std::string_view to_string(EvalKind kind);
std::string_view to_string(F1Variant variant);

struct PromptTemplate {
    std::string id;
    tmpl::Template body;  // carries answer choices for classification tasks
};

struct EvalGold {
    int label = -1;                    // ranked classification
    std::vector<std::string> answers;  // extractive generation
};

struct EvalTask {
    EvalKind kind = EvalKind::RankedClassification;
    std::vector<PromptTemplate> templates;  // exactly 5
    std::vector<io::SourceRecord> test_records;
    std::vector<EvalGold> gold;  // parallel to test_records
    int n_labels = 0;            // ranked classification: answer-choice count
    F1Variant f1_variant = F1Variant::Macro;
    bool length_normalize = false;  // off by default: raw summed loglikelihood
    uint64_t seed = kDefaultSeed;
};

struct EvalReport {
    EvalKind kind = EvalKind::RankedClassification;
    std::string f1_variant;  // names the variant used (classification only)
    std::vector<std::pair<std::string, double>> per_template;  // scores in [0, 100]
    double mean = 0.0;
    double stderr_ = 0.0;
    size_t n_examples = 0;

    nlohmann::json to_json() const;
};

// Argmax with ties broken to the lowest index. Exposed separately so the
// invariance properties can be tested at the aggregation boundary.
size_t pick_argmax(const std::vector<double>& totals);

// Renders the prompt, scores " " + choice continuations, returns the argmax
// choice index.
int ranked_classify(const io::SourceRecord& record, const PromptTemplate& prompt_template,
                    const InferenceClient& client, uint64_t render_seed,
                    bool length_normalize = false);

// Greedy decoding: temperature 0, top_p 1, newline stop, max_tokens 64.
std::string extractive_generate(const io::SourceRecord& record,
                                const PromptTemplate& prompt_template,
                                const InferenceClient& client, uint64_t render_seed);

EvalReport evaluate(const EvalTask& task, const InferenceClient& client);

// Task-config file: JSON object naming the 5 template files, the test file,
// kind, gold column, and (classification) label mapping. Paths are resolved
// relative to the config file.
EvalTask load_eval_task(const std::filesystem::path& config_path);

}  // namespace ctgen
