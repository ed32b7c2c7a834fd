#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "ctgen/template_engine.hpp"

namespace ctgen {

// Closed 16-value task attribute vocabulary.
enum class TaskType {
    Summarization,
    Sentiment,
    MultipleChoiceQA,
    ExtractiveQA,
    TopicClassification,
    NaturalLanguageInference,
    QuestionGeneration,
    TextGeneration,
    QAWithoutChoices,
    ParaphraseIdentification,
    SentenceCompletion,
    YesNoQA,
    WordSenseDisambiguation,
    ParaphraseGeneration,
    TextualEntailment,
    CoreferenceResolution,
};

inline constexpr std::array<TaskType, 16> kAllTaskTypes{
    TaskType::Summarization,        TaskType::Sentiment,
    TaskType::MultipleChoiceQA,     TaskType::ExtractiveQA,
    TaskType::TopicClassification,  TaskType::NaturalLanguageInference,
    TaskType::QuestionGeneration,   TaskType::TextGeneration,
    TaskType::QAWithoutChoices,     TaskType::ParaphraseIdentification,
    TaskType::SentenceCompletion,   TaskType::YesNoQA,
    TaskType::WordSenseDisambiguation, TaskType::ParaphraseGeneration,
    TaskType::TextualEntailment,    TaskType::CoreferenceResolution,
};

std::string_view to_string(TaskType type);
std::optional<TaskType> parse_task_type(std::string_view name);

class RegistryError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DuplicateId : public RegistryError {
public:
    explicit DuplicateId(const std::string& id) : RegistryError("duplicate meta-template id: " + id) {}
};

class UnknownTaskType : public RegistryError {
public:
    explicit UnknownTaskType(const std::string& name)
        : RegistryError("unknown task type: " + name) {}
};

class UnreadableFile : public RegistryError {
public:
    explicit UnreadableFile(const std::string& path) : RegistryError("cannot read: " + path) {}
};

struct MetaTemplate {
    std::string id;
    std::string dataset;
    TaskType task_type = TaskType::Summarization;
    std::string context_field;
    tmpl::Template input_template;
    tmpl::Template output_template;
    bool context_free = false;  // must stay false for shipped meta-templates
};

// Manifest: one JSON object per line with keys id, dataset, task_type,
// context_field, input_template, output_template (template values are file
// paths relative to the manifest). Validates id uniqueness, the task-type
// vocabulary, that the input template references the context field, and that
// a non-context-free output template carries a {{context}} placeholder ahead
// of its <|pipe|> line.
std::vector<MetaTemplate> load_registry(const std::filesystem::path& manifest_path);

// Order-stable sub-list for one dataset; possibly empty.
std::vector<const MetaTemplate*> templates_for(std::string_view dataset,
                                               const std::vector<MetaTemplate>& registry);

}  // namespace ctgen
