#include "ctgen/task_registry.hpp"

#include <algorithm>
#include <fstream>
#include <unordered_set>

#include "ctgen/dataset_io.hpp"
#include "ctgen/text_protocol.hpp"

namespace ctgen {

namespace {

struct NameEntry {
    std::string_view name;
    TaskType type;
};

constexpr std::array<NameEntry, 16> kNames{{
    {"summarization", TaskType::Summarization},
    {"sentiment", TaskType::Sentiment},
    {"multiple-choice question answering", TaskType::MultipleChoiceQA},
    {"extractive question answering", TaskType::ExtractiveQA},
    {"topic classification", TaskType::TopicClassification},
    {"natural language inference", TaskType::NaturalLanguageInference},
    {"question generation", TaskType::QuestionGeneration},
    {"text generation", TaskType::TextGeneration},
    {"question answering without choices", TaskType::QAWithoutChoices},
    {"paraphrase identification", TaskType::ParaphraseIdentification},
    {"sentence completion", TaskType::SentenceCompletion},
    {"yes-no question answering", TaskType::YesNoQA},
    {"word sense disambiguation", TaskType::WordSenseDisambiguation},
    {"paraphrase generation", TaskType::ParaphraseGeneration},
    {"textual entailment", TaskType::TextualEntailment},
    {"coreference resolution", TaskType::CoreferenceResolution},
}};

}  // namespace

std::string_view to_string(TaskType type) {
    for (const auto& entry : kNames)
        if (entry.type == type) return entry.name;
    return "unknown";
}

std::optional<TaskType> parse_task_type(std::string_view name) {
    for (const auto& entry : kNames)
        if (entry.name == name) return entry.type;
    return std::nullopt;
}

std::vector<MetaTemplate> load_registry(const std::filesystem::path& manifest_path) {
    std::ifstream probe(manifest_path);
    if (!probe) throw UnreadableFile(manifest_path.string());
    probe.close();

    const auto base_dir = manifest_path.parent_path();
    io::JsonlReader reader(manifest_path, /*strict=*/true);

    std::vector<MetaTemplate> registry;
    std::unordered_set<std::string> seen_ids;
    while (auto line = reader.next()) {
        const auto& obj = *line;
        for (const char* key :
             {"id", "dataset", "task_type", "context_field", "input_template", "output_template"}) {
            if (!obj.contains(key) || !obj[key].is_string())
                throw RegistryError("manifest line " + std::to_string(reader.line_no()) +
                                    ": missing or non-text field '" + key + "'");
        }

        MetaTemplate meta;
        meta.id = obj["id"].get<std::string>();
        meta.dataset = obj["dataset"].get<std::string>();
        meta.context_field = obj["context_field"].get<std::string>();
        meta.context_free = obj.value("context_free", false);

        if (!seen_ids.insert(meta.id).second) throw DuplicateId(meta.id);

        auto type = parse_task_type(obj["task_type"].get<std::string>());
        if (!type) throw UnknownTaskType(obj["task_type"].get<std::string>());
        meta.task_type = *type;

        auto resolve = [&base_dir](const std::string& rel) { return base_dir / rel; };
        auto input_path = resolve(obj["input_template"].get<std::string>());
        auto output_path = resolve(obj["output_template"].get<std::string>());
        try {
            meta.input_template = tmpl::Template::load_file(input_path);
            meta.output_template = tmpl::Template::load_file(output_path);
        } catch (const tmpl::TemplateError& e) {
            throw RegistryError("meta-template '" + meta.id + "': " + e.what());
        }

        auto roots = meta.input_template.referenced_roots();
        if (std::find(roots.begin(), roots.end(), meta.context_field) == roots.end())
            throw RegistryError("meta-template '" + meta.id + "': input template does not reference context field '" +
                                meta.context_field + "'");

        if (!meta.context_free) {
            const std::string& out_src = meta.output_template.source();
            size_t pipe = find_pipe_line(out_src);
            if (pipe == std::string::npos)
                throw RegistryError("meta-template '" + meta.id + "': output template has no " +
                                    std::string(kPipeDelimiter) + " line");
            if (!contains_context_placeholder(out_src.substr(0, pipe)))
                throw RegistryError("meta-template '" + meta.id +
                                    "': instruction segment lacks the {{context}} placeholder");
        }

        registry.push_back(std::move(meta));
    }
    return registry;
}

std::vector<const MetaTemplate*> templates_for(std::string_view dataset,
                                               const std::vector<MetaTemplate>& registry) {
    std::vector<const MetaTemplate*> out;
    for (const auto& meta : registry)
        if (meta.dataset == dataset) out.push_back(&meta);
    return out;
}

}  // namespace ctgen
