#include "ctgen/ctga_builder.hpp"

#include "ctgen/seeded_rng.hpp"
#include "ctgen/text_protocol.hpp"

namespace ctgen {

io::InstructionPair serialize_generator_pair(TaskType task_type, const std::string& context,
                                             const std::string& instruction,
                                             const std::string& response) {
    if (instruction.find(kContextPlaceholder) == std::string::npos)
        throw MissingContextPlaceholder();

    io::InstructionPair pair;
    pair.input.reserve(kTaskTypeHeader.size() + kContextHeader.size() + context.size() + 40);
    pair.input += kTaskTypeHeader;
    pair.input += '\n';
    pair.input += to_string(task_type);
    pair.input += '\n';
    pair.input += kContextHeader;
    pair.input += '\n';
    pair.input += context;

    pair.output.reserve(instruction.size() + response.size() + kPipeDelimiter.size() + 2);
    pair.output += instruction;
    pair.output += '\n';
    pair.output += kPipeDelimiter;
    pair.output += '\n';
    pair.output += response;

    pair.meta["task_type"] = std::string(to_string(task_type));
    return pair;
}

CorpusBuilder::CorpusBuilder(const std::vector<MetaTemplate>& registry, BuildConfig cfg)
    : registry_(registry), cfg_(std::move(cfg)) {
    if (cfg_.per_dataset_cap < 1) throw BuildError("per_dataset_cap must be >= 1");
    for (const auto& meta : registry_) by_dataset_[meta.dataset].push_back(&meta);
}

std::optional<io::InstructionPair> CorpusBuilder::process(const io::SourceRecord& record) {
    ++stats_.records_seen;
    auto it = by_dataset_.find(record.dataset);
    if (it == by_dataset_.end() || it->second.empty()) throw NoTemplateForDataset(record.dataset);

    uint64_t record_index = dataset_record_index_[record.dataset]++;
    if (record_index >= cfg_.per_dataset_cap) {
        ++stats_.capped_skipped;
        return std::nullopt;
    }

    const auto& candidates = it->second;
    size_t pick = 0;
    if (candidates.size() > 1) {
        // Dedicated stream per (seed, dataset, record index): inserting one
        // record never perturbs the template picks of others.
        SplitMix64 rng(derive_seed(cfg_.seed, {fnv1a64("template-pick"), fnv1a64(record.dataset),
                                               record_index}));
        pick = static_cast<size_t>(rng.below(candidates.size()));
    }
    const MetaTemplate& meta = *candidates[pick];

    nlohmann::json fields = record.fields;
    if (auto renames = cfg_.column_renames.find(record.dataset); renames != cfg_.column_renames.end()) {
        for (const auto& [from, to] : renames->second) {
            if (fields.contains(from)) {
                fields[to] = fields[from];
                fields.erase(from);
            }
        }
    }

    uint64_t render_seed =
        derive_seed(cfg_.seed, {fnv1a64("render"), fnv1a64(record.dataset), record_index});

    auto provenance = [&](const std::string& what) {
        return BuildError(what + " (dataset=" + record.dataset +
                          ", record=" + std::to_string(record_index) + ", meta_template=" + meta.id +
                          ")");
    };

    std::string context_text, output_text;
    try {
        context_text = meta.input_template.render(tmpl::RenderContext(fields, render_seed));
        // The passage slot in the output template is the variable `context`;
        // binding it to the placeholder string keeps the placeholder literal
        // in the rendered instruction.
        nlohmann::json out_fields = fields;
        out_fields["context"] = std::string(kContextPlaceholder);
        output_text = meta.output_template.render(tmpl::RenderContext(out_fields, render_seed));
    } catch (const tmpl::TemplateError& e) {
        throw provenance(std::string("render failed: ") + e.what());
    }

    if (count_pipe_lines(output_text) != 1)
        throw provenance("output template must render exactly one " +
                         std::string(kPipeDelimiter) + " line");
    auto parts = split_on_pipe(output_text);
    std::string instruction = trim(parts->first);
    std::string response = trim(parts->second);
    if (instruction.empty() || response.empty())
        throw provenance("rendered instruction or response is empty");

    io::InstructionPair pair;
    try {
        pair = serialize_generator_pair(meta.task_type, context_text, instruction, response);
    } catch (const MissingContextPlaceholder&) {
        throw provenance("rendered instruction lacks the {{context}} placeholder");
    }
    pair.meta["dataset"] = record.dataset;
    pair.meta["meta_template"] = meta.id;

    ++stats_.pairs_emitted;
    ++stats_.per_dataset[record.dataset];
    ++stats_.per_template[meta.id];
    return pair;
}

size_t build_corpus(io::RecordReader& records, const std::vector<MetaTemplate>& registry,
                    const BuildConfig& cfg, io::PairWriter& writer, BuildStats* stats_out,
                    const volatile bool* interrupted) {
    CorpusBuilder builder(registry, cfg);
    while (auto record = records.next()) {
        if (interrupted && *interrupted) {
            if (stats_out) *stats_out = builder.stats();
            throw BuildError("interrupted; partial output kept");
        }
        if (auto pair = builder.process(*record)) writer.write(*pair);
    }
    if (stats_out) *stats_out = builder.stats();
    writer.commit();
    return writer.count();
}

}  // namespace ctgen
