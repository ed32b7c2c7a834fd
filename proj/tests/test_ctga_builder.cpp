#include <doctest.h>

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "ctgen/ctga_builder.hpp"
#include "ctgen/seeded_rng.hpp"
#include "ctgen/task_generator.hpp"
#include "ctgen/text_protocol.hpp"

using namespace ctgen;

namespace {

struct TempDir {
    std::filesystem::path path;
    TempDir() {
        static int counter = 0;
        path = std::filesystem::temp_directory_path() /
               ("ctgen_builder_test_" + std::to_string(::getpid()) + "_" +
                std::to_string(counter++));
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
};

void write_file(const std::filesystem::path& p, const std::string& content) {
    std::filesystem::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    out << content;
}

// Registry whose meta-template responses name the template, so sampling
// counts are observable.
std::vector<MetaTemplate> make_synth_registry(const TempDir& dir, int n_templates,
                                              std::vector<std::string> datasets = {"synth"}) {
    write_file(dir.path / "in.tmpl", "{{context}}");
    std::string manifest;
    for (const auto& dataset : datasets) {
        for (int t = 0; t < n_templates; ++t) {
            std::string out_name = "out" + std::to_string(t) + ".tmpl";
            write_file(dir.path / out_name,
                       "Prompt " + std::to_string(t) + ": {{context}}\n<|pipe|>\nanswer-" +
                           std::to_string(t) + " {{x}}");
            nlohmann::json line = {{"id", dataset + "-" + std::to_string(t)},
                                   {"dataset", dataset},
                                   {"task_type", "yes-no question answering"},
                                   {"context_field", "context"},
                                   {"input_template", "in.tmpl"},
                                   {"output_template", out_name}};
            manifest += line.dump() + "\n";
        }
    }
    write_file(dir.path / "registry.jsonl", manifest);
    return load_registry(dir.path / "registry.jsonl");
}

io::SourceRecord synth_record(int i) {
    io::SourceRecord rec;
    rec.dataset = "synth";
    rec.fields = {{"context", "passage " + std::to_string(i)}, {"x", std::to_string(i)}};
    return rec;
}

}  // namespace

TEST_CASE("serialize_generator_pair frames input and output") {
    auto pair = serialize_generator_pair(TaskType::YesNoQA, "C", "Read: {{context}}\nQ?", "Yes");
    CHECK(pair.input == "<|tasktype|>\nyes-no question answering\n<|context|>\nC");
    CHECK(pair.output == "Read: {{context}}\nQ?\n<|pipe|>\nYes");
    CHECK(count_pipe_lines(pair.output) == 1);

    CHECK_THROWS_AS(serialize_generator_pair(TaskType::YesNoQA, "C", "no placeholder", "Yes"),
                    MissingContextPlaceholder);
}

TEST_CASE("parse_generation inverts serialize_generator_pair") {
    auto pair = serialize_generator_pair(TaskType::YesNoQA, "C", "Read: {{context}}\nQ?", "Yes");
    auto [instruction, response] = parse_generation(pair.output, "C");
    CHECK(instruction == "Read: C\nQ?");
    CHECK(response == "Yes");
}

TEST_CASE("property: parse of serialize recovers instruction and response") {
    SplitMix64 rng(555);
    static const char* kFragments[] = {"alpha", "beta gamma", "multi\nline", "tab\there",
                                       "digits 42", "quoted \"span\"", "punct !?"};
    auto fragment = [&rng]() { return std::string(kFragments[rng.below(7)]); };
    for (int iter = 0; iter < 500; ++iter) {
        std::string prefix = fragment();
        std::string suffix = rng.below(2) ? " " + fragment() : std::string();
        std::string instruction = prefix + " {{context}}" + suffix;  // pre-trimmed
        std::string response = fragment();
        std::string context = "ctx-" + std::to_string(rng.below(1000));

        auto pair =
            serialize_generator_pair(TaskType::ExtractiveQA, context, instruction, response);
        auto [got_instruction, got_response] = parse_generation(pair.output, context);
        CHECK(got_instruction == substitute_context(instruction, context));
        CHECK(got_response == trim(response));
    }
}

TEST_CASE("build caps per dataset in stream order") {
    TempDir dir;
    auto registry = make_synth_registry(dir, 1);
    BuildConfig cfg;
    cfg.per_dataset_cap = 100;
    CorpusBuilder builder(registry, cfg);
    size_t emitted = 0;
    for (int i = 0; i < 150; ++i)
        if (builder.process(synth_record(i))) ++emitted;
    CHECK(emitted == 100);
    CHECK(builder.stats().pairs_emitted == 100);
    CHECK(builder.stats().capped_skipped == 50);
    CHECK(builder.stats().per_dataset.at("synth") == 100);
}

TEST_CASE("single template: every pair names it; cap floor") {
    TempDir dir;
    auto registry = make_synth_registry(dir, 1);
    BuildConfig cfg;
    CorpusBuilder builder(registry, cfg);
    for (int i = 0; i < 10; ++i) {
        auto pair = builder.process(synth_record(i));
        REQUIRE(pair.has_value());
        CHECK(pair->meta["meta_template"] == "synth-0");
        CHECK(pair->meta["dataset"] == "synth");
        CHECK(pair->meta["task_type"] == "yes-no question answering");
        CHECK(count_pipe_lines(pair->output) == 1);
        CHECK(pair->output.find(kContextPlaceholder) != std::string::npos);
    }
    CHECK_THROWS_AS(([&] {
                        BuildConfig bad;
                        bad.per_dataset_cap = 0;
                        CorpusBuilder b(registry, bad);
                    }()),
                    BuildError);
}

TEST_CASE("unknown dataset raises NoTemplateForDataset") {
    TempDir dir;
    auto registry = make_synth_registry(dir, 1);
    CorpusBuilder builder(registry, BuildConfig{});
    io::SourceRecord rec;
    rec.dataset = "unregistered";
    rec.fields = {{"context", "x"}};
    CHECK_THROWS_AS(builder.process(rec), NoTemplateForDataset);
}

TEST_CASE("two-template sampling is uniform within the binomial three-sigma bound") {
    TempDir dir;
    auto registry = make_synth_registry(dir, 2);
    BuildConfig cfg;
    cfg.seed = kDefaultSeed;
    CorpusBuilder builder(registry, cfg);
    for (int i = 0; i < 10000; ++i) REQUIRE(builder.process(synth_record(i)).has_value());
    // n=10000, p=1/2: sigma = sqrt(n/4) = 50, three-sigma bound 5000 +/- 150.
    size_t t0 = builder.stats().per_template.at("synth-0");
    size_t t1 = builder.stats().per_template.at("synth-1");
    CHECK(t0 + t1 == 10000);
    CHECK(t0 >= 4850);
    CHECK(t0 <= 5150);
}

TEST_CASE("per-record sampling streams are keyed by (seed, dataset, index)") {
    TempDir dir;
    auto registry = make_synth_registry(dir, 3, {"synth", "other"});
    BuildConfig cfg;

    // Template picks for synth records 0..49, nothing else in the stream.
    std::vector<std::string> plain;
    {
        CorpusBuilder builder(registry, cfg);
        for (int i = 0; i < 50; ++i)
            plain.push_back(
                builder.process(synth_record(i))->meta["meta_template"].get<std::string>());
    }
    // Interleave records from another dataset: picks for the synth records
    // must be unperturbed.
    std::vector<std::string> interleaved;
    {
        CorpusBuilder builder(registry, cfg);
        for (int i = 0; i < 50; ++i) {
            io::SourceRecord other;
            other.dataset = "other";
            other.fields = {{"context", "o"}, {"x", "1"}};
            REQUIRE(builder.process(other).has_value());
            interleaved.push_back(
                builder.process(synth_record(i))->meta["meta_template"].get<std::string>());
        }
    }
    CHECK(plain == interleaved);
}

TEST_CASE("corpus build is byte-identical across runs") {
    TempDir dir;
    auto registry = make_synth_registry(dir, 2);
    BuildConfig cfg;

    auto run = [&](const std::filesystem::path& out) {
        io::PairWriter writer(out);
        CorpusBuilder builder(registry, cfg);
        for (int i = 0; i < 500; ++i)
            if (auto pair = builder.process(synth_record(i))) writer.write(*pair);
        writer.commit();
        std::ifstream in(out, std::ios::binary);
        return std::string(std::istreambuf_iterator<char>(in),
                           std::istreambuf_iterator<char>());
    };
    CHECK(run(dir.path / "a.jsonl") == run(dir.path / "b.jsonl"));
}

TEST_CASE("render failures carry record provenance") {
    TempDir dir;
    auto registry = make_synth_registry(dir, 1);
    CorpusBuilder builder(registry, BuildConfig{});
    io::SourceRecord rec;
    rec.dataset = "synth";
    rec.fields = {{"context", "c"}};  // missing {{x}} referenced by the output template
    try {
        builder.process(rec);
        FAIL("expected BuildError");
    } catch (const BuildError& e) {
        std::string what = e.what();
        CHECK(what.find("synth") != std::string::npos);
        CHECK(what.find("synth-0") != std::string::npos);
    }
}

TEST_CASE("column renames apply per dataset") {
    TempDir dir;
    auto registry = make_synth_registry(dir, 1);
    BuildConfig cfg;
    cfg.column_renames["synth"] = {{"passage_text", "context"}};
    CorpusBuilder builder(registry, cfg);
    io::SourceRecord rec;
    rec.dataset = "synth";
    rec.fields = {{"passage_text", "renamed passage"}, {"x", "1"}};
    auto pair = builder.process(rec);
    REQUIRE(pair.has_value());
    CHECK(pair->input.find("renamed passage") != std::string::npos);
}

TEST_CASE("conditional_prompt equals the serialized generator input") {
    io::Document doc{"id1", "C", "synth"};
    auto pair = serialize_generator_pair(TaskType::YesNoQA, doc.text, "i {{context}}", "r");
    CHECK(conditional_prompt(doc, TaskType::YesNoQA) == pair.input);

    std::string prompt = conditional_prompt(doc, TaskType::YesNoQA);
    // Last line is the context; the task type appears exactly once.
    CHECK(prompt.substr(prompt.rfind('\n') + 1) == "C");
    auto first = prompt.find("yes-no question answering");
    CHECK(first != std::string::npos);
    CHECK(prompt.find("yes-no question answering", first + 1) == std::string::npos);
}
