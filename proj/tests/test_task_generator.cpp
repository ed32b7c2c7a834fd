#include <doctest.h>

#include <algorithm>
#include <filesystem>

#include "ctgen/mock_server.hpp"
#include "ctgen/task_generator.hpp"
#include "ctgen/text_protocol.hpp"

using namespace ctgen;

namespace {

const std::filesystem::path kNliTemplatesDir =
    std::filesystem::path(CTGEN_SOURCE_DIR) / "assets" / "nli_answer_templates";

MockTape tape_from_text(const std::string& json_text) {
    return MockTape::from_json(nlohmann::json::parse(json_text));
}

EndpointConfig endpoint_for(const MockServer& server) {
    EndpointConfig cfg;
    cfg.base_url = "http://127.0.0.1:" + std::to_string(server.port());
    cfg.backoff_base_ms = 1;
    return cfg;
}

DocSource docs_source(std::vector<io::Document> docs) {
    auto shared = std::make_shared<std::vector<io::Document>>(std::move(docs));
    auto index = std::make_shared<size_t>(0);
    return [shared, index]() -> std::optional<io::Document> {
        if (*index >= shared->size()) return std::nullopt;
        return (*shared)[(*index)++];
    };
}

std::vector<io::Document> make_docs(int n) {
    std::vector<io::Document> docs;
    for (int i = 0; i < n; ++i)
        docs.push_back({"doc" + std::to_string(i), "passage " + std::to_string(i), "corp"});
    return docs;
}

std::vector<tmpl::Template> load_nli_templates() {
    std::vector<tmpl::Template> out;
    std::vector<std::filesystem::path> paths;
    for (const auto& entry : std::filesystem::directory_iterator(kNliTemplatesDir))
        if (entry.path().extension() == ".tmpl") paths.push_back(entry.path());
    std::sort(paths.begin(), paths.end());
    for (const auto& p : paths) out.push_back(tmpl::Template::load_file(p));
    return out;
}

}  // namespace

TEST_CASE("parse_generation nominal, missing delimiter, substitute-all") {
    auto [instruction, response] = parse_generation("Q about {{context}}?\n<|pipe|>\nYes", "C");
    CHECK(instruction == "Q about C?");
    CHECK(response == "Yes");

    CHECK_THROWS_AS(parse_generation("no delimiter here", "C"), Unparsable);
    CHECK_THROWS_AS(parse_generation("\n<|pipe|>\nYes", "C"), EmptySide);
    CHECK_THROWS_AS(parse_generation("Q {{context}}\n<|pipe|>\n   ", "C"), EmptySide);

    auto [multi, answer] = parse_generation("{{context}} twice {{context}}\n<|pipe|>\nA", "X");
    CHECK(multi == "X twice X");
    CHECK(answer == "A");

    // The delimiter must sit on its own line.
    CHECK_THROWS_AS(parse_generation("inline <|pipe|> usage", "C"), Unparsable);
}

TEST_CASE("generate_conditional: all parsable") {
    MockServer server(
        tape_from_text(R"({"default": {"text": "Ask about {{context}}?\n<|pipe|>\nYes"}})"));
    server.start();
    InferenceClient client(endpoint_for(server), 4);

    std::vector<GeneratedTask> tasks;
    GenerateOptions options;
    auto stats = generate_conditional(docs_source(make_docs(10)), TaskType::YesNoQA, client,
                                      options, [&](const GeneratedTask& t) { tasks.push_back(t); });

    CHECK(tasks.size() == 10);
    CHECK(stats.requested == 10);
    CHECK(stats.parsed == 10);
    CHECK(stats.filtered_unparsable == 0);
    CHECK(stats.filtered_empty == 0);
    CHECK(stats.identity_holds());
    for (const auto& task : tasks) {
        CHECK(task.instruction.find("passage") != std::string::npos);
        CHECK(task.response == "Yes");
        CHECK(task.raw.find(kPipeDelimiter) != std::string::npos);
    }
    CHECK(stats.response_histogram.at("Yes") == 10);

    // Requests carried the conditional-generation defaults.
    auto log = server.request_log();
    for (const auto& entry : log) {
        CHECK(entry["top_p"].get<double>() == 0.95);
        CHECK(entry["temperature"].get<double>() == 0.5);
        CHECK(entry["max_tokens"].get<int>() == 256);
    }
}

TEST_CASE("generate_conditional: unparsable outputs dropped and counted") {
    MockServer server(tape_from_text(R"({
        "default": {"text": "About {{context}}\n<|pipe|>\nanswer"},
        "rules": [
            {"if_prompt_contains": "passage 1", "text": "no delimiter at all"},
            {"if_prompt_contains": "passage 3", "text": "missing context\n<|pipe|>\nanswer"},
            {"if_prompt_contains": "passage 5", "text": "{{context}}\n<|pipe|>\n   "}
        ]
    })"));
    server.start();
    InferenceClient client(endpoint_for(server), 2);

    std::vector<GeneratedTask> tasks;
    auto stats =
        generate_conditional(docs_source(make_docs(10)), TaskType::YesNoQA, client,
                             GenerateOptions{}, [&](const GeneratedTask& t) { tasks.push_back(t); });

    CHECK(stats.requested == 10);
    CHECK(tasks.size() == 7);
    CHECK(stats.parsed == 7);
    // "passage 1" has no delimiter; "passage 3" parses but omits the context
    // (the instruction must contain the document text verbatim).
    CHECK(stats.filtered_unparsable == 2);
    CHECK(stats.filtered_empty == 1);
    CHECK(stats.identity_holds());
}

TEST_CASE("generate_conditional: endpoint errors isolated from the identity") {
    MockServer server(tape_from_text(R"({
        "default": {"text": "About {{context}}\n<|pipe|>\nok"},
        "rules": [{"if_prompt_contains": "passage 2", "status": 404}]
    })"));
    server.start();
    InferenceClient client(endpoint_for(server), 2);

    std::vector<nlohmann::json> errors;
    GenerateOptions options;
    options.error_sink = [&](const nlohmann::json& e) { errors.push_back(e); };
    size_t emitted = 0;
    auto stats = generate_conditional(docs_source(make_docs(5)), TaskType::YesNoQA, client,
                                      options, [&](const GeneratedTask&) { ++emitted; });
    CHECK(stats.endpoint_errors == 1);
    CHECK(stats.requested == 4);
    CHECK(emitted == 4);
    CHECK(stats.identity_holds());
    REQUIRE(errors.size() == 1);
    CHECK(errors[0]["doc_id"] == "doc2");
}

TEST_CASE("samples_per_doc issues several requests per document") {
    MockServer server(
        tape_from_text(R"({"default": {"text": "Q {{context}}\n<|pipe|>\nA"}})"));
    server.start();
    InferenceClient client(endpoint_for(server), 4);

    GenerateOptions options;
    options.samples_per_doc = 3;
    size_t emitted = 0;
    auto stats = generate_conditional(docs_source(make_docs(4)), TaskType::YesNoQA, client,
                                      options, [&](const GeneratedTask&) { ++emitted; });
    CHECK(stats.requested == 12);
    CHECK(emitted == 12);
    CHECK(server.request_count() == 12);
}

TEST_CASE("instruct question prompts carry the fixed wording") {
    CHECK(instruct_question_prompt(TaskType::YesNoQA).rfind(
              "Generate exactly one question that can be answered by a yes or a no", 0) == 0);
    CHECK(instruct_question_prompt(TaskType::ExtractiveQA).find("selecting 1 to 10 words") !=
          std::string::npos);
    CHECK(instruct_question_prompt(TaskType::NaturalLanguageInference)
              .find("high-level statement or a hypothesis") != std::string::npos);
    CHECK(instruct_question_prompt(TaskType::YesNoQA).find("enclosed in quotes") !=
          std::string::npos);
    CHECK_THROWS_AS(instruct_question_prompt(TaskType::Summarization), GenerationError);
    CHECK(instruct_mode_supports(TaskType::NaturalLanguageInference));
    CHECK_FALSE(instruct_mode_supports(TaskType::Summarization));
}

TEST_CASE("extract_quoted_span takes the first quoted span") {
    CHECK(extract_quoted_span("Here: \"Is X true?\"") == "Is X true?");
    CHECK(extract_quoted_span("\"first\" then \"second\"") == "first");
    CHECK_THROWS_AS(extract_quoted_span("no quotes at all"), NoQuotedSpan);
    CHECK_THROWS_AS(extract_quoted_span("one \" quote"), NoQuotedSpan);
    CHECK_THROWS_AS(extract_quoted_span("empty \"\" span"), NoQuotedSpan);
}

TEST_CASE("instruct answer prompt: QA prepends question; NLI renders a template") {
    io::Document doc{"d1", "The sky is blue today.", "corp"};
    auto nli_templates = load_nli_templates();
    REQUIRE(nli_templates.size() == 5);

    std::string qa = instruct_answer_prompt(doc, "Is the sky blue?", TaskType::YesNoQA,
                                            nli_templates, 1);
    CHECK(qa == "Is the sky blue?\nThe sky is blue today.");

    std::string nli = instruct_answer_prompt(doc, "The sky is blue.",
                                             TaskType::NaturalLanguageInference, nli_templates, 1);
    // Hypothesis and context appear exactly once each.
    auto count_of = [&nli](const std::string& needle) {
        size_t count = 0, pos = 0;
        while ((pos = nli.find(needle, pos)) != std::string::npos) {
            ++count;
            pos += needle.size();
        }
        return count;
    };
    CHECK(count_of("The sky is blue today.") == 1);
    CHECK(count_of("The sky is blue.") == 1);

    // Template pick is deterministic per (seed, doc id).
    CHECK(instruct_answer_prompt(doc, "h", TaskType::NaturalLanguageInference, nli_templates, 9) ==
          instruct_answer_prompt(doc, "h", TaskType::NaturalLanguageInference, nli_templates, 9));
}

TEST_CASE("two-stage instruct pipeline over a cooperative mock") {
    MockServer server(tape_from_text(R"({
        "default": {"text": "Answer: Yes"},
        "rules": [
            {"if_prompt_contains": "Generate exactly one question", "text": "Sure: \"Is it good?\""}
        ]
    })"));
    server.start();
    InferenceClient client(endpoint_for(server), 2);

    std::vector<GeneratedTask> tasks;
    auto stats = generate_instruct(docs_source(make_docs(10)), TaskType::YesNoQA, client,
                                   GenerateOptions{}, {},
                                   [&](const GeneratedTask& t) { tasks.push_back(t); });
    CHECK(tasks.size() == 10);
    CHECK(stats.requested == 10);
    CHECK(stats.parsed == 10);
    CHECK(stats.identity_holds());
    CHECK(server.request_count() == 20);  // two stages per document
    for (const auto& task : tasks) {
        CHECK(task.instruction.rfind("Is it good?\n", 0) == 0);
        CHECK(task.instruction.find("passage") != std::string::npos);
        CHECK(task.response == "Answer: Yes");
    }
}

TEST_CASE("instruct pipeline counts NoQuotedSpan as filtered") {
    MockServer server(tape_from_text(R"({
        "default": {"text": "Answer: Yes"},
        "rules": [
            {"if_prompt_contains": "passage 0", "text": "no quotes"},
            {"if_prompt_contains": "Generate exactly one question", "text": "\"Q?\""}
        ]
    })"));
    server.start();
    InferenceClient client(endpoint_for(server), 1);

    size_t emitted = 0;
    auto stats = generate_instruct(docs_source(make_docs(3)), TaskType::YesNoQA, client,
                                   GenerateOptions{}, {}, [&](const GeneratedTask&) { ++emitted; });
    // "passage 0" matches before the question-prompt rule, so doc0's question
    // stage yields no quoted span.
    CHECK(stats.requested == 3);
    CHECK(stats.filtered_unparsable == 1);
    CHECK(stats.parsed == 2);
    CHECK(emitted == 2);
    CHECK(stats.identity_holds());

    CHECK_THROWS_AS(generate_instruct(docs_source(make_docs(1)), TaskType::Summarization, client,
                                      GenerateOptions{}, {}, [](const GeneratedTask&) {}),
                    GenerationError);
}

TEST_CASE("task_to_pair carries provenance and the shared pair schema") {
    GeneratedTask task{"doc7", TaskType::ExtractiveQA, "instruction text", "response text", "raw"};
    auto pair = task_to_pair(task, "corp", "conditional");
    CHECK(pair.input == "instruction text");
    CHECK(pair.output == "response text");
    CHECK(pair.meta["dataset"] == "corp");
    CHECK(pair.meta["task_type"] == "extractive question answering");
    CHECK(pair.meta["generator"] == "conditional");
    CHECK(pair.meta["doc_id"] == "doc7");
}
