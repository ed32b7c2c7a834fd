#include <doctest.h>

#include <filesystem>
#include <set>

#include "ctgen/seeded_rng.hpp"
#include "ctgen/template_engine.hpp"

using ctgen::SplitMix64;
using namespace ctgen::tmpl;

namespace {

std::string render_str(const std::string& source, const Value& bindings, uint64_t seed = 0) {
    return Template::parse(source).render(RenderContext(bindings, seed));
}

const std::filesystem::path kEvalTemplates =
    std::filesystem::path(CTGEN_SOURCE_DIR) / "assets" / "eval_templates";

}  // namespace

TEST_CASE("literal-only template renders verbatim") {
    const std::string source = "no expressions here\njust text {single brace} ok";
    CHECK(render_str(source, Value::object()) == source);
}

TEST_CASE("variable substitution") {
    CHECK(render_str("{{question}}", {{"question", ""}}) == "");
    CHECK(render_str("{{question}}", {{"question", "Q?"}}) == "Q?");
    CHECK(render_str("Hello {{ name }}!", {{"name", "world"}}) == "Hello world!");
}

TEST_CASE("dotted path with join filter") {
    Value bindings = {{"context", {{"contexts", {"A.", "B."}}}}};
    CHECK(render_str("Given a passage: {{ context.contexts | join(\" \") }}", bindings) ==
          "Given a passage: A. B.");
    CHECK(render_str("{{ context.contexts | join(\" \") }}",
                     {{"context", {{"contexts", {"only"}}}}}) == "only");
}

TEST_CASE("bracketed access and most_frequent | choice") {
    Value bindings = {{"answers", {{"text", {"x", "y", "x"}}}}};
    // "x" is the unique mode, so choice over the singleton mode set returns it
    // regardless of the seed.
    for (uint64_t seed : {uint64_t{0}, uint64_t{1}, uint64_t{99}})
        CHECK(render_str("{{answers['text'] | most_frequent | choice}}", bindings, seed) == "x");
    CHECK(render_str("{{answers[\"text\"] | join(\"-\")}}", bindings) == "x-y-x");
}

TEST_CASE("integer subscript and dynamic subscript") {
    Value bindings = {{"endings", {"e0", "e1", "e2"}}, {"label", 2}};
    CHECK(render_str("{{endings[0]}}", bindings) == "e0");
    CHECK(render_str("{{endings[label]}}", bindings) == "e2");
    Value map_bindings = {{"answers", {{"text", "t"}}}, {"key", "text"}};
    CHECK(render_str("{{answers[key]}}", map_bindings) == "t");
}

TEST_CASE("string literal expressions") {
    CHECK(render_str("is {{\"true\"}}, or {{\"false\"}}?", Value::object()) ==
          "is true, or false?");
    CHECK(render_str("{{'single'}}", Value::object()) == "single");
    CHECK(render_str("{{\"esc\\\"aped\\n\"}}", Value::object()) == "esc\"aped\n");
}

TEST_CASE("range yields half-open integer list") {
    CHECK(render_str("{{ range(1, 5) | join(\",\") }}", Value::object()) == "1,2,3,4");
    CHECK(render_str("{{ range(3, 3) | join(\",\") }}", Value::object()) == "");
}

TEST_CASE("choice is deterministic under a fixed seed") {
    const std::string source =
        "{{[\"Question\", \"Problem\"] | choice}} {{range(1, 12) | choice}}: {{question}}";
    Value bindings = {{"question", "Q?"}};
    Template t = Template::parse(source);
    std::string first = t.render(RenderContext(bindings, 42));
    std::string second = t.render(RenderContext(bindings, 42));
    CHECK(first == second);
    CHECK(first.find("Q?") != std::string::npos);
    CHECK((first.rfind("Question ", 0) == 0 || first.rfind("Problem ", 0) == 0));
}

TEST_CASE("renders are pure functions of (template, context)") {
    Value bindings = {{"xs", {"a", "b", "c", "d"}}};
    Template t = Template::parse("{{ xs | choice }}{{ xs | choice }}{{ xs | choice }}");
    for (uint64_t seed = 0; seed < 20; ++seed) {
        RenderContext ctx(bindings, seed);
        CHECK(t.render(ctx) == t.render(ctx));
    }
}

TEST_CASE("conditionals with equality comparison") {
    const std::string source =
        "{% if label == 1 %}Yes{% endif %}{% if label == 0 %}No{% endif %}";
    CHECK(render_str(source, {{"label", 1}}) == "Yes");
    CHECK(render_str(source, {{"label", 0}}) == "No");
    CHECK(render_str(source, {{"label", 2}}) == "");
    CHECK(render_str("{% if x == \"a\" %}hit{% endif %}", {{"x", "a"}}) == "hit");
    CHECK(render_str("{% if x == \"a\" %}hit{% endif %}", {{"x", "b"}}) == "");
    // Equality is typed: integer 0 is not the text "0".
    CHECK(render_str("{% if label == \"0\" %}hit{% endif %}", {{"label", 0}}) == "");
    CHECK(render_str("{% if a == 1 %}{% if b == 2 %}{{x}}{% endif %}{% endif %}",
                     {{"a", 1}, {"b", 2}, {"x", "deep"}}) == "deep");
}

TEST_CASE("whitespace inside delimiters is insignificant") {
    Value bindings = {{"q", "hello"}};
    CHECK(render_str("{{q}}", bindings) == render_str("{{  q  }}", bindings));
    CHECK(render_str("{%if q == \"hello\"%}y{%endif%}", bindings) ==
          render_str("{% if q == \"hello\" %}y{% endif %}", bindings));
}

TEST_CASE("answer choices block") {
    Template t = Template::parse("Is it so?\nanswer_choices: yes ||| no ||| maybe");
    CHECK(t.has_choices());
    RenderContext ctx(Value::object(), 0);
    CHECK(t.render_choices(ctx) == std::vector<std::string>{"yes", "no", "maybe"});
    CHECK(t.render(ctx) == "Is it so?");

    Template pipes = Template::parse("Q\nanswer_choices: Relevant|||Irrelevant");
    CHECK(pipes.render_choices(ctx) == std::vector<std::string>{"Relevant", "Irrelevant"});

    Template tfi = Template::parse("Q\nanswer_choices: False ||| True ||| Inconclusive");
    CHECK(tfi.render_choices(ctx) == std::vector<std::string>{"False", "True", "Inconclusive"});

    Template none = Template::parse("no choices here");
    CHECK_FALSE(none.has_choices());
    CHECK_THROWS_AS(none.render_choices(ctx), NoChoices);

    Template dynamic = Template::parse("Q\nanswer_choices: {{yes_label}} ||| no");
    CHECK(dynamic.render_choices(RenderContext({{"yes_label", "YES"}}, 0)) ==
          std::vector<std::string>{"YES", "no"});
}

TEST_CASE("parse errors carry byte offsets") {
    CHECK_THROWS_AS(Template::parse("{{unclosed"), SyntaxError);
    CHECK_THROWS_AS(Template::parse("{% if a == b %}no endif"), SyntaxError);
    CHECK_THROWS_AS(Template::parse("{% endif %}"), SyntaxError);
    CHECK_THROWS_AS(Template::parse("{% for x in xs %}{% endfor %}"), SyntaxError);
    CHECK_THROWS_AS(Template::parse("{% if a == b %}x{% else %}y{% endif %}"), SyntaxError);
    CHECK_THROWS_AS(Template::parse("{{ x | upper }}"), SyntaxError);
    CHECK_THROWS_AS(Template::parse("{{ x | join }}"), SyntaxError);
    CHECK_THROWS_AS(Template::parse("{{ x | choice(1) }}"), SyntaxError);
    CHECK_THROWS_AS(Template::parse("{{ [ ] | choice }}"), SyntaxError);
    CHECK_THROWS_AS(Template::parse("{{ \"unterminated }}"), SyntaxError);
    CHECK_THROWS_AS(Template::parse("{{ 1 2 }}"), SyntaxError);
    CHECK_THROWS_AS(Template::parse("Q\nanswer_choices: a ||| "), SyntaxError);

    try {
        Template::parse("abc{{ x | nosuch }}");
        FAIL("expected SyntaxError");
    } catch (const SyntaxError& e) {
        CHECK(e.offset() == 9);  // points at the filter name
        CHECK(std::string(e.what()).find("nosuch") != std::string::npos);
    }
}

TEST_CASE("render errors") {
    CHECK_THROWS_AS(render_str("{{missing}}", Value::object()), MissingVariable);
    CHECK_THROWS_AS(render_str("{{a.b}}", {{"a", "text"}}), TypeMismatch);
    CHECK_THROWS_AS(render_str("{{a.b}}", {{"a", Value::object()}}), MissingVariable);
    CHECK_THROWS_AS(render_str("{{ x | join(\",\") }}", {{"x", "not a list"}}), TypeMismatch);
    CHECK_THROWS_AS(render_str("{{ x | choice }}", {{"x", Value::array()}}), TypeMismatch);
    CHECK_THROWS_AS(render_str("{{ x }}", {{"x", Value::array()}}), TypeMismatch);
    CHECK_THROWS_AS(render_str("{{ xs[5] }}", {{"xs", {"a"}}}), TypeMismatch);
    try {
        render_str("{{ answers.text }}", {{"other", 1}});
        FAIL("expected MissingVariable");
    } catch (const MissingVariable& e) {
        CHECK(e.name() == "answers");
    }
}

TEST_CASE("most_frequent keeps ties in input order") {
    Value bindings = {{"xs", {"b", "a", "b", "a", "c"}}};
    CHECK(render_str("{{ xs | most_frequent | join(\",\") }}", bindings) == "b,a");
    CHECK(render_str("{{ xs | most_frequent | join(\",\") }}", {{"xs", {"z"}}}) == "z");
}

// ---- properties -------------------------------------------------------------

namespace {

struct GeneratedTemplate {
    std::string source;
    std::vector<std::string> literals;
    std::vector<std::string> variables;
};

GeneratedTemplate random_literal_var_template(SplitMix64& rng) {
    static const char* kChunks[] = {"plain text ", "line\nbreak ", "digits 123 ",
                                    "punct ,.;! ",  "spaces   ",   "tail"};
    GeneratedTemplate out;
    size_t pieces = 1 + rng.below(6);
    bool last_was_literal = false;
    for (size_t i = 0; i < pieces; ++i) {
        if (rng.below(2) == 0) {
            std::string chunk = kChunks[rng.below(6)];
            out.source += chunk;
            // Adjacent literal text parses as a single node.
            if (last_was_literal)
                out.literals.back() += chunk;
            else
                out.literals.push_back(chunk);
            last_was_literal = true;
        } else {
            std::string var = "v" + std::to_string(rng.below(4));
            out.source += "{{" + var + "}}";
            out.variables.push_back(var);
            last_was_literal = false;
        }
    }
    return out;
}

}  // namespace

TEST_CASE("property: serialize/parse round trip preserves structure") {
    SplitMix64 rng(7);
    for (int iter = 0; iter < 300; ++iter) {
        std::string source;
        size_t pieces = 1 + rng.below(5);
        for (size_t i = 0; i < pieces; ++i) {
            switch (rng.below(6)) {
                case 0: source += "text" + std::to_string(rng.below(50)) + " "; break;
                case 1: source += "{{v" + std::to_string(rng.below(3)) + "}}"; break;
                case 2: source += "{{ xs | most_frequent | choice }}"; break;
                case 3: source += "{{ a.b['k k'][2][idx] | join(\", \") }}"; break;
                case 4: source += "{{ [\"x\", 3, \"y\"] | choice }} {{ range(2, 9) | choice }}"; break;
                default:
                    source += "{% if v" + std::to_string(rng.below(3)) + " == " +
                              std::to_string(rng.below(4)) + " %}inner {{w}}{% endif %}";
                    break;
            }
        }
        if (rng.below(4) == 0) source += "\nanswer_choices: yes ||| no ||| {{w}} maybe";
        Template first = Template::parse(source);
        Template second = Template::parse(first.serialize());
        CHECK(first.same_structure(second));
    }
}

TEST_CASE("property: empty substitution reproduces literal segments in order") {
    SplitMix64 rng(99);
    for (int iter = 0; iter < 200; ++iter) {
        auto gen = random_literal_var_template(rng);
        Value bindings = Value::object();
        for (const auto& var : gen.variables) bindings[var] = "";
        Template t = Template::parse(gen.source);
        std::string rendered = t.render(RenderContext(bindings, iter));
        std::string expected;
        for (const auto& lit : gen.literals) expected += lit;
        CHECK(rendered == expected);
        CHECK(t.literal_segments() == gen.literals);
    }
}

TEST_CASE("property: filter closure (choice membership, most_frequent subset)") {
    SplitMix64 rng(1234);
    for (int iter = 0; iter < 200; ++iter) {
        size_t n = 1 + rng.below(8);
        Value xs = Value::array();
        std::set<std::string> members;
        for (size_t i = 0; i < n; ++i) {
            std::string item = "item" + std::to_string(rng.below(5));
            xs.push_back(item);
            members.insert(item);
        }
        Value bindings = {{"xs", xs}};
        std::string picked = render_str("{{ xs | choice }}", bindings, rng.next());
        CHECK(members.count(picked) == 1);

        std::string modes = render_str("{{ xs | most_frequent | join(\"\\n\") }}", bindings);
        std::set<std::string> mode_set;
        size_t start = 0;
        while (start <= modes.size()) {
            size_t nl = modes.find('\n', start);
            mode_set.insert(modes.substr(start, nl == std::string::npos ? nl : nl - start));
            if (nl == std::string::npos) break;
            start = nl + 1;
        }
        for (const auto& mode : mode_set) CHECK(members.count(mode) == 1);

        std::string mode_pick =
            render_str("{{ xs | most_frequent | choice }}", bindings, rng.next());
        CHECK(mode_set.count(mode_pick) == 1);
    }
}

TEST_CASE("all bundled evaluation templates parse") {
    size_t inputs = 0, targets = 0;
    for (const auto& entry : std::filesystem::recursive_directory_iterator(kEvalTemplates)) {
        if (!entry.is_regular_file()) continue;
        const auto name = entry.path().filename().string();
        CHECK_NOTHROW(Template::load_file(entry.path()));
        if (name.find(".input.") != std::string::npos) ++inputs;
        if (name.find(".target.") != std::string::npos) ++targets;
    }
    CHECK(inputs == 35);
    CHECK(targets == 35);
}

TEST_CASE("referenced roots are collected in order of first appearance") {
    Template t = Template::parse(
        "{{ context.contexts | join(\" \") }} {{question}} {{answer_choices[label]}}");
    auto roots = t.referenced_roots();
    CHECK(roots == std::vector<std::string>{"context", "question", "answer_choices", "label"});
}
