#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace ctgen::tmpl {

// Restricted prompt-template language: literal text, `{{ expr }}` expressions
// (variable paths, list literals, string/int literals, range(a, b)) with
// filter chains (join(sep), choice, most_frequent), and `{% if a == b %}`
// conditionals. Everything outside this set is rejected at parse time.

using Value = nlohmann::json;

class TemplateError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class SyntaxError : public TemplateError {
public:
    SyntaxError(const std::string& message, size_t byte_offset)
        : TemplateError(message + " (at byte " + std::to_string(byte_offset) + ")"),
          offset_(byte_offset) {}
    size_t offset() const { return offset_; }

private:
    size_t offset_;
};

class MissingVariable : public TemplateError {
public:
    explicit MissingVariable(const std::string& name)
        : TemplateError("missing variable: " + name), name_(name) {}
    const std::string& name() const { return name_; }

private:
    std::string name_;
};

class TypeMismatch : public TemplateError {
public:
    using TemplateError::TemplateError;
};

class NoChoices : public TemplateError {
public:
    NoChoices() : TemplateError("template has no answer choices") {}
};

struct PathSegment {
    enum class Kind { Field, IntIndex, VarIndex };
    Kind kind = Kind::Field;
    std::string name;    // Field (dotted or string-keyed) and VarIndex
    int64_t index = 0;   // IntIndex
    bool bracketed = false;  // Field written as ['key'] rather than .key

    bool operator==(const PathSegment&) const = default;
};

struct Primary {
    enum class Kind { Path, ListLiteral, StringLiteral, IntLiteral, RangeCall };
    Kind kind = Kind::Path;
    std::string root;                   // Path
    std::vector<PathSegment> segments;  // Path
    std::vector<Primary> items;         // ListLiteral
    std::string text;                   // StringLiteral
    int64_t integer = 0;                // IntLiteral
    int64_t range_lo = 0, range_hi = 0; // RangeCall

    bool operator==(const Primary&) const = default;
};

struct FilterCall {
    std::string name;
    std::vector<Primary> args;

    bool operator==(const FilterCall&) const = default;
};

struct Expr {
    Primary primary;
    std::vector<FilterCall> filters;

    bool operator==(const Expr&) const = default;
};

struct Node;
struct Conditional {
    Primary lhs;
    Primary rhs;
    std::vector<Node> body;

    bool operator==(const Conditional&) const;
};

struct Node {
    enum class Kind { Text, Expression, If };
    Kind kind = Kind::Text;
    std::string text;  // Text
    Expr expr;         // Expression
    std::shared_ptr<const Conditional> cond;  // If

    bool operator==(const Node& other) const;
};

// Immutable after construction; safe to share across concurrent renders.
class RenderContext {
public:
    RenderContext(Value bindings, uint64_t rng_seed)
        : bindings_(std::move(bindings)), rng_seed_(rng_seed) {}

    const Value& bindings() const { return bindings_; }
    uint64_t rng_seed() const { return rng_seed_; }

private:
    Value bindings_;
    uint64_t rng_seed_;
};

class Template {
public:
    // An empty template: no source, renders "".
    Template() = default;

    // Accepts the storage format: template body optionally followed by a
    // trailing block introduced by a line starting with `answer_choices:`,
    // whose remainder is a `|||`-separated list of choice sub-templates.
    static Template parse(std::string source);
    static Template load_file(const std::filesystem::path& path);

    const std::string& source() const { return source_; }
    const std::vector<Node>& ast() const { return ast_; }
    bool has_choices() const { return !choices_.empty(); }
    const std::vector<Template>& answer_choices() const;

    // Pure function of (template, ctx); `choice` draws from a splitmix64
    // stream seeded with ctx.rng_seed, fresh per render call.
    std::string render(const RenderContext& ctx) const;
    std::vector<std::string> render_choices(const RenderContext& ctx) const;

    // Canonical source reconstruction; parse(serialize()) is structurally
    // equal to this template.
    std::string serialize() const;

    // Text nodes in document order (descending into conditional bodies).
    std::vector<std::string> literal_segments() const;
    // Root variable names referenced anywhere, in order of first appearance.
    std::vector<std::string> referenced_roots() const;

    bool same_structure(const Template& other) const;

private:
    std::string source_;
    std::vector<Node> ast_;
    std::vector<Template> choices_;
};

}  // namespace ctgen::tmpl
