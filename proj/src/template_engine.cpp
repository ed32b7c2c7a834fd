#include "ctgen/template_engine.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "ctgen/seeded_rng.hpp"

namespace ctgen::tmpl {

bool Conditional::operator==(const Conditional& other) const {
    return lhs == other.lhs && rhs == other.rhs && body == other.body;
}

bool Node::operator==(const Node& other) const {
    if (kind != other.kind) return false;
    switch (kind) {
        case Kind::Text: return text == other.text;
        case Kind::Expression: return expr == other.expr;
        case Kind::If:
            if (cond == other.cond) return true;
            if (!cond || !other.cond) return false;
            return *cond == *other.cond;
    }
    return false;
}

namespace {

constexpr std::string_view kChoicesMarker = "answer_choices:";

bool is_ident_start(char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_';
}
bool is_ident_char(char c) { return is_ident_start(c) || (c >= '0' && c <= '9'); }
bool is_digit(char c) { return c >= '0' && c <= '9'; }

std::string trim_copy(std::string_view s) {
    size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

class Parser {
public:
    explicit Parser(const std::string& src) : src_(src) {}

    std::vector<Node> parse_body() {
        auto nodes = parse_nodes(false);
        return nodes;
    }

private:
    const std::string& src_;
    size_t pos_ = 0;

    [[noreturn]] void fail(const std::string& msg, size_t at) const {
        throw SyntaxError(msg, at);
    }

    bool starts_with(std::string_view s) const {
        return src_.compare(pos_, s.size(), s) == 0;
    }

    void skip_ws() {
        while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
    }

    void expect(std::string_view s, const std::string& what) {
        skip_ws();
        if (!starts_with(s)) fail("expected " + what, pos_);
        pos_ += s.size();
    }

    // Returns position of the next `{{` or `{%`, or npos.
    size_t find_next_tag(size_t from) const {
        size_t a = src_.find("{{", from);
        size_t b = src_.find("{%", from);
        return std::min(a, b);
    }

    std::vector<Node> parse_nodes(bool inside_if) {
        std::vector<Node> nodes;
        while (pos_ < src_.size()) {
            size_t tag = find_next_tag(pos_);
            if (tag == std::string::npos) {
                if (inside_if) fail("unclosed {% if %}", pos_);
                Node n;
                n.kind = Node::Kind::Text;
                n.text = src_.substr(pos_);
                if (!n.text.empty()) nodes.push_back(std::move(n));
                pos_ = src_.size();
                return nodes;
            }
            if (tag > pos_) {
                Node n;
                n.kind = Node::Kind::Text;
                n.text = src_.substr(pos_, tag - pos_);
                nodes.push_back(std::move(n));
                pos_ = tag;
            }
            if (starts_with("{{")) {
                size_t open = pos_;
                pos_ += 2;
                Node n;
                n.kind = Node::Kind::Expression;
                n.expr = parse_expr();
                skip_ws();
                if (!starts_with("}}")) fail("unclosed {{ }} expression", open);
                pos_ += 2;
                nodes.push_back(std::move(n));
            } else {  // "{%"
                size_t open = pos_;
                pos_ += 2;
                skip_ws();
                std::string kw = read_ident("statement keyword");
                if (kw == "endif") {
                    expect("%}", "%} after endif");
                    if (!inside_if) fail("{% endif %} without matching {% if %}", open);
                    return nodes;
                }
                if (kw != "if") fail("unsupported statement '" + kw + "'", open);
                auto cond = std::make_shared<Conditional>();
                cond->lhs = parse_primary();
                skip_ws();
                if (!starts_with("==")) fail("expected == comparison in {% if %}", pos_);
                pos_ += 2;
                cond->rhs = parse_primary();
                expect("%}", "%} closing {% if %}");
                cond->body = parse_nodes(true);
                Node n;
                n.kind = Node::Kind::If;
                n.cond = std::move(cond);
                nodes.push_back(std::move(n));
            }
        }
        if (inside_if) fail("unclosed {% if %}", pos_);
        return nodes;
    }

    std::string read_ident(const std::string& what) {
        skip_ws();
        if (pos_ >= src_.size() || !is_ident_start(src_[pos_])) fail("expected " + what, pos_);
        size_t b = pos_;
        while (pos_ < src_.size() && is_ident_char(src_[pos_])) ++pos_;
        return src_.substr(b, pos_ - b);
    }

    int64_t read_int(const std::string& what) {
        skip_ws();
        size_t b = pos_;
        if (pos_ < src_.size() && src_[pos_] == '-') ++pos_;
        if (pos_ >= src_.size() || !is_digit(src_[pos_])) fail("expected " + what, b);
        while (pos_ < src_.size() && is_digit(src_[pos_])) ++pos_;
        return std::stoll(src_.substr(b, pos_ - b));
    }

    std::string read_string_literal() {
        skip_ws();
        size_t open = pos_;
        char quote = src_[pos_];
        ++pos_;
        std::string out;
        while (pos_ < src_.size()) {
            char c = src_[pos_];
            if (c == quote) {
                ++pos_;
                return out;
            }
            if (c == '\\') {
                if (pos_ + 1 >= src_.size()) fail("unterminated escape in string literal", pos_);
                char e = src_[pos_ + 1];
                switch (e) {
                    case 'n': out += '\n'; break;
                    case 't': out += '\t'; break;
                    case '\\': out += '\\'; break;
                    case '"': out += '"'; break;
                    case '\'': out += '\''; break;
                    default: fail(std::string("unsupported escape '\\") + e + "'", pos_);
                }
                pos_ += 2;
                continue;
            }
            if (c == '\n') fail("unterminated string literal", open);
            out += c;
            ++pos_;
        }
        fail("unterminated string literal", open);
    }

    Primary parse_primary() {
        skip_ws();
        if (pos_ >= src_.size()) fail("expected expression", pos_);
        char c = src_[pos_];
        Primary p;
        if (c == '"' || c == '\'') {
            p.kind = Primary::Kind::StringLiteral;
            p.text = read_string_literal();
            return p;
        }
        if (c == '-' || is_digit(c)) {
            p.kind = Primary::Kind::IntLiteral;
            p.integer = read_int("integer literal");
            return p;
        }
        if (c == '[') {
            ++pos_;
            p.kind = Primary::Kind::ListLiteral;
            skip_ws();
            if (starts_with("]")) fail("empty list literal", pos_);
            while (true) {
                skip_ws();
                char ic = pos_ < src_.size() ? src_[pos_] : '\0';
                Primary item;
                if (ic == '"' || ic == '\'') {
                    item.kind = Primary::Kind::StringLiteral;
                    item.text = read_string_literal();
                } else if (ic == '-' || is_digit(ic)) {
                    item.kind = Primary::Kind::IntLiteral;
                    item.integer = read_int("integer literal");
                } else {
                    fail("list literals may only contain string or integer literals", pos_);
                }
                p.items.push_back(std::move(item));
                skip_ws();
                if (starts_with(",")) {
                    ++pos_;
                    continue;
                }
                if (starts_with("]")) {
                    ++pos_;
                    return p;
                }
                fail("expected , or ] in list literal", pos_);
            }
        }
        if (!is_ident_start(c)) fail("malformed expression", pos_);
        std::string ident = read_ident("identifier");
        skip_ws();
        if (ident == "range" && starts_with("(")) {
            ++pos_;
            p.kind = Primary::Kind::RangeCall;
            p.range_lo = read_int("range() lower bound");
            expect(",", ", between range() bounds");
            p.range_hi = read_int("range() upper bound");
            expect(")", ") closing range()");
            return p;
        }
        p.kind = Primary::Kind::Path;
        p.root = std::move(ident);
        while (true) {
            skip_ws();
            if (starts_with(".")) {
                ++pos_;
                PathSegment seg;
                seg.kind = PathSegment::Kind::Field;
                seg.name = read_ident("field name after '.'");
                p.segments.push_back(std::move(seg));
                continue;
            }
            if (starts_with("[")) {
                ++pos_;
                skip_ws();
                PathSegment seg;
                char bc = pos_ < src_.size() ? src_[pos_] : '\0';
                if (bc == '"' || bc == '\'') {
                    seg.kind = PathSegment::Kind::Field;
                    seg.name = read_string_literal();
                    seg.bracketed = true;
                } else if (bc == '-' || is_digit(bc)) {
                    seg.kind = PathSegment::Kind::IntIndex;
                    seg.index = read_int("subscript");
                } else if (is_ident_start(bc)) {
                    seg.kind = PathSegment::Kind::VarIndex;
                    seg.name = read_ident("subscript variable");
                } else {
                    fail("malformed subscript", pos_);
                }
                expect("]", "] closing subscript");
                p.segments.push_back(std::move(seg));
                continue;
            }
            break;
        }
        return p;
    }

    Expr parse_expr() {
        Expr e;
        e.primary = parse_primary();
        while (true) {
            skip_ws();
            if (!starts_with("|") || starts_with("||")) break;
            ++pos_;
            size_t at = pos_;
            FilterCall f;
            f.name = read_ident("filter name");
            skip_ws();
            if (starts_with("(")) {
                ++pos_;
                skip_ws();
                if (!starts_with(")")) {
                    while (true) {
                        f.args.push_back(parse_primary());
                        skip_ws();
                        if (starts_with(",")) {
                            ++pos_;
                            continue;
                        }
                        break;
                    }
                }
                expect(")", ") closing filter arguments");
            }
            validate_filter(f, at);
            e.filters.push_back(std::move(f));
        }
        return e;
    }

    void validate_filter(const FilterCall& f, size_t at) {
        if (f.name == "join") {
            if (f.args.size() != 1 || f.args[0].kind != Primary::Kind::StringLiteral)
                fail("join takes exactly one string argument", at);
            return;
        }
        if (f.name == "choice" || f.name == "most_frequent") {
            if (!f.args.empty()) fail(f.name + " takes no arguments", at);
            return;
        }
        fail("unknown filter '" + f.name + "'", at);
    }
};

// ---- rendering -------------------------------------------------------------

struct RenderState {
    const Value& bindings;
    SplitMix64 rng;
};

std::string type_name(const Value& v) {
    if (v.is_string()) return "text";
    if (v.is_array()) return "list";
    if (v.is_object()) return "map";
    if (v.is_number_integer() || v.is_number_unsigned()) return "integer";
    if (v.is_number_float()) return "number";
    if (v.is_boolean()) return "boolean";
    return "null";
}

std::string path_display(const Primary& p, size_t upto) {
    std::string s = p.root;
    for (size_t i = 0; i < upto && i < p.segments.size(); ++i) {
        const auto& seg = p.segments[i];
        switch (seg.kind) {
            case PathSegment::Kind::Field: s += "." + seg.name; break;
            case PathSegment::Kind::IntIndex: s += "[" + std::to_string(seg.index) + "]"; break;
            case PathSegment::Kind::VarIndex: s += "[" + seg.name + "]"; break;
        }
    }
    return s;
}

Value eval_primary(const Primary& p, RenderState& st);

Value lookup_root(const std::string& name, RenderState& st) {
    if (!st.bindings.is_object() || !st.bindings.contains(name)) throw MissingVariable(name);
    return st.bindings.at(name);
}

Value eval_path(const Primary& p, RenderState& st) {
    Value cur = lookup_root(p.root, st);
    for (size_t i = 0; i < p.segments.size(); ++i) {
        const auto& seg = p.segments[i];
        switch (seg.kind) {
            case PathSegment::Kind::Field: {
                if (!cur.is_object())
                    throw TypeMismatch("cannot access field '" + seg.name + "' of " +
                                       type_name(cur) + " value " + path_display(p, i));
                if (!cur.contains(seg.name)) throw MissingVariable(path_display(p, i + 1));
                cur = cur.at(seg.name);
                break;
            }
            case PathSegment::Kind::IntIndex: {
                if (!cur.is_array())
                    throw TypeMismatch("cannot index " + type_name(cur) + " value " +
                                       path_display(p, i));
                if (seg.index < 0 || static_cast<size_t>(seg.index) >= cur.size())
                    throw TypeMismatch("index " + std::to_string(seg.index) +
                                       " out of range for " + path_display(p, i));
                cur = cur.at(static_cast<size_t>(seg.index));
                break;
            }
            case PathSegment::Kind::VarIndex: {
                Value key = lookup_root(seg.name, st);
                if (cur.is_array()) {
                    if (!key.is_number_integer() && !key.is_number_unsigned())
                        throw TypeMismatch("list subscript '" + seg.name + "' must be an integer, got " +
                                           type_name(key));
                    auto idx = key.get<int64_t>();
                    if (idx < 0 || static_cast<size_t>(idx) >= cur.size())
                        throw TypeMismatch("index " + std::to_string(idx) + " out of range for " +
                                           path_display(p, i));
                    cur = cur.at(static_cast<size_t>(idx));
                } else if (cur.is_object()) {
                    if (!key.is_string())
                        throw TypeMismatch("map subscript '" + seg.name + "' must be text, got " +
                                           type_name(key));
                    auto k = key.get<std::string>();
                    if (!cur.contains(k)) throw MissingVariable(path_display(p, i) + "[" + k + "]");
                    cur = cur.at(k);
                } else {
                    throw TypeMismatch("cannot subscript " + type_name(cur) + " value " +
                                       path_display(p, i));
                }
                break;
            }
        }
    }
    return cur;
}

Value eval_primary(const Primary& p, RenderState& st) {
    switch (p.kind) {
        case Primary::Kind::Path: return eval_path(p, st);
        case Primary::Kind::StringLiteral: return Value(p.text);
        case Primary::Kind::IntLiteral: return Value(p.integer);
        case Primary::Kind::ListLiteral: {
            Value arr = Value::array();
            for (const auto& item : p.items) arr.push_back(eval_primary(item, st));
            return arr;
        }
        case Primary::Kind::RangeCall: {
            Value arr = Value::array();
            for (int64_t v = p.range_lo; v < p.range_hi; ++v) arr.push_back(v);
            return arr;
        }
    }
    throw TemplateError("unreachable primary kind");
}

std::string stringify_scalar(const Value& v, const std::string& what) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number_integer()) return std::to_string(v.get<int64_t>());
    if (v.is_number_unsigned()) return std::to_string(v.get<uint64_t>());
    throw TypeMismatch(what + " must reduce to text or an integer, got " + type_name(v));
}

Value apply_filter(const FilterCall& f, Value in, RenderState& st) {
    if (f.name == "join") {
        if (!in.is_array()) throw TypeMismatch("join expects a list, got " + type_name(in));
        const std::string sep = f.args[0].text;
        std::string out;
        bool first = true;
        for (const auto& item : in) {
            if (!first) out += sep;
            first = false;
            out += stringify_scalar(item, "join element");
        }
        return Value(out);
    }
    if (f.name == "choice") {
        if (!in.is_array()) throw TypeMismatch("choice expects a list, got " + type_name(in));
        if (in.empty()) throw TypeMismatch("choice expects a non-empty list");
        return in.at(static_cast<size_t>(st.rng.below(in.size())));
    }
    if (f.name == "most_frequent") {
        if (!in.is_array()) throw TypeMismatch("most_frequent expects a list, got " + type_name(in));
        // Distinct elements with maximal count, ordered by first appearance.
        std::vector<Value> distinct;
        std::vector<size_t> counts;
        for (const auto& item : in) {
            bool found = false;
            for (size_t i = 0; i < distinct.size(); ++i) {
                if (distinct[i] == item) {
                    ++counts[i];
                    found = true;
                    break;
                }
            }
            if (!found) {
                distinct.push_back(item);
                counts.push_back(1);
            }
        }
        size_t max_count = 0;
        for (size_t c : counts) max_count = std::max(max_count, c);
        Value out = Value::array();
        for (size_t i = 0; i < distinct.size(); ++i)
            if (counts[i] == max_count) out.push_back(distinct[i]);
        return out;
    }
    throw TemplateError("unreachable filter " + f.name);
}

void render_nodes(const std::vector<Node>& nodes, RenderState& st, std::string& out) {
    for (const auto& node : nodes) {
        switch (node.kind) {
            case Node::Kind::Text:
                out += node.text;
                break;
            case Node::Kind::Expression: {
                Value v = eval_primary(node.expr.primary, st);
                for (const auto& f : node.expr.filters) v = apply_filter(f, std::move(v), st);
                out += stringify_scalar(v, "expression");
                break;
            }
            case Node::Kind::If: {
                Value lhs = eval_primary(node.cond->lhs, st);
                Value rhs = eval_primary(node.cond->rhs, st);
                if (lhs == rhs) render_nodes(node.cond->body, st, out);
                break;
            }
        }
    }
}

// ---- serialization ---------------------------------------------------------

std::string escape_string_literal(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
        switch (c) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\t': out += "\\t"; break;
            default: out += c;
        }
    }
    out += '"';
    return out;
}

std::string primary_repr(const Primary& p) {
    switch (p.kind) {
        case Primary::Kind::Path: {
            std::string s = p.root;
            for (const auto& seg : p.segments) {
                switch (seg.kind) {
                    case PathSegment::Kind::Field:
                        if (seg.bracketed)
                            s += "[" + escape_string_literal(seg.name) + "]";
                        else
                            s += "." + seg.name;
                        break;
                    case PathSegment::Kind::IntIndex:
                        s += "[" + std::to_string(seg.index) + "]";
                        break;
                    case PathSegment::Kind::VarIndex:
                        s += "[" + seg.name + "]";
                        break;
                }
            }
            return s;
        }
        case Primary::Kind::StringLiteral: return escape_string_literal(p.text);
        case Primary::Kind::IntLiteral: return std::to_string(p.integer);
        case Primary::Kind::ListLiteral: {
            std::string s = "[";
            for (size_t i = 0; i < p.items.size(); ++i) {
                if (i) s += ", ";
                s += primary_repr(p.items[i]);
            }
            return s + "]";
        }
        case Primary::Kind::RangeCall:
            return "range(" + std::to_string(p.range_lo) + ", " + std::to_string(p.range_hi) + ")";
    }
    return {};
}

std::string expr_repr(const Expr& e) {
    std::string s = primary_repr(e.primary);
    for (const auto& f : e.filters) {
        s += " | " + f.name;
        if (!f.args.empty()) {
            s += "(";
            for (size_t i = 0; i < f.args.size(); ++i) {
                if (i) s += ", ";
                s += primary_repr(f.args[i]);
            }
            s += ")";
        }
    }
    return s;
}

void serialize_nodes(const std::vector<Node>& nodes, std::string& out) {
    for (const auto& node : nodes) {
        switch (node.kind) {
            case Node::Kind::Text:
                out += node.text;
                break;
            case Node::Kind::Expression:
                out += "{{" + expr_repr(node.expr) + "}}";
                break;
            case Node::Kind::If:
                out += "{% if " + primary_repr(node.cond->lhs) + " == " +
                       primary_repr(node.cond->rhs) + " %}";
                serialize_nodes(node.cond->body, out);
                out += "{% endif %}";
                break;
        }
    }
}

void collect_segments(const std::vector<Node>& nodes, std::vector<std::string>& out) {
    for (const auto& node : nodes) {
        if (node.kind == Node::Kind::Text) out.push_back(node.text);
        if (node.kind == Node::Kind::If) collect_segments(node.cond->body, out);
    }
}

void collect_roots_primary(const Primary& p, std::vector<std::string>& out) {
    auto add = [&out](const std::string& name) {
        if (std::find(out.begin(), out.end(), name) == out.end()) out.push_back(name);
    };
    if (p.kind == Primary::Kind::Path) {
        add(p.root);
        for (const auto& seg : p.segments)
            if (seg.kind == PathSegment::Kind::VarIndex) add(seg.name);
    }
    for (const auto& item : p.items) collect_roots_primary(item, out);
}

void collect_roots(const std::vector<Node>& nodes, std::vector<std::string>& out) {
    for (const auto& node : nodes) {
        if (node.kind == Node::Kind::Expression) {
            collect_roots_primary(node.expr.primary, out);
            for (const auto& f : node.expr.filters)
                for (const auto& a : f.args) collect_roots_primary(a, out);
        }
        if (node.kind == Node::Kind::If) {
            collect_roots_primary(node.cond->lhs, out);
            collect_roots_primary(node.cond->rhs, out);
            collect_roots(node.cond->body, out);
        }
    }
}

// Locates the `answer_choices:` block. Returns the byte position of the line
// start, or npos.
size_t find_choices_block(const std::string& source) {
    size_t line_start = 0;
    while (line_start <= source.size()) {
        if (source.compare(line_start, kChoicesMarker.size(), kChoicesMarker) == 0)
            return line_start;
        size_t nl = source.find('\n', line_start);
        if (nl == std::string::npos) break;
        line_start = nl + 1;
    }
    return std::string::npos;
}

std::vector<std::string> split_choices(std::string_view list_text, size_t block_offset) {
    std::vector<std::string> pieces;
    size_t pos = 0;
    while (true) {
        size_t sep = list_text.find("|||", pos);
        std::string piece = trim_copy(list_text.substr(pos, sep == std::string_view::npos
                                                                ? std::string_view::npos
                                                                : sep - pos));
        if (piece.empty()) throw SyntaxError("empty answer choice", block_offset);
        pieces.push_back(std::move(piece));
        if (sep == std::string_view::npos) break;
        pos = sep + 3;
    }
    return pieces;
}

}  // namespace

Template Template::parse(std::string source) {
    Template t;
    t.source_ = std::move(source);

    std::string body = t.source_;
    size_t block = find_choices_block(t.source_);
    if (block != std::string::npos) {
        size_t body_end = block;
        if (body_end > 0 && t.source_[body_end - 1] == '\n') --body_end;
        body = t.source_.substr(0, body_end);
        std::string_view list_text{t.source_};
        list_text.remove_prefix(block + kChoicesMarker.size());
        for (const auto& piece : split_choices(list_text, block)) {
            Template choice;
            choice.source_ = piece;
            Parser cp(choice.source_);
            choice.ast_ = cp.parse_body();
            t.choices_.push_back(std::move(choice));
        }
    }
    Parser p(body);
    t.ast_ = p.parse_body();
    return t;
}

Template Template::load_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw TemplateError("cannot read template file: " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse(buf.str());
}

const std::vector<Template>& Template::answer_choices() const {
    if (choices_.empty()) throw NoChoices();
    return choices_;
}

std::string Template::render(const RenderContext& ctx) const {
    RenderState st{ctx.bindings(), SplitMix64(ctx.rng_seed())};
    std::string out;
    render_nodes(ast_, st, out);
    return out;
}

std::vector<std::string> Template::render_choices(const RenderContext& ctx) const {
    if (choices_.empty()) throw NoChoices();
    std::vector<std::string> out;
    out.reserve(choices_.size());
    for (const auto& choice : choices_) out.push_back(trim_copy(choice.render(ctx)));
    return out;
}

std::string Template::serialize() const {
    std::string out;
    serialize_nodes(ast_, out);
    if (!choices_.empty()) {
        out += "\n";
        out += kChoicesMarker;
        out += " ";
        for (size_t i = 0; i < choices_.size(); ++i) {
            if (i) out += " ||| ";
            out += choices_[i].serialize();
        }
    }
    return out;
}

std::vector<std::string> Template::literal_segments() const {
    std::vector<std::string> out;
    collect_segments(ast_, out);
    return out;
}

std::vector<std::string> Template::referenced_roots() const {
    std::vector<std::string> out;
    collect_roots(ast_, out);
    for (const auto& choice : choices_) collect_roots(choice.ast_, out);
    return out;
}

bool Template::same_structure(const Template& other) const {
    if (ast_ != other.ast_) return false;
    if (choices_.size() != other.choices_.size()) return false;
    for (size_t i = 0; i < choices_.size(); ++i)
        if (!choices_[i].same_structure(other.choices_[i])) return false;
    return true;
}

}  // namespace ctgen::tmpl
