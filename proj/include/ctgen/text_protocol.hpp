#pragma once

#include <cctype>
#include <optional>
#include <string>
#include <string_view>
#include <utility>

namespace ctgen {

// Wire format shared by corpus construction, generation prompts, and output
// parsing. The instruction/response delimiter must appear on a line of its
// own; the context placeholder is substituted verbatim.
inline constexpr std::string_view kPipeDelimiter = "<|pipe|>";
inline constexpr std::string_view kTaskTypeHeader = "<|tasktype|>";
inline constexpr std::string_view kContextHeader = "<|context|>";
inline constexpr std::string_view kContextPlaceholder = "{{context}}";

inline std::string trim(std::string_view s) {
    size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

namespace detail {
inline bool line_is_pipe(std::string_view line) {
    size_t b = 0, e = line.size();
    while (b < e && (line[b] == ' ' || line[b] == '\t' || line[b] == '\r')) ++b;
    while (e > b && (line[e - 1] == ' ' || line[e - 1] == '\t' || line[e - 1] == '\r')) --e;
    return line.substr(b, e - b) == kPipeDelimiter;
}
}  // namespace detail

// Byte offset of the start of the first line consisting of the delimiter
// (modulo surrounding blanks), or npos.
inline size_t find_pipe_line(std::string_view text) {
    size_t line_start = 0;
    while (line_start <= text.size()) {
        size_t nl = text.find('\n', line_start);
        std::string_view line = nl == std::string_view::npos
                                    ? text.substr(line_start)
                                    : text.substr(line_start, nl - line_start);
        if (detail::line_is_pipe(line)) return line_start;
        if (nl == std::string_view::npos) break;
        line_start = nl + 1;
    }
    return std::string_view::npos;
}

inline size_t count_pipe_lines(std::string_view text) {
    size_t count = 0;
    size_t line_start = 0;
    while (line_start <= text.size()) {
        size_t nl = text.find('\n', line_start);
        std::string_view line = nl == std::string_view::npos
                                    ? text.substr(line_start)
                                    : text.substr(line_start, nl - line_start);
        if (detail::line_is_pipe(line)) ++count;
        if (nl == std::string_view::npos) break;
        line_start = nl + 1;
    }
    return count;
}

// (before, after) around the first delimiter line, both untrimmed; nullopt
// when no delimiter line exists.
inline std::optional<std::pair<std::string, std::string>> split_on_pipe(std::string_view text) {
    size_t at = find_pipe_line(text);
    if (at == std::string_view::npos) return std::nullopt;
    std::string before(text.substr(0, at));
    size_t nl = text.find('\n', at);
    std::string after = nl == std::string_view::npos ? std::string() : std::string(text.substr(nl + 1));
    return std::make_pair(std::move(before), std::move(after));
}

// Whether template source carries a {{context}} expression (whitespace inside
// the braces is insignificant).
inline bool contains_context_placeholder(std::string_view source) {
    size_t pos = 0;
    while ((pos = source.find("{{", pos)) != std::string_view::npos) {
        size_t end = source.find("}}", pos + 2);
        if (end == std::string_view::npos) return false;
        std::string inner = trim(source.substr(pos + 2, end - pos - 2));
        if (inner == "context") return true;
        pos = end + 2;
    }
    return false;
}

inline std::string substitute_context(std::string_view text, std::string_view context) {
    std::string out;
    out.reserve(text.size() + context.size());
    size_t pos = 0;
    while (true) {
        size_t hit = text.find(kContextPlaceholder, pos);
        if (hit == std::string_view::npos) {
            out += text.substr(pos);
            return out;
        }
        out += text.substr(pos, hit - pos);
        out += context;
        pos = hit + kContextPlaceholder.size();
    }
}

}  // namespace ctgen
