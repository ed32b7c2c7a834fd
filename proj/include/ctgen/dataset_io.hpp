#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

namespace ctgen::io {

// Line-delimited JSON is the only interchange format:
//   documents.jsonl  {"id", "text", "dataset"}
//   records.jsonl    {"dataset", "fields"}
//   pairs.jsonl      {"input", "output", "meta"}

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DecodeError : public IoError {
public:
    DecodeError(size_t line_no, const std::string& message)
        : IoError("line " + std::to_string(line_no) + ": " + message), line_no_(line_no) {}
    size_t line_no() const { return line_no_; }

private:
    size_t line_no_;
};

struct SourceRecord {
    std::string dataset;
    nlohmann::json fields;
};

struct Document {
    std::string id;
    std::string text;
    std::string dataset;
};

struct InstructionPair {
    std::string input;
    std::string output;
    nlohmann::json meta = nlohmann::json::object();

    bool operator==(const InstructionPair&) const = default;
};

struct LineIssue {
    size_t line_no;
    std::string message;
};

// Single-consumer streaming reader over a JSONL file. Malformed lines are
// collected (and skipped) unless strict, in which case they throw.
class JsonlReader {
public:
    explicit JsonlReader(const std::filesystem::path& path, bool strict = false);

    // Next parsed line, or nullopt at end of file.
    std::optional<nlohmann::json> next();

    // Record a shape violation for the current line; throws when strict.
    void report(const std::string& message);
    // Record a warning for the current line; never throws.
    void warn(const std::string& message);

    size_t line_no() const { return line_no_; }
    const std::vector<LineIssue>& issues() const { return issues_; }

private:
    std::ifstream in_;
    std::filesystem::path path_;
    bool strict_;
    size_t line_no_ = 0;
    std::vector<LineIssue> issues_;
};

class RecordReader {
public:
    explicit RecordReader(const std::filesystem::path& path, bool strict = false)
        : reader_(path, strict) {}

    std::optional<SourceRecord> next();
    const std::vector<LineIssue>& issues() const { return reader_.issues(); }

private:
    JsonlReader reader_;
};

class DocumentReader {
public:
    // default_dataset is used when a line carries no "dataset" key; document
    // ids default to `dataset#lineno`.
    explicit DocumentReader(const std::filesystem::path& path, std::string default_dataset = "",
                            bool strict = false);

    std::optional<Document> next();

    size_t skipped_blank() const { return skipped_blank_; }
    size_t duplicate_ids() const { return duplicate_ids_; }
    const std::vector<LineIssue>& issues() const { return reader_.issues(); }

private:
    JsonlReader reader_;
    std::string default_dataset_;
    size_t skipped_blank_ = 0;
    size_t duplicate_ids_ = 0;
    // Hashes, not ids: keeps memory small on large corpora. A collision only
    // costs a spurious duplicate warning.
    std::unordered_set<uint64_t> seen_id_hashes_;
};

class PairReader {
public:
    explicit PairReader(const std::filesystem::path& path, bool strict = false)
        : reader_(path, strict) {}

    std::optional<InstructionPair> next();
    const std::vector<LineIssue>& issues() const { return reader_.issues(); }

private:
    JsonlReader reader_;
};

// Writes to `<path>.partial` and renames to `<path>` on commit(), so an
// interrupted run leaves a recognizable partial file behind.
class PairWriter {
public:
    explicit PairWriter(const std::filesystem::path& path);
    ~PairWriter();

    void write(const InstructionPair& pair);
    size_t count() const { return count_; }
    void commit();

private:
    std::filesystem::path final_path_;
    std::filesystem::path partial_path_;
    std::ofstream out_;
    size_t count_ = 0;
    bool committed_ = false;
};

// Convenience: drain a source into a fresh pairs file; returns count written.
size_t write_pairs(const std::function<std::optional<InstructionPair>()>& source,
                   const std::filesystem::path& path);

std::vector<InstructionPair> read_all_pairs(const std::filesystem::path& path);

}  // namespace ctgen::io
