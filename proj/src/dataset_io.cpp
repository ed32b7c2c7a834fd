#include "ctgen/dataset_io.hpp"

#include <algorithm>

#include "ctgen/seeded_rng.hpp"

namespace ctgen::io {

namespace {

bool is_blank(const std::string& s) {
    return std::all_of(s.begin(), s.end(),
                       [](unsigned char c) { return std::isspace(c); });
}

}  // namespace

JsonlReader::JsonlReader(const std::filesystem::path& path, bool strict)
    : in_(path, std::ios::binary), path_(path), strict_(strict) {
    if (!in_) throw IoError("cannot open file: " + path.string());
}

std::optional<nlohmann::json> JsonlReader::next() {
    std::string line;
    while (std::getline(in_, line)) {
        ++line_no_;
        if (is_blank(line)) continue;
        nlohmann::json parsed = nlohmann::json::parse(line, nullptr, false);
        if (parsed.is_discarded() || !parsed.is_object()) {
            report("malformed record");
            continue;
        }
        return parsed;
    }
    return std::nullopt;
}

void JsonlReader::report(const std::string& message) {
    if (strict_) throw DecodeError(line_no_, message);
    issues_.push_back({line_no_, message});
}

void JsonlReader::warn(const std::string& message) { issues_.push_back({line_no_, message}); }

std::optional<SourceRecord> RecordReader::next() {
    while (auto line = reader_.next()) {
        const auto& obj = *line;
        if (!obj.contains("dataset") || !obj["dataset"].is_string() ||
            obj["dataset"].get<std::string>().empty() || !obj.contains("fields") ||
            !obj["fields"].is_object() || obj["fields"].empty()) {
            // Shape violations are per-line decode errors, same as bad JSON.
            reader_.report("record missing dataset/fields");
            continue;
        }
        return SourceRecord{obj["dataset"].get<std::string>(), obj["fields"]};
    }
    return std::nullopt;
}

DocumentReader::DocumentReader(const std::filesystem::path& path, std::string default_dataset,
                               bool strict)
    : reader_(path, strict), default_dataset_(std::move(default_dataset)) {
    if (default_dataset_.empty()) default_dataset_ = path.stem().string();
}

std::optional<Document> DocumentReader::next() {
    while (auto line = reader_.next()) {
        const auto& obj = *line;
        std::string dataset = default_dataset_;
        if (obj.contains("dataset") && obj["dataset"].is_string() &&
            !obj["dataset"].get<std::string>().empty())
            dataset = obj["dataset"].get<std::string>();
        std::string text;
        if (obj.contains("text") && obj["text"].is_string()) text = obj["text"].get<std::string>();
        if (is_blank(text)) {
            ++skipped_blank_;
            continue;
        }
        std::string id = dataset + "#" + std::to_string(reader_.line_no());
        if (obj.contains("id") && obj["id"].is_string() && !obj["id"].get<std::string>().empty())
            id = obj["id"].get<std::string>();
        if (!seen_id_hashes_.insert(fnv1a64(id)).second) {
            ++duplicate_ids_;
            reader_.warn("duplicate document id: " + id);
        }
        return Document{std::move(id), std::move(text), std::move(dataset)};
    }
    return std::nullopt;
}

std::optional<InstructionPair> PairReader::next() {
    while (auto line = reader_.next()) {
        const auto& obj = *line;
        if (!obj.contains("input") || !obj["input"].is_string() || !obj.contains("output") ||
            !obj["output"].is_string()) {
            const_cast<std::vector<LineIssue>&>(reader_.issues())
                .push_back({reader_.line_no(), "pair missing input/output"});
            continue;
        }
        InstructionPair pair;
        pair.input = obj["input"].get<std::string>();
        pair.output = obj["output"].get<std::string>();
        pair.meta = obj.contains("meta") ? obj["meta"] : nlohmann::json::object();
        return pair;
    }
    return std::nullopt;
}

PairWriter::PairWriter(const std::filesystem::path& path)
    : final_path_(path), partial_path_(path.string() + ".partial") {
    out_.open(partial_path_, std::ios::binary | std::ios::trunc);
    if (!out_) throw IoError("cannot open file for writing: " + partial_path_.string());
}

PairWriter::~PairWriter() = default;

void PairWriter::write(const InstructionPair& pair) {
    if (pair.input.empty() || pair.output.empty())
        throw IoError("refusing to write pair with empty input or output");
    nlohmann::json obj;
    obj["input"] = pair.input;
    obj["output"] = pair.output;
    obj["meta"] = pair.meta;
    out_ << obj.dump() << '\n';
    if (!out_) throw IoError("write failed: " + partial_path_.string());
    ++count_;
}

void PairWriter::commit() {
    if (committed_) return;
    out_.flush();
    out_.close();
    if (!out_) throw IoError("flush failed: " + partial_path_.string());
    std::filesystem::rename(partial_path_, final_path_);
    committed_ = true;
}

size_t write_pairs(const std::function<std::optional<InstructionPair>()>& source,
                   const std::filesystem::path& path) {
    PairWriter writer(path);
    while (auto pair = source()) writer.write(*pair);
    writer.commit();
    return writer.count();
}

std::vector<InstructionPair> read_all_pairs(const std::filesystem::path& path) {
    PairReader reader(path);
    std::vector<InstructionPair> out;
    while (auto pair = reader.next()) out.push_back(std::move(*pair));
    return out;
}

}  // namespace ctgen::io
