#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ctgen/dataset_io.hpp"
#include "ctgen/task_registry.hpp"

namespace ctgen {

inline constexpr uint64_t kDefaultSeed = 1729;

class BuildError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class NoTemplateForDataset : public BuildError {
public:
    explicit NoTemplateForDataset(const std::string& dataset)
        : BuildError("no meta-template registered for dataset: " + dataset) {}
};

class MissingContextPlaceholder : public BuildError {
public:
    MissingContextPlaceholder()
        : BuildError("instruction does not contain the {{context}} placeholder") {}
};

struct BuildConfig {
    uint64_t per_dataset_cap = 100000;
    uint64_t seed = kDefaultSeed;
    // Optional per-dataset column renames applied to record fields before
    // template rendering ({source column -> template variable}).
    std::map<std::string, std::map<std::string, std::string>> column_renames;
};

struct BuildStats {
    size_t records_seen = 0;
    size_t pairs_emitted = 0;
    size_t capped_skipped = 0;
    std::map<std::string, size_t> per_dataset;
    std::map<std::string, size_t> per_template;
};

// Wire serialization of one generator training example. The input carries the
// task attribute and the context behind fixed header lines; the output joins
// instruction and response with the delimiter line. Inverse of
// parse_generation up to surrounding whitespace.
io::InstructionPair serialize_generator_pair(TaskType task_type, const std::string& context,
                                             const std::string& instruction,
                                             const std::string& response);

// Applies meta-templates record by record: one uniformly sampled template per
// record (seeded per (seed, dataset, record index)), per-dataset cap by
// stream-order truncation. Deterministic: identical inputs give a
// byte-identical corpus.
class CorpusBuilder {
public:
    CorpusBuilder(const std::vector<MetaTemplate>& registry, BuildConfig cfg);

    // Returns the pair for this record, or nullopt when the dataset cap has
    // been reached. Render failures and protocol violations throw with record
    // provenance attached.
    std::optional<io::InstructionPair> process(const io::SourceRecord& record);

    const BuildStats& stats() const { return stats_; }

private:
    const std::vector<MetaTemplate>& registry_;
    BuildConfig cfg_;
    BuildStats stats_;
    std::map<std::string, std::vector<const MetaTemplate*>> by_dataset_;
    std::map<std::string, uint64_t> dataset_record_index_;
};

// Drives a full stream through the builder into a writer; returns pairs
// written. `interrupted`, when set, stops the run early (partial file is kept).
size_t build_corpus(io::RecordReader& records, const std::vector<MetaTemplate>& registry,
                    const BuildConfig& cfg, io::PairWriter& writer, BuildStats* stats_out = nullptr,
                    const volatile bool* interrupted = nullptr);

}  // namespace ctgen
