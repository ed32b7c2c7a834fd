#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace ctgen::metrics {

class MetricsError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class EmptyGolds : public MetricsError {
public:
    EmptyGolds() : MetricsError("squad_f1 requires at least one gold answer") {}
};

class LengthMismatch : public MetricsError {
public:
    LengthMismatch() : MetricsError("prediction and gold lists differ in length") {}
};

class TooFewValues : public MetricsError {
public:
    TooFewValues() : MetricsError("mean_stderr requires at least two values") {}
};

// Answer normalization following the official SQuAD evaluator: lowercase,
// strip punctuation, drop the articles a/an/the as whole words, split on
// whitespace. The ASCII punctuation set matches the official script exactly;
// non-ASCII punctuation (Unicode category P*) is stripped as well.
std::vector<std::string> normalize_answer(std::string_view text);

// Max-over-golds token-multiset F1 in [0, 1]. Both-empty normalized answers
// count as an exact match (1.0).
double squad_f1(std::string_view prediction, const std::vector<std::string>& golds);

// Per-label F1 averaged over all n_labels labels; labels with no support and
// no predictions contribute 0.
double macro_f1(const std::vector<int>& preds, const std::vector<int>& golds, int n_labels);

// Micro-averaged F1; for single-label classification this equals accuracy.
double micro_f1(const std::vector<int>& preds, const std::vector<int>& golds, int n_labels);

// (mean, sample standard deviation / sqrt(n)).
std::pair<double, double> mean_stderr(const std::vector<double>& values);

}  // namespace ctgen::metrics
