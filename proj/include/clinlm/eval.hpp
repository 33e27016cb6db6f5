#pragma once

// Span extraction from BIO tags, precision/recall/F1 variants, accuracy and
// the median-over-seeds report.

#include <compare>
#include <cstddef>
#include <iosfwd>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace clinlm::eval {

/// Half-open word range [start, end).
struct Span {
  int start = 0;
  int end = 0;
  std::string label;

  auto operator<=>(const Span&) const = default;
};

/// Maximal B-X (I-X)* runs. An I-X that does not continue an X run opens a new
/// span. Throws on anything other than O, B-X or I-X; when `labels` is
/// non-empty X must also belong to it.
std::vector<Span> bio_decode(std::span<const std::string> tags, std::span<const std::string> labels = {});
/// Throws on overlapping or out-of-range spans.
std::vector<std::string> bio_encode(std::span<const Span> spans, std::size_t length);

struct Prf {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// A zero denominator yields 1 when the other side is empty too, else 0.
Prf prf_from_counts(std::size_t true_positive, std::size_t n_predicted, std::size_t n_gold);

enum class MatchMode { Strict, Lenient };

struct SpanCounts {
  std::size_t matched_predicted = 0;
  std::size_t matched_gold = 0;
  std::size_t n_predicted = 0;
  std::size_t n_gold = 0;

  SpanCounts& operator+=(const SpanCounts& other);
  Prf score() const;
};

/// Strict matches (start, end, label) exactly. Lenient matches any overlap
/// with the same label: precision counts predicted spans touching a gold
/// span, recall counts gold spans touching a predicted span. Duplicate spans
/// count once.
SpanCounts span_counts(std::span<const Span> gold, std::span<const Span> predicted,
                       MatchMode mode = MatchMode::Strict);
Prf entity_f1(std::span<const Span> gold, std::span<const Span> predicted, MatchMode mode = MatchMode::Strict);
/// Counts pooled over sentences.
Prf entity_f1_corpus(std::span<const std::vector<Span>> gold, std::span<const std::vector<Span>> predicted,
                     MatchMode mode = MatchMode::Strict);
/// Per-token agreement on non-O tags.
Prf token_f1(std::span<const std::vector<std::string>> gold, std::span<const std::vector<std::string>> predicted);

using LabelSet = std::set<std::string>;

/// True/false positives and false negatives pooled over (instance, label).
Prf micro_f1(std::span<const LabelSet> gold, std::span<const LabelSet> predicted);

/// Throws when sizes differ or the lists are empty.
double accuracy(std::span<const std::string> gold, std::span<const std::string> predicted);
double accuracy(std::span<const int> gold, std::span<const int> predicted);

struct MetricReport {
  std::string metric;
  std::vector<double> values;
  double median = 0.0;
  double stddev = 0.0;  // n - 1 denominator, 0 for one value
};

/// Throws on an empty value list.
MetricReport aggregate_seeds(std::string metric, std::span<const double> values);

struct ResultRow {
  std::string task;
  std::string model;
  MetricReport report;
};

/// task, model, metric, median, stddev, n
void write_result_table(std::ostream& out, std::span<const ResultRow> rows, char delim = '\t');
/// task, model, seed_index, value
void write_seed_log(std::ostream& out, std::span<const ResultRow> rows, char delim = '\t');

}  // namespace clinlm::eval
