#include "clinlm/eval.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

#include "clinlm/text.hpp"

namespace clinlm::eval {

namespace {

struct ParsedTag {
  char prefix = 'O';
  std::string label;
};

ParsedTag parse_tag(const std::string& tag, std::span<const std::string> labels, std::size_t index) {
  if (tag == "O") return {};
  if (tag.size() > 2 && (tag[0] == 'B' || tag[0] == 'I') && tag[1] == '-') {
    ParsedTag p{tag[0], tag.substr(2)};
    if (labels.empty() || std::find(labels.begin(), labels.end(), p.label) != labels.end()) return p;
  }
  throw std::invalid_argument("unknown BIO tag '" + tag + "' at position " + std::to_string(index));
}

std::vector<Span> unique_sorted(std::span<const Span> spans) {
  std::vector<Span> out(spans.begin(), spans.end());
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

bool overlaps(const Span& a, const Span& b) { return a.label == b.label && a.start < b.end && b.start < a.end; }

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

}  // namespace

std::vector<Span> bio_decode(std::span<const std::string> tags, std::span<const std::string> labels) {
  std::vector<Span> spans;
  bool open = false;
  for (std::size_t i = 0; i < tags.size(); ++i) {
    const ParsedTag t = parse_tag(tags[i], labels, i);
    const int pos = static_cast<int>(i);
    if (t.prefix == 'I' && open && spans.back().label == t.label) {
      spans.back().end = pos + 1;
      continue;
    }
    open = t.prefix != 'O';
    if (open) spans.push_back({pos, pos + 1, t.label});
  }
  return spans;
}

std::vector<std::string> bio_encode(std::span<const Span> spans, std::size_t length) {
  std::vector<std::string> tags(length, "O");
  for (const auto& s : spans) {
    if (s.start < 0 || s.start >= s.end || static_cast<std::size_t>(s.end) > length) {
      throw std::invalid_argument("span out of range");
    }
    for (int i = s.start; i < s.end; ++i) {
      if (tags[static_cast<std::size_t>(i)] != "O") throw std::invalid_argument("overlapping spans");
      tags[static_cast<std::size_t>(i)] = (i == s.start ? "B-" : "I-") + s.label;
    }
  }
  return tags;
}

Prf prf_from_counts(std::size_t true_positive, std::size_t n_predicted, std::size_t n_gold) {
  return SpanCounts{true_positive, true_positive, n_predicted, n_gold}.score();
}

SpanCounts& SpanCounts::operator+=(const SpanCounts& other) {
  matched_predicted += other.matched_predicted;
  matched_gold += other.matched_gold;
  n_predicted += other.n_predicted;
  n_gold += other.n_gold;
  return *this;
}

Prf SpanCounts::score() const {
  if (n_predicted == 0 && n_gold == 0) return {1.0, 1.0, 1.0};
  Prf p;
  p.precision = n_predicted == 0 ? 0.0 : static_cast<double>(matched_predicted) / static_cast<double>(n_predicted);
  p.recall = n_gold == 0 ? 0.0 : static_cast<double>(matched_gold) / static_cast<double>(n_gold);
  const double denom = p.precision + p.recall;
  p.f1 = denom > 0.0 ? 2.0 * p.precision * p.recall / denom : 0.0;
  return p;
}

SpanCounts span_counts(std::span<const Span> gold, std::span<const Span> predicted, MatchMode mode) {
  const auto g = unique_sorted(gold);
  const auto p = unique_sorted(predicted);
  SpanCounts c{0, 0, p.size(), g.size()};
  if (mode == MatchMode::Strict) {
    for (const auto& s : p) {
      if (std::binary_search(g.begin(), g.end(), s)) ++c.matched_predicted;
    }
    c.matched_gold = c.matched_predicted;
    return c;
  }
  for (const auto& s : p) {
    if (std::any_of(g.begin(), g.end(), [&](const Span& o) { return overlaps(s, o); })) ++c.matched_predicted;
  }
  for (const auto& s : g) {
    if (std::any_of(p.begin(), p.end(), [&](const Span& o) { return overlaps(s, o); })) ++c.matched_gold;
  }
  return c;
}

Prf entity_f1(std::span<const Span> gold, std::span<const Span> predicted, MatchMode mode) {
  return span_counts(gold, predicted, mode).score();
}

Prf entity_f1_corpus(std::span<const std::vector<Span>> gold, std::span<const std::vector<Span>> predicted,
                     MatchMode mode) {
  if (gold.size() != predicted.size()) throw std::invalid_argument("gold and predicted sentence counts differ");
  SpanCounts total;
  for (std::size_t i = 0; i < gold.size(); ++i) total += span_counts(gold[i], predicted[i], mode);
  return total.score();
}

Prf token_f1(std::span<const std::vector<std::string>> gold, std::span<const std::vector<std::string>> predicted) {
  if (gold.size() != predicted.size()) throw std::invalid_argument("gold and predicted sentence counts differ");
  std::size_t tp = 0;
  std::size_t n_pred = 0;
  std::size_t n_gold = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (gold[i].size() != predicted[i].size()) throw std::invalid_argument("tag sequence lengths differ");
    for (std::size_t t = 0; t < gold[i].size(); ++t) {
      const bool g = gold[i][t] != "O";
      const bool p = predicted[i][t] != "O";
      n_gold += g ? 1 : 0;
      n_pred += p ? 1 : 0;
      if (g && p && gold[i][t] == predicted[i][t]) ++tp;
    }
  }
  return prf_from_counts(tp, n_pred, n_gold);
}

Prf micro_f1(std::span<const LabelSet> gold, std::span<const LabelSet> predicted) {
  if (gold.size() != predicted.size()) throw std::invalid_argument("gold and predicted instance counts differ");
  std::size_t tp = 0;
  std::size_t n_pred = 0;
  std::size_t n_gold = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    n_gold += gold[i].size();
    n_pred += predicted[i].size();
    for (const auto& label : predicted[i]) tp += gold[i].count(label);
  }
  return prf_from_counts(tp, n_pred, n_gold);
}

namespace {

template <class T>
double accuracy_impl(std::span<const T> gold, std::span<const T> predicted) {
  if (gold.size() != predicted.size()) throw std::invalid_argument("gold and predicted lengths differ");
  if (gold.empty()) throw std::invalid_argument("accuracy of an empty list is undefined");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) hits += gold[i] == predicted[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(gold.size());
}

}  // namespace

double accuracy(std::span<const std::string> gold, std::span<const std::string> predicted) {
  return accuracy_impl(gold, predicted);
}

double accuracy(std::span<const int> gold, std::span<const int> predicted) { return accuracy_impl(gold, predicted); }

MetricReport aggregate_seeds(std::string metric, std::span<const double> values) {
  if (values.empty()) throw std::invalid_argument("aggregate_seeds needs at least one value");
  MetricReport r{std::move(metric), {values.begin(), values.end()}, 0.0, 0.0};
  std::vector<double> sorted = r.values;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  r.median = n % 2 == 1 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  if (n > 1) {
    // Shifted by the minimum; constant inputs give exactly 0.
    const double shift = sorted.front();
    double mean = 0.0;
    for (double v : sorted) mean += v - shift;
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (double v : sorted) ss += (v - shift - mean) * (v - shift - mean);
    r.stddev = std::sqrt(ss / static_cast<double>(n - 1));
  }
  return r;
}

void write_result_table(std::ostream& out, std::span<const ResultRow> rows, char delim) {
  out << "task" << delim << "model" << delim << "metric" << delim << "median" << delim << "stddev" << delim << "n\n";
  for (const auto& row : rows) {
    out << row.task << delim << row.model << delim << row.report.metric << delim << fmt(row.report.median) << delim
        << fmt(row.report.stddev) << delim << row.report.values.size() << '\n';
  }
}

void write_seed_log(std::ostream& out, std::span<const ResultRow> rows, char delim) {
  out << "task" << delim << "model" << delim << "seed_index" << delim << "value\n";
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.report.values.size(); ++i) {
      out << row.task << delim << row.model << delim << i << delim << fmt(row.report.values[i]) << '\n';
    }
  }
}

}  // namespace clinlm::eval
