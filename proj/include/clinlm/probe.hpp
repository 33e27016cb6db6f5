#pragma once

// Clinical inference probe suite: reference-range rule oracle for the
// numeric rows, fixed gold for the rest, and a per-category scorer.

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace clinlm::probe {

enum class NliLabel { Entailment, Contradiction, Neutral };
std::string_view to_string(NliLabel label);
/// Case-insensitive; throws on anything outside the three labels.
NliLabel parse_nli_label(std::string_view text);

enum class Category { Numeric, ClinicalState, Temporal };
std::string_view to_string(Category category);
Category parse_category(std::string_view text);

struct Bound {
  double value = 0.0;
  bool inclusive = true;
};

struct ReferenceRange {
  std::string analyte;
  std::optional<Bound> low;
  std::optional<Bound> high;
  std::string unit;

  bool below(double v) const;
  bool above(double v) const;
  bool contains(double v) const { return !below(v) && !above(v); }
  void validate() const;
};

enum class ClaimKind { High, Low, Normal, Band };

struct Claim {
  std::string phrase;  // lower case
  std::string analyte;
  ClaimKind kind = ClaimKind::High;
  std::optional<ReferenceRange> band;  // Band claims only
};

class ProbeCatalog {
 public:
  void add_range(ReferenceRange range);
  void add_claim(Claim claim);
  void add_alias(const std::string& analyte, std::string phrase);

  const ReferenceRange* range(std::string_view analyte) const;
  /// Longest lexicon phrase contained in the text, case-insensitively.
  std::optional<Claim> find_claim(std::string_view text) const;
  const Claim& claim(std::string_view phrase) const;
  /// First number after the analyte's first alias occurrence; "60/0" reads 60.
  std::optional<double> parse_value(std::string_view premise, std::string_view analyte) const;
  std::vector<std::string> phrases() const;

  /// Ranges, lexicon and premise aliases for the shipped suite.
  static const ProbeCatalog& standard();

 private:
  std::map<std::string, ReferenceRange, std::less<>> ranges_;
  std::vector<Claim> claims_;
  std::map<std::string, std::vector<std::string>, std::less<>> aliases_;
};

/// Throws when the phrase is not in the lexicon (the message lists it) or the
/// analyte has no reference range.
NliLabel numeric_probe_oracle(const ProbeCatalog& catalog, std::string_view analyte, double value,
                              std::string_view claim_phrase);

struct ProbeInstance {
  std::size_t row = 0;  // 1-based data row
  std::string premise;
  std::string hypothesis;
  NliLabel gold = NliLabel::Neutral;
  Category category = Category::Numeric;
  std::string analyte;
  std::optional<double> value;
  bool oracle_covered = false;
};

/// Covered rows are relabeled by the oracle; any disagreement with the printed
/// label or the printed value throws, naming the row.
std::vector<ProbeInstance> load_probe_suite(std::istream& in, const ProbeCatalog& catalog = ProbeCatalog::standard());
std::vector<ProbeInstance> load_probe_suite_file(const std::string& path,
                                                 const ProbeCatalog& catalog = ProbeCatalog::standard());
/// The suite shipped in the data directory.
std::vector<ProbeInstance> load_probe_suite();
std::string default_suite_path();

using NliModel = std::function<std::string(const std::string& premise, const std::string& hypothesis)>;

struct CategoryScore {
  std::string name;
  std::size_t n = 0;
  std::size_t correct = 0;

  double accuracy() const { return n == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(n); }
};

struct ProbeReport {
  std::vector<CategoryScore> rows;  // numeric, clinical-state, temporal, overall
  std::vector<NliLabel> predictions;

  void write(std::ostream& out, char delim = '\t') const;
  void write_predictions(std::ostream& out, std::span<const ProbeInstance> suite, char delim = '\t') const;
};

/// Throws when the model answers outside the three labels.
ProbeReport run_probes(const NliModel& model, std::span<const ProbeInstance> suite);

}  // namespace clinlm::probe
