#pragma once

// Clinical note records, the discharge-summary cohort filters, patient-wise
// splits, label-frequency selection and dataset length statistics.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace clinlm::corpus {

struct NoteRecord {
  std::string note_id;
  std::string patient_id;
  std::string encounter_id;
  std::string note_type;
  std::string provider_type;
  std::string text;
  std::size_t char_length = 0;  // code points in text
};

/// Builds a record with char_length derived from text.
NoteRecord make_note(std::string note_id, std::string patient_id, std::string encounter_id,
                     std::string note_type, std::string provider_type, std::string text);

/// Throws std::invalid_argument when an identity field is empty or char_length is stale.
void validate(const NoteRecord& note);

/// One JSON object per line with keys note_id, patient_id, encounter_id,
/// note_type, provider_type, text.
std::vector<NoteRecord> read_notes(std::istream& in);
void write_notes(std::ostream& out, std::span<const NoteRecord> notes);

/// Frequency-ordered note categories, loaded from a `note_type<TAB>frequency` table.
std::vector<std::pair<std::string, std::uint64_t>> read_note_types(std::istream& in);

/// A closed, ordered label inventory (ICD-9 top-50 codes, therapeutic classes).
class LabelList {
 public:
  LabelList() = default;
  explicit LabelList(std::vector<std::string> labels);

  /// Reads one label per line; for tab-separated files only the first column
  /// is used and a header line starting with `header` is skipped.
  static LabelList read(std::istream& in, std::string_view header = {});
  static LabelList read_file(const std::string& path, std::string_view header = {});

  bool contains(std::string_view label) const;
  int index_of(std::string_view label) const;  // -1 when absent
  const std::vector<std::string>& labels() const { return labels_; }
  std::size_t size() const { return labels_.size(); }

 private:
  std::vector<std::string> labels_;
  std::map<std::string, int, std::less<>> index_;
};

struct EncounterLabelSet {
  std::string encounter_id;
  std::set<std::string> icd9_codes;
  std::set<std::string> therapeutic_classes;
};

void validate(const EncounterLabelSet& labels, const LabelList& icd9, const LabelList& classes);
std::vector<EncounterLabelSet> read_label_sets(std::istream& in);

/// Keeps non-nursing notes longer than 2000 characters, one per encounter
/// (the longest; ties go to the smallest note_id). Output is ordered by encounter_id.
std::vector<NoteRecord> filter_discharge_summaries(std::span<const NoteRecord> notes);

inline constexpr std::size_t kMinDischargeChars = 2000;

enum class Subset { Train, Dev, Test };
std::string_view to_string(Subset subset);

struct SplitRatios {
  std::int64_t train = 8;
  std::int64_t dev = 1;
  std::int64_t test = 1;

  static SplitRatios parse(std::string_view text);  // "8:1:1"
  void validate() const;
};

struct SplitAssignment {
  std::map<std::string, Subset> by_patient;
  SplitRatios ratios;
  std::uint64_t seed = 0;

  Subset subset_of(const std::string& patient_id) const;
  std::vector<std::string> patients(Subset subset) const;
  std::size_t count(Subset subset) const;
  /// `patient_id<TAB>subset` lines in patient order.
  void write_manifest(std::ostream& out) const;
};

SplitAssignment split_by_patient(std::span<const NoteRecord> records, const SplitRatios& ratios,
                                 std::uint64_t seed);
SplitAssignment split_patients(std::vector<std::string> patient_ids, const SplitRatios& ratios,
                               std::uint64_t seed);

struct LabelCount {
  std::string label;
  std::size_t count = 0;
};

/// All distinct labels, descending by count, ties lexicographic.
std::vector<LabelCount> count_labels(std::span<const std::string> occurrences);
std::vector<std::string> select_top_k_labels(std::span<const std::string> occurrences,
                                             std::size_t k);

struct DatasetStats {
  std::size_t n_examples = 0;
  std::size_t min_words = 0;
  std::size_t max_words = 0;
  double median_words = 0.0;
  double mean_words = 0.0;
  std::size_t total_words = 0;
};

DatasetStats dataset_stats(std::span<const std::string> examples);

/// One row of a dataset size/length table.
struct DatasetSizeRow {
  std::string dataset;
  std::string task_category;
  std::size_t n_train = 0;
  std::size_t n_dev = 0;
  std::size_t n_test = 0;
  DatasetStats lengths;
};

void write_size_table(std::ostream& out, std::span<const DatasetSizeRow> rows, char delim = '\t');

}  // namespace clinlm::corpus
