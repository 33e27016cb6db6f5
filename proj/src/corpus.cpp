#include "clinlm/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>

#include "clinlm/random.hpp"
#include "clinlm/text.hpp"
#include "json.hpp"

namespace clinlm::corpus {

using nlohmann::json;

NoteRecord make_note(std::string note_id, std::string patient_id, std::string encounter_id,
                     std::string note_type, std::string provider_type, std::string text) {
  NoteRecord note{std::move(note_id), std::move(patient_id), std::move(encounter_id),
                  std::move(note_type), std::move(provider_type), std::move(text), 0};
  note.char_length = count_codepoints(note.text);
  return note;
}

void validate(const NoteRecord& note) {
  if (note.note_id.empty() || note.patient_id.empty() || note.encounter_id.empty()) {
    throw std::invalid_argument("note record requires non-empty note_id, patient_id and encounter_id");
  }
  if (note.char_length != count_codepoints(note.text)) {
    throw std::invalid_argument("note " + note.note_id + ": char_length does not match text");
  }
}

std::vector<NoteRecord> read_notes(std::istream& in) {
  std::vector<NoteRecord> notes;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw std::runtime_error("notes line " + std::to_string(line_no) + ": " + e.what());
    }
    auto field = [&](const char* key) -> std::string {
      if (!j.contains(key) || !j[key].is_string()) {
        throw std::runtime_error("notes line " + std::to_string(line_no) + ": missing string field '" +
                                 key + "'");
      }
      return j[key].get<std::string>();
    };
    notes.push_back(make_note(field("note_id"), field("patient_id"), field("encounter_id"),
                              field("note_type"), field("provider_type"), field("text")));
    validate(notes.back());
  }
  return notes;
}

void write_notes(std::ostream& out, std::span<const NoteRecord> notes) {
  for (const auto& n : notes) {
    json j;
    j["note_id"] = n.note_id;
    j["patient_id"] = n.patient_id;
    j["encounter_id"] = n.encounter_id;
    j["note_type"] = n.note_type;
    j["provider_type"] = n.provider_type;
    j["text"] = n.text;
    out << j.dump() << '\n';
  }
}

std::vector<std::pair<std::string, std::uint64_t>> read_note_types(std::istream& in) {
  std::vector<std::pair<std::string, std::uint64_t>> types;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    auto fields = split_fields(line, '\t');
    if (first && fields[0] == "note_type") {
      first = false;
      continue;
    }
    first = false;
    if (fields.size() != 2) throw std::runtime_error("note type table: expected 2 columns: " + line);
    types.emplace_back(fields[0], std::stoull(fields[1]));
  }
  return types;
}

LabelList::LabelList(std::vector<std::string> labels) : labels_(std::move(labels)) {
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (labels_[i].empty()) throw std::invalid_argument("label list contains an empty label");
    if (!index_.emplace(labels_[i], static_cast<int>(i)).second) {
      throw std::invalid_argument("duplicate label in list: " + labels_[i]);
    }
  }
}

LabelList LabelList::read(std::istream& in, std::string_view header) {
  std::vector<std::string> labels;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    const auto t = trim(line);
    if (t.empty()) continue;
    auto label = split_fields(t, '\t').front();
    if (first && !header.empty() && label == header) {
      first = false;
      continue;
    }
    first = false;
    labels.push_back(trim(label));
  }
  return LabelList(std::move(labels));
}

LabelList LabelList::read_file(const std::string& path, std::string_view header) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open label list: " + path);
  return read(in, header);
}

bool LabelList::contains(std::string_view label) const { return index_.find(label) != index_.end(); }

int LabelList::index_of(std::string_view label) const {
  auto it = index_.find(label);
  return it == index_.end() ? -1 : it->second;
}

void validate(const EncounterLabelSet& labels, const LabelList& icd9, const LabelList& classes) {
  for (const auto& c : labels.icd9_codes) {
    if (!icd9.contains(c)) {
      throw std::invalid_argument("encounter " + labels.encounter_id + ": ICD-9 code '" + c +
                                  "' is not in the label list");
    }
  }
  for (const auto& c : labels.therapeutic_classes) {
    if (!classes.contains(c)) {
      throw std::invalid_argument("encounter " + labels.encounter_id + ": therapeutic class '" + c +
                                  "' is not in the label list");
    }
  }
}

std::vector<EncounterLabelSet> read_label_sets(std::istream& in) {
  std::vector<EncounterLabelSet> sets;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const json j = json::parse(line);
    EncounterLabelSet s;
    if (!j.contains("encounter_id")) {
      throw std::runtime_error("label line " + std::to_string(line_no) + ": missing encounter_id");
    }
    s.encounter_id = j.at("encounter_id").get<std::string>();
    if (j.contains("icd9_codes")) {
      for (const auto& c : j["icd9_codes"]) s.icd9_codes.insert(c.get<std::string>());
    }
    if (j.contains("therapeutic_classes")) {
      for (const auto& c : j["therapeutic_classes"]) s.therapeutic_classes.insert(c.get<std::string>());
    }
    sets.push_back(std::move(s));
  }
  return sets;
}

std::vector<NoteRecord> filter_discharge_summaries(std::span<const NoteRecord> notes) {
  std::map<std::string, const NoteRecord*> longest;
  for (const auto& note : notes) {
    if (note.char_length <= kMinDischargeChars) continue;
    if (to_lower_ascii(trim(note.provider_type)) == "nursing") continue;
    auto [it, inserted] = longest.emplace(note.encounter_id, &note);
    if (inserted) continue;
    const NoteRecord* kept = it->second;
    if (note.char_length > kept->char_length ||
        (note.char_length == kept->char_length && note.note_id < kept->note_id)) {
      it->second = &note;
    }
  }
  std::vector<NoteRecord> out;
  out.reserve(longest.size());
  for (const auto& [encounter, note] : longest) out.push_back(*note);
  return out;
}

std::string_view to_string(Subset subset) {
  switch (subset) {
    case Subset::Train:
      return "train";
    case Subset::Dev:
      return "dev";
    case Subset::Test:
      return "test";
  }
  return "train";
}

SplitRatios SplitRatios::parse(std::string_view text) {
  const auto parts = split_fields(text, ':');
  if (parts.size() != 3) throw std::invalid_argument("ratios must look like 8:1:1");
  SplitRatios r;
  try {
    r.train = std::stoll(parts[0]);
    r.dev = std::stoll(parts[1]);
    r.test = std::stoll(parts[2]);
  } catch (const std::exception&) {
    throw std::invalid_argument("ratios must be integers: " + std::string(text));
  }
  r.validate();
  return r;
}

void SplitRatios::validate() const {
  if (train < 0 || dev < 0 || test < 0) throw std::invalid_argument("split ratios must be non-negative");
  if (train + dev + test == 0) throw std::invalid_argument("split ratios must not all be zero");
}

Subset SplitAssignment::subset_of(const std::string& patient_id) const {
  auto it = by_patient.find(patient_id);
  if (it == by_patient.end()) throw std::out_of_range("patient not in split: " + patient_id);
  return it->second;
}

std::vector<std::string> SplitAssignment::patients(Subset subset) const {
  std::vector<std::string> out;
  for (const auto& [p, s] : by_patient) {
    if (s == subset) out.push_back(p);
  }
  return out;
}

std::size_t SplitAssignment::count(Subset subset) const {
  return static_cast<std::size_t>(std::count_if(by_patient.begin(), by_patient.end(),
                                                [&](const auto& kv) { return kv.second == subset; }));
}

void SplitAssignment::write_manifest(std::ostream& out) const {
  for (const auto& [p, s] : by_patient) out << p << '\t' << to_string(s) << '\n';
}

SplitAssignment split_patients(std::vector<std::string> patient_ids, const SplitRatios& ratios,
                               std::uint64_t seed) {
  ratios.validate();
  std::sort(patient_ids.begin(), patient_ids.end());
  patient_ids.erase(std::unique(patient_ids.begin(), patient_ids.end()), patient_ids.end());
  Rng rng(seed);
  shuffle(patient_ids, rng);

  const auto n = static_cast<std::int64_t>(patient_ids.size());
  const std::int64_t total = ratios.train + ratios.dev + ratios.test;
  const std::int64_t n_dev = n * ratios.dev / total;
  const std::int64_t n_test = n * ratios.test / total;
  const std::int64_t n_train = n - n_dev - n_test;

  SplitAssignment split;
  split.ratios = ratios;
  split.seed = seed;
  for (std::int64_t i = 0; i < n; ++i) {
    const Subset s = i < n_train ? Subset::Train : (i < n_train + n_dev ? Subset::Dev : Subset::Test);
    split.by_patient.emplace(patient_ids[static_cast<std::size_t>(i)], s);
  }
  return split;
}

SplitAssignment split_by_patient(std::span<const NoteRecord> records, const SplitRatios& ratios,
                                 std::uint64_t seed) {
  std::vector<std::string> ids;
  ids.reserve(records.size());
  for (const auto& r : records) ids.push_back(r.patient_id);
  return split_patients(std::move(ids), ratios, seed);
}

std::vector<LabelCount> count_labels(std::span<const std::string> occurrences) {
  std::map<std::string, std::size_t> counts;
  for (const auto& l : occurrences) ++counts[l];
  std::vector<LabelCount> out;
  out.reserve(counts.size());
  for (auto& [label, c] : counts) out.push_back({label, c});
  std::stable_sort(out.begin(), out.end(),
                   [](const LabelCount& a, const LabelCount& b) { return a.count > b.count; });
  return out;
}

std::vector<std::string> select_top_k_labels(std::span<const std::string> occurrences, std::size_t k) {
  if (k < 1) throw std::invalid_argument("top-k requires k >= 1");
  auto counts = count_labels(occurrences);
  std::vector<std::string> out;
  for (std::size_t i = 0; i < counts.size() && i < k; ++i) out.push_back(counts[i].label);
  return out;
}

DatasetStats dataset_stats(std::span<const std::string> examples) {
  if (examples.empty()) throw std::invalid_argument("dataset statistics need at least one example");
  std::vector<std::size_t> lengths;
  lengths.reserve(examples.size());
  for (const auto& e : examples) lengths.push_back(count_words(e));
  std::sort(lengths.begin(), lengths.end());

  DatasetStats s;
  s.n_examples = lengths.size();
  s.min_words = lengths.front();
  s.max_words = lengths.back();
  const std::size_t mid = lengths.size() / 2;
  s.median_words = lengths.size() % 2 == 1
                       ? static_cast<double>(lengths[mid])
                       : (static_cast<double>(lengths[mid - 1]) + static_cast<double>(lengths[mid])) / 2.0;
  for (auto l : lengths) s.total_words += l;
  s.mean_words = static_cast<double>(s.total_words) / static_cast<double>(s.n_examples);
  return s;
}

void write_size_table(std::ostream& out, std::span<const DatasetSizeRow> rows, char delim) {
  out << "dataset" << delim << "task_category" << delim << "n_train" << delim << "n_dev" << delim
      << "n_test" << delim << "min" << delim << "max" << delim << "median" << delim << "mean\n";
  for (const auto& r : rows) {
    out << r.dataset << delim << r.task_category << delim << r.n_train << delim << r.n_dev << delim
        << r.n_test << delim << r.lengths.min_words << delim << r.lengths.max_words << delim
        << format_decimal(r.lengths.median_words, 1) << delim << format_decimal(r.lengths.mean_words, 1)
        << '\n';
  }
}

}  // namespace clinlm::corpus
