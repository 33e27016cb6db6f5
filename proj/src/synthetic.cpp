#include "clinlm/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "clinlm/probe.hpp"

namespace clinlm::synthetic {

namespace {

using Words = std::vector<std::string>;

const std::vector<Words>& problems() {
  static const std::vector<Words> v{{"pain"},      {"fever"},     {"cough"},       {"nausea"},
                                    {"headache"},  {"rash"},      {"chest", "pain"}, {"shortness", "of", "breath"},
                                    {"edema"},     {"dizziness"}, {"abdominal", "pain"}, {"vomiting"}};
  return v;
}

const std::vector<Words>& treatments() {
  static const std::vector<Words> v{{"aspirin"},    {"heparin"},  {"insulin"},    {"metoprolol"},
                                    {"lisinopril"}, {"morphine"}, {"antibiotics"}, {"IV", "fluids"},
                                    {"furosemide"}, {"oxygen", "therapy"}};
  return v;
}

const std::vector<Words>& tests() {
  static const std::vector<Words> v{{"ECG"},     {"CT", "scan"}, {"MRI"},         {"CBC"},
                                    {"troponin"}, {"chest", "radiograph"}, {"urinalysis"}, {"echocardiogram"}};
  return v;
}

const std::vector<std::string>& trigger_words() {
  static const std::vector<std::string> v{"pneumonia", "sepsis", "diabetes", "cirrhosis"};
  return v;
}

// Slot codes: P problem, R treatment, T test.
const std::vector<std::string>& clinical_templates() {
  static const std::vector<std::string> v{
      "The patient reports P since yesterday .",
      "She was started on R for P .",
      "A T showed P .",
      "He denies P and P .",
      "Continue R daily .",
      "T was ordered to evaluate P .",
      "Patient was discharged home on R .",
      "The patient was given R after the T .",
      "On admission the patient had P .",
      "Repeat T in the morning .",
      "P improved with R .",
      "No P was noted on T ."};
  return v;
}

const std::vector<std::string>& general_templates() {
  static const std::vector<std::string> v{
      "The team won the match on D .",
      "Fans traveled to C by V .",
      "The museum in C opens on D .",
      "A new V route connects C and C .",
      "Rain is expected in C this D .",
      "The mayor of C visited the harbor .",
      "Tickets for the concert sold out on D .",
      "Local bakers sell bread near the V station ."};
  return v;
}

const std::vector<std::string>& cities() {
  static const std::vector<std::string> v{"Lisbon", "Oslo", "Denver", "Kyoto", "Nairobi", "Lima", "Dublin", "Quebec"};
  return v;
}

const std::vector<std::string>& days() {
  static const std::vector<std::string> v{"Monday", "Tuesday", "Friday", "Saturday", "weekend", "holiday"};
  return v;
}

const std::vector<std::string>& vehicles() {
  static const std::vector<std::string> v{"train", "bus", "ferry", "tram", "bicycle"};
  return v;
}

template <class T>
const T& pick(const std::vector<T>& items, Rng& rng) {
  return items[uniform_index(rng, items.size())];
}

struct Tagged {
  Words words;
  std::vector<std::string> tags;
};

Tagged fill_clinical(const std::string& tmpl, Rng& rng) {
  Tagged out;
  std::size_t start = 0;
  while (start < tmpl.size()) {
    auto end = tmpl.find(' ', start);
    if (end == std::string::npos) end = tmpl.size();
    const std::string slot = tmpl.substr(start, end - start);
    start = end + 1;
    const std::vector<Words>* lexicon = nullptr;
    std::string type;
    if (slot == "P") {
      lexicon = &problems();
      type = "problem";
    } else if (slot == "R") {
      lexicon = &treatments();
      type = "treatment";
    } else if (slot == "T") {
      lexicon = &tests();
      type = "test";
    }
    if (lexicon == nullptr) {
      out.words.push_back(slot);
      out.tags.push_back("O");
      continue;
    }
    const Words& entity = pick(*lexicon, rng);
    for (std::size_t k = 0; k < entity.size(); ++k) {
      out.words.push_back(entity[k]);
      out.tags.push_back((k == 0 ? "B-" : "I-") + type);
    }
  }
  return out;
}

std::string join(const Words& words) {
  std::string out;
  for (const auto& w : words) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

std::string fill_general(const std::string& tmpl, Rng& rng) {
  Words words;
  std::size_t start = 0;
  while (start < tmpl.size()) {
    auto end = tmpl.find(' ', start);
    if (end == std::string::npos) end = tmpl.size();
    const std::string slot = tmpl.substr(start, end - start);
    start = end + 1;
    if (slot == "C") {
      words.push_back(pick(cities(), rng));
    } else if (slot == "D") {
      words.push_back(pick(days(), rng));
    } else if (slot == "V") {
      words.push_back(pick(vehicles(), rng));
    } else {
      words.push_back(slot);
    }
  }
  return join(words);
}

std::string format_value(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

}  // namespace

std::vector<std::string> clinical_sentences(std::size_t n, Rng& rng) {
  std::vector<std::string> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(join(fill_clinical(pick(clinical_templates(), rng), rng).words));
  return out;
}

std::vector<std::string> general_sentences(std::size_t n, Rng& rng) {
  std::vector<std::string> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(fill_general(pick(general_templates(), rng), rng));
  return out;
}

std::vector<std::vector<std::string>> clinical_documents(std::size_t n_docs, std::size_t sentences_per_doc,
                                                         Rng& rng) {
  std::vector<std::vector<std::string>> docs;
  docs.reserve(n_docs);
  for (std::size_t d = 0; d < n_docs; ++d) docs.push_back(clinical_sentences(sentences_per_doc, rng));
  return docs;
}

std::vector<corpus::NoteRecord> patient_notes(std::size_t n_patients, std::size_t min_notes, std::size_t max_notes,
                                              Rng& rng) {
  if (min_notes < 1 || max_notes < min_notes) throw std::invalid_argument("need 1 <= min_notes <= max_notes");
  static const std::vector<std::string> note_types{"Discharge Summary", "Progress Notes", "H&P", "Consults",
                                                   "Telephone Encounter"};
  static const std::vector<std::string> providers{"Physician", "Resident", "Nurse Practitioner", "Nursing"};
  std::vector<corpus::NoteRecord> notes;
  std::size_t note_counter = 0;
  for (std::size_t p = 0; p < n_patients; ++p) {
    char pid[32];
    std::snprintf(pid, sizeof pid, "P%05zu", p);
    const auto n_notes = min_notes + static_cast<std::size_t>(uniform_index(rng, max_notes - min_notes + 1));
    for (std::size_t k = 0; k < n_notes; ++k) {
      char nid[32];
      char eid[48];
      std::snprintf(nid, sizeof nid, "N%07zu", note_counter++);
      std::snprintf(eid, sizeof eid, "E%05zu-%zu", p, k);
      const std::size_t n_sentences = 5 + static_cast<std::size_t>(uniform_index(rng, 90));
      std::string text;
      for (const auto& s : clinical_sentences(n_sentences, rng)) text += (text.empty() ? "" : " ") + s;
      notes.push_back(corpus::make_note(nid, pid, eid, pick(note_types, rng), pick(providers, rng), text));
    }
  }
  return notes;
}

std::vector<finetune::NerExample> ner_examples(std::size_t n, Rng& rng) {
  std::vector<finetune::NerExample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Tagged t = fill_clinical(pick(clinical_templates(), rng), rng);
    out.push_back({std::move(t.words), std::move(t.tags)});
  }
  return out;
}

std::string trigger_word(std::size_t label_index) { return trigger_words().at(label_index); }

std::vector<finetune::DocExample> labeled_documents(std::size_t n, const std::vector<std::string>& labels,
                                                    std::size_t sentences, Rng& rng) {
  if (labels.empty() || labels.size() > trigger_words().size()) {
    throw std::invalid_argument("labeled_documents supports 1 to 4 labels");
  }
  if (sentences < labels.size()) throw std::invalid_argument("documents too short for their triggers");
  std::vector<finetune::DocExample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto body = clinical_sentences(sentences, rng);
    finetune::DocExample doc;
    for (std::size_t l = 0; l < labels.size(); ++l) {
      if (uniform01(rng) < 0.5) continue;
      const auto at = uniform_index(rng, body.size());
      body[at] = "History of " + trigger_words()[l] + " was noted .";
    }
    // Triggers may overwrite one another; labels follow the final text.
    for (std::size_t l = 0; l < labels.size(); ++l) {
      for (const auto& s : body) {
        if (s.find(" " + trigger_words()[l] + " ") != std::string::npos) {
          doc.labels.insert(labels[l]);
          break;
        }
      }
    }
    doc.text = join(body);
    out.push_back(std::move(doc));
  }
  return out;
}

std::vector<finetune::NliExample> nli_examples(std::size_t n, Rng& rng) {
  struct Item {
    std::string premise_prefix;
    std::string analyte;
    double lo;
    double hi;
    std::vector<std::string> claims;
  };
  static const std::vector<Item> items{
      {"The patient's blood glucose is ", "glucose", 10, 600, {"hyperglycemia", "hypoglycemia"}},
      {"The patient's serum potassium is ", "potassium", 2, 7, {"hyperkalemia", "hypokalemia", "hyponatremia"}},
      {"The patient's serum calcium is ", "calcium", 5, 18, {"hypercalcemia", "hypocalcemia", "high cholesterol"}}};
  const auto& catalog = probe::ProbeCatalog::standard();
  std::vector<finetune::NliExample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Item& item = pick(items, rng);
    const double value = std::round((item.lo + uniform01(rng) * (item.hi - item.lo)) * 10.0) / 10.0;
    const std::string& claim = pick(item.claims, rng);
    const auto label = probe::numeric_probe_oracle(catalog, item.analyte, value, claim);
    std::string lower(probe::to_string(label));
    lower[0] = static_cast<char>(lower[0] - 'A' + 'a');
    out.push_back({item.premise_prefix + format_value(value), "The patient has " + claim, lower});
  }
  return out;
}

}  // namespace clinlm::synthetic
