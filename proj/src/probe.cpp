#include "clinlm/probe.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <stdexcept>

#include "clinlm/text.hpp"

namespace clinlm::probe {

std::string_view to_string(NliLabel label) {
  switch (label) {
    case NliLabel::Entailment:
      return "Entailment";
    case NliLabel::Contradiction:
      return "Contradiction";
    case NliLabel::Neutral:
      return "Neutral";
  }
  return "Neutral";
}

NliLabel parse_nli_label(std::string_view text) {
  const std::string lower = to_lower_ascii(trim(text));
  if (lower == "entailment") return NliLabel::Entailment;
  if (lower == "contradiction") return NliLabel::Contradiction;
  if (lower == "neutral") return NliLabel::Neutral;
  throw std::invalid_argument("label '" + std::string(text) + "' is not Entailment, Contradiction or Neutral");
}

std::string_view to_string(Category category) {
  switch (category) {
    case Category::Numeric:
      return "numeric";
    case Category::ClinicalState:
      return "clinical-state";
    case Category::Temporal:
      return "temporal";
  }
  return "numeric";
}

Category parse_category(std::string_view text) {
  if (text == "numeric") return Category::Numeric;
  if (text == "clinical-state") return Category::ClinicalState;
  if (text == "temporal") return Category::Temporal;
  throw std::invalid_argument("unknown probe category '" + std::string(text) + "'");
}

bool ReferenceRange::below(double v) const {
  if (!low) return false;
  return low->inclusive ? v < low->value : v <= low->value;
}

bool ReferenceRange::above(double v) const {
  if (!high) return false;
  return high->inclusive ? v > high->value : v >= high->value;
}

void ReferenceRange::validate() const {
  if (!low && !high) throw std::invalid_argument(analyte + ": reference range needs at least one bound");
  if (low && high && low->value > high->value) throw std::invalid_argument(analyte + ": low bound exceeds high bound");
}

void ProbeCatalog::add_range(ReferenceRange range) {
  range.validate();
  const std::string key = range.analyte;
  ranges_.insert_or_assign(key, std::move(range));
}

void ProbeCatalog::add_claim(Claim claim) {
  claim.phrase = to_lower_ascii(claim.phrase);
  for (const auto& c : claims_) {
    if (c.phrase == claim.phrase) throw std::invalid_argument("duplicate lexicon phrase '" + claim.phrase + "'");
  }
  if (claim.kind == ClaimKind::Band) {
    if (!claim.band) throw std::invalid_argument("band claim '" + claim.phrase + "' needs an interval");
    claim.band->validate();
  }
  claims_.push_back(std::move(claim));
}

void ProbeCatalog::add_alias(const std::string& analyte, std::string phrase) {
  aliases_[analyte].push_back(to_lower_ascii(phrase));
}

const ReferenceRange* ProbeCatalog::range(std::string_view analyte) const {
  const auto it = ranges_.find(analyte);
  return it == ranges_.end() ? nullptr : &it->second;
}

std::optional<Claim> ProbeCatalog::find_claim(std::string_view text) const {
  const std::string lower = to_lower_ascii(text);
  const Claim* best = nullptr;
  for (const auto& c : claims_) {
    if (lower.find(c.phrase) == std::string::npos) continue;
    if (best == nullptr || c.phrase.size() > best->phrase.size()) best = &c;
  }
  if (best == nullptr) return std::nullopt;
  return *best;
}

const Claim& ProbeCatalog::claim(std::string_view phrase) const {
  const std::string lower = to_lower_ascii(phrase);
  for (const auto& c : claims_) {
    if (c.phrase == lower) return c;
  }
  std::string known;
  for (const auto& p : phrases()) known += (known.empty() ? "" : ", ") + p;
  throw std::invalid_argument("unknown claim phrase '" + std::string(phrase) + "'; lexicon: " + known);
}

std::optional<double> ProbeCatalog::parse_value(std::string_view premise, std::string_view analyte) const {
  const auto it = aliases_.find(analyte);
  if (it == aliases_.end()) return std::nullopt;
  const std::string lower = to_lower_ascii(premise);
  std::size_t pos = std::string::npos;
  for (const auto& alias : it->second) {
    const auto p = lower.find(alias);
    if (p != std::string::npos) {
      pos = p + alias.size();
      break;
    }
  }
  if (pos == std::string::npos) return std::nullopt;
  while (pos < lower.size() && (lower[pos] < '0' || lower[pos] > '9')) ++pos;
  if (pos == lower.size()) return std::nullopt;
  std::size_t end = pos;
  while (end < lower.size() && lower[end] >= '0' && lower[end] <= '9') ++end;
  if (end + 1 < lower.size() && lower[end] == '.' && lower[end + 1] >= '0' && lower[end + 1] <= '9') {
    ++end;
    while (end < lower.size() && lower[end] >= '0' && lower[end] <= '9') ++end;
  }
  double v = 0.0;
  std::from_chars(lower.data() + pos, lower.data() + end, v);
  return v;
}

std::vector<std::string> ProbeCatalog::phrases() const {
  std::vector<std::string> out;
  for (const auto& c : claims_) out.push_back(c.phrase);
  return out;
}

const ProbeCatalog& ProbeCatalog::standard() {
  static const ProbeCatalog catalog = [] {
    constexpr double kInf = std::numeric_limits<double>::infinity();
    auto closed = [](std::string analyte, double lo, double hi, std::string unit) {
      return ReferenceRange{std::move(analyte), Bound{lo, true}, Bound{hi, true}, std::move(unit)};
    };
    ProbeCatalog c;
    c.add_range(closed("glucose", 70, 100, "mg/dL"));
    c.add_range(closed("blood_pressure", 90, 120, "mmHg systolic"));
    c.add_range(closed("bmi", 18.5, 24.9, "kg/m2"));
    c.add_range(closed("calcium", 9, 10.5, "mg/dL"));
    c.add_range(closed("albumin", 3.5, 5.5, "g/dL"));
    c.add_range(closed("globulins", 2.5, 3.5, "g/dL"));
    c.add_range({"ldl", std::nullopt, Bound{130, true}, "mg/dL"});
    c.add_range({"epinephrine", std::nullopt, Bound{75, false}, "ng/L"});
    c.add_range(closed("potassium", 3.5, 5.0, "meq/L"));

    auto claim = [&c](std::string phrase, std::string analyte, ClaimKind kind) {
      c.add_claim({std::move(phrase), std::move(analyte), kind, std::nullopt});
    };
    claim("hyperglycemia", "glucose", ClaimKind::High);
    claim("hypoglycemia", "glucose", ClaimKind::Low);
    claim("high blood glucose", "glucose", ClaimKind::High);
    claim("low blood glucose", "glucose", ClaimKind::Low);
    claim("high blood sugar", "glucose", ClaimKind::High);
    claim("low blood sugar", "glucose", ClaimKind::Low);
    claim("hypertension", "blood_pressure", ClaimKind::High);
    claim("hypotension", "blood_pressure", ClaimKind::Low);
    claim("healthy weight", "bmi", ClaimKind::Normal);
    c.add_claim({"overweight", "bmi", ClaimKind::Band, closed("bmi", 25, 29.9, "kg/m2")});
    c.add_claim({"obese", "bmi", ClaimKind::Band, ReferenceRange{"bmi", Bound{30, true}, Bound{kInf, true}, "kg/m2"}});
    claim("hypocalcemia", "calcium", ClaimKind::Low);
    claim("hypercalcemia", "calcium", ClaimKind::High);
    claim("normal serum calcium", "calcium", ClaimKind::Normal);
    claim("low albumin", "albumin", ClaimKind::Low);
    claim("hypoalbuminemia", "albumin", ClaimKind::Low);
    claim("hyperalbuminemia", "albumin", ClaimKind::High);
    claim("low globulins", "globulins", ClaimKind::Low);
    claim("high globulins", "globulins", ClaimKind::High);
    claim("high ldl", "ldl", ClaimKind::High);
    claim("epinephrine is high", "epinephrine", ClaimKind::High);
    claim("hypokalemia", "potassium", ClaimKind::Low);
    claim("hyperkalemia", "potassium", ClaimKind::High);
    claim("hyponatremia", "sodium", ClaimKind::Low);
    claim("hypernatremia", "sodium", ClaimKind::High);
    claim("high cholesterol", "cholesterol", ClaimKind::High);

    c.add_alias("glucose", "glucose");
    c.add_alias("blood_pressure", "blood pressure");
    c.add_alias("bmi", "bmi");
    c.add_alias("calcium", "calcium");
    c.add_alias("albumin", "albumin");
    c.add_alias("globulins", "globulins");
    c.add_alias("ldl", "ldl");
    c.add_alias("epinephrine", "epinephrine");
    c.add_alias("potassium", "potassium");
    c.add_alias("pulse", "pulse");
    c.add_alias("hematocrit", "hematocrit");
    return c;
  }();
  return catalog;
}

NliLabel numeric_probe_oracle(const ProbeCatalog& catalog, std::string_view analyte, double value,
                              std::string_view claim_phrase) {
  const Claim& claim = catalog.claim(claim_phrase);
  const ReferenceRange* range = catalog.range(analyte);
  if (range == nullptr) throw std::invalid_argument("no reference range for analyte '" + std::string(analyte) + "'");
  if (claim.analyte != analyte) return NliLabel::Neutral;
  bool holds = false;
  switch (claim.kind) {
    case ClaimKind::High:
      holds = range->above(value);
      break;
    case ClaimKind::Low:
      holds = range->below(value);
      break;
    case ClaimKind::Normal:
      holds = range->contains(value);
      break;
    case ClaimKind::Band:
      holds = claim.band->contains(value);
      break;
  }
  return holds ? NliLabel::Entailment : NliLabel::Contradiction;
}

std::vector<ProbeInstance> load_probe_suite(std::istream& in, const ProbeCatalog& catalog) {
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("probe suite is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "premise\thypothesis\tgold\tcategory\tanalyte\tvalue") {
    throw std::invalid_argument("probe suite header must be premise, hypothesis, gold, category, analyte, value");
  }
  std::vector<ProbeInstance> suite;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    ++row;
    const std::string where = "probe row " + std::to_string(row);
    const auto f = split_fields(line, '\t');
    if (f.size() != 6) throw std::invalid_argument(where + ": expected 6 tab-separated fields");
    ProbeInstance p;
    p.row = row;
    p.premise = f[0];
    p.hypothesis = f[1];
    p.gold = parse_nli_label(f[2]);
    p.category = parse_category(f[3]);
    p.analyte = f[4];
    if (p.category == Category::Numeric) {
      if (p.analyte.empty() || f[5].empty()) throw std::invalid_argument(where + ": numeric row needs analyte and value");
      p.value = catalog.parse_value(p.premise, p.analyte);
      if (!p.value) throw std::invalid_argument(where + ": cannot read a " + p.analyte + " value from the premise");
      double printed = 0.0;
      const auto [ptr, ec] = std::from_chars(f[5].data(), f[5].data() + f[5].size(), printed);
      if (ec != std::errc() || ptr != f[5].data() + f[5].size() || printed != *p.value) {
        throw std::invalid_argument(where + ": value column '" + f[5] + "' disagrees with the premise");
      }
      const auto claim = catalog.find_claim(p.hypothesis);
      if (claim && catalog.range(p.analyte) != nullptr) {
        p.oracle_covered = true;
        const NliLabel oracle = numeric_probe_oracle(catalog, p.analyte, *p.value, claim->phrase);
        if (oracle != p.gold) {
          throw std::invalid_argument(where + " (\"" + p.premise + "\" / \"" + p.hypothesis + "\"): oracle says " +
                                      std::string(to_string(oracle)) + ", table says " +
                                      std::string(to_string(p.gold)));
        }
      }
    }
    suite.push_back(std::move(p));
  }
  return suite;
}

std::vector<ProbeInstance> load_probe_suite_file(const std::string& path, const ProbeCatalog& catalog) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open probe suite " + path);
  return load_probe_suite(in, catalog);
}

std::string default_suite_path() { return std::string(CLINLM_DATA_DIR) + "/probe_suite.tsv"; }

std::vector<ProbeInstance> load_probe_suite() { return load_probe_suite_file(default_suite_path()); }

void ProbeReport::write(std::ostream& out, char delim) const {
  out << "category" << delim << "n" << delim << "correct" << delim << "accuracy\n";
  for (const auto& r : rows) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", r.accuracy());
    out << r.name << delim << r.n << delim << r.correct << delim << buf << '\n';
  }
}

void ProbeReport::write_predictions(std::ostream& out, std::span<const ProbeInstance> suite, char delim) const {
  out << "row" << delim << "category" << delim << "gold" << delim << "predicted\n";
  for (std::size_t i = 0; i < suite.size() && i < predictions.size(); ++i) {
    out << suite[i].row << delim << to_string(suite[i].category) << delim << to_string(suite[i].gold) << delim
        << to_string(predictions[i]) << '\n';
  }
}

ProbeReport run_probes(const NliModel& model, std::span<const ProbeInstance> suite) {
  ProbeReport report;
  report.rows = {{"numeric"}, {"clinical-state"}, {"temporal"}, {"overall"}};
  for (const auto& p : suite) {
    const std::string answer = model(p.premise, p.hypothesis);
    NliLabel predicted;
    try {
      predicted = parse_nli_label(answer);
    } catch (const std::invalid_argument&) {
      throw std::invalid_argument("model answered '" + answer + "' on probe row " + std::to_string(p.row));
    }
    report.predictions.push_back(predicted);
    const auto c = static_cast<std::size_t>(p.category);
    const std::size_t hit = predicted == p.gold ? 1 : 0;
    report.rows[c].n += 1;
    report.rows[c].correct += hit;
    report.rows[3].n += 1;
    report.rows[3].correct += hit;
  }
  return report;
}

}  // namespace clinlm::probe
