#include "clinlm/finetune.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <set>
#include <stdexcept>

#include "clinlm/text.hpp"
#include "json.hpp"

namespace clinlm::finetune {

using json = nlohmann::json;

std::string_view to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::Ner2010:
      return "ner2010";
    case TaskKind::Ner2012:
      return "ner2012";
    case TaskKind::Re2010:
      return "re2010";
    case TaskKind::MedNli:
      return "mednli";
    case TaskKind::Icd50:
      return "icd50";
    case TaskKind::Atc:
      return "atc";
  }
  return "ner2010";
}

TaskKind parse_task_kind(std::string_view text) {
  for (auto k : {TaskKind::Ner2010, TaskKind::Ner2012, TaskKind::Re2010, TaskKind::MedNli, TaskKind::Icd50,
                 TaskKind::Atc}) {
    if (to_string(k) == text) return k;
  }
  throw std::invalid_argument("unknown task '" + std::string(text) +
                              "' (expected ner2010, ner2012, re2010, mednli, icd50 or atc)");
}

int TaskSpec::label_index(std::string_view label) const {
  const auto it = std::find(labels.begin(), labels.end(), label);
  return it == labels.end() ? -1 : static_cast<int>(it - labels.begin());
}

std::vector<std::string> bio_tag_set(std::span<const std::string> entity_types) {
  std::vector<std::string> tags{"O"};
  for (const auto& t : entity_types) {
    tags.push_back("B-" + t);
    tags.push_back("I-" + t);
  }
  return tags;
}

TaskSpec ner_task(std::string name, std::vector<std::string> entity_types) {
  if (entity_types.empty()) throw std::invalid_argument("token task needs at least one entity type");
  TaskSpec s{std::move(name), HeadKind::Token, std::move(entity_types), {}, "entity_f1"};
  s.labels = bio_tag_set(s.entity_types);
  return s;
}

TaskSpec pair_task(std::string name, std::vector<std::string> classes, std::string metric) {
  if (classes.empty()) throw std::invalid_argument("pair task needs at least one class");
  return {std::move(name), HeadKind::Pair, {}, std::move(classes), std::move(metric)};
}

TaskSpec multilabel_task(std::string name, std::vector<std::string> labels) {
  if (labels.empty()) throw std::invalid_argument("multi-label task needs at least one label");
  return {std::move(name), HeadKind::MultiLabel, {}, std::move(labels), "micro_f1"};
}

const std::vector<std::string>& relation_labels() {
  static const std::vector<std::string> labels{"PIP", "TeRP", "TeCP", "TrIP", "TrWP", "TrCP", "TrAP", "TrNAP"};
  return labels;
}

const std::vector<std::string>& nli_labels() {
  static const std::vector<std::string> labels{"entailment", "contradiction", "neutral"};
  return labels;
}

const std::vector<std::string>& concept_types() {
  static const std::vector<std::string> types{"problem", "treatment", "test"};
  return types;
}

TaskSpec task_spec(TaskKind kind, std::span<const std::string> document_labels) {
  switch (kind) {
    case TaskKind::Ner2010:
      return ner_task("ner2010", concept_types());
    case TaskKind::Ner2012:
      return ner_task("ner2012", {"clinical_concept", "department", "evidential", "occurrence",
                                  "temporal_expression"});
    case TaskKind::Re2010:
      return pair_task("re2010", relation_labels(), "micro_f1");
    case TaskKind::MedNli:
      return pair_task("mednli", nli_labels(), "accuracy");
    case TaskKind::Icd50:
    case TaskKind::Atc:
      if (document_labels.empty()) {
        throw std::invalid_argument(std::string(to_string(kind)) + " needs its closed label list");
      }
      return multilabel_task(std::string(to_string(kind)), {document_labels.begin(), document_labels.end()});
  }
  throw std::invalid_argument("unknown task kind");
}

void validate(const NerExample& ex, const TaskSpec& spec) {
  if (ex.words.size() != ex.tags.size()) throw std::invalid_argument("NER example has mismatched words and tags");
  if (ex.words.empty()) throw std::invalid_argument("NER example is empty");
  eval::bio_decode(ex.tags, spec.entity_types);
}

namespace {

void check_concept(const Concept& c, std::size_t n_words, const char* which) {
  if (c.start < 0 || c.start >= c.end || static_cast<std::size_t>(c.end) > n_words) {
    throw std::invalid_argument(std::string(which) + " concept span is out of range");
  }
  const auto& types = concept_types();
  if (std::find(types.begin(), types.end(), c.type) == types.end()) {
    throw std::invalid_argument(std::string(which) + " concept has unknown type '" + c.type + "'");
  }
}

}  // namespace

void validate(const ReExample& ex) {
  check_concept(ex.first, ex.words.size(), "first");
  check_concept(ex.second, ex.words.size(), "second");
  if (ex.first.start < ex.second.end && ex.second.start < ex.first.end) {
    throw std::invalid_argument("relation concepts overlap");
  }
  const auto& labels = relation_labels();
  if (std::find(labels.begin(), labels.end(), ex.label) == labels.end()) {
    throw std::invalid_argument("unknown relation label '" + ex.label + "'");
  }
}

void validate(const NliExample& ex) {
  const auto& labels = nli_labels();
  if (std::find(labels.begin(), labels.end(), ex.label) == labels.end()) {
    throw std::invalid_argument("unknown NLI label '" + ex.label + "'");
  }
}

void validate(const DocExample& ex, const TaskSpec& spec) {
  for (const auto& l : ex.labels) {
    if (spec.label_index(l) < 0) throw std::invalid_argument("document label '" + l + "' is not in the label list");
  }
}

std::vector<NerExample> read_conll(std::istream& in) {
  std::vector<NerExample> out;
  NerExample current;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) {
      if (!current.words.empty()) out.push_back(std::move(current));
      current = {};
      continue;
    }
    const auto fields = split_fields(line, '\t');
    if (fields.size() != 2 || fields[0].empty() || fields[1].empty()) {
      throw std::invalid_argument("line " + std::to_string(line_no) + ": expected word<TAB>tag");
    }
    current.words.push_back(fields[0]);
    current.tags.push_back(fields[1]);
  }
  if (!current.words.empty()) out.push_back(std::move(current));
  return out;
}

void write_conll(std::ostream& out, std::span<const NerExample> examples) {
  for (std::size_t i = 0; i < examples.size(); ++i) {
    if (i > 0) out << '\n';
    for (std::size_t w = 0; w < examples[i].words.size(); ++w) {
      out << examples[i].words[w] << '\t' << examples[i].tags[w] << '\n';
    }
  }
}

namespace {

template <class T, class F>
std::vector<T> read_jsonl(std::istream& in, F&& from_json) {
  std::vector<T> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      out.push_back(from_json(json::parse(line)));
    } catch (const std::exception& e) {
      throw std::invalid_argument("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

Concept concept_from_json(const json& j) {
  return {j.at("start").get<int>(), j.at("end").get<int>(), j.at("type").get<std::string>()};
}

json concept_to_json(const Concept& c) { return {{"start", c.start}, {"end", c.end}, {"type", c.type}}; }

}  // namespace

std::vector<ReExample> read_re_jsonl(std::istream& in) {
  return read_jsonl<ReExample>(in, [](const json& j) {
    ReExample ex{j.at("words").get<std::vector<std::string>>(), concept_from_json(j.at("first")),
                 concept_from_json(j.at("second")), j.at("label").get<std::string>()};
    validate(ex);
    return ex;
  });
}

std::vector<NliExample> read_nli_jsonl(std::istream& in) {
  return read_jsonl<NliExample>(in, [](const json& j) {
    NliExample ex{j.at("premise").get<std::string>(), j.at("hypothesis").get<std::string>(),
                  j.at("label").get<std::string>()};
    validate(ex);
    return ex;
  });
}

std::vector<DocExample> read_doc_jsonl(std::istream& in) {
  return read_jsonl<DocExample>(in, [](const json& j) {
    DocExample ex;
    ex.text = j.at("text").get<std::string>();
    for (const auto& l : j.at("labels")) ex.labels.insert(l.get<std::string>());
    return ex;
  });
}

void write_re_jsonl(std::ostream& out, std::span<const ReExample> examples) {
  for (const auto& ex : examples) {
    out << json{{"words", ex.words},
                {"first", concept_to_json(ex.first)},
                {"second", concept_to_json(ex.second)},
                {"label", ex.label}}
               .dump()
        << '\n';
  }
}

void write_nli_jsonl(std::ostream& out, std::span<const NliExample> examples) {
  for (const auto& ex : examples) {
    out << json{{"premise", ex.premise}, {"hypothesis", ex.hypothesis}, {"label", ex.label}}.dump() << '\n';
  }
}

void write_doc_jsonl(std::ostream& out, std::span<const DocExample> examples) {
  for (const auto& ex : examples) {
    out << json{{"text", ex.text}, {"labels", std::vector<std::string>(ex.labels.begin(), ex.labels.end())}}.dump()
        << '\n';
  }
}

std::vector<int> align_labels_to_pieces(std::span<const int> word_labels, std::span<const std::size_t> word_pieces) {
  if (word_labels.size() != word_pieces.size()) throw std::invalid_argument("word labels do not match segmentation");
  std::vector<int> out;
  for (std::size_t w = 0; w < word_labels.size(); ++w) {
    if (word_pieces[w] == 0) throw std::invalid_argument("word with zero pieces");
    out.push_back(word_labels[w]);
    out.insert(out.end(), word_pieces[w] - 1, kIgnoreLabel);
  }
  return out;
}

std::vector<int> collapse_piece_labels(std::span<const int> piece_labels, std::span<const std::size_t> word_pieces) {
  std::vector<int> out;
  std::size_t pos = 0;
  for (std::size_t n : word_pieces) {
    if (n == 0 || pos + n > piece_labels.size()) throw std::invalid_argument("piece labels do not match segmentation");
    out.push_back(piece_labels[pos]);
    pos += n;
  }
  if (pos != piece_labels.size()) throw std::invalid_argument("piece labels do not match segmentation");
  return out;
}

std::vector<std::string> mark_concepts(const ReExample& ex) {
  validate(ex);
  std::vector<std::string> out;
  out.reserve(ex.words.size() + 4);
  for (std::size_t i = 0; i < ex.words.size(); ++i) {
    const int w = static_cast<int>(i);
    if (w == ex.first.start) out.push_back("[E1:" + ex.first.type + "]");
    if (w == ex.second.start) out.push_back("[E2:" + ex.second.type + "]");
    out.push_back(ex.words[i]);
    if (w + 1 == ex.first.end) out.push_back("[/E1:" + ex.first.type + "]");
    if (w + 1 == ex.second.end) out.push_back("[/E2:" + ex.second.type + "]");
  }
  return out;
}

namespace {

bool is_concept_marker(const std::string& word) {
  static const auto markers = [] {
    const auto tokens = concept_marker_tokens();
    return std::set<std::string>(tokens.begin(), tokens.end());
  }();
  return markers.count(word) != 0;
}

}  // namespace

std::vector<std::string> remove_markers(std::span<const std::string> words) {
  std::vector<std::string> out;
  for (const auto& w : words) {
    if (!is_concept_marker(w)) out.push_back(w);
  }
  return out;
}

std::size_t DocumentRow::n_real() const {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), 1));
}

DocumentRow prepare_document(std::string_view text, const Vocabulary& vocab, int max_positions) {
  if (max_positions < 2) throw std::invalid_argument("max_positions must hold [CLS] and [SEP]");
  const auto pieces = encode(vocab, normalize(text)).ids;
  const auto keep = std::min(pieces.size(), static_cast<std::size_t>(max_positions - 2));
  DocumentRow row;
  row.ids.assign(static_cast<std::size_t>(max_positions), kPadId);
  row.mask.assign(static_cast<std::size_t>(max_positions), 0);
  row.ids[0] = kClsId;
  std::copy(pieces.begin(), pieces.begin() + static_cast<std::ptrdiff_t>(keep), row.ids.begin() + 1);
  row.ids[keep + 1] = kSepId;
  std::fill(row.mask.begin(), row.mask.begin() + static_cast<std::ptrdiff_t>(keep + 2), 1);
  return row;
}

namespace {

void check_max_len(int max_len) {
  if (max_len < 3) throw std::invalid_argument("max_len must leave room for content between [CLS] and [SEP]");
}

/// Pieces of one pre-split word; normalization may split it further.
std::vector<TokenId> word_to_pieces(const Vocabulary& vocab, const std::string& word) {
  std::vector<TokenId> out;
  for (const auto& part : split_whitespace(normalize(word))) {
    const auto p = encode_word(vocab, part);
    out.insert(out.end(), p.begin(), p.end());
  }
  if (out.empty()) out.push_back(kUnkId);
  return out;
}

std::vector<TokenId> text_to_pieces(const Vocabulary& vocab, std::string_view text) {
  return encode(vocab, normalize(text)).ids;
}

}  // namespace

std::vector<EncodedExample> encode_ner(std::span<const NerExample> examples, const TaskSpec& spec,
                                       const Vocabulary& vocab, int max_len) {
  if (spec.head != HeadKind::Token) throw std::invalid_argument("encode_ner needs a token task");
  check_max_len(max_len);
  const auto capacity = static_cast<std::size_t>(max_len - 2);
  std::vector<EncodedExample> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) {
    validate(ex, spec);
    EncodedExample e;
    e.ids.push_back(kClsId);
    e.token_labels.push_back(kIgnoreLabel);
    for (std::size_t w = 0; w < ex.words.size(); ++w) {
      const int label = spec.label_index(ex.tags[w]);
      e.word_labels.push_back(label);
      const std::size_t used = e.ids.size() - 1;
      if (used >= capacity) continue;
      auto pieces = word_to_pieces(vocab, ex.words[w]);
      pieces.resize(std::min(pieces.size(), capacity - used));
      e.word_pieces.push_back(pieces.size());
      for (std::size_t k = 0; k < pieces.size(); ++k) {
        e.ids.push_back(pieces[k]);
        e.token_labels.push_back(k == 0 ? label : kIgnoreLabel);
      }
    }
    e.ids.push_back(kSepId);
    e.token_labels.push_back(kIgnoreLabel);
    e.segments.assign(e.ids.size(), 0);
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<EncodedExample> encode_re(std::span<const ReExample> examples, const TaskSpec& spec,
                                      const Vocabulary& vocab, int max_len) {
  if (spec.head != HeadKind::Pair) throw std::invalid_argument("encode_re needs a pair task");
  check_max_len(max_len);
  std::vector<EncodedExample> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) {
    EncodedExample e;
    e.ids.push_back(kClsId);
    for (const auto& w : mark_concepts(ex)) {
      if (is_concept_marker(w)) {
        const auto id = vocab.find(w);
        if (!id) throw std::invalid_argument("vocabulary lacks concept marker " + w);
        e.ids.push_back(*id);
      } else {
        const auto p = word_to_pieces(vocab, w);
        e.ids.insert(e.ids.end(), p.begin(), p.end());
      }
    }
    e.ids.resize(std::min(e.ids.size(), static_cast<std::size_t>(max_len - 1)));
    e.ids.push_back(kSepId);
    e.segments.assign(e.ids.size(), 0);
    e.class_label = spec.label_index(ex.label);
    if (e.class_label < 0) throw std::invalid_argument("relation label '" + ex.label + "' is not in the task");
    out.push_back(std::move(e));
  }
  return out;
}

EncodedExample encode_nli_pair(std::string_view premise, std::string_view hypothesis, const Vocabulary& vocab,
                               int max_len) {
  if (max_len < 5) throw std::invalid_argument("max_len too small for a sentence pair");
  auto a = text_to_pieces(vocab, premise);
  auto b = text_to_pieces(vocab, hypothesis);
  const auto budget = static_cast<std::size_t>(max_len - 3);
  while (a.size() + b.size() > budget) {
    if (a.size() >= b.size()) {
      a.pop_back();
    } else {
      b.pop_back();
    }
  }
  EncodedExample e;
  e.ids.push_back(kClsId);
  e.ids.insert(e.ids.end(), a.begin(), a.end());
  e.ids.push_back(kSepId);
  e.segments.assign(e.ids.size(), 0);
  e.ids.insert(e.ids.end(), b.begin(), b.end());
  e.ids.push_back(kSepId);
  e.segments.resize(e.ids.size(), 1);
  return e;
}

std::vector<EncodedExample> encode_nli(std::span<const NliExample> examples, const TaskSpec& spec,
                                       const Vocabulary& vocab, int max_len) {
  if (spec.head != HeadKind::Pair) throw std::invalid_argument("encode_nli needs a pair task");
  std::vector<EncodedExample> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) {
    validate(ex);
    EncodedExample e = encode_nli_pair(ex.premise, ex.hypothesis, vocab, max_len);
    e.class_label = spec.label_index(ex.label);
    if (e.class_label < 0) throw std::invalid_argument("NLI label '" + ex.label + "' is not in the task");
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<EncodedExample> encode_docs(std::span<const DocExample> examples, const TaskSpec& spec,
                                        const Vocabulary& vocab, int max_len) {
  if (spec.head != HeadKind::MultiLabel) throw std::invalid_argument("encode_docs needs a multi-label task");
  check_max_len(max_len);
  std::vector<EncodedExample> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) {
    validate(ex, spec);
    const DocumentRow row = prepare_document(ex.text, vocab, max_len);
    EncodedExample e;
    e.ids.assign(row.ids.begin(), row.ids.begin() + static_cast<std::ptrdiff_t>(row.n_real()));
    e.segments.assign(e.ids.size(), 0);
    e.targets.assign(spec.labels.size(), 0.0);
    for (const auto& l : ex.labels) e.targets[static_cast<std::size_t>(spec.label_index(l))] = 1.0;
    out.push_back(std::move(e));
  }
  return out;
}

namespace {

Batch collate(std::span<const EncodedExample* const> batch) {
  std::vector<std::vector<TokenId>> rows;
  std::vector<std::vector<int>> segments;
  for (const auto* ex : batch) {
    rows.push_back(ex->ids);
    segments.push_back(ex->segments);
  }
  return Batch::from_rows(rows, segments);
}

int argmax(const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  Eigen::Index best = 0;
  row.maxCoeff(&best);
  return static_cast<int>(best);
}

void check_compatible(const Parameters& params, std::span<const EncodedExample> examples) {
  for (const auto& ex : examples) {
    if (ex.ids.size() > static_cast<std::size_t>(params.config.max_positions)) {
      throw std::invalid_argument("example longer than the checkpoint's max_positions");
    }
    for (TokenId id : ex.ids) {
      if (id < 0 || id >= params.config.vocab_size) {
        throw std::invalid_argument("example holds id " + std::to_string(id) + " outside the checkpoint vocabulary");
      }
    }
  }
}

}  // namespace

LossResult batch_loss(const Parameters& params, const TaskSpec& spec, std::span<const EncodedExample* const> batch,
                      bool train_mode, Rng& rng) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  const Batch b = collate(batch);
  switch (spec.head) {
    case HeadKind::Token: {
      std::vector<int> labels(b.ids.size(), kIgnoreLabel);
      for (int r = 0; r < b.rows; ++r) {
        const auto& tl = batch[static_cast<std::size_t>(r)]->token_labels;
        std::copy(tl.begin(), tl.end(), labels.begin() + static_cast<std::ptrdiff_t>(r) * b.length);
      }
      return token_classification_loss(params, spec.name, b, labels, train_mode, rng);
    }
    case HeadKind::Pair: {
      std::vector<int> labels;
      for (const auto* ex : batch) labels.push_back(ex->class_label);
      return pair_classification_loss(params, spec.name, b, labels, train_mode, rng);
    }
    case HeadKind::MultiLabel: {
      Matrix targets(b.rows, static_cast<Eigen::Index>(spec.labels.size()));
      for (int r = 0; r < b.rows; ++r) {
        const auto& t = batch[static_cast<std::size_t>(r)]->targets;
        for (std::size_t j = 0; j < t.size(); ++j) targets(r, static_cast<Eigen::Index>(j)) = t[j];
      }
      return multilabel_loss(params, spec.name, b, targets, train_mode, rng);
    }
  }
  throw std::invalid_argument("unknown head kind");
}

std::vector<Prediction> predict(const Parameters& params, const TaskSpec& spec,
                                std::span<const EncodedExample> examples, int batch_size) {
  if (batch_size < 1) throw std::invalid_argument("batch_size must be at least 1");
  check_compatible(params, examples);
  const TaskHead& head = params.head(spec.name);
  Rng unused(0);
  std::vector<Prediction> out;
  out.reserve(examples.size());
  for (std::size_t start = 0; start < examples.size(); start += static_cast<std::size_t>(batch_size)) {
    const auto end = std::min(examples.size(), start + static_cast<std::size_t>(batch_size));
    std::vector<const EncodedExample*> members;
    for (std::size_t i = start; i < end; ++i) members.push_back(&examples[i]);
    const Batch b = collate(members);
    const auto fwd = forward(params, b, false, unused);
    if (spec.head == HeadKind::Token) {
      const auto logits = head_token_classify(head, fwd.hidden);
      for (std::size_t r = 0; r < members.size(); ++r) {
        const auto* ex = members[r];
        std::vector<int> piece_labels;
        std::size_t n_pieces = 0;
        for (auto n : ex->word_pieces) n_pieces += n;
        for (std::size_t t = 1; t <= n_pieces; ++t) piece_labels.push_back(argmax(logits[r].row(static_cast<Eigen::Index>(t))));
        const auto word_labels = collapse_piece_labels(piece_labels, ex->word_pieces);
        Prediction p;
        for (int l : word_labels) p.tags.push_back(spec.labels[static_cast<std::size_t>(l)]);
        p.tags.resize(ex->word_labels.size(), "O");
        out.push_back(std::move(p));
      }
    } else if (spec.head == HeadKind::Pair) {
      const Matrix logits = head_pair_classify(head, fwd.hidden);
      for (Eigen::Index r = 0; r < logits.rows(); ++r) out.push_back({{}, argmax(logits.row(r)), {}});
    } else {
      const Matrix probs = head_multilabel(head, fwd.hidden);
      for (Eigen::Index r = 0; r < probs.rows(); ++r) {
        Prediction p;
        for (Eigen::Index j = 0; j < probs.cols(); ++j) {
          if (probs(r, j) > 0.5) p.labels.insert(spec.labels[static_cast<std::size_t>(j)]);
        }
        out.push_back(std::move(p));
      }
    }
  }
  return out;
}

std::vector<std::string> gold_tags(const TaskSpec& spec, const EncodedExample& ex) {
  std::vector<std::string> tags;
  for (int l : ex.word_labels) tags.push_back(spec.labels.at(static_cast<std::size_t>(l)));
  return tags;
}

double score(const TaskSpec& spec, std::span<const EncodedExample> gold, std::span<const Prediction> predicted) {
  if (gold.size() != predicted.size()) throw std::invalid_argument("gold and predicted example counts differ");
  if (gold.empty()) throw std::invalid_argument("cannot score an empty set");
  if (spec.head == HeadKind::Token) {
    std::vector<std::vector<eval::Span>> g;
    std::vector<std::vector<eval::Span>> p;
    for (std::size_t i = 0; i < gold.size(); ++i) {
      g.push_back(eval::bio_decode(gold_tags(spec, gold[i])));
      p.push_back(eval::bio_decode(predicted[i].tags));
    }
    return eval::entity_f1_corpus(g, p).f1;
  }
  if (spec.head == HeadKind::Pair) {
    std::vector<int> g;
    std::vector<int> p;
    for (std::size_t i = 0; i < gold.size(); ++i) {
      g.push_back(gold[i].class_label);
      p.push_back(predicted[i].class_label);
    }
    if (spec.metric == "accuracy") return eval::accuracy(g, p);
    std::vector<eval::LabelSet> gs;
    std::vector<eval::LabelSet> ps;
    for (std::size_t i = 0; i < g.size(); ++i) {
      gs.push_back({spec.labels[static_cast<std::size_t>(g[i])]});
      ps.push_back({spec.labels[static_cast<std::size_t>(p[i])]});
    }
    return eval::micro_f1(gs, ps).f1;
  }
  std::vector<eval::LabelSet> gs;
  std::vector<eval::LabelSet> ps;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    eval::LabelSet s;
    for (std::size_t j = 0; j < gold[i].targets.size(); ++j) {
      if (gold[i].targets[j] > 0.5) s.insert(spec.labels[j]);
    }
    gs.push_back(std::move(s));
    ps.push_back(predicted[i].labels);
  }
  return eval::micro_f1(gs, ps).f1;
}

void FinetuneHyper::validate() const {
  if (epochs < 1) throw std::invalid_argument("epochs must be at least 1");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be at least 1");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be positive");
  if (max_steps < 0 || eval_every < 0) throw std::invalid_argument("max_steps and eval_every must be non-negative");
}

FinetuneResult finetune_task(const Parameters& checkpoint, const TaskSpec& spec,
                             std::span<const EncodedExample> train, std::span<const EncodedExample> dev,
                             std::span<const std::uint64_t> seeds, const FinetuneHyper& hyper) {
  hyper.validate();
  if (train.empty()) throw std::invalid_argument("training set is empty");
  if (dev.empty()) throw std::invalid_argument("dev set is empty");
  if (seeds.empty()) throw std::invalid_argument("at least one seed is required");
  check_compatible(checkpoint, train);
  check_compatible(checkpoint, dev);

  const auto bs = static_cast<std::size_t>(hyper.batch_size);
  const long per_epoch = static_cast<long>((train.size() + bs - 1) / bs);
  long total = per_epoch * hyper.epochs;
  if (hyper.max_steps > 0) total = std::min(total, hyper.max_steps);
  const long eval_every = hyper.eval_every > 0 ? hyper.eval_every : per_epoch;
  const pretrain::LearningRateSchedule schedule{hyper.schedule, hyper.learning_rate, hyper.warmup_fraction, total};

  FinetuneResult result;
  result.spec = spec;
  std::vector<double> dev_scores;
  for (std::uint64_t seed : seeds) {
    Rng rng(seed);
    Parameters params = checkpoint;
    params.add_head(spec.name, spec.head, static_cast<int>(spec.labels.size()), rng);
    auto state = pretrain::OptimizerState::create(params, {hyper.learning_rate});

    SeedRun run{seed, params, -std::numeric_limits<double>::infinity(), 0, 0};
    std::vector<std::size_t> order(train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::size_t cursor = order.size();
    for (long step = 0; step < total; ++step) {
      if (cursor >= order.size()) {
        shuffle(order, rng);
        cursor = 0;
      }
      std::vector<const EncodedExample*> members;
      for (; cursor < order.size() && members.size() < bs; ++cursor) members.push_back(&train[order[cursor]]);
      const LossResult loss = batch_loss(params, spec, members, hyper.dropout, rng);
      pretrain::adam_step(params, loss.grads, state, schedule.at(step));
      run.steps = step + 1;
      if (run.steps % eval_every == 0 || run.steps == total) {
        const double s = score(spec, dev, predict(params, spec, dev));
        if (s > run.best_dev) {
          run.best_dev = s;
          run.best_step = run.steps;
          run.params = params;
        }
      }
    }
    dev_scores.push_back(run.best_dev);
    result.runs.push_back(std::move(run));
  }
  result.dev = eval::aggregate_seeds(spec.metric, dev_scores);
  return result;
}

eval::MetricReport evaluate_runs(const FinetuneResult& result, std::span<const EncodedExample> test) {
  std::vector<double> values;
  for (const auto& run : result.runs) values.push_back(score(result.spec, test, predict(run.params, result.spec, test)));
  return eval::aggregate_seeds(result.spec.metric, values);
}

NliModel make_nli_model(const Parameters& params, const TaskSpec& spec, const Vocabulary& vocab, int max_len) {
  if (spec.head != HeadKind::Pair) throw std::invalid_argument("NLI model needs a pair task");
  params.head(spec.name);
  return [params, spec, &vocab, max_len](const std::string& premise, const std::string& hypothesis) {
    const std::vector<EncodedExample> one{encode_nli_pair(premise, hypothesis, vocab, max_len)};
    const auto pred = predict(params, spec, one, 1);
    return spec.labels[static_cast<std::size_t>(pred.front().class_label)];
  };
}

}  // namespace clinlm::finetune
