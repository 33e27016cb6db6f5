#pragma once

// Task inventory, data readers, example encoding and the multi-seed
// fine-tuning loop for token, pair and multi-label heads.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "clinlm/encoder.hpp"
#include "clinlm/eval.hpp"
#include "clinlm/pretrain.hpp"
#include "clinlm/wordpiece.hpp"

namespace clinlm::finetune {

enum class TaskKind { Ner2010, Ner2012, Re2010, MedNli, Icd50, Atc };
std::string_view to_string(TaskKind kind);
TaskKind parse_task_kind(std::string_view text);

struct TaskSpec {
  std::string name;
  HeadKind head = HeadKind::Token;
  std::vector<std::string> entity_types;  // token tasks only
  std::vector<std::string> labels;        // head outputs: BIO tags, classes or document labels
  std::string metric;

  int label_index(std::string_view label) const;  // -1 when absent
};

/// "O" then B-/I- per entity type.
std::vector<std::string> bio_tag_set(std::span<const std::string> entity_types);

TaskSpec ner_task(std::string name, std::vector<std::string> entity_types);
TaskSpec pair_task(std::string name, std::vector<std::string> classes, std::string metric);
TaskSpec multilabel_task(std::string name, std::vector<std::string> labels);

/// Built-in inventories; Icd50 and Atc need the closed label list.
TaskSpec task_spec(TaskKind kind, std::span<const std::string> document_labels = {});

const std::vector<std::string>& relation_labels();
const std::vector<std::string>& nli_labels();
const std::vector<std::string>& concept_types();

struct NerExample {
  std::vector<std::string> words;
  std::vector<std::string> tags;
};

struct Concept {
  int start = 0;  // half-open word range
  int end = 0;
  std::string type;
};

struct ReExample {
  std::vector<std::string> words;
  Concept first;
  Concept second;
  std::string label;
};

struct NliExample {
  std::string premise;
  std::string hypothesis;
  std::string label;
};

struct DocExample {
  std::string text;
  eval::LabelSet labels;
};

void validate(const NerExample& ex, const TaskSpec& spec);
void validate(const ReExample& ex);
void validate(const NliExample& ex);
void validate(const DocExample& ex, const TaskSpec& spec);

/// `word<TAB>tag` lines, blank line between sentences.
std::vector<NerExample> read_conll(std::istream& in);
void write_conll(std::ostream& out, std::span<const NerExample> examples);
/// One JSON object per line.
std::vector<ReExample> read_re_jsonl(std::istream& in);
std::vector<NliExample> read_nli_jsonl(std::istream& in);
std::vector<DocExample> read_doc_jsonl(std::istream& in);
void write_re_jsonl(std::ostream& out, std::span<const ReExample> examples);
void write_nli_jsonl(std::ostream& out, std::span<const NliExample> examples);
void write_doc_jsonl(std::ostream& out, std::span<const DocExample> examples);

/// First piece of each word keeps its label, later pieces get kIgnoreLabel.
std::vector<int> align_labels_to_pieces(std::span<const int> word_labels, std::span<const std::size_t> word_pieces);
/// Inverse of align_labels_to_pieces.
std::vector<int> collapse_piece_labels(std::span<const int> piece_labels, std::span<const std::size_t> word_pieces);

/// Wraps the two concepts in [E1:type] ... [/E1:type] and [E2:type] ... [/E2:type].
std::vector<std::string> mark_concepts(const ReExample& ex);
std::vector<std::string> remove_markers(std::span<const std::string> words);

struct DocumentRow {
  std::vector<TokenId> ids;  // exactly max_positions long
  std::vector<int> mask;

  std::size_t n_real() const;
};

/// [CLS] + the first max_positions - 2 pieces + [SEP], padded with [PAD].
DocumentRow prepare_document(std::string_view text, const Vocabulary& vocab, int max_positions);

/// A task example reduced to ids plus the label payload for its head kind.
struct EncodedExample {
  std::vector<TokenId> ids;
  std::vector<int> segments;
  std::vector<int> token_labels;         // token heads, aligned with ids
  std::vector<std::size_t> word_pieces;  // token heads: pieces kept per word
  std::vector<int> word_labels;          // token heads: every word, truncated or not
  int class_label = -1;                  // pair heads
  std::vector<double> targets;           // multi-label heads
};

std::vector<EncodedExample> encode_ner(std::span<const NerExample> examples, const TaskSpec& spec,
                                       const Vocabulary& vocab, int max_len);
std::vector<EncodedExample> encode_re(std::span<const ReExample> examples, const TaskSpec& spec,
                                      const Vocabulary& vocab, int max_len);
std::vector<EncodedExample> encode_nli(std::span<const NliExample> examples, const TaskSpec& spec,
                                       const Vocabulary& vocab, int max_len);
std::vector<EncodedExample> encode_docs(std::span<const DocExample> examples, const TaskSpec& spec,
                                        const Vocabulary& vocab, int max_len);
EncodedExample encode_nli_pair(std::string_view premise, std::string_view hypothesis, const Vocabulary& vocab,
                               int max_len);

struct Prediction {
  std::vector<std::string> tags;  // token heads: one per word, truncated words get "O"
  int class_label = -1;
  eval::LabelSet labels;           // multi-label heads: probability > 0.5
};

std::vector<Prediction> predict(const Parameters& params, const TaskSpec& spec,
                                std::span<const EncodedExample> examples, int batch_size = 16);

/// Entity F1 for token tasks, accuracy for "accuracy" tasks, micro-F1 otherwise.
double score(const TaskSpec& spec, std::span<const EncodedExample> gold, std::span<const Prediction> predicted);

/// Gold word tags of an encoded token example.
std::vector<std::string> gold_tags(const TaskSpec& spec, const EncodedExample& ex);

/// Loss and gradients of one collated batch. Padding is trimmed to the
/// longest member.
LossResult batch_loss(const Parameters& params, const TaskSpec& spec, std::span<const EncodedExample* const> batch,
                      bool train_mode, Rng& rng);

struct FinetuneHyper {
  int epochs = 3;
  int batch_size = 8;
  double learning_rate = 5e-4;
  long max_steps = 0;  // 0: run all epochs
  int eval_every = 0;  // 0: once per epoch
  pretrain::ScheduleKind schedule = pretrain::ScheduleKind::Constant;
  double warmup_fraction = 0.0;
  bool dropout = true;

  void validate() const;
};

struct SeedRun {
  std::uint64_t seed = 0;
  Parameters params;  // best-dev snapshot
  double best_dev = 0.0;
  long best_step = 0;
  long steps = 0;
};

struct FinetuneResult {
  TaskSpec spec;
  std::vector<SeedRun> runs;
  eval::MetricReport dev;
};

/// Fine-tunes a copy of `checkpoint` once per seed. Throws on an empty training
/// set or examples the checkpoint cannot encode.
FinetuneResult finetune_task(const Parameters& checkpoint, const TaskSpec& spec,
                             std::span<const EncodedExample> train, std::span<const EncodedExample> dev,
                             std::span<const std::uint64_t> seeds, const FinetuneHyper& hyper);

/// Per-seed test scores of the best-dev snapshots.
eval::MetricReport evaluate_runs(const FinetuneResult& result, std::span<const EncodedExample> test);

using NliModel = std::function<std::string(const std::string& premise, const std::string& hypothesis)>;

/// Wraps a fine-tuned pair model; returns labels from spec.labels.
NliModel make_nli_model(const Parameters& params, const TaskSpec& spec, const Vocabulary& vocab, int max_len);

}  // namespace clinlm::finetune
