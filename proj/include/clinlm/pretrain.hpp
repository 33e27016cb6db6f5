#pragma once

// Masked-LM pretraining: masking, sequence packing, Adam with gradient
// accumulation, and a multi-phase sequence-length curriculum.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "clinlm/encoder.hpp"
#include "clinlm/wordpiece.hpp"

namespace clinlm::pretrain {

struct MaskingPolicy {
  double mask_prob = 0.15;
  double replace_with_mask = 0.8;
  double replace_with_random = 0.1;
  double keep_original = 0.1;

  void validate() const;
};

struct MaskedSequence {
  std::vector<TokenId> ids;
  std::vector<int> positions;
  std::vector<TokenId> targets;
};

/// Flags every id except [PAD], [CLS], [SEP] and [MASK].
std::vector<std::uint8_t> default_maskable(std::span<const TokenId> ids);

/// Random replacements are drawn uniformly from [first_random_id, vocab_size).
MaskedSequence apply_masking(const MaskingPolicy& policy, std::span<const TokenId> ids,
                             std::span<const std::uint8_t> maskable, TokenId first_random_id, int vocab_size,
                             Rng& rng);

struct Phase {
  int max_seq_len = 0;
  long steps = 0;
};

struct PhasePlan {
  std::vector<Phase> phases;

  /// "128:500000,512:275000"
  static PhasePlan parse(std::string_view text);
  void validate(int max_positions) const;
  long total_steps() const;
  /// Share of all steps spent in each phase.
  std::vector<double> step_fractions() const;
  std::string to_string() const;
};

struct AdamHyper {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

struct OptimizerState {
  AdamHyper hyper;
  Parameters first_moment;
  Parameters second_moment;
  long step = 0;

  static OptimizerState create(const Parameters& params, const AdamHyper& hyper);
};

/// Bias-corrected Adam. Throws, before touching anything, when a gradient
/// entry is not finite; the message names the tensor.
void adam_step(Parameters& params, const Parameters& grads, OptimizerState& state);
void adam_step(Parameters& params, const Parameters& grads, OptimizerState& state, double learning_rate);

struct AccumulationConfig {
  int micro_batch_size = 64;
  int accumulation_steps = 32;

  int effective_batch() const { return micro_batch_size * accumulation_steps; }
  void validate() const;
};

/// Loss and gradients for micro-batch `index` at the current parameters.
using MicroBatchLoss = std::function<LossResult(const Parameters& params, std::size_t index)>;

/// Count-weighted mean of the micro-batch losses and gradients, equal to the
/// loss over their union.
LossResult accumulate_gradients(const Parameters& params, std::size_t n_micro, const MicroBatchLoss& loss_fn);

/// One optimizer update from `accum.accumulation_steps` micro-batches.
/// Returns the accumulated loss before the update.
double accumulate_and_step(Parameters& params, OptimizerState& state, const AccumulationConfig& accum,
                           std::size_t n_micro, const MicroBatchLoss& loss_fn, double learning_rate);

enum class ScheduleKind { Constant, LinearWarmupDecay };
ScheduleKind parse_schedule_kind(std::string_view text);

struct LearningRateSchedule {
  ScheduleKind kind = ScheduleKind::LinearWarmupDecay;
  double peak = 1e-4;
  double warmup_fraction = 0.1;
  long total_steps = 1;

  /// Rate for 0-based step.
  double at(long step) const;
};

/// One document as a list of tokenized sentences.
using Document = std::vector<std::vector<TokenId>>;

/// Documents separated by blank lines, one sentence per line.
std::vector<std::vector<std::string>> read_text_corpus(std::istream& in);
std::vector<Document> tokenize_corpus(std::span<const std::vector<std::string>> documents, const Vocabulary& vocab);

/// Greedily concatenates whole sentences of one document into [CLS] ... [SEP]
/// sequences of at most max_seq_len ids. Sentences never cross documents; a
/// sentence longer than the capacity is truncated into its own sequence.
std::vector<std::vector<TokenId>> pack_sequences(std::span<const Document> corpus, int max_seq_len);

struct LogEntry {
  long step = 0;
  int phase = 0;
  int max_seq_len = 0;
  double loss = 0.0;
};

void write_loss_log(std::ostream& out, std::span<const LogEntry> log);

struct PretrainOptions {
  PhasePlan plan;
  MaskingPolicy policy;
  AccumulationConfig accum{8, 1};
  AdamHyper adam;
  ScheduleKind schedule = ScheduleKind::LinearWarmupDecay;
  double warmup_fraction = 0.1;
  std::uint64_t seed = 0;
  TokenId first_random_id = kNumSpecials;
  /// Called after every update.
  std::function<void(const LogEntry&, const Parameters&)> on_step;
  /// Called when a phase begins, before its first update. Phases count from 1.
  std::function<void(int phase, const Parameters&)> on_phase_start;
};

struct PretrainResult {
  Parameters params;
  std::vector<LogEntry> log;
  std::vector<long> phase_starts;
};

/// Each logged loss is measured on the step's micro-batches before the update.
/// Throws when a phase cannot fill one micro-batch.
PretrainResult run_pretraining(std::span<const Document> corpus, const EncoderConfig& config,
                               const PretrainOptions& options);

}  // namespace clinlm::pretrain
