#include "clinlm/pretrain.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <stdexcept>

#include "clinlm/text.hpp"

namespace clinlm::pretrain {

void MaskingPolicy::validate() const {
  if (!(mask_prob >= 0.0 && mask_prob <= 1.0)) throw std::invalid_argument("mask_prob must be in [0, 1]");
  if (replace_with_mask < 0.0 || replace_with_random < 0.0 || keep_original < 0.0) {
    throw std::invalid_argument("masking fractions must be non-negative");
  }
  if (std::abs(replace_with_mask + replace_with_random + keep_original - 1.0) > 1e-9) {
    throw std::invalid_argument("masking fractions must sum to 1");
  }
}

std::vector<std::uint8_t> default_maskable(std::span<const TokenId> ids) {
  std::vector<std::uint8_t> flags(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const TokenId id = ids[i];
    flags[i] = (id == kPadId || id == kClsId || id == kSepId || id == kMaskId) ? 0 : 1;
  }
  return flags;
}

MaskedSequence apply_masking(const MaskingPolicy& policy, std::span<const TokenId> ids,
                             std::span<const std::uint8_t> maskable, TokenId first_random_id, int vocab_size,
                             Rng& rng) {
  policy.validate();
  if (maskable.size() != ids.size()) throw std::invalid_argument("maskable flags do not match ids");
  if (first_random_id < 0 || first_random_id >= vocab_size) {
    throw std::invalid_argument("no ids available for random replacement");
  }
  MaskedSequence out;
  out.ids.assign(ids.begin(), ids.end());
  const auto n_random = static_cast<std::uint64_t>(vocab_size - first_random_id);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (maskable[i] == 0) continue;
    if (!(uniform01(rng) < policy.mask_prob)) continue;
    out.positions.push_back(static_cast<int>(i));
    out.targets.push_back(ids[i]);
    const double r = uniform01(rng);
    if (r < policy.replace_with_mask) {
      out.ids[i] = kMaskId;
    } else if (r < policy.replace_with_mask + policy.replace_with_random) {
      out.ids[i] = first_random_id + static_cast<TokenId>(uniform_index(rng, n_random));
    }
  }
  return out;
}

PhasePlan PhasePlan::parse(std::string_view text) {
  PhasePlan plan;
  for (const auto& item : split_fields(text, ',')) {
    const auto parts = split_fields(trim(item), ':');
    if (parts.size() != 2) throw std::invalid_argument("phase must be LEN:STEPS, got '" + item + "'");
    Phase p;
    std::size_t used = 0;
    try {
      p.max_seq_len = std::stoi(parts[0], &used);
      if (used != parts[0].size()) throw std::invalid_argument("");
      p.steps = std::stol(parts[1], &used);
      if (used != parts[1].size()) throw std::invalid_argument("");
    } catch (const std::exception&) {
      throw std::invalid_argument("phase must be LEN:STEPS, got '" + item + "'");
    }
    plan.phases.push_back(p);
  }
  return plan;
}

void PhasePlan::validate(int max_positions) const {
  if (phases.empty()) throw std::invalid_argument("phase plan is empty");
  int previous = 0;
  for (std::size_t i = 0; i < phases.size(); ++i) {
    const Phase& p = phases[i];
    const std::string where = "phase " + std::to_string(i + 1);
    if (p.steps <= 0) throw std::invalid_argument(where + ": steps must be positive");
    if (p.max_seq_len < 3) throw std::invalid_argument(where + ": max_seq_len must leave room for [CLS] and [SEP]");
    if (p.max_seq_len < previous) throw std::invalid_argument(where + ": max_seq_len decreases");
    if (p.max_seq_len > max_positions) {
      throw std::invalid_argument(where + ": max_seq_len " + std::to_string(p.max_seq_len) + " exceeds max_positions " +
                                  std::to_string(max_positions));
    }
    previous = p.max_seq_len;
  }
}

long PhasePlan::total_steps() const {
  long n = 0;
  for (const auto& p : phases) n += p.steps;
  return n;
}

std::vector<double> PhasePlan::step_fractions() const {
  const auto total = static_cast<double>(total_steps());
  std::vector<double> out;
  for (const auto& p : phases) out.push_back(total > 0 ? static_cast<double>(p.steps) / total : 0.0);
  return out;
}

std::string PhasePlan::to_string() const {
  std::string out;
  for (const auto& p : phases) {
    if (!out.empty()) out += ',';
    out += std::to_string(p.max_seq_len) + ':' + std::to_string(p.steps);
  }
  return out;
}

void AdamHyper::validate() const {
  if (!(learning_rate >= 0.0)) throw std::invalid_argument("learning rate must be non-negative");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw std::invalid_argument("Adam betas must be in [0, 1)");
  }
  if (!(epsilon > 0.0)) throw std::invalid_argument("Adam epsilon must be positive");
}

OptimizerState OptimizerState::create(const Parameters& params, const AdamHyper& hyper) {
  hyper.validate();
  return {hyper, Parameters::zeros_like(params), Parameters::zeros_like(params), 0};
}

void adam_step(Parameters& params, const Parameters& grads, OptimizerState& state) {
  adam_step(params, grads, state, state.hyper.learning_rate);
}

void adam_step(Parameters& params, const Parameters& grads, OptimizerState& state, double learning_rate) {
  auto p = params.tensors();
  const auto g = grads.tensors();
  auto m = state.first_moment.tensors();
  auto v = state.second_moment.tensors();
  if (p.size() != g.size() || p.size() != m.size() || p.size() != v.size()) {
    throw std::invalid_argument("optimizer state does not match parameters");
  }
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i].first != g[i].first || p[i].second->rows() != g[i].second->rows() ||
        p[i].second->cols() != g[i].second->cols() || p[i].first != m[i].first) {
      throw std::invalid_argument("gradient shape mismatch at " + p[i].first);
    }
    if (!g[i].second->allFinite()) throw std::domain_error("non-finite gradient in " + g[i].first);
  }
  const auto& h = state.hyper;
  ++state.step;
  const double correction1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.step));
  const double correction2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < p.size(); ++i) {
    Matrix& mi = *m[i].second;
    Matrix& vi = *v[i].second;
    const Matrix& gi = *g[i].second;
    mi = h.beta1 * mi + (1.0 - h.beta1) * gi;
    vi = h.beta2 * vi + (1.0 - h.beta2) * gi.cwiseProduct(gi);
    const auto m_hat = mi.array() / correction1;
    const auto v_hat = vi.array() / correction2;
    p[i].second->array() -= learning_rate * m_hat / (v_hat.sqrt() + h.epsilon);
  }
}

void AccumulationConfig::validate() const {
  if (micro_batch_size < 1 || accumulation_steps < 1) {
    throw std::invalid_argument("micro_batch_size and accumulation_steps must be at least 1");
  }
}

LossResult accumulate_gradients(const Parameters& params, std::size_t n_micro, const MicroBatchLoss& loss_fn) {
  if (n_micro == 0) throw std::invalid_argument("no micro-batches to accumulate");
  LossResult total{0.0, Parameters::zeros_like(params), 0};
  for (std::size_t i = 0; i < n_micro; ++i) {
    const LossResult part = loss_fn(params, i);
    const auto weight = static_cast<double>(part.count);
    add_scaled(total.grads, part.grads, weight);
    total.loss += weight * part.loss;
    total.count += part.count;
  }
  if (total.count == 0) throw std::invalid_argument("accumulated micro-batches hold no examples");
  const double inv = 1.0 / static_cast<double>(total.count);
  scale(total.grads, inv);
  total.loss *= inv;
  return total;
}

double accumulate_and_step(Parameters& params, OptimizerState& state, const AccumulationConfig& accum,
                           std::size_t n_micro, const MicroBatchLoss& loss_fn, double learning_rate) {
  accum.validate();
  if (n_micro != static_cast<std::size_t>(accum.accumulation_steps)) {
    throw std::invalid_argument("expected " + std::to_string(accum.accumulation_steps) + " micro-batches, got " +
                                std::to_string(n_micro));
  }
  const LossResult acc = accumulate_gradients(params, n_micro, loss_fn);
  adam_step(params, acc.grads, state, learning_rate);
  return acc.loss;
}

ScheduleKind parse_schedule_kind(std::string_view text) {
  if (text == "constant") return ScheduleKind::Constant;
  if (text == "linear") return ScheduleKind::LinearWarmupDecay;
  throw std::invalid_argument("unknown schedule '" + std::string(text) + "' (use constant or linear)");
}

double LearningRateSchedule::at(long step) const {
  if (kind == ScheduleKind::Constant) return peak;
  if (total_steps < 1) throw std::invalid_argument("schedule needs at least one step");
  const auto warmup = static_cast<long>(std::ceil(warmup_fraction * static_cast<double>(total_steps)));
  if (step < warmup) return peak * static_cast<double>(step + 1) / static_cast<double>(warmup);
  const auto remaining = static_cast<double>(total_steps - step);
  return peak * std::max(remaining, 0.0) / static_cast<double>(total_steps - warmup);
}

std::vector<std::vector<std::string>> read_text_corpus(std::istream& in) {
  std::vector<std::vector<std::string>> docs;
  std::vector<std::string> current;
  std::string line;
  while (std::getline(in, line)) {
    std::string t = trim(line);
    if (t.empty()) {
      if (!current.empty()) docs.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(std::move(t));
    }
  }
  if (!current.empty()) docs.push_back(std::move(current));
  return docs;
}

std::vector<Document> tokenize_corpus(std::span<const std::vector<std::string>> documents, const Vocabulary& vocab) {
  std::vector<Document> out;
  out.reserve(documents.size());
  for (const auto& doc : documents) {
    Document d;
    for (const auto& sentence : doc) {
      auto ids = encode(vocab, normalize(sentence)).ids;
      if (!ids.empty()) d.push_back(std::move(ids));
    }
    if (!d.empty()) out.push_back(std::move(d));
  }
  return out;
}

std::vector<std::vector<TokenId>> pack_sequences(std::span<const Document> corpus, int max_seq_len) {
  if (max_seq_len < 3) throw std::invalid_argument("max_seq_len must leave room for [CLS] and [SEP]");
  const auto capacity = static_cast<std::size_t>(max_seq_len - 2);
  std::vector<std::vector<TokenId>> out;
  auto flush = [&](std::vector<TokenId>& body) {
    if (body.empty()) return;
    std::vector<TokenId> seq;
    seq.reserve(body.size() + 2);
    seq.push_back(kClsId);
    seq.insert(seq.end(), body.begin(), body.end());
    seq.push_back(kSepId);
    out.push_back(std::move(seq));
    body.clear();
  };
  for (const auto& doc : corpus) {
    std::vector<TokenId> body;
    for (const auto& sentence : doc) {
      if (sentence.empty()) continue;
      if (body.size() + sentence.size() > capacity) flush(body);
      if (sentence.size() >= capacity) {
        body.assign(sentence.begin(), sentence.begin() + static_cast<std::ptrdiff_t>(capacity));
        flush(body);
        continue;
      }
      body.insert(body.end(), sentence.begin(), sentence.end());
    }
    flush(body);
  }
  return out;
}

void write_loss_log(std::ostream& out, std::span<const LogEntry> log) {
  out << "step\tphase\tmax_seq_len\tloss\n";
  for (const auto& e : log) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", e.loss);
    out << e.step << '\t' << e.phase << '\t' << e.max_seq_len << '\t' << buf << '\n';
  }
}

namespace {

struct MaskedMicroBatch {
  Batch batch;
  std::vector<MlmTarget> targets;
};

MaskedMicroBatch make_micro_batch(std::span<const std::vector<TokenId>> rows, const PretrainOptions& options,
                                  int vocab_size, Rng& rng) {
  std::vector<std::vector<TokenId>> corrupted;
  MaskedMicroBatch mb;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto flags = default_maskable(rows[r]);
    auto masked = apply_masking(options.policy, rows[r], flags, options.first_random_id, vocab_size, rng);
    for (std::size_t k = 0; k < masked.positions.size(); ++k) {
      mb.targets.push_back({static_cast<int>(r), masked.positions[k], masked.targets[k]});
    }
    corrupted.push_back(std::move(masked.ids));
  }
  if (mb.targets.empty()) {
    std::vector<std::pair<int, int>> candidates;
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const auto flags = default_maskable(rows[r]);
      for (std::size_t t = 0; t < flags.size(); ++t) {
        if (flags[t] != 0) candidates.emplace_back(static_cast<int>(r), static_cast<int>(t));
      }
    }
    if (candidates.empty()) throw std::invalid_argument("micro-batch has no maskable tokens");
    const auto [r, t] = candidates[uniform_index(rng, candidates.size())];
    mb.targets.push_back({r, t, rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(t)]});
    corrupted[static_cast<std::size_t>(r)][static_cast<std::size_t>(t)] = kMaskId;
  }
  mb.batch = Batch::from_rows(corrupted);
  return mb;
}

}  // namespace

PretrainResult run_pretraining(std::span<const Document> corpus, const EncoderConfig& config,
                               const PretrainOptions& options) {
  config.validate();
  options.plan.validate(config.max_positions);
  options.policy.validate();
  options.accum.validate();

  Rng init_rng(options.seed);
  Rng data_rng(options.seed ^ 0x9E3779B97F4A7C15ULL);
  Rng dropout_rng(options.seed ^ 0xD1B54A32D192ED03ULL);

  PretrainResult result{Parameters::initialize(config, init_rng), {}, {}};
  OptimizerState state = OptimizerState::create(result.params, options.adam);
  const LearningRateSchedule schedule{options.schedule, options.adam.learning_rate, options.warmup_fraction,
                                      options.plan.total_steps()};
  const auto micro = static_cast<std::size_t>(options.accum.micro_batch_size);

  long step = 0;
  for (std::size_t phase_index = 0; phase_index < options.plan.phases.size(); ++phase_index) {
    const Phase& phase = options.plan.phases[phase_index];
    const auto sequences = pack_sequences(corpus, phase.max_seq_len);
    if (sequences.size() < micro) {
      throw std::invalid_argument("corpus packs into " + std::to_string(sequences.size()) +
                                  " sequences at length " + std::to_string(phase.max_seq_len) +
                                  ", fewer than one micro-batch of " + std::to_string(micro));
    }
    std::vector<std::size_t> order(sequences.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    shuffle(order, data_rng);
    std::size_t cursor = 0;

    result.phase_starts.push_back(step);
    if (options.on_phase_start) options.on_phase_start(static_cast<int>(phase_index) + 1, result.params);

    for (long s = 0; s < phase.steps; ++s, ++step) {
      std::vector<MaskedMicroBatch> batches;
      for (int a = 0; a < options.accum.accumulation_steps; ++a) {
        std::vector<std::vector<TokenId>> rows;
        for (std::size_t k = 0; k < micro; ++k) {
          if (cursor == order.size()) {
            shuffle(order, data_rng);
            cursor = 0;
          }
          rows.push_back(sequences[order[cursor++]]);
        }
        batches.push_back(make_micro_batch(rows, options, config.vocab_size, data_rng));
      }
      const MicroBatchLoss loss_fn = [&](const Parameters& p, std::size_t i) {
        return mlm_loss(p, batches[i].batch, batches[i].targets, true, dropout_rng);
      };
      const double loss = accumulate_and_step(result.params, state, options.accum, batches.size(), loss_fn,
                                              schedule.at(step));
      const LogEntry entry{step, static_cast<int>(phase_index) + 1, phase.max_seq_len, loss};
      result.log.push_back(entry);
      if (options.on_step) options.on_step(entry, result.params);
    }
  }
  return result;
}

}  // namespace clinlm::pretrain
