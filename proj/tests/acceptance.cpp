// Acceptance suite: one PASS/FAIL line per criterion. With no arguments every
// criterion runs; otherwise only the numbered ones.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "clinlm/corpus.hpp"
#include "clinlm/encoder.hpp"
#include "clinlm/eval.hpp"
#include "clinlm/finetune.hpp"
#include "clinlm/pretrain.hpp"
#include "clinlm/probe.hpp"
#include "clinlm/synthetic.hpp"
#include "clinlm/text.hpp"
#include "clinlm/wordpiece.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace clinlm;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  const char* name;
  double budget_seconds;
  std::function<Outcome()> run;
};

std::string fmt(const char* pattern, double a, double b = 0, double c = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, pattern, a, b, c);
  return buf;
}

// Desk pretraining setup shared by criteria 5 and 7.
constexpr std::size_t kDeskSentences = 200;
constexpr std::size_t kDeskVocab = 200;

struct Desk {
  Vocabulary vocab;
  std::vector<pretrain::Document> docs;
  EncoderConfig config;
  pretrain::PretrainOptions options;
};

Desk desk_setup() {
  Rng rng(2024);
  const auto docs_text = synthetic::clinical_documents(kDeskSentences / 5, 5, rng);
  std::vector<std::string> sentences;
  for (const auto& d : docs_text) sentences.insert(sentences.end(), d.begin(), d.end());
  TrainerOptions topt;
  topt.declared_size = kDeskVocab;
  auto vocab = train_wordpiece(sentences, topt);
  auto docs = pretrain::tokenize_corpus(docs_text, vocab);

  EncoderConfig c;
  c.vocab_size = static_cast<int>(vocab.size());
  c.hidden_dim = 32;
  c.n_layers = 2;
  c.n_heads = 2;
  c.ff_dim = 64;
  c.max_positions = 64;
  c.dropout_rate = 0.1;

  pretrain::PretrainOptions opt;
  opt.plan = pretrain::PhasePlan::parse("16:300,32:150");
  opt.accum = pretrain::AccumulationConfig{16, 1};
  opt.adam.learning_rate = 2e-3;
  opt.schedule = pretrain::ScheduleKind::LinearWarmupDecay;
  opt.warmup_fraction = 0.05;
  opt.seed = 7;
  opt.first_random_id = vocab.first_regular_id();
  return {std::move(vocab), std::move(docs), c, std::move(opt)};
}

std::string desk_cache_path() { return (std::filesystem::temp_directory_path() / "clinlm_desk_checkpoint.ckpt").string(); }

// ---------------------------------------------------------------------------

Outcome sequence_length_arithmetic() {
  std::ifstream in(std::string(CLINLM_DATA_DIR) + "/sequence_lengths.tsv");
  if (!in) return {false, "sequence_lengths.tsv missing"};
  std::string line;
  std::getline(in, line);
  struct Row {
    std::string dataset, vocab;
    double mean, median;
    int pct_mean, pct_median;
  };
  std::vector<Row> rows;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto f = split_fields(line, '\t');
    rows.push_back({f[0], f[1], std::stod(f[2]), std::stod(f[4]), std::stoi(f[3]), std::stoi(f[5])});
  }
  std::map<std::string, const Row*> baseline;
  for (const auto& r : rows) {
    if (r.pct_mean == 0 && r.pct_median == 0 && !baseline.count(r.dataset)) baseline[r.dataset] = &r;
  }
  std::size_t cells = 0, matched = 0;
  std::string misses;
  for (const auto& r : rows) {
    const Row* b = baseline.at(r.dataset);
    if (b == &r) continue;
    const int m = percent_difference(b->mean, r.mean);
    const int d = percent_difference(b->median, r.median);
    cells += 2;
    matched += (m == r.pct_mean) + (d == r.pct_median);
    if (m != r.pct_mean) misses += " [" + r.dataset + " / " + r.vocab + " mean: " + std::to_string(m) + " vs printed " + std::to_string(r.pct_mean) + "]";
    if (d != r.pct_median) misses += " [" + r.dataset + " / " + r.vocab + " median: " + std::to_string(d) + " vs printed " + std::to_string(r.pct_median) + "]";
  }
  return {matched == cells, std::to_string(rows.size()) + " rows, " + std::to_string(matched) + "/" + std::to_string(cells) +
                                " non-baseline cells reproduced" + misses};
}

Outcome probe_oracle() {
  const auto suite = probe::load_probe_suite();  // throws on any oracle disagreement
  std::size_t covered = 0;
  bool glucose70 = false, glucose69 = false;
  std::size_t calcium = 0, calcium_covered = 0;
  for (const auto& p : suite) {
    if (p.oracle_covered) ++covered;
    if (p.analyte == "glucose" && p.value && p.hypothesis.find("hypoglycemia") != std::string::npos) {
      if (*p.value == 70) glucose70 = p.oracle_covered && p.gold == probe::NliLabel::Contradiction;
      if (*p.value == 69) glucose69 = p.oracle_covered && p.gold == probe::NliLabel::Entailment;
    }
    if (p.analyte == "calcium") {
      ++calcium;
      calcium_covered += p.oracle_covered;
    }
  }
  // The gate must reject a flipped label.
  std::ifstream in(probe::default_suite_path());
  std::stringstream ss;
  ss << in.rdbuf();
  std::string text = ss.str();
  const std::string row = "Blood glucose is 69\tThe patient has hypoglycemia\tEntailment";
  bool gate = false;
  const auto at = text.find(row);
  if (at != std::string::npos) {
    text.replace(at, row.size(), "Blood glucose is 69\tThe patient has hypoglycemia\tContradiction");
    std::istringstream bad(text);
    try {
      probe::load_probe_suite(bad);
    } catch (const std::exception&) {
      gate = true;
    }
  }
  const bool pass = covered >= 80 && glucose70 && glucose69 && calcium > 0 && calcium == calcium_covered && gate;
  return {pass, std::to_string(suite.size()) + " rows, " + std::to_string(covered) + " oracle-covered, glucose 70/69 " +
                    (glucose70 && glucose69 ? "ok" : "FAILED") + ", calcium " + std::to_string(calcium_covered) + "/" +
                    std::to_string(calcium) + ", integrity gate " + (gate ? "rejects" : "ACCEPTS") + " a flipped label"};
}

Outcome gradient_correctness() {
  using testing::check_gradients;
  Rng rng(3);
  auto params = Parameters::initialize(testing::tiny_config(), rng);
  for (auto& [name, m] : params.tensors()) {
    if (name.find("gamma") != std::string::npos) continue;
    for (Eigen::Index i = 0; i < m->size(); ++i) m->data()[i] += uniform_symmetric(rng, 0.5);
  }
  params.add_head("tok", HeadKind::Token, 3, rng);
  params.add_head("pair", HeadKind::Pair, 3, rng);
  params.add_head("multi", HeadKind::MultiLabel, 3, rng);
  for (auto& [name, head] : params.heads) head.projection.weight *= 20.0;
  const auto batch = testing::tiny_batch();
  if (batch.length != 6) return {false, "fixture batch is not T = 6"};

  const std::vector<MlmTarget> targets{{0, 3, 12}, {0, 1, 7}, {1, 2, 30}};
  const std::vector<int> tok_labels{kIgnoreLabel, 0, 2, 1, kIgnoreLabel, 1, kIgnoreLabel, 2, 0, 1, 0, 0};
  const std::vector<int> pair_labels{2, 0};
  Matrix multi_targets(2, 3);
  multi_targets << 1, 0, 1, 0, 0, 1;

  std::map<std::string, double> worst;
  Rng r(0);
  worst["mlm"] = check_gradients(params, mlm_loss(params, batch, targets, false, r).grads, [&](const Parameters& p) {
                   return mlm_loss_value(p, batch, targets);
                 }).max_relative_error;
  worst["token"] = check_gradients(params, token_classification_loss(params, "tok", batch, tok_labels, false, r).grads,
                                   [&](const Parameters& p) {
                                     Rng q(0);
                                     return token_classification_loss(p, "tok", batch, tok_labels, false, q).loss;
                                   })
                       .max_relative_error;
  worst["pair"] = check_gradients(params, pair_classification_loss(params, "pair", batch, pair_labels, false, r).grads,
                                  [&](const Parameters& p) {
                                    Rng q(0);
                                    return pair_classification_loss(p, "pair", batch, pair_labels, false, q).loss;
                                  })
                      .max_relative_error;
  worst["multilabel"] = check_gradients(params, multilabel_loss(params, "multi", batch, multi_targets, false, r).grads,
                                        [&](const Parameters& p) {
                                          Rng q(0);
                                          return multilabel_loss(p, "multi", batch, multi_targets, false, q).loss;
                                        })
                            .max_relative_error;
  bool pass = true;
  std::string detail = "max relative error";
  for (const auto& [name, e] : worst) {
    pass = pass && e < 1e-4;
    detail += " " + name + " " + fmt("%.2e", e);
  }
  return {pass, detail + " (bound 1e-4, " + std::to_string(params.parameter_count()) + " parameters each)"};
}

Outcome accumulation_equivalence() {
  Rng rng(6);
  const auto params = Parameters::initialize(testing::tiny_config(), rng);
  std::vector<std::vector<TokenId>> rows;
  std::vector<MlmTarget> all_targets;
  for (int i = 0; i < 32; ++i) {
    const auto len = 2 + uniform_index(rng, 5);
    std::vector<TokenId> row{kClsId};
    for (std::uint64_t k = 0; k < len; ++k) row.push_back(static_cast<TokenId>(5 + uniform_index(rng, 45)));
    row.push_back(kSepId);
    const int pos = 1 + static_cast<int>(uniform_index(rng, len));
    all_targets.push_back({i, pos, row[static_cast<std::size_t>(pos)]});
    row[static_cast<std::size_t>(pos)] = kMaskId;
    rows.push_back(std::move(row));
  }
  auto loss_range = [&](const Parameters& p, int begin, int end) {
    std::vector<std::vector<TokenId>> sub(rows.begin() + begin, rows.begin() + end);
    std::vector<MlmTarget> t;
    for (int i = begin; i < end; ++i) t.push_back({i - begin, all_targets[static_cast<std::size_t>(i)].position,
                                                   all_targets[static_cast<std::size_t>(i)].id});
    Rng q(0);
    return mlm_loss(p, Batch::from_rows(sub), t, false, q);
  };
  const auto full = loss_range(params, 0, 32);
  const auto acc = pretrain::accumulate_gradients(params, 4, [&](const Parameters& p, std::size_t i) {
    return loss_range(p, static_cast<int>(i) * 8, static_cast<int>(i) * 8 + 8);
  });
  double worst = 0;
  const auto a = acc.grads.tensors();
  const auto f = full.grads.tensors();
  for (std::size_t t = 0; t < a.size(); ++t) {
    const double denom = f[t].second->norm();
    if (denom == 0) continue;
    worst = std::max(worst, (*a[t].second - *f[t].second).norm() / denom);
  }
  pretrain::AccumulationConfig full_scale{64, 32};
  bool full_ok = full_scale.effective_batch() == 2048;
  try {
    full_scale.validate();
  } catch (const std::exception&) {
    full_ok = false;
  }
  return {worst < 1e-6 && full_ok, "4x8 vs 32 gradient max relative difference " + fmt("%.2e", worst) +
                                        " (bound 1e-6); 32 x 64 = " + std::to_string(full_scale.effective_batch()) +
                                        (full_ok ? " accepted" : " REJECTED")};
}

Outcome two_phase_pretraining() {
  auto desk = desk_setup();
  const double ln_v = std::log(static_cast<double>(desk.config.vocab_size));
  Parameters before_boundary;
  bool boundary_identical = false;
  long boundary_step = -1;
  desk.options.on_step = [&](const pretrain::LogEntry& e, const Parameters& p) {
    if (e.step == 299) before_boundary = p;
  };
  desk.options.on_phase_start = [&](int phase, const Parameters& p) {
    if (phase == 2) boundary_identical = bit_identical(before_boundary, p);
  };
  const auto res = pretrain::run_pretraining(desk.docs, desk.config, desk.options);
  if (res.phase_starts.size() == 2) boundary_step = res.phase_starts[1];
  const double step0 = res.log.front().loss;
  double tail = 0;
  const std::size_t n_tail = 25;
  for (std::size_t i = res.log.size() - n_tail; i < res.log.size(); ++i) tail += res.log[i].loss;
  tail /= static_cast<double>(n_tail);
  const bool seq_lens = res.log.size() == 450 && res.log[299].max_seq_len == 16 && res.log[300].max_seq_len == 32;
  save_checkpoint_file(desk_cache_path(), res.params);
  const bool pass = std::abs(step0 - ln_v) <= 0.05 * ln_v && tail < ln_v - 1.0 && boundary_step == 300 &&
                    boundary_identical && seq_lens;
  return {pass, "V=" + std::to_string(desk.config.vocab_size) + " ln V " + fmt("%.3f", ln_v) + ", step-0 loss " +
                    fmt("%.3f (%.1f%% off)", step0, 100.0 * std::abs(step0 - ln_v) / ln_v) + ", mean of last 25 steps " +
                    fmt("%.3f (bound %.3f)", tail, ln_v - 1.0) + ", boundary at step " + std::to_string(boundary_step) +
                    (boundary_identical ? ", parameters bit-identical across it" : ", parameters CHANGED across it")};
}

Outcome compression_direction() {
  auto run_once = [] {
    Rng rng(31);
    const auto clinical = synthetic::clinical_sentences(600, rng);
    const auto general = synthetic::general_sentences(600, rng);
    const auto held_out = synthetic::clinical_sentences(300, rng);
    TrainerOptions opt;
    opt.declared_size = 400;
    const auto va = train_wordpiece(clinical, opt);
    const auto vb = train_wordpiece(general, opt);
    const std::vector<NamedTexts> data{{"held-out clinical", held_out}};
    const std::vector<NamedVocabulary> vocabs{{"general", &vb}, {"clinical", &va}};
    return compression_report(data, vocabs, "general");
  };
  const auto a = run_once();
  const auto b = run_once();
  std::ostringstream sa, sb;
  a.write(sa);
  b.write(sb);
  const double base = a.rows[0].mean_length;
  const double cand = a.rows[1].mean_length;
  const double reduction = 1.0 - cand / base;
  return {reduction >= 0.10 && sa.str() == sb.str(),
          "mean tokens " + fmt("%.2f (in-domain) vs %.2f (other domain), %.1f%% fewer", cand, base, 100.0 * reduction) +
              " (bound 10%)" + (sa.str() == sb.str() ? ", deterministic" : ", NOT deterministic")};
}

Parameters desk_checkpoint(const Desk& desk) {
  const auto path = desk_cache_path();
  if (std::filesystem::exists(path)) {
    auto p = load_checkpoint_file(path);
    if (p.config.vocab_size == desk.config.vocab_size) return p;
  }
  auto res = pretrain::run_pretraining(desk.docs, desk.config, desk.options);
  save_checkpoint_file(path, res.params);
  return std::move(res.params);
}

Outcome toy_finetuning() {
  const auto desk = desk_setup();
  const auto checkpoint = desk_checkpoint(desk);
  const auto spec = finetune::task_spec(finetune::TaskKind::Ner2010);
  Rng rng(77);
  const auto train = finetune::encode_ner(synthetic::ner_examples(1200, rng), spec, desk.vocab, 64);
  const auto dev = finetune::encode_ner(synthetic::ner_examples(40, rng), spec, desk.vocab, 64);
  const auto test = finetune::encode_ner(synthetic::ner_examples(100, rng), spec, desk.vocab, 64);
  finetune::FinetuneHyper hyper;
  hyper.epochs = 10;
  hyper.batch_size = 32;
  hyper.learning_rate = 5e-3;
  hyper.max_steps = 200;
  hyper.eval_every = 20;
  const std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  const auto result = finetune::finetune_task(checkpoint, spec, train, dev, seeds, hyper);
  const auto report = finetune::evaluate_runs(result, test);
  bool pass = report.values.size() == 5;
  long max_steps = 0;
  std::string per_seed;
  for (std::size_t i = 0; i < result.runs.size(); ++i) {
    pass = pass && report.values[i] >= 0.95;
    max_steps = std::max(max_steps, result.runs[i].steps);
    per_seed += fmt(" %.3f", report.values[i]);
  }
  pass = pass && max_steps <= 200;
  return {pass, "test entity F1 per seed" + per_seed + fmt(", median %.3f stddev %.3f", report.median, report.stddev) +
                    ", " + std::to_string(max_steps) + " steps per seed (bounds F1 >= 0.95, <= 200 steps)"};
}

Outcome metric_oracles() {
  using namespace testing;
  Rng rng(88);
  const std::vector<std::string> types{"problem", "test", "treatment"};
  const std::vector<std::string> universe{"a", "b", "c", "d", "e", "f"};
  std::size_t entity_ok = 0, micro_ok = 0, bio_ok = 0;
  for (int rep = 0; rep < 1000; ++rep) {
    const auto len = uniform_index(rng, 12);
    const auto g = eval::bio_decode(random_tags(rng, len, types));
    const auto p = eval::bio_decode(random_tags(rng, len, types));
    const auto expect = prf(brute_span_counts(g, p));
    const auto got = eval::entity_f1(g, p);
    entity_ok += std::abs(got.precision - expect.precision) < 1e-12 && std::abs(got.recall - expect.recall) < 1e-12 &&
                 std::abs(got.f1 - expect.f1) < 1e-12;

    std::vector<eval::LabelSet> gold, pred;
    const auto n = 1 + uniform_index(rng, 6);
    for (std::uint64_t i = 0; i < n; ++i) {
      gold.push_back(random_label_set(rng, universe));
      pred.push_back(random_label_set(rng, universe));
    }
    const auto mexp = prf(brute_label_counts(gold, pred, universe));
    const auto mgot = eval::micro_f1(gold, pred);
    micro_ok += std::abs(mgot.precision - mexp.precision) < 1e-12 && std::abs(mgot.recall - mexp.recall) < 1e-12 &&
                std::abs(mgot.f1 - mexp.f1) < 1e-12;

    const auto tags = random_tags(rng, uniform_index(rng, 15), types);
    const auto spans = eval::bio_decode(tags);
    const auto canonical = eval::bio_encode(spans, tags.size());
    bio_ok += eval::bio_decode(canonical) == spans && spans == reference_spans(tags) &&
              eval::bio_encode(eval::bio_decode(canonical), tags.size()) == canonical;
  }
  return {entity_ok == 1000 && micro_ok == 1000 && bio_ok == 1000,
          "entity_f1 " + std::to_string(entity_ok) + "/1000, micro_f1 " + std::to_string(micro_ok) +
              "/1000, bio_decode idempotent " + std::to_string(bio_ok) + "/1000"};
}

Outcome split_hygiene() {
  Rng rng(99);
  const auto notes = synthetic::patient_notes(1000, 2, 5, rng);
  const auto split = corpus::split_by_patient(notes, corpus::SplitRatios{}, 12345);
  std::map<std::string, std::set<corpus::Subset>> seen;
  for (const auto& n : notes) seen[n.patient_id].insert(split.subset_of(n.patient_id));
  std::size_t leaked = 0;
  for (const auto& [pid, subsets] : seen) leaked += subsets.size() != 1;
  const double total = static_cast<double>(split.by_patient.size());
  const double tr = 100.0 * static_cast<double>(split.count(corpus::Subset::Train)) / total;
  const double dv = 100.0 * static_cast<double>(split.count(corpus::Subset::Dev)) / total;
  const double te = 100.0 * static_cast<double>(split.count(corpus::Subset::Test)) / total;
  const bool shares = std::abs(tr - 80) <= 2 && std::abs(dv - 10) <= 2 && std::abs(te - 10) <= 2;
  const bool partition = seen.size() == 1000 && split.by_patient.size() == 1000;
  return {leaked == 0 && shares && partition,
          std::to_string(notes.size()) + " notes from " + std::to_string(seen.size()) + " patients, " +
              std::to_string(leaked) + " leaked, shares " + fmt("%.1f/%.1f/%.1f", tr, dv, te)};
}

Outcome tokenizer_contracts() {
  using namespace testing;
  Rng rng(111);
  std::size_t idem = 0;
  const std::string chars = "abXY.,;:()-/'\" 0123\xC3\xA9";
  for (int i = 0; i < 1000; ++i) {
    std::string s;
    const auto len = uniform_index(rng, 24);
    for (std::uint64_t k = 0; k < len; ++k) {
      const auto c = uniform_index(rng, chars.size() - 1);
      if (c == chars.size() - 2) s += "\xC3\xA9";
      else s.push_back(chars[c]);
    }
    const auto once = normalize(s);
    idem += normalize(once) == once;
  }

  const auto v = random_vocabulary(rng, "abcd", 50, {"##d"});
  std::size_t greedy_ok = 0, unknown = 0;
  for (int w = 0; w < 500; ++w) {
    const auto word = random_word(rng, "abcd", 8);
    std::vector<std::string> got;
    for (auto id : encode_word(v, word)) got.push_back(v.token(id));
    greedy_ok += got == greedy_by_enumeration(v.tokens(), word);
    unknown += got == std::vector<std::string>{"[UNK]"};
  }

  const auto train = synthetic::clinical_sentences(400, rng);
  TrainerOptions opt;
  opt.declared_size = 400;
  const auto trained = train_wordpiece(train, opt);
  const auto held = synthetic::clinical_sentences(300, rng);
  std::size_t round_trip = 0;
  for (const auto& s : held) {
    const auto norm = normalize(s);
    round_trip += decode(trained, encode(trained, norm).ids) == norm;
  }
  return {idem == 1000 && greedy_ok == 500 && round_trip == held.size() && v.size() == 50,
          "normalize idempotent " + std::to_string(idem) + "/1000, greedy = exhaustive oracle " +
              std::to_string(greedy_ok) + "/500 (" + std::to_string(unknown) + " dead ends), decode(encode(x)) = x " +
              std::to_string(round_trip) + "/" + std::to_string(held.size())};
}

Outcome sequence_length_harness() {
  TrainerOptions topt;
  topt.declared_size = 400;
  Rng rng(123);
  const std::vector<std::string> labels{"pneumonia", "sepsis", "diabetes", "cirrhosis"};
  auto vocab_text = synthetic::clinical_sentences(400, rng);
  for (std::size_t i = 0; i < labels.size(); ++i) vocab_text.push_back("History of " + synthetic::trigger_word(i) + " was noted .");
  const auto vocab = train_wordpiece(vocab_text, topt);

  const auto train_docs = synthetic::labeled_documents(96, labels, 40, rng);
  const auto dev_docs = synthetic::labeled_documents(24, labels, 40, rng);
  const auto test_docs = synthetic::labeled_documents(48, labels, 40, rng);

  std::size_t prefix_ok = 0, prefix_total = 0, truncated_128 = 0;
  for (const auto* set : {&train_docs, &dev_docs, &test_docs}) {
    for (const auto& d : *set) {
      const auto r128 = finetune::prepare_document(d.text, vocab, 128);
      const auto r512 = finetune::prepare_document(d.text, vocab, 512);
      const auto content = r128.n_real() - 2;
      ++prefix_total;
      prefix_ok += r128.ids.size() == 128 && r512.ids.size() == 512 &&
                   std::equal(r128.ids.begin() + 1, r128.ids.begin() + 1 + static_cast<long>(content), r512.ids.begin() + 1);
      truncated_128 += r128.n_real() == 128;
    }
  }

  EncoderConfig c;
  c.vocab_size = static_cast<int>(vocab.size());
  c.hidden_dim = 16;
  c.n_layers = 1;
  c.n_heads = 2;
  c.ff_dim = 32;
  c.max_positions = 512;
  Rng init(5);
  const auto checkpoint = Parameters::initialize(c, init);
  const auto spec = finetune::multilabel_task("docs", labels);
  finetune::FinetuneHyper hyper;
  hyper.epochs = 2;
  hyper.batch_size = 8;
  hyper.learning_rate = 3e-3;
  const std::vector<std::uint64_t> seeds{1, 2, 3};

  std::vector<eval::ResultRow> rows;
  for (int max_len : {128, 512}) {
    const auto train = finetune::encode_docs(train_docs, spec, vocab, max_len);
    const auto dev = finetune::encode_docs(dev_docs, spec, vocab, max_len);
    const auto test = finetune::encode_docs(test_docs, spec, vocab, max_len);
    const auto result = finetune::finetune_task(checkpoint, spec, train, dev, seeds, hyper);
    rows.push_back({"docs", "max " + std::to_string(max_len), finetune::evaluate_runs(result, test)});
  }
  const bool comparable = rows.size() == 2 && rows[0].report.metric == rows[1].report.metric &&
                          rows[0].report.values.size() == rows[1].report.values.size() &&
                          rows[0].report.values.size() == seeds.size();
  return {prefix_ok == prefix_total && comparable,
          "prefix property " + std::to_string(prefix_ok) + "/" + std::to_string(prefix_total) + " documents (" +
              std::to_string(truncated_128) + " truncated at 128); " + rows[0].report.metric + fmt(" median %.3f (128) vs %.3f (512)", rows[0].report.median, rows[1].report.median) +
              " over " + std::to_string(seeds.size()) + " seeds each"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria{
      {1, "sequence-length table arithmetic", 1, sequence_length_arithmetic},
      {2, "probe oracle", 1, probe_oracle},
      {3, "gradient correctness", 60, gradient_correctness},
      {4, "accumulation equivalence", 60, accumulation_equivalence},
      {5, "two-phase pretraining", 300, two_phase_pretraining},
      {6, "compression direction", 60, compression_direction},
      {7, "toy fine-tuning", 300, toy_finetuning},
      {8, "metric oracles", 10, metric_oracles},
      {9, "split hygiene", 1, split_hygiene},
      {10, "tokenizer contracts", 10, tokenizer_contracts},
      {11, "128-vs-512 harness", 300, sequence_length_harness},
  };
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));
  bool all_pass = true;
  for (const auto& c : criteria) {
    if (!wanted.empty() && !wanted.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs < c.budget_seconds;
    const bool pass = o.pass && in_time;
    all_pass = all_pass && pass;
    std::printf("criterion %d (%s): %s - %s; %.2f s of %.0f s budget%s\n", c.id, c.name, pass ? "PASS" : "FAIL",
                o.detail.c_str(), secs, c.budget_seconds, in_time ? "" : " EXCEEDED");
    std::fflush(stdout);
  }
  return all_pass ? 0 : 1;
}
