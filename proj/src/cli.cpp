#include "clinlm/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <istream>
#include <memory>
#include <ostream>
#include <set>
#include <stdexcept>

#include "CLI11.hpp"
#include "clinlm/corpus.hpp"
#include "clinlm/encoder.hpp"
#include "clinlm/eval.hpp"
#include "clinlm/finetune.hpp"
#include "clinlm/pretrain.hpp"
#include "clinlm/probe.hpp"
#include "clinlm/text.hpp"
#include "clinlm/wordpiece.hpp"

namespace clinlm::cli {

namespace {

class Input {
 public:
  Input(const std::string& path, std::istream& fallback) {
    if (path == "-") {
      stream_ = &fallback;
    } else {
      file_ = std::make_unique<std::ifstream>(path, std::ios::binary);
      if (!*file_) throw std::runtime_error("cannot open " + path);
      stream_ = file_.get();
    }
  }
  std::istream& get() { return *stream_; }

 private:
  std::unique_ptr<std::ifstream> file_;
  std::istream* stream_ = nullptr;
};

class Output {
 public:
  Output(const std::string& path, std::ostream& fallback) : path_(path) {
    if (path == "-") {
      stream_ = &fallback;
    } else {
      file_ = std::make_unique<std::ofstream>(path, std::ios::binary);
      if (!*file_) throw std::runtime_error("cannot open " + path + " for writing");
      stream_ = file_.get();
    }
  }
  std::ostream& get() { return *stream_; }
  void close() {
    stream_->flush();
    if (!*stream_) throw std::runtime_error("failed writing " + path_);
  }

 private:
  std::string path_;
  std::unique_ptr<std::ofstream> file_;
  std::ostream* stream_ = nullptr;
};

std::vector<std::string> read_lines(std::istream& in) {
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

std::vector<std::string> read_texts(const std::string& path, std::istream& fallback) {
  Input input(path, fallback);
  std::vector<std::string> texts;
  for (auto& line : read_lines(input.get())) {
    if (!trim(line).empty()) texts.push_back(std::move(line));
  }
  return texts;
}

std::pair<std::string, std::string> split_named(const std::string& item) {
  const auto eq = item.find('=');
  if (eq == std::string::npos || eq == 0 || eq + 1 == item.size()) {
    throw std::invalid_argument("expected NAME=FILE, got '" + item + "'");
  }
  return {item.substr(0, eq), item.substr(eq + 1)};
}

char parse_delimiter(const std::string& text) {
  if (text == "tab" || text == "\\t" || text == "\t") return '\t';
  if (text.size() == 1) return text[0];
  throw std::invalid_argument("delimiter must be one character or 'tab'");
}

struct TaskFiles {
  std::string task;
  std::string vocab;
  std::string labels;
  int max_len = 128;
};

void add_task_options(CLI::App* sub, TaskFiles& t) {
  sub->add_option("--task", t.task, "ner2010, ner2012, re2010, mednli, icd50 or atc")->required();
  sub->add_option("--vocab", t.vocab, "Vocabulary file")->required();
  sub->add_option("--labels", t.labels, "Closed label list (icd50, atc)");
  sub->add_option("--max-len", t.max_len, "Sequence length cap")->capture_default_str();
}

finetune::TaskSpec make_spec(const TaskFiles& t, finetune::TaskKind kind) {
  if (kind == finetune::TaskKind::Icd50 || kind == finetune::TaskKind::Atc) {
    if (t.labels.empty()) throw std::invalid_argument("--labels is required for " + t.task);
    const auto list = corpus::LabelList::read_file(t.labels, "code");
    return finetune::task_spec(kind, list.labels());
  }
  return finetune::task_spec(kind);
}

std::vector<finetune::EncodedExample> load_task_examples(finetune::TaskKind kind, const finetune::TaskSpec& spec,
                                                         const std::string& path, const Vocabulary& vocab,
                                                         int max_len) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  switch (kind) {
    case finetune::TaskKind::Ner2010:
    case finetune::TaskKind::Ner2012:
      return finetune::encode_ner(finetune::read_conll(in), spec, vocab, max_len);
    case finetune::TaskKind::Re2010:
      return finetune::encode_re(finetune::read_re_jsonl(in), spec, vocab, max_len);
    case finetune::TaskKind::MedNli:
      return finetune::encode_nli(finetune::read_nli_jsonl(in), spec, vocab, max_len);
    case finetune::TaskKind::Icd50:
    case finetune::TaskKind::Atc:
      return finetune::encode_docs(finetune::read_doc_jsonl(in), spec, vocab, max_len);
  }
  throw std::invalid_argument("unknown task");
}

bool has_flag(const std::vector<std::string>& args, const std::string& flag) {
  return std::any_of(args.begin(), args.end(),
                     [&](const std::string& a) { return a == flag || a.rfind(flag + "=", 0) == 0; });
}

/// Pulls `--config FILE` out of args and appends `--key=value` for every
/// config key the subcommand knows and the arguments leave unset.
std::vector<std::string> apply_config(std::vector<std::string> args, CLI::App& app) {
  std::string path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      path = args[i + 1];
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i), args.begin() + static_cast<std::ptrdiff_t>(i) + 2);
      break;
    }
    if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i));
      break;
    }
  }
  if (path.empty() || args.empty()) return args;
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path);
  const auto config = read_config(in);

  CLI::App* sub = nullptr;
  std::set<std::string> known_anywhere;
  for (CLI::App* s : app.get_subcommands({})) {
    if (s->get_name() == args[0]) sub = s;
    for (const CLI::Option* opt : s->get_options()) {
      for (const auto& name : opt->get_lnames()) known_anywhere.insert(name);
    }
  }
  if (sub == nullptr) return args;
  for (const auto& [key, value] : config) {
    if (known_anywhere.count(key) == 0) throw std::invalid_argument("unknown config key '" + key + "' in " + path);
    const std::string flag = "--" + key;
    if (sub->get_option_no_throw(flag) == nullptr || has_flag(args, flag)) continue;
    args.push_back(flag + "=" + value);
  }
  return args;
}

}  // namespace

std::map<std::string, std::string> read_config(std::istream& in) {
  std::map<std::string, std::string> values;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(t.substr(0, eq));
    if (key.empty()) throw std::invalid_argument("config line " + std::to_string(line_no) + ": empty key");
    values[key] = trim(t.substr(eq + 1));
  }
  return values;
}

int dispatch(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err) {
  CLI::App app{"Clinical language-model toolkit", "clinlm"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every subcommand");
  std::string output = "-";

  // normalize
  std::string norm_input = "-";
  auto* normalize_cmd = app.add_subcommand("normalize", "Separate punctuation from adjacent letters");
  normalize_cmd->add_option("-i,--input", norm_input, "Text file, one document per line")->capture_default_str();
  normalize_cmd->add_option("-o,--output", output, "Output file")->capture_default_str();
  normalize_cmd->callback([&] {
    const auto lines = read_texts(norm_input, in);
    Output o(output, out);
    for (const auto& l : lines) o.get() << normalize(l) << '\n';
    o.close();
  });

  // train-vocab
  std::string vocab_input = "-";
  std::size_t vocab_size = 64000;
  std::size_t min_freq = 2;
  bool no_markers = false;
  auto* train_vocab_cmd = app.add_subcommand("train-vocab", "Train a wordpiece vocabulary");
  train_vocab_cmd->add_option("-i,--input", vocab_input, "Corpus, one text per line")->capture_default_str();
  train_vocab_cmd->add_option("--size", vocab_size, "Declared vocabulary size")->capture_default_str();
  train_vocab_cmd->add_option("--min-freq", min_freq, "Minimum pair count for a merge")->capture_default_str();
  train_vocab_cmd->add_flag("--no-markers", no_markers, "Do not reserve relation concept markers");
  train_vocab_cmd->add_option("-o,--output", output, "Vocabulary file")->capture_default_str();
  train_vocab_cmd->callback([&] {
    std::vector<std::string> texts;
    for (const auto& t : read_texts(vocab_input, in)) texts.push_back(normalize(t));
    TrainerOptions options;
    options.declared_size = vocab_size;
    options.min_frequency = min_freq;
    if (!no_markers) options.reserved_tokens = concept_marker_tokens();
    const Vocabulary vocab = train_wordpiece(texts, options);
    Output o(output, out);
    vocab.save(o.get());
    o.close();
  });

  // encode
  std::string encode_vocab;
  std::string encode_input = "-";
  bool encode_ids = false;
  auto* encode_cmd = app.add_subcommand("encode", "Encode text with a vocabulary");
  encode_cmd->add_option("--vocab", encode_vocab, "Vocabulary file")->required();
  encode_cmd->add_option("-i,--input", encode_input, "Text file, one text per line")->capture_default_str();
  encode_cmd->add_flag("--ids", encode_ids, "Print ids instead of tokens");
  encode_cmd->add_option("-o,--output", output, "Output file")->capture_default_str();
  encode_cmd->callback([&] {
    const auto vocab = Vocabulary::load_file(encode_vocab);
    Input input(encode_input, in);
    const auto lines = read_lines(input.get());
    Output o(output, out);
    for (const auto& l : lines) {
      const auto enc = encode(vocab, normalize(l));
      for (std::size_t i = 0; i < enc.ids.size(); ++i) {
        if (i > 0) o.get() << ' ';
        if (encode_ids) {
          o.get() << enc.ids[i];
        } else {
          o.get() << enc.tokens[i];
        }
      }
      o.get() << '\n';
    }
    o.close();
  });

  // compress-report
  std::vector<std::string> report_vocabs;
  std::vector<std::string> report_datasets;
  std::string baseline;
  std::string delimiter = "tab";
  auto* compress_cmd = app.add_subcommand("compress-report", "Sequence-length table across vocabularies");
  compress_cmd->add_option("--vocab", report_vocabs, "NAME=FILE, repeatable")->required();
  compress_cmd->add_option("--dataset", report_datasets, "NAME=FILE with one text per line, repeatable")->required();
  compress_cmd->add_option("--baseline", baseline, "Vocabulary name the percentages compare against")->required();
  compress_cmd->add_option("--delimiter", delimiter, "Column delimiter")->capture_default_str();
  compress_cmd->add_option("-o,--output", output, "Output file")->capture_default_str();
  compress_cmd->callback([&] {
    std::vector<Vocabulary> vocabs;
    std::vector<std::string> names;
    for (const auto& item : report_vocabs) {
      auto [name, path] = split_named(item);
      names.push_back(name);
      vocabs.push_back(Vocabulary::load_file(path));
    }
    std::vector<NamedVocabulary> named;
    for (std::size_t i = 0; i < vocabs.size(); ++i) named.push_back({names[i], &vocabs[i]});
    std::vector<NamedTexts> datasets;
    for (const auto& item : report_datasets) {
      auto [name, path] = split_named(item);
      datasets.push_back({name, read_texts(path, in)});
    }
    const auto report = compression_report(datasets, named, baseline);
    Output o(output, out);
    report.write(o.get(), parse_delimiter(delimiter));
    o.close();
  });

  // filter-discharge
  std::string notes_input = "-";
  auto* filter_cmd = app.add_subcommand("filter-discharge", "Keep the longest qualifying note per encounter");
  filter_cmd->add_option("-i,--input", notes_input, "Note records, one JSON object per line")->capture_default_str();
  filter_cmd->add_option("-o,--output", output, "Output file")->capture_default_str();
  filter_cmd->callback([&] {
    Input input(notes_input, in);
    const auto notes = corpus::read_notes(input.get());
    const auto kept = corpus::filter_discharge_summaries(notes);
    Output o(output, out);
    corpus::write_notes(o.get(), kept);
    o.close();
  });

  // split
  std::string ratios_text = "8:1:1";
  std::uint64_t seed = 0;
  auto* split_cmd = app.add_subcommand("split", "Patient-disjoint train/dev/test manifest");
  split_cmd->add_option("-i,--input", notes_input, "Note records, one JSON object per line")->capture_default_str();
  split_cmd->add_option("--ratios", ratios_text, "train:dev:test")->capture_default_str();
  split_cmd->add_option("--seed", seed, "Shuffle seed")->capture_default_str();
  split_cmd->add_option("-o,--output", output, "Manifest file")->capture_default_str();
  split_cmd->callback([&] {
    Input input(notes_input, in);
    const auto notes = corpus::read_notes(input.get());
    const auto assignment = corpus::split_by_patient(notes, corpus::SplitRatios::parse(ratios_text), seed);
    Output o(output, out);
    assignment.write_manifest(o.get());
    o.close();
  });

  // stats
  std::string stats_train;
  std::string stats_dev;
  std::string stats_test;
  std::string stats_name = "dataset";
  std::string stats_category = "Classification";
  auto* stats_cmd = app.add_subcommand("stats", "Size and word-length row for one dataset");
  stats_cmd->add_option("--train", stats_train, "Training examples, one per line")->required();
  stats_cmd->add_option("--dev", stats_dev, "Dev examples, one per line");
  stats_cmd->add_option("--test", stats_test, "Test examples, one per line");
  stats_cmd->add_option("--name", stats_name, "Dataset name")->capture_default_str();
  stats_cmd->add_option("--category", stats_category, "Task category")->capture_default_str();
  stats_cmd->add_option("--delimiter", delimiter, "Column delimiter")->capture_default_str();
  stats_cmd->add_option("-o,--output", output, "Output file")->capture_default_str();
  stats_cmd->callback([&] {
    const auto train = read_texts(stats_train, in);
    const auto dev = stats_dev.empty() ? std::vector<std::string>{} : read_texts(stats_dev, in);
    const auto test = stats_test.empty() ? std::vector<std::string>{} : read_texts(stats_test, in);
    std::vector<std::string> all = train;
    all.insert(all.end(), dev.begin(), dev.end());
    all.insert(all.end(), test.begin(), test.end());
    const corpus::DatasetSizeRow row{stats_name, stats_category, train.size(), dev.size(), test.size(),
                                     corpus::dataset_stats(all)};
    Output o(output, out);
    corpus::write_size_table(o.get(), std::span(&row, 1), parse_delimiter(delimiter));
    o.close();
  });

  // top-labels
  std::string labels_input = "-";
  std::size_t top_k = 50;
  auto* top_cmd = app.add_subcommand("top-labels", "Most frequent labels");
  top_cmd->add_option("-i,--input", labels_input, "One label occurrence per line")->capture_default_str();
  top_cmd->add_option("--k", top_k, "Number of labels")->capture_default_str();
  top_cmd->add_option("-o,--output", output, "Output file")->capture_default_str();
  top_cmd->callback([&] {
    std::vector<std::string> occurrences;
    for (const auto& l : read_texts(labels_input, in)) occurrences.push_back(trim(l));
    const auto counts = corpus::count_labels(occurrences);
    const auto top = corpus::select_top_k_labels(occurrences, top_k);
    Output o(output, out);
    o.get() << "label\tcount\n";
    for (const auto& label : top) {
      const auto it = std::find_if(counts.begin(), counts.end(), [&](const auto& c) { return c.label == label; });
      o.get() << label << '\t' << it->count << '\n';
    }
    o.close();
  });

  // pretrain
  std::string corpus_path;
  std::string pretrain_vocab;
  std::string plan_text = "128:500,512:275";
  std::string loss_log;
  std::string schedule_text = "linear";
  pretrain::PretrainOptions popts;
  popts.accum = {64, 32};
  EncoderConfig ecfg;
  auto* pretrain_cmd = app.add_subcommand("pretrain", "Masked-LM pretraining with a sequence-length curriculum");
  pretrain_cmd->add_option("--corpus", corpus_path, "Sentences one per line, blank line between documents")->required();
  pretrain_cmd->add_option("--vocab", pretrain_vocab, "Vocabulary file")->required();
  pretrain_cmd->add_option("--plan", plan_text, "LEN:STEPS[,LEN:STEPS...]")->capture_default_str();
  pretrain_cmd->add_option("--micro-batch", popts.accum.micro_batch_size, "Sequences per micro-batch")
      ->capture_default_str();
  pretrain_cmd->add_option("--accum", popts.accum.accumulation_steps, "Micro-batches per update")
      ->capture_default_str();
  pretrain_cmd->add_option("--seed", popts.seed, "Seed for init, data order, masking and dropout")
      ->capture_default_str();
  pretrain_cmd->add_option("--lr", popts.adam.learning_rate, "Peak learning rate")->capture_default_str();
  pretrain_cmd->add_option("--schedule", schedule_text, "linear or constant")->capture_default_str();
  pretrain_cmd->add_option("--warmup", popts.warmup_fraction, "Warmup fraction of all steps")->capture_default_str();
  pretrain_cmd->add_option("--mask-prob", popts.policy.mask_prob, "Selection probability")->capture_default_str();
  pretrain_cmd->add_option("--hidden", ecfg.hidden_dim, "Hidden size")->capture_default_str();
  pretrain_cmd->add_option("--layers", ecfg.n_layers, "Encoder layers")->capture_default_str();
  pretrain_cmd->add_option("--heads", ecfg.n_heads, "Attention heads")->capture_default_str();
  pretrain_cmd->add_option("--ff", ecfg.ff_dim, "Feed-forward size")->capture_default_str();
  pretrain_cmd->add_option("--max-positions", ecfg.max_positions, "Position table size")->capture_default_str();
  pretrain_cmd->add_option("--dropout", ecfg.dropout_rate, "Dropout rate")->capture_default_str();
  pretrain_cmd->add_option("--log", loss_log, "Loss log file (default: standard output)");
  pretrain_cmd->add_option("-o,--output", output, "Checkpoint file")->required();
  pretrain_cmd->callback([&] {
    const auto vocab = Vocabulary::load_file(pretrain_vocab);
    std::ifstream corpus_in(corpus_path);
    if (!corpus_in) throw std::runtime_error("cannot open " + corpus_path);
    const auto docs = pretrain::tokenize_corpus(pretrain::read_text_corpus(corpus_in), vocab);
    ecfg.vocab_size = static_cast<int>(vocab.size());
    popts.plan = pretrain::PhasePlan::parse(plan_text);
    popts.schedule = pretrain::parse_schedule_kind(schedule_text);
    popts.first_random_id = vocab.first_regular_id();
    const auto result = pretrain::run_pretraining(docs, ecfg, popts);
    save_checkpoint_file(output, result.params);
    Output o(loss_log.empty() ? "-" : loss_log, out);
    pretrain::write_loss_log(o.get(), result.log);
    o.close();
  });

  // finetune
  TaskFiles ft;
  std::string ft_checkpoint;
  std::string ft_train;
  std::string ft_dev;
  std::string ft_out_dir;
  std::string model_name = "clinlm";
  std::string seed_log;
  int n_seeds = 5;
  std::uint64_t base_seed = 0;
  finetune::FinetuneHyper hyper;
  bool no_dropout = false;
  auto* finetune_cmd = app.add_subcommand("finetune", "Fine-tune a checkpoint on one task over several seeds");
  add_task_options(finetune_cmd, ft);
  finetune_cmd->add_option("--checkpoint", ft_checkpoint, "Pretrained checkpoint")->required();
  finetune_cmd->add_option("--train", ft_train, "Training file")->required();
  finetune_cmd->add_option("--dev", ft_dev, "Dev file")->required();
  finetune_cmd->add_option("--seeds", n_seeds, "Number of seeds")->capture_default_str();
  finetune_cmd->add_option("--seed", base_seed, "First seed; later runs use seed + 1, seed + 2, ...")
      ->capture_default_str();
  finetune_cmd->add_option("--epochs", hyper.epochs, "Epochs")->capture_default_str();
  finetune_cmd->add_option("--batch-size", hyper.batch_size, "Examples per update")->capture_default_str();
  finetune_cmd->add_option("--lr", hyper.learning_rate, "Learning rate")->capture_default_str();
  finetune_cmd->add_option("--max-steps", hyper.max_steps, "Cap on updates, 0 for none")->capture_default_str();
  finetune_cmd->add_option("--eval-every", hyper.eval_every, "Dev evaluation interval, 0 for once per epoch")
      ->capture_default_str();
  finetune_cmd->add_flag("--no-dropout", no_dropout, "Disable dropout while fine-tuning");
  finetune_cmd->add_option("--output-dir", ft_out_dir, "Directory for the best checkpoint of each seed");
  finetune_cmd->add_option("--model-name", model_name, "Model column of the report")->capture_default_str();
  finetune_cmd->add_option("--seed-log", seed_log, "Per-seed dev scores");
  finetune_cmd->add_option("-o,--output", output, "Dev report")->capture_default_str();
  finetune_cmd->callback([&] {
    if (n_seeds < 1) throw std::invalid_argument("--seeds must be at least 1");
    const auto kind = finetune::parse_task_kind(ft.task);
    const auto spec = make_spec(ft, kind);
    const auto vocab = Vocabulary::load_file(ft.vocab);
    const auto checkpoint = load_checkpoint_file(ft_checkpoint);
    const auto train = load_task_examples(kind, spec, ft_train, vocab, ft.max_len);
    const auto dev = load_task_examples(kind, spec, ft_dev, vocab, ft.max_len);
    std::vector<std::uint64_t> seeds;
    for (int i = 0; i < n_seeds; ++i) seeds.push_back(base_seed + static_cast<std::uint64_t>(i));
    hyper.dropout = !no_dropout;
    const auto result = finetune::finetune_task(checkpoint, spec, train, dev, seeds, hyper);
    if (!ft_out_dir.empty()) {
      std::filesystem::create_directories(ft_out_dir);
      for (const auto& run : result.runs) {
        save_checkpoint_file(ft_out_dir + "/" + spec.name + "-seed" + std::to_string(run.seed) + ".ckpt", run.params);
      }
    }
    const std::vector<eval::ResultRow> rows{{spec.name, model_name, result.dev}};
    Output o(output, out);
    eval::write_result_table(o.get(), rows);
    o.close();
    if (!seed_log.empty()) {
      Output s(seed_log, out);
      eval::write_seed_log(s.get(), rows);
      s.close();
    }
  });

  // evaluate
  TaskFiles ev;
  std::vector<std::string> ev_checkpoints;
  std::string ev_test;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Score fine-tuned checkpoints; median and stddev across them");
  add_task_options(evaluate_cmd, ev);
  evaluate_cmd->add_option("--checkpoint", ev_checkpoints, "Fine-tuned checkpoint, repeatable")->required();
  evaluate_cmd->add_option("--test", ev_test, "Test file")->required();
  evaluate_cmd->add_option("--model-name", model_name, "Model column of the report")->capture_default_str();
  evaluate_cmd->add_option("--seed-log", seed_log, "Per-checkpoint scores");
  evaluate_cmd->add_option("-o,--output", output, "Report")->capture_default_str();
  evaluate_cmd->callback([&] {
    const auto kind = finetune::parse_task_kind(ev.task);
    const auto spec = make_spec(ev, kind);
    const auto vocab = Vocabulary::load_file(ev.vocab);
    const auto test = load_task_examples(kind, spec, ev_test, vocab, ev.max_len);
    std::vector<double> values;
    for (const auto& path : ev_checkpoints) {
      const auto params = load_checkpoint_file(path);
      values.push_back(finetune::score(spec, test, finetune::predict(params, spec, test)));
    }
    const std::vector<eval::ResultRow> rows{{spec.name, model_name, eval::aggregate_seeds(spec.metric, values)}};
    Output o(output, out);
    eval::write_result_table(o.get(), rows);
    o.close();
    if (!seed_log.empty()) {
      Output s(seed_log, out);
      eval::write_seed_log(s.get(), rows);
      s.close();
    }
  });

  // probe
  std::string suite_path = probe::default_suite_path();
  std::string probe_checkpoint;
  std::string probe_vocab;
  std::string predictions_path;
  int probe_max_len = 128;
  bool use_oracle = false;
  auto* probe_cmd = app.add_subcommand("probe", "Score an NLI model on the clinical inference probes");
  probe_cmd->add_option("--suite", suite_path, "Probe table")->capture_default_str();
  probe_cmd->add_option("--checkpoint", probe_checkpoint, "Checkpoint with a mednli head");
  probe_cmd->add_option("--vocab", probe_vocab, "Vocabulary file");
  probe_cmd->add_option("--max-len", probe_max_len, "Sequence length cap")->capture_default_str();
  probe_cmd->add_flag("--oracle", use_oracle, "Answer with the gold labels (self-check)");
  probe_cmd->add_option("--predictions", predictions_path, "Per-row predictions file");
  probe_cmd->add_option("-o,--output", output, "Report")->capture_default_str();
  probe_cmd->callback([&] {
    const auto suite = probe::load_probe_suite_file(suite_path);
    probe::ProbeReport report;
    if (use_oracle) {
      std::map<std::pair<std::string, std::string>, std::string> gold;
      for (const auto& p : suite) gold[{p.premise, p.hypothesis}] = std::string(probe::to_string(p.gold));
      report = probe::run_probes([&](const std::string& a, const std::string& b) { return gold.at({a, b}); }, suite);
    } else {
      if (probe_checkpoint.empty() || probe_vocab.empty()) {
        throw std::invalid_argument("probe needs --checkpoint and --vocab, or --oracle");
      }
      const auto vocab = Vocabulary::load_file(probe_vocab);
      const auto params = load_checkpoint_file(probe_checkpoint);
      const auto spec = finetune::task_spec(finetune::TaskKind::MedNli);
      report = probe::run_probes(finetune::make_nli_model(params, spec, vocab, probe_max_len), suite);
    }
    Output o(output, out);
    report.write(o.get());
    o.close();
    if (!predictions_path.empty()) {
      Output p(predictions_path, out);
      report.write_predictions(p.get(), suite);
      p.close();
    }
  });

  if (args.empty()) {
    err << app.help();
    return 2;
  }
  try {
    auto merged = apply_config(args, app);
    std::reverse(merged.begin(), merged.end());
    app.parse(merged);
  } catch (const CLI::CallForHelp&) {
    out << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n' << app.help();
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace clinlm::cli
