#include <unistd.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "clinlm/cli.hpp"
#include "clinlm/corpus.hpp"
#include "clinlm/finetune.hpp"
#include "clinlm/synthetic.hpp"
#include "doctest.h"

using namespace clinlm;
namespace fs = std::filesystem;

namespace {

struct Run {
  int status = 0;
  std::string out;
  std::string err;
};

Run run(const std::vector<std::string>& args, const std::string& input = "") {
  std::istringstream in(input);
  std::ostringstream out, err;
  Run r;
  r.status = cli::dispatch(args, in, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = fs::temp_directory_path() / ("clinlm_cli_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  fs::path path_;
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

std::string lines(const std::vector<std::string>& items) {
  std::string s;
  for (const auto& i : items) s += i + "\n";
  return s;
}

}  // namespace

TEST_CASE("usage errors") {
  const auto none = run({});
  CHECK(none.status != 0);
  CHECK(none.err.find("Usage") != std::string::npos);
  const auto unknown = run({"frobnicate"});
  CHECK(unknown.status != 0);
  const auto missing = run({"encode"});
  CHECK(missing.status == 2);
  const auto help = run({"split", "--help"});
  CHECK(help.status == 0);
  CHECK(help.out.find("--ratios") != std::string::npos);
}

TEST_CASE("runtime failures are one-line diagnostics") {
  const auto r = run({"encode", "--vocab", "/nonexistent/vocab.txt"});
  CHECK(r.status == 1);
  CHECK(r.err.rfind("error: ", 0) == 0);
  CHECK(std::count(r.err.begin(), r.err.end(), '\n') == 1);
}

TEST_CASE("normalize reads standard input") {
  const auto r = run({"normalize"}, "pain.\nDr.Smith\n");
  CHECK(r.status == 0);
  CHECK(r.out == "pain .\nDr . Smith\n");
}

TEST_CASE("split a ten-patient fixture") {
  TempDir dir;
  std::vector<corpus::NoteRecord> notes;
  for (int p = 0; p < 10; ++p) {
    for (int k = 0; k < 2; ++k) {
      notes.push_back(corpus::make_note("N" + std::to_string(p) + "_" + std::to_string(k), "P" + std::to_string(p),
                                        "E" + std::to_string(p), "Progress note", "physician", "text"));
    }
  }
  std::ostringstream recs;
  corpus::write_notes(recs, notes);
  write_file(dir.file("notes.jsonl"), recs.str());
  const auto a = run({"split", "-i", dir.file("notes.jsonl"), "--ratios", "8:1:1", "--seed", "7"});
  REQUIRE(a.status == 0);
  std::map<std::string, int> counts;
  std::istringstream manifest(a.out);
  std::string line;
  while (std::getline(manifest, line)) counts[line.substr(line.find('\t') + 1)]++;
  CHECK(counts["train"] == 8);
  CHECK(counts["dev"] == 1);
  CHECK(counts["test"] == 1);
  const auto b = run({"split", "-i", dir.file("notes.jsonl"), "--ratios", "8:1:1", "--seed", "7"});
  CHECK(a.out == b.out);
  CHECK(run({"split", "-i", dir.file("notes.jsonl"), "--ratios", "0:0:0"}).status == 1);
}

TEST_CASE("config file values yield to flags") {
  TempDir dir;
  std::vector<std::string> occ{"a", "a", "a", "b", "b", "c"};
  write_file(dir.file("labels.txt"), lines(occ));
  write_file(dir.file("run.conf"), "# top labels\nk = 1\nseed = 3\n");
  const auto from_file = run({"top-labels", "-i", dir.file("labels.txt"), "--config", dir.file("run.conf")});
  REQUIRE(from_file.status == 0);
  CHECK(from_file.out == "label\tcount\na\t3\n");
  const auto override = run({"top-labels", "-i", dir.file("labels.txt"), "--config", dir.file("run.conf"), "--k", "2"});
  CHECK(override.out == "label\tcount\na\t3\nb\t2\n");
  write_file(dir.file("bad.conf"), "no_such_key = 1\n");
  CHECK(run({"top-labels", "-i", dir.file("labels.txt"), "--config", dir.file("bad.conf")}).status != 0);
  std::istringstream cfg("a = 1\n\n# c\n b=two words \n");
  const auto parsed = cli::read_config(cfg);
  CHECK(parsed.at("a") == "1");
  CHECK(parsed.at("b") == "two words");
}

TEST_CASE("vocabulary, encoding and compression report") {
  TempDir dir;
  Rng rng(3);
  write_file(dir.file("clinical.txt"), lines(synthetic::clinical_sentences(200, rng)));
  write_file(dir.file("general.txt"), lines(synthetic::general_sentences(200, rng)));
  REQUIRE(run({"train-vocab", "-i", dir.file("clinical.txt"), "--size", "300", "-o", dir.file("a.vocab")}).status == 0);
  REQUIRE(run({"train-vocab", "-i", dir.file("clinical.txt"), "--size", "300", "-o", dir.file("a2.vocab")}).status == 0);
  REQUIRE(run({"train-vocab", "-i", dir.file("general.txt"), "--size", "300", "-o", dir.file("b.vocab")}).status == 0);
  CHECK(slurp(dir.file("a.vocab")) == slurp(dir.file("a2.vocab")));

  const auto enc = run({"encode", "--vocab", dir.file("a.vocab")}, "the patient\n");
  CHECK(enc.status == 0);
  CHECK_FALSE(enc.out.empty());

  const auto report = run({"compress-report", "--vocab", "wiki=" + dir.file("b.vocab"), "--vocab",
                           "clin=" + dir.file("a.vocab"), "--dataset", "notes=" + dir.file("clinical.txt"),
                           "--baseline", "wiki"});
  REQUIRE(report.status == 0);
  std::istringstream rows(report.out);
  std::string header, wiki_row, clin_row;
  std::getline(rows, header);
  std::getline(rows, wiki_row);
  std::getline(rows, clin_row);
  CHECK(header == "dataset\tvocabulary\tmean_length\tpct_diff_mean\tmedian_length\tpct_diff_median");
  CHECK(wiki_row.find("notes\twiki\t") == 0);
  CHECK(wiki_row.find("\t0%\t") != std::string::npos);
  CHECK(wiki_row.substr(wiki_row.size() - 3) == "\t0%");
  CHECK(clin_row.find("\t-") != std::string::npos);
}

TEST_CASE("stats and discharge filter") {
  TempDir dir;
  write_file(dir.file("train.txt"), "a\na b\na b c d\n");
  const auto s = run({"stats", "--train", dir.file("train.txt"), "--name", "toy"});
  REQUIRE(s.status == 0);
  CHECK(s.out.find("toy") != std::string::npos);

  std::vector<corpus::NoteRecord> notes{
      corpus::make_note("n1", "p1", "e1", "Discharge summary", "physician", std::string(2500, 'x')),
      corpus::make_note("n2", "p1", "e1", "Discharge summary", "physician", std::string(3000, 'x')),
      corpus::make_note("n3", "p2", "e2", "Discharge summary", "nursing", std::string(3000, 'x'))};
  std::ostringstream recs;
  corpus::write_notes(recs, notes);
  const auto f = run({"filter-discharge"}, recs.str());
  REQUIRE(f.status == 0);
  std::istringstream back(f.out);
  const auto kept = corpus::read_notes(back);
  REQUIRE(kept.size() == 1);
  CHECK(kept[0].note_id == "n2");
}

TEST_CASE("pretrain, finetune, evaluate and probe end to end") {
  TempDir dir;
  Rng rng(5);
  std::string corpus_text;
  for (const auto& doc : synthetic::clinical_documents(20, 4, rng)) corpus_text += lines(doc) + "\n";
  write_file(dir.file("corpus.txt"), corpus_text);
  const auto ner = synthetic::ner_examples(40, rng);
  std::string vocab_text;
  for (const auto& ex : ner) {
    for (const auto& w : ex.words) vocab_text += w + " ";
    vocab_text += "\n";
  }
  write_file(dir.file("vocab_corpus.txt"), corpus_text + vocab_text);
  REQUIRE(run({"train-vocab", "-i", dir.file("vocab_corpus.txt"), "--size", "300", "-o", dir.file("v.vocab")}).status == 0);

  const std::vector<std::string> pre{"pretrain", "--corpus", dir.file("corpus.txt"), "--vocab", dir.file("v.vocab"),
                                     "--plan", "16:3,32:2", "--micro-batch", "4", "--accum", "2", "--hidden", "16",
                                     "--layers", "1", "--heads", "2", "--ff", "32", "--max-positions", "32",
                                     "--seed", "9"};
  auto first = pre;
  first.insert(first.end(), {"-o", dir.file("a.ckpt"), "--log", dir.file("a.log")});
  auto second = pre;
  second.insert(second.end(), {"-o", dir.file("b.ckpt"), "--log", dir.file("b.log")});
  const auto p1 = run(first);
  INFO(p1.err);
  REQUIRE(p1.status == 0);
  REQUIRE(run(second).status == 0);
  CHECK(slurp(dir.file("a.ckpt")) == slurp(dir.file("b.ckpt")));
  CHECK(slurp(dir.file("a.log")) == slurp(dir.file("b.log")));
  std::istringstream log(slurp(dir.file("a.log")));
  std::string line;
  std::size_t n_log = 0;
  while (std::getline(log, line)) ++n_log;
  CHECK(n_log == 6);

  std::ostringstream train, dev;
  finetune::write_conll(train, std::span(ner).subspan(0, 30));
  finetune::write_conll(dev, std::span(ner).subspan(30));
  write_file(dir.file("train.conll"), train.str());
  write_file(dir.file("dev.conll"), dev.str());
  const auto ft = run({"finetune", "--task", "ner2010", "--vocab", dir.file("v.vocab"), "--checkpoint",
                       dir.file("a.ckpt"), "--train", dir.file("train.conll"), "--dev", dir.file("dev.conll"),
                       "--seeds", "2", "--epochs", "1", "--max-len", "32", "--output-dir", dir.file("runs")});
  INFO(ft.err);
  REQUIRE(ft.status == 0);
  CHECK(ft.out.find("ner2010\t") != std::string::npos);
  CHECK(fs::exists(dir.file("runs/ner2010-seed0.ckpt")));

  const auto ev = run({"evaluate", "--task", "ner2010", "--vocab", dir.file("v.vocab"), "--max-len", "32",
                       "--checkpoint", dir.file("runs/ner2010-seed0.ckpt"), "--checkpoint",
                       dir.file("runs/ner2010-seed1.ckpt"), "--test", dir.file("dev.conll")});
  INFO(ev.err);
  REQUIRE(ev.status == 0);
  CHECK(ev.out.find("\t2\n") != std::string::npos);

  const auto pr = run({"probe", "--oracle"});
  REQUIRE(pr.status == 0);
  CHECK(pr.out.find("overall") != std::string::npos);
  CHECK(run({"probe"}).status == 1);
}
