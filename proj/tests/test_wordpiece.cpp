#include <algorithm>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "clinlm/synthetic.hpp"
#include "clinlm/text.hpp"
#include "clinlm/wordpiece.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace clinlm;

namespace {

std::vector<std::string> with_specials(std::vector<std::string> rest) {
  std::vector<std::string> tokens(std::begin(kSpecialTokens), std::end(kSpecialTokens));
  tokens.insert(tokens.end(), rest.begin(), rest.end());
  return tokens;
}

std::vector<std::string> pieces(const Vocabulary& v, std::string_view word) {
  std::vector<std::string> out;
  for (auto id : encode_word(v, word)) out.push_back(v.token(id));
  return out;
}

}  // namespace

TEST_CASE("normalize examples") {
  CHECK(normalize("pain.") == "pain .");
  CHECK(normalize("Dr.Smith") == "Dr . Smith");
  CHECK(normalize("no punctuation here") == "no punctuation here");
  CHECK(normalize("BP 120/80 (normal)") == "BP 120/80 ( normal )");
  CHECK(normalize("Caf\xC3\xA9\xE2\x80\x94ok") == "Caf\xC3\xA9 \xE2\x80\x94 ok");
}

TEST_CASE("normalize is idempotent") {
  Rng rng(1);
  const std::string alphabet = "abXY.,;:()-/'\" 0123";
  for (int i = 0; i < 2000; ++i) {
    std::string s;
    const auto len = uniform_index(rng, 20);
    for (std::uint64_t k = 0; k < len; ++k) s.push_back(alphabet[uniform_index(rng, alphabet.size())]);
    const auto once = normalize(s);
    CHECK(normalize(once) == once);
  }
}

TEST_CASE("trainer merges on a hand-scored corpus") {
  // Units: l5 ##o5 ##w5 ##e2 ##r2. Scores: ##e+##r 2/4 beats the 0.2 pairs,
  // then ##o+##w (tie on score and count, smaller pair), then l+##ow, then low+##er.
  const std::vector<std::string> corpus{"low low low", "lower lower"};
  const auto floor = alphabet_floor(corpus);
  CHECK(floor == 15);
  TrainerOptions opt;
  opt.declared_size = floor + 4;
  opt.min_frequency = 2;
  const auto v = train_wordpiece(corpus, opt);
  CHECK(v.size() == 19);
  const std::vector<std::string> merged(v.tokens().end() - 4, v.tokens().end());
  CHECK(merged == std::vector<std::string>{"##er", "##ow", "low", "lower"});
  CHECK(pieces(v, "lower") == std::vector<std::string>{"lower"});
  CHECK(pieces(v, "lowe") == std::vector<std::string>{"low", "##e"});
}

TEST_CASE("trainer budget edges") {
  const std::vector<std::string> corpus{"low low low", "lower lower"};
  TrainerOptions opt;
  opt.min_frequency = 2;
  SUBCASE("floor size means no merges") {
    opt.declared_size = alphabet_floor(corpus);
    const auto v = train_wordpiece(corpus, opt);
    CHECK(v.size() == opt.declared_size);
    for (std::size_t i = kNumSpecials; i < v.size(); ++i) {
      CHECK(count_codepoints(v.tokens()[i]) == (is_continuation(v.tokens()[i]) ? 3 : 1));
    }
  }
  SUBCASE("huge budget stops when merges run out") {
    opt.declared_size = 1000;
    const auto v = train_wordpiece(corpus, opt);
    CHECK(v.size() < 1000);
    CHECK(v.declared_size() == 1000);
  }
  SUBCASE("errors") {
    opt.declared_size = alphabet_floor(corpus) - 1;
    CHECK_THROWS(train_wordpiece(corpus, opt));
    opt.declared_size = 100;
    CHECK_THROWS(train_wordpiece(std::vector<std::string>{}, opt));
  }
  SUBCASE("reserved markers follow the specials") {
    opt.declared_size = 100;
    opt.reserved_tokens = concept_marker_tokens();
    const auto v = train_wordpiece(corpus, opt);
    CHECK(v.n_reserved() == opt.reserved_tokens.size());
    CHECK(v.token(kNumSpecials) == opt.reserved_tokens.front());
    CHECK(v.first_regular_id() == static_cast<TokenId>(kNumSpecials + opt.reserved_tokens.size()));
  }
}

TEST_CASE("trainer output is byte identical across runs") {
  Rng rng(8);
  const auto sents = synthetic::clinical_sentences(300, rng);
  TrainerOptions opt;
  opt.declared_size = 300;
  std::ostringstream a, b;
  train_wordpiece(sents, opt).save(a);
  train_wordpiece(sents, opt).save(b);
  CHECK(a.str() == b.str());
  std::istringstream in(a.str());
  const auto loaded = Vocabulary::load(in);
  std::ostringstream c;
  loaded.save(c);
  CHECK(c.str() == a.str());
}

TEST_CASE("greedy encoding examples") {
  const Vocabulary v(with_specials({"h", "##e", "##l", "##o", "hell", "##lo"}), 20);
  CHECK(pieces(v, "hello") == std::vector<std::string>{"hell", "##o"});
  CHECK(pieces(v, "hell") == std::vector<std::string>{"hell"});
  CHECK(pieces(v, "hex") == std::vector<std::string>{"[UNK]"});
  const std::vector<TokenId> ids = encode_word(v, "hello");
  CHECK(decode(v, ids) == "hello");
  CHECK(decode(v, std::vector<TokenId>{}).empty());
  CHECK_THROWS(decode(v, std::vector<TokenId>{99}));
  const auto enc = encode(v, "hello hell");
  CHECK(enc.n_tokens() == 3);
  CHECK(enc.word_pieces == std::vector<std::size_t>{2, 1});
  CHECK(enc.tokens.size() == enc.ids.size());
}

TEST_CASE("vocabulary validation") {
  CHECK_THROWS(Vocabulary({"[PAD]", "[UNK]"}, 10));
  CHECK_THROWS(Vocabulary(with_specials({"a", "a"}), 10));
  CHECK_THROWS(Vocabulary(with_specials({"##"}), 10));
  CHECK_THROWS(Vocabulary(with_specials({"a", "b"}), 6));
  CHECK_NOTHROW(Vocabulary(with_specials({"a", "##a"}), 7));
}


TEST_CASE("greedy encoding agrees with exhaustive segmentation") {
  using namespace clinlm::testing;
  Rng rng(21);
  // Without "##d" some words dead-end on the longest-first path.
  const auto v = random_vocabulary(rng, "abcd", 50, {"##d"});
  REQUIRE(v.size() == 50);
  std::size_t unknown = 0;
  for (int w = 0; w < 500; ++w) {
    const auto word = random_word(rng, "abcd", 8);
    const auto got = pieces(v, word);
    CHECK(got == greedy_by_enumeration(v.tokens(), word));
    if (got == std::vector<std::string>{"[UNK]"}) {
      ++unknown;
    } else {
      CHECK(decode(v, encode_word(v, word)) == word);
    }
  }
  CHECK(unknown > 0);
  CHECK(unknown < 500);
}

TEST_CASE("decode inverts encode on in-alphabet text") {
  Rng rng(5);
  const auto train = synthetic::clinical_sentences(400, rng);
  TrainerOptions opt;
  opt.declared_size = 400;
  const auto v = train_wordpiece(train, opt);
  const auto held = synthetic::clinical_sentences(200, rng);
  for (const auto& s : held) {
    const auto norm = normalize(s);
    const auto enc = encode(v, norm);
    CHECK(decode(v, enc.ids) == norm);
    CHECK(enc.n_tokens() >= count_words(norm));
    for (std::size_t i = 0; i < enc.ids.size(); ++i) CHECK(enc.ids[i] != kUnkId);
  }
}

TEST_CASE("merged vocabularies never lengthen encodings") {
  Rng rng(6);
  const auto corpus = synthetic::clinical_sentences(300, rng);
  TrainerOptions opt;
  opt.declared_size = alphabet_floor(corpus);
  const auto base = train_wordpiece(corpus, opt);
  opt.declared_size = 500;
  const auto rich = train_wordpiece(corpus, opt);
  for (const auto& s : corpus) {
    for (const auto& w : split_whitespace(s)) {
      CHECK(encode_word(rich, w).size() <= encode_word(base, w).size());
      CHECK(encode_word(base, w).size() == count_codepoints(w));
    }
  }
}

TEST_CASE("percentage differences") {
  CHECK(percent_difference(2465, 1945) == -21);
  CHECK(percent_difference(39, 31) == -21);
  CHECK(percent_difference(39, 34) == -13);
  CHECK(percent_difference(100, 100) == 0);
  CHECK(percent_difference(200, 201) == 1);  // 0.5 rounds away from zero
  CHECK(percent_difference(200, 199) == -1);
  CHECK_THROWS(percent_difference(0, 5));
}

TEST_CASE("compression report") {
  Rng rng(7);
  const auto corpus = synthetic::clinical_sentences(200, rng);
  TrainerOptions opt;
  opt.declared_size = alphabet_floor(corpus);
  const auto small = train_wordpiece(corpus, opt);
  opt.declared_size = 400;
  const auto big = train_wordpiece(corpus, opt);
  const std::vector<NamedTexts> data{{"notes", corpus}};
  const std::vector<NamedVocabulary> vocabs{{"chars", &small}, {"merged", &big}};
  const auto report = compression_report(data, vocabs, "chars");
  REQUIRE(report.rows.size() == 2);
  CHECK(report.rows[0].pct_diff_mean == 0);
  CHECK(report.rows[0].pct_diff_median == 0);
  CHECK(report.rows[1].pct_diff_mean < 0);
  CHECK(report.rows[1].mean_length < report.rows[0].mean_length);

  CHECK_THROWS(compression_report(data, vocabs, "missing"));
  const std::vector<NamedTexts> empty{{"none", {}}};
  CHECK_THROWS(compression_report(empty, vocabs, "chars"));

  std::ostringstream out;
  report.write(out);
  CHECK(out.str().find("dataset\tvocabulary") == 0);
}

TEST_CASE("vocabulary difference") {
  const Vocabulary a(with_specials({"a", "b", "ab", "##b"}), 20);
  const Vocabulary b(with_specials({"a", "b", "##b"}), 20);
  CHECK(vocabulary_difference(a, b) == std::vector<std::string>{"ab"});
  CHECK(vocabulary_difference(b, a).empty());
}
