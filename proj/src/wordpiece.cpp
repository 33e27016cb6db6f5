#include "clinlm/wordpiece.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <stdexcept>

#include "clinlm/text.hpp"

namespace clinlm {

namespace {

bool is_reserved_shape(std::string_view token) {
  return token.size() >= 3 && token.front() == '[' && token.back() == ']';
}

std::string_view strip_prefix(std::string_view token) {
  return is_continuation(token) ? token.substr(kContinuationPrefix.size()) : token;
}

}  // namespace

std::vector<std::string> concept_marker_tokens() {
  std::vector<std::string> out;
  for (const char* slot : {"E1", "E2"}) {
    for (const char* type : {"problem", "treatment", "test"}) {
      out.push_back(std::string("[") + slot + ":" + type + "]");
      out.push_back(std::string("[/") + slot + ":" + type + "]");
    }
  }
  return out;
}

bool is_continuation(std::string_view token) {
  return token.size() > kContinuationPrefix.size() && token.starts_with(kContinuationPrefix);
}

Vocabulary::Vocabulary(std::vector<std::string> tokens, std::size_t declared_size, std::size_t n_reserved)
    : tokens_(std::move(tokens)), declared_size_(declared_size), n_reserved_(n_reserved) {
  if (tokens_.size() < static_cast<std::size_t>(kNumSpecials) + n_reserved_) {
    throw std::invalid_argument("vocabulary is missing special tokens");
  }
  if (tokens_.size() > declared_size_) {
    throw std::invalid_argument("vocabulary has " + std::to_string(tokens_.size()) +
                                " tokens, above its declared size " + std::to_string(declared_size_));
  }
  for (TokenId i = 0; i < kNumSpecials; ++i) {
    if (tokens_[static_cast<std::size_t>(i)] != kSpecialTokens[i]) {
      throw std::invalid_argument("vocabulary id " + std::to_string(i) + " must be " +
                                  std::string(kSpecialTokens[i]));
    }
  }
  index_.reserve(tokens_.size());
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    const auto& t = tokens_[i];
    if (i >= static_cast<std::size_t>(kNumSpecials)) {
      if (t.empty() || t == kContinuationPrefix) {
        throw std::invalid_argument("malformed vocabulary token at id " + std::to_string(i));
      }
      if (i < static_cast<std::size_t>(kNumSpecials) + n_reserved_ && !is_reserved_shape(t)) {
        throw std::invalid_argument("reserved token must be bracketed: " + t);
      }
    }
    if (!index_.emplace(t, static_cast<TokenId>(i)).second) {
      throw std::invalid_argument("duplicate vocabulary token: " + t);
    }
  }
}

Vocabulary Vocabulary::load(std::istream& in) {
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    tokens.push_back(line);
  }
  std::size_t n_reserved = 0;
  while (kNumSpecials + n_reserved < tokens.size() && is_reserved_shape(tokens[kNumSpecials + n_reserved])) {
    ++n_reserved;
  }
  const auto size = tokens.size();
  return Vocabulary(std::move(tokens), size, n_reserved);
}

Vocabulary Vocabulary::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open vocabulary: " + path);
  return load(in);
}

void Vocabulary::save(std::ostream& out) const {
  for (const auto& t : tokens_) out << t << '\n';
}

void Vocabulary::save_file(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write vocabulary: " + path);
  save(out);
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw std::out_of_range("token id " + std::to_string(id) + " outside vocabulary of size " +
                            std::to_string(tokens_.size()));
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::optional<TokenId> Vocabulary::find(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::string normalize(std::string_view text) {
  const auto cps = decode_utf8(text);
  std::string out;
  out.reserve(text.size() + text.size() / 8);
  for (std::size_t i = 0; i < cps.size(); ++i) {
    const char32_t c = cps[i];
    if (is_punctuation(c)) {
      if (i > 0 && is_letter(cps[i - 1])) out.push_back(' ');
      append_utf8(out, c);
      if (i + 1 < cps.size() && is_letter(cps[i + 1])) out.push_back(' ');
    } else {
      append_utf8(out, c);
    }
  }
  return out;
}

namespace {

std::map<std::string, std::uint64_t> count_words(std::span<const std::string> corpus) {
  std::map<std::string, std::uint64_t> counts;
  for (const auto& text : corpus) {
    for (auto& w : split_whitespace(text)) ++counts[std::move(w)];
  }
  return counts;
}

std::set<char32_t> alphabet_of(const std::map<std::string, std::uint64_t>& words) {
  std::set<char32_t> chars;
  for (const auto& [w, c] : words) {
    for (char32_t cp : decode_utf8(w)) chars.insert(cp);
  }
  return chars;
}

using PairKey = std::uint64_t;

PairKey pair_key(std::uint32_t a, std::uint32_t b) { return (static_cast<PairKey>(a) << 32) | b; }

class MergeTrainer {
 public:
  MergeTrainer(const std::map<std::string, std::uint64_t>& words, const std::set<char32_t>& alphabet,
               std::vector<std::string> initial_tokens)
      : vocab_(std::move(initial_tokens)) {
    for (const auto& t : vocab_) taken_.insert(t);
    for (char32_t cp : alphabet) {
      std::string s;
      append_utf8(s, cp);
      unit_of(s);
    }
    for (char32_t cp : alphabet) {
      std::string s(kContinuationPrefix);
      append_utf8(s, cp);
      unit_of(s);
    }
    for (const auto& [w, freq] : words) {
      Word word{{}, freq};
      const auto cps = decode_utf8(w);
      for (std::size_t i = 0; i < cps.size(); ++i) {
        std::string s = i == 0 ? std::string() : std::string(kContinuationPrefix);
        append_utf8(s, cps[i]);
        word.units.push_back(unit_of(s));
      }
      add_counts(word, +1);
      words_.push_back(std::move(word));
    }
  }

  std::vector<std::string> run(std::size_t declared_size, std::size_t min_frequency) {
    while (vocab_.size() < declared_size) {
      const auto best = best_pair(min_frequency);
      if (!best) break;
      apply_merge(static_cast<std::uint32_t>(*best >> 32), static_cast<std::uint32_t>(*best & 0xffffffffu));
    }
    return std::move(vocab_);
  }

 private:
  struct Word {
    std::vector<std::uint32_t> units;
    std::uint64_t freq;
  };

  std::uint32_t unit_of(const std::string& s) {
    auto it = unit_index_.find(s);
    if (it != unit_index_.end()) return it->second;
    const auto id = static_cast<std::uint32_t>(units_.size());
    units_.push_back(s);
    unit_index_.emplace(s, id);
    unit_counts_.push_back(0);
    if (taken_.insert(s).second) vocab_.push_back(s);
    return id;
  }

  std::string merged_string(std::uint32_t a, std::uint32_t b) const {
    return units_[a] + std::string(strip_prefix(units_[b]));
  }

  void add_counts(const Word& w, int sign) {
    const auto delta = static_cast<std::int64_t>(w.freq) * sign;
    for (std::size_t i = 0; i < w.units.size(); ++i) {
      unit_counts_[w.units[i]] = static_cast<std::uint64_t>(static_cast<std::int64_t>(unit_counts_[w.units[i]]) + delta);
      if (i + 1 < w.units.size()) {
        const auto key = pair_key(w.units[i], w.units[i + 1]);
        auto& c = pair_counts_[key];
        c = static_cast<std::uint64_t>(static_cast<std::int64_t>(c) + delta);
        if (c == 0) pair_counts_.erase(key);
      }
    }
  }

  bool allowed(std::uint32_t a, std::uint32_t b) const {
    const auto merged = merged_string(a, b);
    if (!is_continuation(units_[a]) && is_continuation(merged)) return false;
    // A merge may not collide with a special or reserved token.
    if (!unit_index_.contains(merged) && taken_.contains(merged)) return false;
    return true;
  }

  std::optional<PairKey> best_pair(std::size_t min_frequency) {
    std::optional<PairKey> best;
    std::uint64_t best_count = 0;
    for (const auto& [key, count] : pair_counts_) {
      if (count < min_frequency) continue;
      const auto a = static_cast<std::uint32_t>(key >> 32);
      const auto b = static_cast<std::uint32_t>(key & 0xffffffffu);
      if (!allowed(a, b)) continue;
      if (!best) {
        best = key;
        best_count = count;
        continue;
      }
      const auto ba = static_cast<std::uint32_t>(*best >> 32);
      const auto bb = static_cast<std::uint32_t>(*best & 0xffffffffu);
      // count / (ca * cb) compared exactly by cross-multiplication.
      using u128 = unsigned __int128;
      const u128 lhs = static_cast<u128>(count) * unit_counts_[ba] * unit_counts_[bb];
      const u128 rhs = static_cast<u128>(best_count) * unit_counts_[a] * unit_counts_[b];
      bool better = false;
      if (lhs != rhs) {
        better = lhs > rhs;
      } else if (count != best_count) {
        better = count > best_count;
      } else {
        better = std::tie(units_[a], units_[b]) < std::tie(units_[ba], units_[bb]);
      }
      if (better) {
        best = key;
        best_count = count;
      }
    }
    return best;
  }

  void apply_merge(std::uint32_t a, std::uint32_t b) {
    const auto merged = unit_of(merged_string(a, b));
    for (auto& w : words_) {
      bool present = false;
      for (std::size_t i = 0; i + 1 < w.units.size(); ++i) {
        if (w.units[i] == a && w.units[i + 1] == b) {
          present = true;
          break;
        }
      }
      if (!present) continue;
      add_counts(w, -1);
      std::vector<std::uint32_t> rewritten;
      rewritten.reserve(w.units.size());
      for (std::size_t i = 0; i < w.units.size(); ++i) {
        if (i + 1 < w.units.size() && w.units[i] == a && w.units[i + 1] == b) {
          rewritten.push_back(merged);
          ++i;
        } else {
          rewritten.push_back(w.units[i]);
        }
      }
      w.units = std::move(rewritten);
      add_counts(w, +1);
    }
  }

  std::vector<std::string> vocab_;
  std::set<std::string> taken_;
  std::vector<std::string> units_;
  std::unordered_map<std::string, std::uint32_t> unit_index_;
  std::vector<std::uint64_t> unit_counts_;
  std::unordered_map<PairKey, std::uint64_t> pair_counts_;
  std::vector<Word> words_;
};

}  // namespace

std::size_t alphabet_floor(std::span<const std::string> corpus, std::size_t n_reserved) {
  return static_cast<std::size_t>(kNumSpecials) + n_reserved + 2 * alphabet_of(count_words(corpus)).size();
}

Vocabulary train_wordpiece(std::span<const std::string> corpus, const TrainerOptions& options) {
  const auto words = count_words(corpus);
  if (words.empty()) throw std::invalid_argument("cannot train a vocabulary on an empty corpus");
  const auto alphabet = alphabet_of(words);
  const std::size_t floor =
      static_cast<std::size_t>(kNumSpecials) + options.reserved_tokens.size() + 2 * alphabet.size();
  if (options.declared_size < floor) {
    throw std::invalid_argument("declared vocabulary size " + std::to_string(options.declared_size) +
                                " is below the alphabet floor " + std::to_string(floor));
  }
  std::vector<std::string> initial(kSpecialTokens, kSpecialTokens + kNumSpecials);
  for (const auto& r : options.reserved_tokens) {
    if (!is_reserved_shape(r)) throw std::invalid_argument("reserved token must be bracketed: " + r);
    initial.push_back(r);
  }
  MergeTrainer trainer(words, alphabet, std::move(initial));
  auto tokens = trainer.run(options.declared_size, std::max<std::size_t>(1, options.min_frequency));
  return Vocabulary(std::move(tokens), options.declared_size, options.reserved_tokens.size());
}

std::vector<TokenId> encode_word(const Vocabulary& vocab, std::string_view word) {
  const auto cps = decode_utf8(word);
  std::vector<TokenId> pieces;
  std::size_t start = 0;
  while (start < cps.size()) {
    std::optional<TokenId> match;
    std::size_t end = cps.size();
    for (; end > start; --end) {
      std::string candidate = start == 0 ? std::string() : std::string(kContinuationPrefix);
      candidate += encode_utf8(std::u32string_view(cps).substr(start, end - start));
      if (start == 0 && is_continuation(candidate)) continue;
      const auto id = vocab.find(candidate);
      if (id && !vocab.is_special(*id)) {
        match = id;
        break;
      }
    }
    if (!match) return {kUnkId};
    pieces.push_back(*match);
    start = end;
  }
  return pieces;
}

Encoding encode_words(const Vocabulary& vocab, std::span<const std::string> words) {
  Encoding enc;
  enc.word_pieces.reserve(words.size());
  for (const auto& w : words) {
    const auto pieces = encode_word(vocab, w);
    enc.word_pieces.push_back(pieces.size());
    for (TokenId id : pieces) {
      enc.ids.push_back(id);
      enc.tokens.push_back(vocab.token(id));
    }
  }
  return enc;
}

Encoding encode(const Vocabulary& vocab, std::string_view text) {
  const auto words = split_whitespace(text);
  return encode_words(vocab, words);
}

std::string decode(const Vocabulary& vocab, std::span<const TokenId> ids) {
  std::string out;
  for (TokenId id : ids) {
    const auto& tok = vocab.token(id);
    if (vocab.is_special(id)) continue;
    if (is_continuation(tok)) {
      out += strip_prefix(tok);
    } else {
      if (!out.empty()) out.push_back(' ');
      out += tok;
    }
  }
  return out;
}

LengthSummary length_summary(const Vocabulary& vocab, std::span<const std::string> texts) {
  if (texts.empty()) throw std::invalid_argument("length summary of an empty dataset");
  std::vector<std::size_t> lengths;
  lengths.reserve(texts.size());
  for (const auto& t : texts) lengths.push_back(encode(vocab, normalize(t)).n_tokens());
  std::sort(lengths.begin(), lengths.end());
  LengthSummary s;
  double total = 0.0;
  for (auto l : lengths) total += static_cast<double>(l);
  s.mean = total / static_cast<double>(lengths.size());
  const auto mid = lengths.size() / 2;
  s.median = lengths.size() % 2 == 1 ? static_cast<double>(lengths[mid])
                                     : (static_cast<double>(lengths[mid - 1]) + static_cast<double>(lengths[mid])) / 2.0;
  return s;
}

int percent_difference(double base, double candidate) {
  if (base == 0.0) throw std::invalid_argument("percentage difference against a zero baseline");
  return static_cast<int>(std::round(100.0 * (candidate - base) / base));
}

void CompressionReport::write(std::ostream& out, char delim) const {
  out << "dataset" << delim << "vocabulary" << delim << "mean_length" << delim << "pct_diff_mean" << delim
      << "median_length" << delim << "pct_diff_median\n";
  for (const auto& r : rows) {
    out << r.dataset << delim << r.vocabulary << delim << format_decimal(r.mean_length, 1) << delim
        << r.pct_diff_mean << '%' << delim << format_decimal(r.median_length, 1) << delim << r.pct_diff_median
        << "%\n";
  }
}

CompressionReport compression_report(std::span<const NamedTexts> datasets,
                                     std::span<const NamedVocabulary> vocabularies,
                                     const std::string& baseline) {
  const auto base_it = std::find_if(vocabularies.begin(), vocabularies.end(),
                                    [&](const NamedVocabulary& v) { return v.name == baseline; });
  if (base_it == vocabularies.end()) {
    throw std::invalid_argument("baseline vocabulary '" + baseline + "' is not among the vocabularies");
  }
  CompressionReport report;
  report.baseline = baseline;
  for (const auto& ds : datasets) {
    if (ds.texts.empty()) throw std::invalid_argument("dataset '" + ds.name + "' is empty");
    const auto base = length_summary(*base_it->vocab, ds.texts);
    for (const auto& v : vocabularies) {
      const auto s = v.name == baseline ? base : length_summary(*v.vocab, ds.texts);
      report.rows.push_back({ds.name, v.name, s.mean, percent_difference(base.mean, s.mean), s.median,
                             percent_difference(base.median, s.median)});
    }
  }
  return report;
}

std::vector<std::string> vocabulary_difference(const Vocabulary& a, const Vocabulary& b) {
  std::vector<std::string> out;
  for (std::size_t i = static_cast<std::size_t>(a.first_regular_id()); i < a.size(); ++i) {
    const auto& t = a.tokens()[i];
    if (!is_continuation(t) && !b.contains(t)) out.push_back(t);
  }
  return out;
}

}  // namespace clinlm
