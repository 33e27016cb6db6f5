#pragma once

// Cased wordpiece vocabulary: punctuation pre-separation, likelihood-scored
// merge training, greedy longest-match encoding and sequence-length analytics.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace clinlm {

using TokenId = std::int32_t;

inline constexpr TokenId kPadId = 0;
inline constexpr TokenId kUnkId = 1;
inline constexpr TokenId kClsId = 2;
inline constexpr TokenId kSepId = 3;
inline constexpr TokenId kMaskId = 4;
inline constexpr TokenId kNumSpecials = 5;

inline constexpr std::string_view kSpecialTokens[kNumSpecials] = {"[PAD]", "[UNK]", "[CLS]", "[SEP]",
                                                                  "[MASK]"};
inline constexpr std::string_view kContinuationPrefix = "##";

/// Reserved whole-word markers that wrap the two concepts of a relation example.
std::vector<std::string> concept_marker_tokens();

bool is_continuation(std::string_view token);

class Vocabulary {
 public:
  /// Validates ids, specials and token shapes. `n_reserved` tokens directly
  /// after the specials are marker slots exempt from merge training.
  Vocabulary(std::vector<std::string> tokens, std::size_t declared_size, std::size_t n_reserved = 0);

  /// Newline-delimited token list; line number is the id.
  static Vocabulary load(std::istream& in);
  static Vocabulary load_file(const std::string& path);
  void save(std::ostream& out) const;
  void save_file(const std::string& path) const;

  std::size_t size() const { return tokens_.size(); }
  std::size_t declared_size() const { return declared_size_; }
  std::size_t n_reserved() const { return n_reserved_; }
  bool cased() const { return true; }

  const std::string& token(TokenId id) const;
  std::optional<TokenId> find(std::string_view token) const;
  bool contains(std::string_view token) const { return find(token).has_value(); }
  bool is_special(TokenId id) const { return id >= 0 && id < kNumSpecials; }
  /// First id that is neither special nor reserved.
  TokenId first_regular_id() const { return static_cast<TokenId>(kNumSpecials + n_reserved_); }
  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
  std::size_t declared_size_;
  std::size_t n_reserved_;
};

/// Inserts a space between punctuation and an adjacent letter. Case is kept;
/// applying it twice changes nothing.
std::string normalize(std::string_view text);

struct TrainerOptions {
  std::size_t declared_size = 64000;
  std::size_t min_frequency = 2;
  std::vector<std::string> reserved_tokens;
};

/// Minimum vocabulary size for a corpus: specials, reserved markers, and every
/// observed character in word-initial and continuation form.
std::size_t alphabet_floor(std::span<const std::string> corpus, std::size_t n_reserved = 0);

/// Trains on already-normalized text. Merges are chosen by
/// count(ab) / (count(a) * count(b)); ties go to the larger raw pair count,
/// then to the lexicographically smaller pair.
Vocabulary train_wordpiece(std::span<const std::string> corpus, const TrainerOptions& options);

struct Encoding {
  std::vector<TokenId> ids;
  std::vector<std::string> tokens;
  std::vector<std::size_t> word_pieces;  // pieces produced by each input word

  std::size_t n_tokens() const { return ids.size(); }
};

/// Greedy longest-match-first segmentation of one word; an unmatchable word is [UNK].
std::vector<TokenId> encode_word(const Vocabulary& vocab, std::string_view word);
Encoding encode_words(const Vocabulary& vocab, std::span<const std::string> words);
/// Encodes already-normalized text word by word.
Encoding encode(const Vocabulary& vocab, std::string_view text);

/// Glues continuation pieces onto the previous piece and drops specials.
std::string decode(const Vocabulary& vocab, std::span<const TokenId> ids);

struct LengthSummary {
  double mean = 0.0;
  double median = 0.0;
};

/// Mean and median token counts of normalized-then-encoded texts.
LengthSummary length_summary(const Vocabulary& vocab, std::span<const std::string> texts);

/// round(100 * (candidate - base) / base), halves away from zero.
int percent_difference(double base, double candidate);

struct CompressionRow {
  std::string dataset;
  std::string vocabulary;
  double mean_length = 0.0;
  int pct_diff_mean = 0;
  double median_length = 0.0;
  int pct_diff_median = 0;
};

struct CompressionReport {
  std::string baseline;
  std::vector<CompressionRow> rows;

  void write(std::ostream& out, char delim = '\t') const;
};

struct NamedTexts {
  std::string name;
  std::vector<std::string> texts;
};

struct NamedVocabulary {
  std::string name;
  const Vocabulary* vocab = nullptr;
};

CompressionReport compression_report(std::span<const NamedTexts> datasets,
                                     std::span<const NamedVocabulary> vocabularies,
                                     const std::string& baseline);

/// Word-initial tokens of `a` missing from `b`, in `a`'s id order.
std::vector<std::string> vocabulary_difference(const Vocabulary& a, const Vocabulary& b);

}  // namespace clinlm
