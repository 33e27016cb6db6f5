#pragma once

// Brute-force reference counters shared by the unit and acceptance tests.

#include <algorithm>
#include <string>
#include <vector>

#include "clinlm/eval.hpp"
#include "clinlm/random.hpp"
#include "clinlm/wordpiece.hpp"

namespace clinlm::testing {

struct Counts {
  std::size_t tp = 0, fp = 0, fn = 0;
};

/// Precision, recall and F1 from raw counts with the both-empty convention.
inline eval::Prf prf(const Counts& c) {
  eval::Prf out;
  const std::size_t n_pred = c.tp + c.fp;
  const std::size_t n_gold = c.tp + c.fn;
  out.precision = n_pred == 0 ? (n_gold == 0 ? 1.0 : 0.0) : static_cast<double>(c.tp) / static_cast<double>(n_pred);
  out.recall = n_gold == 0 ? (n_pred == 0 ? 1.0 : 0.0) : static_cast<double>(c.tp) / static_cast<double>(n_gold);
  const double s = out.precision + out.recall;
  out.f1 = s == 0.0 ? 0.0 : 2.0 * out.precision * out.recall / s;
  return out;
}

inline std::vector<std::string> random_tags(Rng& rng, std::size_t length, const std::vector<std::string>& types) {
  std::vector<std::string> tags;
  for (std::size_t i = 0; i < length; ++i) {
    const auto r = uniform_index(rng, 1 + 2 * types.size());
    if (r == 0) {
      tags.emplace_back("O");
    } else {
      const auto& t = types[(r - 1) / 2];
      tags.push_back(((r - 1) % 2 == 0 ? "B-" : "I-") + t);
    }
  }
  return tags;
}

/// Walks the tags word by word, collecting spans without using bio_decode.
inline std::vector<eval::Span> reference_spans(const std::vector<std::string>& tags) {
  std::vector<eval::Span> out;
  for (std::size_t i = 0; i < tags.size(); ++i) {
    if (tags[i] == "O") continue;
    const std::string label = tags[i].substr(2);
    const bool continues = tags[i][0] == 'I' && i > 0 && tags[i - 1] != "O" && tags[i - 1].substr(2) == label;
    if (continues) {
      out.back().end = static_cast<int>(i) + 1;
    } else {
      out.push_back({static_cast<int>(i), static_cast<int>(i) + 1, label});
    }
  }
  return out;
}

inline Counts brute_span_counts(const std::vector<eval::Span>& gold, const std::vector<eval::Span>& pred) {
  Counts c;
  for (const auto& p : pred) {
    bool hit = false;
    for (const auto& g : gold) hit = hit || (g.start == p.start && g.end == p.end && g.label == p.label);
    if (hit) ++c.tp;
    else ++c.fp;
  }
  for (const auto& g : gold) {
    bool hit = false;
    for (const auto& p : pred) hit = hit || (g.start == p.start && g.end == p.end && g.label == p.label);
    if (!hit) ++c.fn;
  }
  return c;
}

inline Counts brute_label_counts(const std::vector<eval::LabelSet>& gold, const std::vector<eval::LabelSet>& pred,
                                 const std::vector<std::string>& universe) {
  Counts c;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    for (const auto& label : universe) {
      const bool g = gold[i].count(label) > 0;
      const bool p = pred[i].count(label) > 0;
      if (g && p) ++c.tp;
      if (!g && p) ++c.fp;
      if (g && !p) ++c.fn;
    }
  }
  return c;
}

inline eval::LabelSet random_label_set(Rng& rng, const std::vector<std::string>& universe) {
  eval::LabelSet s;
  for (const auto& l : universe) {
    if (uniform01(rng) < 0.3) s.insert(l);
  }
  return s;
}

/// Specials, every alphabet character in both forms except `omit`, then
/// random multi-character pieces up to `size` tokens.
inline Vocabulary random_vocabulary(Rng& rng, const std::string& alphabet, std::size_t size,
                                    const std::vector<std::string>& omit = {}) {
  std::vector<std::string> tokens(std::begin(kSpecialTokens), std::end(kSpecialTokens));
  for (char c : alphabet) {
    for (std::string t : {std::string(1, c), "##" + std::string(1, c)}) {
      if (std::find(omit.begin(), omit.end(), t) == omit.end()) tokens.push_back(t);
    }
  }
  while (tokens.size() < size) {
    std::string t;
    const auto len = 2 + uniform_index(rng, 3);
    for (std::uint64_t k = 0; k < len; ++k) t.push_back(alphabet[uniform_index(rng, alphabet.size())]);
    if (uniform01(rng) < 0.5) t = "##" + t;
    if (std::find(tokens.begin(), tokens.end(), t) == tokens.end()) tokens.push_back(t);
  }
  return Vocabulary(tokens, size);
}

inline std::string random_word(Rng& rng, const std::string& alphabet, std::size_t max_len) {
  std::string word;
  const auto len = 1 + uniform_index(rng, max_len);
  for (std::uint64_t k = 0; k < len; ++k) word.push_back(alphabet[uniform_index(rng, alphabet.size())]);
  return word;
}

/// Every segmentation of word into vocabulary pieces, found by scanning the
/// whole token list at each position.
inline void segmentations(const std::vector<std::string>& tokens, const std::string& word, std::size_t pos,
                          std::vector<std::string>& current, std::vector<std::vector<std::string>>& out) {
  if (pos == word.size()) {
    out.push_back(current);
    return;
  }
  for (std::size_t i = kNumSpecials; i < tokens.size(); ++i) {
    const bool cont = is_continuation(tokens[i]);
    if (cont != (pos > 0)) continue;
    const std::string body = cont ? tokens[i].substr(2) : tokens[i];
    if (word.compare(pos, body.size(), body) != 0) continue;
    current.push_back(tokens[i]);
    segmentations(tokens, word, pos + body.size(), current, out);
    current.pop_back();
  }
}

/// Longest-first greedy matching picks, among all complete segmentations, the
/// one whose piece lengths are lexicographically largest; it fails (one
/// [UNK]) when the longest-first path dead-ends even if another path exists.
inline std::vector<std::string> greedy_by_enumeration(const std::vector<std::string>& tokens,
                                                      const std::string& word) {
  std::vector<std::vector<std::string>> all;
  std::vector<std::string> current;
  segmentations(tokens, word, 0, current, all);
  auto lengths = [](const std::vector<std::string>& seg) {
    std::vector<std::size_t> out;
    for (const auto& p : seg) out.push_back(is_continuation(p) ? p.size() - 2 : p.size());
    return out;
  };
  if (all.empty()) return {"[UNK]"};
  const auto best = *std::max_element(all.begin(), all.end(),
                                      [&](const auto& a, const auto& b) { return lengths(a) < lengths(b); });
  // A dead end shows up as a longer first choice at some step that no
  // complete segmentation shares.
  std::size_t pos = 0;
  for (std::size_t k = 0; k < best.size(); ++k) {
    std::size_t longest = 0;
    for (std::size_t i = kNumSpecials; i < tokens.size(); ++i) {
      const bool cont = is_continuation(tokens[i]);
      if (cont != (pos > 0)) continue;
      const std::string body = cont ? tokens[i].substr(2) : tokens[i];
      if (word.compare(pos, body.size(), body) == 0) longest = std::max(longest, body.size());
    }
    const std::size_t taken = lengths(best)[k];
    if (longest != taken) return {"[UNK]"};
    pos += taken;
  }
  return best;
}

}  // namespace clinlm::testing
