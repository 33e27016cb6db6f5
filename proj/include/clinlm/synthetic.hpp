#pragma once

// Seeded synthetic fixtures standing in for the data-use-restricted corpora:
// templated clinical and general-domain text, multi-note patients, a
// separable BIO grammar, keyword-labeled documents and range-labeled NLI pairs.

#include <cstddef>
#include <string>
#include <vector>

#include "clinlm/corpus.hpp"
#include "clinlm/finetune.hpp"
#include "clinlm/random.hpp"

namespace clinlm::synthetic {

/// Space-separated sentences with punctuation already split off.
std::vector<std::string> clinical_sentences(std::size_t n, Rng& rng);
std::vector<std::string> general_sentences(std::size_t n, Rng& rng);

/// Documents of clinical sentences, for pretraining.
std::vector<std::vector<std::string>> clinical_documents(std::size_t n_docs, std::size_t sentences_per_doc, Rng& rng);

/// Between min_notes and max_notes notes per patient, each with its own
/// encounter; note types and providers vary, some texts exceed 2000 characters.
std::vector<corpus::NoteRecord> patient_notes(std::size_t n_patients, std::size_t min_notes, std::size_t max_notes,
                                              Rng& rng);

/// Entity words come from fixed per-type lists that never overlap, so the
/// tagging is a function of the words.
std::vector<finetune::NerExample> ner_examples(std::size_t n, Rng& rng);

/// Label i holds when trigger word i appears; triggers sit at uniformly random
/// sentence positions inside documents of `sentences` sentences. At most four
/// labels are supported.
std::vector<finetune::DocExample> labeled_documents(std::size_t n, const std::vector<std::string>& labels,
                                                    std::size_t sentences, Rng& rng);
std::string trigger_word(std::size_t label_index);

/// Lab-value premises with range claims, labeled by the probe oracle.
std::vector<finetune::NliExample> nli_examples(std::size_t n, Rng& rng);

}  // namespace clinlm::synthetic
