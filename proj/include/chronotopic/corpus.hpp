#pragma once

#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "chronotopic/io.hpp"

namespace chronotopic {

struct Document {
  std::string uid;
  std::string raw_text;
  int year = 0;
};

struct Corpus {
  std::vector<Document> docs;
  int min_year = 0;
  int max_year = 0;

  std::size_t size() const { return docs.size(); }
};

struct TokenizedDocument {
  std::string uid;
  std::vector<std::string> tokens;
  bool retained = true;
};

/// Term axis shared by every document-term matrix. Ids are assigned in
/// lexicographic term order so runs are reproducible.
struct Vocabulary {
  std::vector<std::string> terms;               // id -> term
  std::unordered_map<std::string, int> ids;     // term -> id
  std::vector<int> doc_freq;                    // per id
  std::vector<long long> corpus_freq;           // per id

  int size() const { return static_cast<int>(terms.size()); }

  int id_of(const std::string& term) const {
    auto it = ids.find(term);
    return it == ids.end() ? -1 : it->second;
  }
};

/// Ordered, non-overlapping inclusive year intervals covering the corpus.
struct TimeBins {
  std::vector<std::pair<int, int>> ranges;

  /// Throws ValidationError unless ranges are sorted, non-overlapping and
  /// non-empty.
  void validate() const;

  int size() const { return static_cast<int>(ranges.size()); }

  /// Bin index for a year, or -1 when uncovered.
  int bin_of(int year) const;
};

enum class CorpusFormat { jsonl, csv };

using StopwordSet = std::unordered_set<std::string>;
using LemmaMap = std::unordered_map<std::string, std::string>;

/// Bundled English stopword list.
const StopwordSet& default_stopwords();

/// One stopword per line; '#' comments and blank lines ignored.
StopwordSet load_stopwords(const fs::path& path);

/// Two-column TSV term<TAB>lemma.
LemmaMap load_lemma_map(const fs::path& path);

/// jsonl: {uid, text, year} per line. csv: header uid,text,year.
/// Duplicate uids are rejected.
Corpus load_corpus(const fs::path& path, CorpusFormat format);

/// Strips blacklist symbols, control codes and all punctuation except full
/// stops, then collapses whitespace runs and trims. Total and idempotent.
std::string clean_text(std::string_view raw);

/// Lowercased tokens split on whitespace and full stops, no stopword
/// filtering. Used when the length filter counts pre-stopword tokens.
std::vector<std::string> split_tokens(std::string_view cleaned);

std::vector<std::string> remove_stopwords(std::vector<std::string> tokens,
                                          const StopwordSet& stopwords);

/// split_tokens + stopword removal in one step (the common path).
std::vector<std::string> tokenize(std::string_view cleaned, const StopwordSet& stopwords);

void apply_lemma_map(std::vector<std::string>& tokens, const LemmaMap& lemmas);

struct TokenizeOptions {
  int min_tokens = 20;
  // When true (default) the length filter counts tokens before stopword
  // removal; stopwords are dropped afterwards either way.
  bool length_filter_before_stopwords = true;
  const StopwordSet* stopwords = nullptr;  // nullptr -> bundled list
  const LemmaMap* lemmas = nullptr;        // optional
};

/// clean + tokenize + length-filter for a whole corpus. Order preserved;
/// retained flags set. Throws ValidationError if nothing survives.
std::vector<TokenizedDocument> prepare_corpus(const Corpus& corpus, const TokenizeOptions& opt);

/// Sets the retained flag (token count >= min_tokens, boundary inclusive)
/// on every doc, order preserved. Throws ValidationError when none survive.
std::vector<TokenizedDocument> filter_short(std::vector<TokenizedDocument> docs, int min_tokens);

/// Terms with df < min_df or df > max_df_ratio * n_docs are excluded.
Vocabulary build_vocabulary(std::span<const TokenizedDocument> docs, int min_df,
                            double max_df_ratio);

/// uid -> bin index. Throws ValidationError naming the first uncovered year.
std::unordered_map<std::string, int> assign_bins(std::span<const Document> docs,
                                                 const TimeBins& bins);

struct EntityAnnotations {
  std::unordered_map<std::string, std::vector<std::string>> entities;  // uid -> tokens
  std::size_t annotated = 0;  // uids present in the corpus
  std::size_t ignored = 0;    // uids not in the corpus
};

/// jsonl: {uid, entities: [string]}. Entity strings are lowercased. uids
/// absent from `corpus_uids` are counted but otherwise ignored.
EntityAnnotations load_entity_annotations(const fs::path& path,
                                          const std::unordered_set<std::string>& corpus_uids);

}  // namespace chronotopic
