#include "chronotopic/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <map>

#include <json.hpp>

namespace chronotopic {

namespace {

std::string ascii_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out)
    c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

}  // namespace

void TimeBins::validate() const {
  if (ranges.empty()) throw ValidationError("time bins: empty bin list");
  for (std::size_t i = 0; i < ranges.size(); ++i) {
    auto [lo, hi] = ranges[i];
    if (lo > hi)
      throw ValidationError("time bins: bin " + std::to_string(i) + " has start " +
                            std::to_string(lo) + " > end " + std::to_string(hi));
    if (i > 0 && ranges[i - 1].second >= lo)
      throw ValidationError("time bins: bin " + std::to_string(i) +
                            " overlaps or is out of order with its predecessor");
  }
}

int TimeBins::bin_of(int year) const {
  for (std::size_t i = 0; i < ranges.size(); ++i)
    if (year >= ranges[i].first && year <= ranges[i].second) return static_cast<int>(i);
  return -1;
}

// Bundled English stopword list. Contraction forms appear without their
// apostrophes because clean_text strips them before tokenization.
const StopwordSet& default_stopwords() {
  static const StopwordSet set = [] {
    static const char* words[] = {
        "a",       "about",   "above",   "after",   "again",    "against", "all",
        "am",      "an",      "and",     "any",     "are",      "arent",   "as",
        "at",      "be",      "because", "been",    "before",   "being",   "below",
        "between", "both",    "but",     "by",      "cannot",   "cant",    "could",
        "couldnt", "did",     "didnt",   "do",      "does",     "doesnt",  "doing",
        "dont",    "down",    "during",  "each",    "few",      "for",     "from",
        "further", "had",     "hadnt",   "has",     "hasnt",    "have",    "havent",
        "having",  "he",      "hed",     "hell",    "her",      "here",    "heres",
        "hers",    "herself", "hes",     "him",     "himself",  "his",     "how",
        "hows",    "i",       "id",      "if",      "ill",      "im",      "in",
        "into",    "is",      "isnt",    "it",      "its",      "itself",  "ive",
        "lets",    "me",      "more",    "most",    "mustnt",   "my",      "myself",
        "no",      "nor",     "not",     "of",      "off",      "on",      "once",
        "only",    "or",      "other",   "ought",   "our",      "ours",    "ourselves",
        "out",     "over",    "own",     "same",    "shant",    "she",     "shed",
        "shell",   "shes",    "should",  "shouldnt","so",       "some",    "such",
        "than",    "that",    "thats",   "the",     "their",    "theirs",  "them",
        "themselves","then",  "there",   "theres",  "these",    "they",    "theyd",
        "theyll",  "theyre",  "theyve",  "this",    "those",    "through", "to",
        "too",     "under",   "until",   "up",      "very",     "was",     "wasnt",
        "we",      "wed",     "well",    "were",    "werent",   "weve",    "what",
        "whats",   "when",    "whens",   "where",   "wheres",   "which",   "while",
        "who",     "whom",    "whos",    "why",     "whys",     "will",    "with",
        "wont",    "would",   "wouldnt", "you",     "youd",     "youll",   "your",
        "youre",   "yours",   "yourself","yourselves","youve",
    };
    StopwordSet s;
    for (const char* w : words) s.insert(w);
    return s;
  }();
  return set;
}

StopwordSet load_stopwords(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("stopword file: cannot open " + path.string());
  StopwordSet set;
  std::string line;
  while (std::getline(in, line)) {
    auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    set.insert(ascii_lower(t));
  }
  return set;
}

LemmaMap load_lemma_map(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("lemma map: cannot open " + path.string());
  LemmaMap map;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw ParseError("lemma map " + path.string() + ":" + std::to_string(lineno) +
                       ": expected term<TAB>lemma");
    std::string term = ascii_lower(trim(std::string_view(line).substr(0, tab)));
    std::string lemma = ascii_lower(trim(std::string_view(line).substr(tab + 1)));
    if (term.empty() || lemma.empty())
      throw ParseError("lemma map " + path.string() + ":" + std::to_string(lineno) +
                       ": empty term or lemma");
    map[term] = lemma;
  }
  return map;
}

namespace {

void check_record(Corpus& corpus, std::unordered_set<std::string>& seen, std::string uid,
                  std::string text, int year, const fs::path& path, std::size_t lineno) {
  if (uid.empty())
    throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": empty uid");
  if (!seen.insert(uid).second)
    throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": duplicate uid \"" +
                          uid + "\"");
  if (corpus.docs.empty()) {
    corpus.min_year = corpus.max_year = year;
  } else {
    corpus.min_year = std::min(corpus.min_year, year);
    corpus.max_year = std::max(corpus.max_year, year);
  }
  corpus.docs.push_back({std::move(uid), std::move(text), year});
}

Corpus load_corpus_jsonl(const fs::path& path) {
  Corpus corpus;
  std::unordered_set<std::string> seen;
  for_each_jsonl(path, [&](std::size_t lineno, const nlohmann::json& rec) {
    if (!rec.is_object() || !rec.contains("uid") || !rec.contains("text") ||
        !rec.contains("year"))
      throw ParseError(path.string() + ":" + std::to_string(lineno) +
                       ": record needs uid, text, year");
    if (!rec["uid"].is_string() || !rec["text"].is_string() ||
        !rec["year"].is_number_integer())
      throw ParseError(path.string() + ":" + std::to_string(lineno) +
                       ": uid/text must be strings, year an integer");
    check_record(corpus, seen, rec["uid"].get<std::string>(), rec["text"].get<std::string>(),
                 rec["year"].get<int>(), path, lineno);
  });
  return corpus;
}

// Record-level CSV reader: honors quoted fields, doubled quotes, and
// newlines inside quotes. Yields (line number of record start, fields).
void for_each_csv_record(const std::string& content, const fs::path& path,
                         const std::function<void(std::size_t, std::vector<std::string>&)>& fn) {
  std::vector<std::string> fields;
  std::string field;
  bool in_quotes = false;
  bool record_open = false;
  std::size_t lineno = 1, record_line = 1;
  auto end_field = [&] { fields.push_back(std::move(field)); field.clear(); };
  auto end_record = [&] {
    end_field();
    fn(record_line, fields);
    fields.clear();
    record_open = false;
  };
  for (std::size_t i = 0; i < content.size(); ++i) {
    char c = content[i];
    if (!record_open) {
      record_open = true;
      record_line = lineno;
    }
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < content.size() && content[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++lineno;
        field += c;
      }
    } else if (c == '"') {
      in_quotes = true;
    } else if (c == ',') {
      end_field();
    } else if (c == '\n') {
      ++lineno;
      if (!field.empty() || fields.size() > 0) end_record();
      else record_open = false;  // blank line
    } else if (c != '\r') {
      field += c;
    }
  }
  if (in_quotes)
    throw ParseError(path.string() + ":" + std::to_string(record_line) +
                     ": unterminated quoted field");
  if (record_open && (!field.empty() || !fields.empty())) end_record();
}

Corpus load_corpus_csv(const fs::path& path) {
  std::string content = read_text_file(path);
  Corpus corpus;
  std::unordered_set<std::string> seen;
  bool header_seen = false;
  for_each_csv_record(content, path, [&](std::size_t lineno, std::vector<std::string>& fields) {
    if (!header_seen) {
      if (fields.size() != 3 || fields[0] != "uid" || fields[1] != "text" ||
          fields[2] != "year")
        throw ParseError(path.string() + ":" + std::to_string(lineno) +
                         ": expected header uid,text,year");
      header_seen = true;
      return;
    }
    if (fields.size() != 3)
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": expected 3 fields, got " +
                       std::to_string(fields.size()));
    int year = 0;
    auto ytext = trim(fields[2]);
    auto [ptr, ec] = std::from_chars(ytext.data(), ytext.data() + ytext.size(), year);
    if (ec != std::errc{} || ptr != ytext.data() + ytext.size())
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": year \"" +
                       std::string(ytext) + "\" is not an integer");
    check_record(corpus, seen, std::move(fields[0]), std::move(fields[1]), year, path, lineno);
  });
  if (!header_seen) throw ParseError(path.string() + ": empty csv file");
  return corpus;
}

}  // namespace

Corpus load_corpus(const fs::path& path, CorpusFormat format) {
  if (!fs::exists(path)) throw ValidationError("corpus file not found: " + path.string());
  return format == CorpusFormat::jsonl ? load_corpus_jsonl(path) : load_corpus_csv(path);
}

std::string clean_text(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  bool pending_space = false;
  for (unsigned char c : raw) {
    if (std::isspace(c)) {
      pending_space = true;
      continue;
    }
    if (c < 0x20 || c == 0x7f) continue;             // control codes
    if (c < 0x80 && std::ispunct(c) && c != '.') continue;  // blacklist symbols
    if (pending_space && !out.empty()) out += ' ';
    pending_space = false;
    out += static_cast<char>(c);
  }
  return out;
}

std::vector<std::string> split_tokens(std::string_view cleaned) {
  std::vector<std::string> tokens;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) {
      tokens.push_back(cur);
      cur.clear();
    }
  };
  for (unsigned char c : cleaned) {
    if (std::isspace(c) || c == '.') {
      flush();
    } else {
      cur += static_cast<char>(std::tolower(c));
    }
  }
  flush();
  return tokens;
}

std::vector<std::string> remove_stopwords(std::vector<std::string> tokens,
                                          const StopwordSet& stopwords) {
  std::erase_if(tokens, [&](const std::string& t) { return stopwords.count(t) > 0; });
  return tokens;
}

std::vector<std::string> tokenize(std::string_view cleaned, const StopwordSet& stopwords) {
  return remove_stopwords(split_tokens(cleaned), stopwords);
}

void apply_lemma_map(std::vector<std::string>& tokens, const LemmaMap& lemmas) {
  for (std::string& t : tokens) {
    auto it = lemmas.find(t);
    if (it != lemmas.end()) t = it->second;
  }
}

std::vector<TokenizedDocument> filter_short(std::vector<TokenizedDocument> docs, int min_tokens) {
  if (min_tokens < 1) throw ParameterError("filter_short: min_tokens must be >= 1");
  std::size_t kept = 0;
  for (auto& d : docs) {
    d.retained = static_cast<int>(d.tokens.size()) >= min_tokens;
    kept += d.retained;
  }
  if (kept == 0)
    throw ValidationError("corpus too small: no document has >= " + std::to_string(min_tokens) +
                          " tokens");
  return docs;
}

std::vector<TokenizedDocument> prepare_corpus(const Corpus& corpus, const TokenizeOptions& opt) {
  const StopwordSet& stop = opt.stopwords ? *opt.stopwords : default_stopwords();
  std::vector<TokenizedDocument> docs(corpus.size());
  parallel_for(corpus.size(), [&](std::size_t i) {
    const Document& src = corpus.docs[i];
    TokenizedDocument& dst = docs[i];
    dst.uid = src.uid;
    dst.tokens = split_tokens(clean_text(src.raw_text));
    if (opt.lemmas) apply_lemma_map(dst.tokens, *opt.lemmas);
    if (opt.length_filter_before_stopwords) {
      dst.retained = static_cast<int>(dst.tokens.size()) >= opt.min_tokens;
      dst.tokens = remove_stopwords(std::move(dst.tokens), stop);
    } else {
      dst.tokens = remove_stopwords(std::move(dst.tokens), stop);
      dst.retained = static_cast<int>(dst.tokens.size()) >= opt.min_tokens;
    }
  });
  std::erase_if(docs, [](const TokenizedDocument& d) { return !d.retained; });
  if (docs.empty())
    throw ValidationError("corpus too small: no document has >= " +
                          std::to_string(opt.min_tokens) + " tokens");
  return docs;
}

Vocabulary build_vocabulary(std::span<const TokenizedDocument> docs, int min_df,
                            double max_df_ratio) {
  if (min_df < 1) throw ParameterError("build_vocabulary: min_df must be >= 1");
  if (max_df_ratio <= 0.0 || max_df_ratio > 1.0)
    throw ParameterError("build_vocabulary: max_df_ratio must be in (0, 1]");
  std::size_t n_docs = 0;
  // std::map keeps terms sorted, which is exactly the id order we want.
  std::map<std::string, std::pair<int, long long>> counts;  // term -> (df, cf)
  std::unordered_set<std::string_view> in_doc;
  for (const auto& d : docs) {
    if (!d.retained) continue;
    ++n_docs;
    in_doc.clear();
    for (const auto& t : d.tokens) {
      auto& c = counts[t];
      ++c.second;
      if (in_doc.insert(t).second) ++c.first;
    }
  }
  if (n_docs == 0) throw ValidationError("build_vocabulary: no retained documents");
  const double max_df = max_df_ratio * static_cast<double>(n_docs);
  Vocabulary vocab;
  for (const auto& [term, c] : counts) {
    if (c.first < min_df || static_cast<double>(c.first) > max_df) continue;
    vocab.ids.emplace(term, vocab.size());
    vocab.terms.push_back(term);
    vocab.doc_freq.push_back(c.first);
    vocab.corpus_freq.push_back(c.second);
  }
  if (vocab.terms.empty())
    throw ValidationError("build_vocabulary: pruning left an empty vocabulary (min_df=" +
                          std::to_string(min_df) + ")");
  return vocab;
}

std::unordered_map<std::string, int> assign_bins(std::span<const Document> docs,
                                                 const TimeBins& bins) {
  bins.validate();
  std::unordered_map<std::string, int> out;
  out.reserve(docs.size());
  for (const auto& d : docs) {
    int b = bins.bin_of(d.year);
    if (b < 0)
      throw ValidationError("year " + std::to_string(d.year) + " (uid \"" + d.uid +
                            "\") is not covered by any time bin");
    out.emplace(d.uid, b);
  }
  return out;
}

EntityAnnotations load_entity_annotations(const fs::path& path,
                                          const std::unordered_set<std::string>& corpus_uids) {
  EntityAnnotations out;
  for_each_jsonl(path, [&](std::size_t lineno, const nlohmann::json& rec) {
    if (!rec.is_object() || !rec.contains("uid") || !rec.contains("entities") ||
        !rec["uid"].is_string() || !rec["entities"].is_array())
      throw ParseError(path.string() + ":" + std::to_string(lineno) +
                       ": record needs uid (string) and entities (array)");
    std::string uid = rec["uid"].get<std::string>();
    if (!corpus_uids.count(uid)) {
      ++out.ignored;
      return;
    }
    auto& list = out.entities[uid];
    for (const auto& e : rec["entities"]) {
      if (!e.is_string())
        throw ParseError(path.string() + ":" + std::to_string(lineno) +
                         ": entities must be strings");
      list.push_back(ascii_lower(e.get<std::string>()));
    }
  });
  out.annotated = out.entities.size();
  return out;
}

}  // namespace chronotopic
