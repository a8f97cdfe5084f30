// Generates the bundled mini-corpus: 500 synthetic newspaper-style documents
// spread over four planted themes (five subthemes each), plus entity
// annotations, reference embeddings and a manifest recording every count the
// fixture tests pin. Regeneration with the same seed is byte-identical.
//
// Planted structure:
//   - themes own disjoint vocabularies; documents mix core-theme, subtheme,
//     filler and entity tokens, decorated with stopwords and punctuation that
//     clean_text/tokenize provably undo (the generator checks the round trip
//     for every document and aborts on any mismatch);
//   - the "markets" theme bursts: each of its subthemes puts 3/3/16/3 of its
//     25 documents into the four time bins, so any markets-derived topic
//     peaks in bin 2;
//   - document-frequency probes pin the vocabulary thresholds at n=500,
//     min_df=3, max_df_ratio=0.95: "figures" (df 475) and "dirigible" (df 3)
//     sit exactly on the kept side, "report" (df 480) and "zeppelin" (df 2)
//     exactly on the dropped side.

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "chronotopic/common.hpp"
#include "chronotopic/corpus.hpp"
#include "chronotopic/embedding.hpp"
#include "chronotopic/io.hpp"

namespace ct = chronotopic;
using nlohmann::json;

namespace {

constexpr std::uint64_t kSeed = 20260825;
constexpr int kDocs = 500;
constexpr int kThemes = 4;
constexpr int kSubs = 5;
constexpr int kEmbedDim = 64;
constexpr int kMinDf = 3;
constexpr double kMaxDfRatio = 0.95;

const std::vector<std::pair<int, int>> kBins = {
    {1955, 1970}, {1971, 1986}, {1987, 2002}, {2003, 2018}};

struct Theme {
  std::string name;
  std::vector<std::string> core;                 // 8 terms
  std::vector<std::vector<std::string>> subs;    // 5 x 6 terms
  std::vector<std::string> entities;             // 5 terms
};

std::vector<Theme> inventory() {
  return {
      {"atomics",
       {"reactor", "uranium", "fission", "isotope", "radiation", "megawatt", "turbine", "atomic"},
       {{"plant", "cooling", "electricity", "capacity", "substation", "boiler"},
        {"laboratory", "physicist", "particle", "accelerator", "neutron", "experiment"},
        {"containment", "shutdown", "inspection", "shielding", "hazard", "leakage"},
        {"disposal", "storage", "repository", "barrels", "contamination", "residues"},
        {"treaty", "commission", "moratorium", "licensing", "safeguards", "inspector"}},
       {"euratom", "vienna", "harwell", "windscale", "oakridge"}},
      {"agriculture",
       {"harvest", "wheat", "tractor", "soil", "irrigation", "fertilizer", "grain", "acreage"},
       {{"cattle", "dairy", "pasture", "herd", "veterinary", "fodder"},
        {"auction", "surplus", "quota", "subsidy", "cooperative", "procurement"},
        {"plough", "baler", "workshop", "spares", "horsepower", "threshing"},
        {"drought", "rainfall", "frost", "hail", "sowing", "meteorology"},
        {"locust", "blight", "pesticide", "fungus", "weevil", "spraying"}},
       {"bavaria", "danube", "cornbelt", "punjab", "queensland"}},
      {"orbital",
       {"satellite", "rocket", "orbit", "launch", "astronaut", "capsule", "telemetry", "booster"},
       {{"lunar", "crater", "lander", "descent", "rover", "basalt"},
        {"habitat", "docking", "resupply", "airlock", "weightless", "cosmonaut"},
        {"probe", "flyby", "asteroid", "trajectory", "antenna", "heliocentric"},
        {"telescope", "observatory", "mirror", "spectrum", "galaxy", "nebula"},
        {"transponder", "relay", "frequency", "broadcast", "uplink", "beacon"}},
       {"baikonur", "houston", "jodrell", "kourou", "tsiolkovsky"}},
      {"markets",
       {"shares", "trading", "investor", "dividend", "portfolio", "broker", "equities",
        "securities"},
       {{"deposit", "lending", "mortgage", "solvency", "overdraft", "clearinghouse"},
        {"devaluation", "sterling", "franc", "parity", "revaluation", "drachma"},
        {"panic", "selloff", "plunge", "bailout", "contagion", "liquidation"},
        {"bond", "yield", "maturity", "coupon", "issuance", "gilts"},
        {"futures", "crude", "bullion", "copper", "freight", "warehousing"}},
       {"frankfurt", "nikkei", "bourse", "lombard", "zurich"}}};
}

const std::vector<std::string> kFillers = {"officials", "announced", "yesterday", "committee",
                                           "decision",  "percent",   "million",   "government",
                                           "spokesman", "programme"};

// Rendered between content tokens; must all be on the bundled stopword list.
const std::vector<std::string> kStopPool = {"the", "of", "and", "in", "to", "for", "on", "with",
                                            "at",  "from", "as", "by", "was", "is", "has"};

struct DocPlan {
  std::string uid;
  int theme = 0;
  int sub = 0;
  int bin = 0;
  int year = 0;
  std::vector<std::string> content;   // post-stopword token sequence, in order
  std::vector<std::string> entities;  // annotated entities (may be empty)
  std::string text;                   // decorated rendering
};

void require(bool ok, const std::string& what) {
  if (!ok) throw std::runtime_error("gen_minicorpus: check failed: " + what);
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

template <typename T>
const T& pick(const std::vector<T>& pool, ct::Rng& rng) {
  return pool[rng.uniform_index(pool.size())];
}

/// Decorates a token sequence into newspaper-ish prose: sentences of 6-10
/// words, capitalized openers, stray commas and dashes, occasional double
/// spaces. Every decoration is one clean_text/split_tokens provably removes.
std::string render(const std::vector<std::string>& words, const std::set<std::string>& proper,
                   ct::Rng& rng) {
  std::string out;
  std::size_t i = 0;
  while (i < words.size()) {
    std::size_t len = static_cast<std::size_t>(rng.uniform_int(6, 10));
    if (words.size() - i < len + 2) len = words.size() - i;  // no 1-word straggler
    for (std::size_t j = 0; j < len; ++j) {
      std::string w = words[i + j];
      if (j == 0 || proper.count(w))
        w[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(w[0])));
      if (j > 0) out += rng.uniform() < 0.05 ? " - " : " ";
      out += w;
      if (j + 1 < len && rng.uniform() < 0.2) out += ",";
    }
    out += ".";
    i += len;
    if (i < words.size()) out += rng.uniform() < 0.1 ? "  " : " ";
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) try {
  ct::fs::path out_dir = argc > 1 ? argv[1] : "data";
  const std::vector<Theme> themes = inventory();

  // -- inventory sanity: unique terms, none on the stopword list ------------
  const ct::StopwordSet& stop = ct::default_stopwords();
  for (const auto& w : kStopPool) require(stop.count(w) == 1, "'" + w + "' must be a stopword");
  std::set<std::string> seen;
  auto claim = [&](const std::string& t) {
    require(seen.insert(t).second, "duplicate inventory term '" + t + "'");
    require(stop.count(t) == 0, "inventory term '" + t + "' is a stopword");
    for (char c : t) require(c >= 'a' && c <= 'z', "non-alpha inventory term '" + t + "'");
  };
  for (const auto& th : themes) {
    for (const auto& t : th.core) claim(t);
    for (const auto& s : th.subs)
      for (const auto& t : s) claim(t);
    for (const auto& t : th.entities) claim(t);
  }
  for (const auto& t : kFillers) claim(t);
  for (const std::string t : {"figures", "report", "dirigible", "zeppelin"}) claim(t);

  // -- plan all 500 documents ------------------------------------------------
  // Global order interleaves themes and subthemes: g = j*20 + s*4 + t.
  ct::Rng rng(ct::derive_seed(kSeed, "docs"));
  std::vector<DocPlan> plan(kDocs);
  std::vector<int> bin_hist(kBins.size(), 0);
  std::vector<std::vector<int>> burst_bins(kThemes, std::vector<int>(kBins.size(), 0));
  for (int g = 0; g < kDocs; ++g) {
    DocPlan& d = plan[g];
    d.theme = g % kThemes;
    d.sub = (g / kThemes) % kSubs;
    int j = g / (kThemes * kSubs);  // index within (theme, subtheme), 0..24
    char uid[16];
    std::snprintf(uid, sizeof uid, "doc-%04d", g);
    d.uid = uid;

    if (d.theme == 3)  // burst theme: 3/3/16/3 per subtheme
      d.bin = j < 3 ? 0 : j < 6 ? 1 : j < 22 ? 2 : 3;
    else
      d.bin = (j + d.sub) % static_cast<int>(kBins.size());
    d.year = static_cast<int>(rng.uniform_int(kBins[d.bin].first, kBins[d.bin].second));
    ++bin_hist[d.bin];
    ++burst_bins[d.theme][d.bin];

    const Theme& th = themes[d.theme];
    int n_core = static_cast<int>(rng.uniform_int(5, 7));
    int n_sub = static_cast<int>(rng.uniform_int(7, 10));
    int n_fill = static_cast<int>(rng.uniform_int(1, 2));
    for (int i = 0; i < n_core; ++i) d.content.push_back(pick(th.core, rng));
    for (int i = 0; i < n_sub; ++i) d.content.push_back(pick(th.subs[d.sub], rng));
    for (int i = 0; i < n_fill; ++i) d.content.push_back(pick(kFillers, rng));

    if ((g / kThemes) % 5 != 4) {  // four of five documents carry entities
      int first = static_cast<int>(rng.uniform_index(th.entities.size()));
      d.entities.push_back(th.entities[first]);
      if (rng.uniform() < 0.5) {
        int second = static_cast<int>(rng.uniform_index(th.entities.size() - 1));
        if (second >= first) ++second;
        d.entities.push_back(th.entities[second]);
      }
      for (const auto& e : d.entities) d.content.push_back(e);
    }

    // df probes at exact boundary counts (see header comment).
    if (g < 475) d.content.push_back("figures");
    if (g % 25 != 0) d.content.push_back("report");
    if (g == 10 || g == 260 || g == 490) d.content.push_back("dirigible");
    if (g == 55 || g == 305) d.content.push_back("zeppelin");

    for (std::size_t i = d.content.size(); i > 1; --i)  // Fisher-Yates
      std::swap(d.content[i - 1], d.content[rng.uniform_index(i)]);

    // Interleave stopwords; only they separate the count before stopword
    // removal (always >= 22) from the planted content sequence.
    std::vector<std::string> words = d.content;
    int n_stop = 9 + static_cast<int>(rng.uniform_int(0, 4));
    for (int i = 0; i < n_stop; ++i) {
      auto pos = words.begin() + static_cast<std::ptrdiff_t>(rng.uniform_index(words.size() + 1));
      words.insert(pos, pick(kStopPool, rng));
    }
    std::set<std::string> proper(d.entities.begin(), d.entities.end());
    d.text = render(words, proper, rng);

    require(static_cast<int>(ct::split_tokens(ct::clean_text(d.text)).size()) >= 22,
            d.uid + ": pre-stopword token count");
    require(ct::tokenize(ct::clean_text(d.text), stop) == d.content,
            d.uid + ": render round trip");
  }

  // -- brute-force df table (the oracle the manifest records) ----------------
  std::map<std::string, int> df;
  for (const auto& d : plan) {
    std::set<std::string> types(d.content.begin(), d.content.end());
    for (const auto& t : types) ++df[t];
  }
  require(df["figures"] == 475 && df["report"] == 480, "df probes (max_df side)");
  require(df["dirigible"] == 3 && df["zeppelin"] == 2, "df probes (min_df side)");
  const double max_df = kMaxDfRatio * kDocs;
  int vocab_size = 0;
  for (const auto& [term, n] : df) {
    if (n >= kMinDf && n <= max_df)
      ++vocab_size;
    else
      require(term == "report" || term == "zeppelin",
              "unexpected off-vocabulary term '" + term + "'");
  }

  // Cross-check against the library path before anything is written.
  ct::Corpus corpus;
  for (const auto& d : plan) corpus.docs.push_back({d.uid, d.text, d.year});
  auto prepared = ct::prepare_corpus(corpus, {});
  require(prepared.size() == static_cast<std::size_t>(kDocs), "all documents retained");
  ct::Vocabulary vocab = ct::build_vocabulary(prepared, kMinDf, kMaxDfRatio);
  require(vocab.size() == vocab_size, "brute-force vs library vocabulary size");
  require(vocab.id_of("figures") >= 0 && vocab.id_of("dirigible") >= 0, "boundary terms kept");
  require(vocab.id_of("report") < 0 && vocab.id_of("zeppelin") < 0, "boundary terms dropped");

  // -- reference embeddings: subtheme centroids plus noise --------------------
  ct::Rng crng(ct::derive_seed(kSeed, "emb/centers"));
  std::vector<Eigen::VectorXd> centroid(kThemes * kSubs);
  std::vector<Eigen::VectorXd> theme_center(kThemes);
  for (auto& c : theme_center) {
    c = Eigen::VectorXd::NullaryExpr(kEmbedDim, [&](Eigen::Index) { return crng.gaussian(); });
    c.normalize();
  }
  for (int t = 0; t < kThemes; ++t)
    for (int s = 0; s < kSubs; ++s) {
      Eigen::VectorXd off =
          Eigen::VectorXd::NullaryExpr(kEmbedDim, [&](Eigen::Index) { return crng.gaussian(); });
      off.normalize();
      centroid[t * kSubs + s] = (theme_center[t] + 0.55 * off).normalized();
    }
  ct::Rng nrng(ct::derive_seed(kSeed, "emb/noise"));
  ct::EmbeddingMatrix emb;
  emb.values.resize(kDocs, kEmbedDim);
  for (int g = 0; g < kDocs; ++g) {
    const DocPlan& d = plan[g];
    Eigen::VectorXd v = centroid[d.theme * kSubs + d.sub];
    for (int c = 0; c < kEmbedDim; ++c) v(c) += 0.18 * nrng.gaussian();
    v.normalize();
    emb.values.row(g) = v.cast<float>();
    emb.uids.push_back(d.uid);
    emb.uid_index.emplace(d.uid, g);
  }
  std::string emb_checksum = hex64(ct::fnv1a64(
      emb.values.data(), static_cast<std::size_t>(emb.values.size()) * sizeof(float)));

  // -- write everything -------------------------------------------------------
  ct::fs::create_directories(out_dir);
  std::string corpus_lines, entity_lines, theme_rows = "uid,theme,subtheme,year,bin\n";
  int annotated = 0;
  std::map<std::string, int> year_hist;
  for (const auto& d : plan) {
    corpus_lines += json{{"uid", d.uid}, {"text", d.text}, {"year", d.year}}.dump() + "\n";
    if (!d.entities.empty()) {
      entity_lines += json{{"uid", d.uid}, {"entities", d.entities}}.dump() + "\n";
      ++annotated;
    }
    theme_rows += d.uid + "," + themes[d.theme].name + "," + std::to_string(d.sub) + "," +
                  std::to_string(d.year) + "," + std::to_string(d.bin) + "\n";
    ++year_hist[std::to_string(d.year)];
  }
  require(annotated == 400, "entity coverage 400/500");
  ct::write_text_file(out_dir / "corpus.jsonl", corpus_lines);
  ct::write_text_file(out_dir / "entities.jsonl", entity_lines);
  ct::write_text_file(out_dir / "themes.csv", theme_rows);
  ct::save_embeddings(out_dir / "embeddings.bin", out_dir / "embeddings_index.jsonl", emb);

  json manifest;
  manifest["seed"] = kSeed;
  manifest["n_docs"] = kDocs;
  int ymin = 9999, ymax = 0;
  for (const auto& d : plan) {
    ymin = std::min(ymin, d.year);
    ymax = std::max(ymax, d.year);
  }
  manifest["years"] = {{"min", ymin}, {"max", ymax}, {"histogram", year_hist}};
  json ranges = json::array();
  for (auto [lo, hi] : kBins) ranges.push_back({lo, hi});
  manifest["bins"] = {{"ranges", ranges}, {"histogram", bin_hist}};
  json names = json::array(), per_theme = json::array();
  for (const auto& th : themes) names.push_back(th.name);
  for (int t = 0; t < kThemes; ++t) per_theme.push_back(kDocs / kThemes);
  manifest["themes"] = {{"names", names},
                        {"docs_per_theme", per_theme},
                        {"subthemes_per_theme", kSubs}};
  manifest["burst"] = {{"theme", "markets"},
                       {"theme_index", 3},
                       {"peak_bin", 2},
                       {"per_bin", burst_bins[3]}};
  manifest["prepare"] = {{"min_tokens", 20}, {"retained", kDocs}};
  manifest["vocabulary"] = {{"min_df", kMinDf},
                            {"max_df_ratio", kMaxDfRatio},
                            {"size", vocab_size},
                            {"df_probes",
                             {{"figures", 475}, {"report", 480}, {"dirigible", 3}, {"zeppelin", 2}}},
                            {"dropped", {"report", "zeppelin"}}};
  manifest["entities"] = {{"annotated", annotated},
                          {"coverage", static_cast<double>(annotated) / kDocs}};
  manifest["embeddings"] = {{"n", kDocs}, {"d", kEmbedDim}, {"checksum", emb_checksum}};
  ct::write_json_file(out_dir / "manifest.json", manifest);

  // -- reload through the library readers to prove self-consistency ----------
  ct::Corpus back = ct::load_corpus(out_dir / "corpus.jsonl", ct::CorpusFormat::jsonl);
  require(back.size() == static_cast<std::size_t>(kDocs), "reload corpus size");
  require(back.min_year == ymin && back.max_year == ymax, "reload year range");
  std::unordered_set<std::string> uids;
  for (const auto& d : back.docs) uids.insert(d.uid);
  auto ann = ct::load_entity_annotations(out_dir / "entities.jsonl", uids);
  require(ann.annotated == 400 && ann.ignored == 0, "reload entity coverage");
  ct::EmbeddingMatrix eback =
      ct::load_embeddings(out_dir / "embeddings.bin", out_dir / "embeddings_index.jsonl");
  require(eback.n() == kDocs && eback.d() == kEmbedDim, "reload embedding shape");
  require(hex64(ct::fnv1a64(eback.values.data(),
                            static_cast<std::size_t>(eback.values.size()) * sizeof(float))) ==
              emb_checksum,
          "reload embedding checksum");

  std::cout << "wrote " << kDocs << " docs, vocabulary " << vocab_size << ", embeddings "
            << kDocs << "x" << kEmbedDim << " (" << emb_checksum << ") to " << out_dir.string()
            << "\n";
  return 0;
} catch (const std::exception& e) {
  std::cerr << e.what() << "\n";
  return 1;
}
