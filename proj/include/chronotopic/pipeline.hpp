#pragma once

#include <chrono>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "chronotopic/corpus.hpp"
#include "chronotopic/evaluation.hpp"
#include "chronotopic/hpo.hpp"
#include "chronotopic/topics.hpp"

namespace chronotopic {

// ---------------------------------------------------------------------------
// Command-level errors. Together with common.hpp they map onto the CLI exit
// codes: 0 success; 2 input validation (Parse/Validation/Format/Parameter);
// 3 alignment; 4 missing models; 5 missing temporal data; 6 tuning failure.
// ---------------------------------------------------------------------------

struct NoModelsError : ChronoError {
  using ChronoError::ChronoError;
};

struct NoTemporalError : ChronoError {
  using ChronoError::ChronoError;
};

struct TuningError : ChronoError {
  using ChronoError::ChronoError;
};

int exit_code_for(const std::exception& e);

// ---------------------------------------------------------------------------
// Config. One JSON file; every value has a shipped default except the corpus
// path, so a bare {"corpus": ...} runs the whole default setup. Relative
// paths resolve against the config file's directory.
// ---------------------------------------------------------------------------

struct PreprocessingConfig {
  int min_tokens = 20;
  bool length_filter_before_stopwords = true;
  int min_df = 3;
  double max_df_ratio = 0.95;
};

/// source "hash": deterministic fallback embedder at dimension d (seed
/// derived from the run seed unless set). source "file": EMB1 vectors +
/// jsonl index, realigned to the corpus.
struct EmbeddingConfig {
  std::string source = "hash";
  int d = 256;
  std::optional<std::uint64_t> seed;
  fs::path vectors;
  fs::path index;
};

/// Reduction + clustering knobs (defaults: n_neighbors=15, n_components=5,
/// min_dist=0.0, cosine / min_cluster_size=15, eom).
struct ClusterParams {
  int n_neighbors = 15;
  int n_components = 5;
  Real min_dist = 0.0;
  Real spread = 1.0;
  std::string metric = "cosine";
  int epochs = 200;
  int min_cluster_size = 15;
  int min_samples = 0;    // 0 -> min_cluster_size
  int min_topic_size = 0;  // < 2 -> no post-merge
};

struct ClassicalParams {
  double alpha = 0;  // <= 0 -> 1/K
  double eta = 0;
  int lda_epochs = 50;
  int nmf_iters = 500;
};

struct EvaluationConfig {
  int coherence_window = 10;
  int top_k = 10;
};

struct DynamicsConfig {
  bool smooth = false;
  bool global_tuning = false;
  bool proportion = false;  // evolution.csv value column
};

/// fmin budget plus objective knobs; `space` holds per-parameter {lo, hi}
/// overrides of the default search space.
struct HpoSettings {
  int max_evals = 25;
  Real gamma = 0.25;
  int n_startup = 10;
  int n_candidates = 24;
  int epochs = 200;
  Real tc_weight = 1.0;
  Real td_weight = 1.0;
  std::map<std::string, std::pair<long long, long long>> space;
};

struct PipelineConfig {
  std::uint64_t seed = 42;
  fs::path corpus;
  CorpusFormat corpus_format = CorpusFormat::jsonl;
  fs::path entities;   // optional; required by the *-ner models
  fs::path stopwords;  // optional, bundled list when empty
  fs::path lemmas;     // optional
  fs::path output_dir = "out";
  std::vector<std::string> models;  // default: all seven tags
  std::vector<int> topic_counts = {10, 20, 30, 40, 50};
  TimeBins bins;  // may be empty; dynamics then unavailable
  PreprocessingConfig prep;
  EmbeddingConfig embedding;
  ClusterParams cluster;
  ClassicalParams classical;
  TopicOptions topics{10, 10, 0.5};
  EvaluationConfig evaluation;
  DynamicsConfig dynamics;
  HpoSettings hpo;
  std::string config_hash;  // fnv1a64 hex of the config bytes
};

/// The seven model tags in table order:
/// lda, lda-tfidf, lda-ner, nmf, nmf-tfidf, nmf-ner, cluster.
const std::vector<std::string>& model_tags();

/// Parse + validate a config file. Unknown keys, malformed values and
/// missing referenced files all throw (ParseError / ValidationError).
PipelineConfig load_config(const fs::path& path);

/// Same from an in-memory object, resolving paths against base_dir.
PipelineConfig config_from_json(const nlohmann::json& j, const fs::path& base_dir);

// ---------------------------------------------------------------------------
// Run manifest + output lock.
// ---------------------------------------------------------------------------

/// Contiguous named stage timer: begin() closes the previous stage, so the
/// stage seconds partition the command body. record() attaches an artifact
/// checksum to the open stage.
class StageClock {
 public:
  StageClock();
  void begin(const std::string& name);
  void record(const fs::path& out_dir, const fs::path& artifact);
  nlohmann::json finish();  // closes the open stage, returns the stages array

 private:
  struct Stage {
    std::string name;
    double seconds = 0;
    nlohmann::json artifacts = nlohmann::json::object();
  };
  std::vector<Stage> stages_;
  std::chrono::steady_clock::time_point mark_;
};

/// Writes <output>/manifest.json: config hash, seed, command, stage times and
/// artifact checksums. Called exactly once at the end of every command; the
/// timing fields are the only volatile bytes a rerun produces.
void write_run_manifest(const PipelineConfig& cfg, const std::string& command,
                        StageClock& clock);

/// Exclusive lock on the output directory (atomic .lock directory). Throws
/// ValidationError when already held; the message names the path.
class OutputLock {
 public:
  explicit OutputLock(const fs::path& out_dir);
  ~OutputLock();
  OutputLock(const OutputLock&) = delete;
  OutputLock& operator=(const OutputLock&) = delete;

 private:
  fs::path path_;
};

// ---------------------------------------------------------------------------
// Commands. Each validates its preconditions, takes the output lock, writes
// its artifacts and one run manifest. All randomness fans out from
// cfg.seed via derive_seed, so reruns are reproducible (timing fields aside).
// ---------------------------------------------------------------------------

/// Clean/tokenize/filter the corpus, build the vocabulary and bin map; write
/// prepared/{tokens.jsonl, vocabulary.csv, summary.json} and print the
/// docs-in/docs-out/vocabulary summary.
void cmd_prepare(const PipelineConfig& cfg);

/// Fit `model` (empty = every configured model). Classical tags fit each
/// requested K (k > 0 restricts to one); the cluster tag discovers topics,
/// then derives a reduced model per requested K below the discovered count.
/// `overrides` may carry a {"cluster": {...}} fragment (cmd_tune's best.json)
/// replacing individual cluster parameters. Per-(model, K) combinations the
/// corpus cannot support are skipped with a notice. Reports land in
/// models/<tag>[_k<K>]/report.json with Time = that row's fit wall-clock.
void cmd_fit(const PipelineConfig& cfg, const std::string& model = "", int k = -1,
             const nlohmann::json& overrides = nlohmann::json::object());

/// Aggregate every models/*/report.json into report/comparison.{csv,md}
/// (rows in tag order, then #T ascending) and run the expected-direction
/// check: the cluster model's native row should beat the plain-LDA row at
/// the matching #T on both TC and TD; a miss prints a warning and is
/// recorded in report/expected_direction.json, never a failure.
void cmd_evaluate(const PipelineConfig& cfg);

/// Rebuild the fitted cluster model, compute topics-over-time against the
/// configured bins and write dynamic/evolution.{csv,json} plus one SVG line
/// chart per group of five topics.
void cmd_dynamic(const PipelineConfig& cfg);

/// hpo.fmin over the (possibly overridden) default search space, objective =
/// clustering-quality loss on the prepared corpus. Writes tune/trials.jsonl
/// (appended on resume) and tune/best.json, a fragment cmd_fit consumes via
/// `overrides`. A run with no viable configuration raises TuningError.
void cmd_tune(const PipelineConfig& cfg);

/// Write report/index.html linking whatever artifacts exist.
void cmd_report(const PipelineConfig& cfg);

}  // namespace chronotopic
