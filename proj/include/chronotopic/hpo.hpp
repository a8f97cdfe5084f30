#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "chronotopic/common.hpp"
#include "chronotopic/corpus.hpp"
#include "chronotopic/embedding.hpp"
#include "chronotopic/io.hpp"

namespace chronotopic {

/// One hyperparameter value. Integers stay integers end to end so trial
/// files and config fragments round-trip without type drift.
using ParamValue = std::variant<int, Real, std::string>;

/// Named assignment, ordered by name for stable serialization.
using Params = std::map<std::string, ParamValue>;

enum class ParamKind { uniform_int, uniform, choice };

struct ParamSpec {
  std::string name;
  ParamKind kind = ParamKind::uniform;
  Real lo = 0;  // numeric kinds; uniform_int bounds are inclusive
  Real hi = 0;
  std::vector<std::string> options;  // choice
};

/// Hyperparameter domains. Build by chaining:
///   SearchSpace s;
///   s.uniform_int("k", 2, 15).uniform("x", -5, 5).choice("variant", {"bow", "tfidf"});
/// Builders validate lo < hi, non-empty options and unique names.
struct SearchSpace {
  std::vector<ParamSpec> params;

  SearchSpace& uniform_int(const std::string& name, int lo, int hi);
  SearchSpace& uniform(const std::string& name, Real lo, Real hi);
  SearchSpace& choice(const std::string& name, std::vector<std::string> options);

  const ParamSpec* find(const std::string& name) const;
  bool empty() const { return params.empty(); }
};

enum class TrialStatus { ok, failed };

struct Trial {
  Params params;
  Real loss = 0;  // NaN while failed
  TrialStatus status = TrialStatus::ok;
  Real duration_seconds = 0;
};

/// Ordered evaluation history. add() keeps best_index on the smallest
/// finite ok loss, first among ties, and rejects an ok trial whose loss is
/// not finite.
struct Trials {
  std::vector<Trial> trials;
  int best_index = -1;

  void add(Trial t);
  int n() const { return static_cast<int>(trials.size()); }
  int n_ok() const;
  const Trial& best() const;  // ValidationError when nothing succeeded yet
};

/// Uniform draw over every parameter's domain, in declaration order.
Params sample_prior(const SearchSpace& space, Rng& rng);

/// Good/rest split sizes for n_ok finished trials:
/// |L| = max(1, ceil(gamma * n_ok)) and |L| + |G| = n_ok.
std::pair<int, int> tpe_split(int n_ok, Real gamma);

/// Tree-structured Parzen estimator proposal. Histories shorter than
/// n_startup (or with fewer than two usable trials) fall back to a prior
/// sample from Rng(seed). Otherwise ok trials split into L (best) and G
/// (rest); per parameter, l and g are Parzen estimators over the observed
/// values — numeric: equal-weight truncated Gaussians with bandwidth
/// (hi-lo)/sqrt(count), integers via interval masses renormalized over the
/// domain; categorical: Laplace-smoothed frequencies — and the proposal is
/// the best of n_candidates draws from l ranked by l(x)/g(x).
Params tpe_suggest(const Trials& trials, const SearchSpace& space, Real gamma,
                   int n_startup, int n_candidates, std::uint64_t seed);

nlohmann::json params_json(const Params& params);
Params params_from_json(const nlohmann::json& j);
nlohmann::json trial_json(const Trial& trial);
Trial trial_from_json(const nlohmann::json& j);

/// jsonl, one trial per line; load rebuilds best_index.
void save_trials(const fs::path& path, const Trials& trials);
Trials load_trials(const fs::path& path);

struct FminOptions {
  Real gamma = 0.25;
  int n_startup = 10;
  int n_candidates = 24;
  fs::path trials_path;                       // persist after every trial; resume if present
  std::function<bool(const Params&)> accept;  // constraint; violators are resampled
};

using Objective = std::function<Real(const Params&)>;

/// Sequential minimization: suggest, evaluate, record, repeat until
/// max_evals trials exist (trials loaded from trials_path count). Objective
/// exceptions and non-finite losses mark the trial failed; failed trials
/// are excluded from modeling but spend budget. Every trial is appended to
/// trials_path before the next starts, so a crashed run resumes where it
/// stopped and replays identically to an uninterrupted one.
std::pair<Params, Trials> fmin(const Objective& objective, const SearchSpace& space,
                               int max_evals, std::uint64_t seed,
                               const FminOptions& opt = {});

/// The five tuned parameters: cluster and merge sizes plus the layout's
/// neighborhood and dimensionality. Ranges bracket the stock defaults and
/// the tuned optimum.
SearchSpace default_topic_space();

/// Companion constraint for default_topic_space: min_samples must not
/// exceed min_cluster_size.
bool valid_topic_params(const Params& params);

struct ObjectiveOptions {
  std::uint64_t seed = 42;
  int epochs = 200;  // layout SGD epochs
  Real min_dist = 0.0;
  Real spread = 1.0;
  int coherence_window = 10;
  int top_k = 10;
  Real tc_weight = 1.0;
  Real td_weight = 1.0;
};

/// loss = -(tc_weight * tc + td_weight * td); lower is better.
Real quality_loss(Real tc, Real td, Real tc_weight = 1.0, Real td_weight = 1.0);

/// Model-quality objective: layout + clustering + topic build with the five
/// bound parameters, scored by coherence and diversity via quality_loss.
/// Degenerate outcomes (fewer than two non-outlier topics, or no scorable
/// coherence pairs) return a flat +1 penalty.
Real objective_topic_quality(const Params& params, std::span<const TokenizedDocument> docs,
                             const Vocabulary& vocab, const EmbeddingMatrix& emb,
                             const ObjectiveOptions& opt = {});

}  // namespace chronotopic
