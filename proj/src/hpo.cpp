#include "chronotopic/hpo.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>
#include <limits>

#include "chronotopic/evaluation.hpp"
#include "chronotopic/manifold.hpp"
#include "chronotopic/topics.hpp"

namespace chronotopic {

namespace {

constexpr Real kNan = std::numeric_limits<Real>::quiet_NaN();

Real normal_cdf(Real z) { return 0.5 * std::erfc(-z * M_SQRT1_2); }

void check_new_param(const SearchSpace& space, const std::string& name) {
  if (name.empty()) throw ParameterError("SearchSpace: parameter name is empty");
  if (space.find(name)) throw ParameterError("SearchSpace: duplicate parameter '" + name + "'");
}

/// Equal-weight mixture of Gaussians truncated to [lo, hi], component-wise
/// renormalized. Integral parameters use the probability mass of
/// [k - 0.5, k + 0.5] renormalized over [lo - 0.5, hi + 0.5], i.e. a proper
/// pmf on the lattice.
struct Parzen {
  std::vector<Real> mu;
  Real sigma = 1;
  Real lo = 0;
  Real hi = 1;
  bool integral = false;

  static Parzen fit(std::vector<Real> values, const ParamSpec& spec) {
    Parzen p;
    p.mu = std::move(values);
    p.lo = spec.lo;
    p.hi = spec.hi;
    p.integral = spec.kind == ParamKind::uniform_int;
    p.sigma = (spec.hi - spec.lo) / std::sqrt(static_cast<Real>(p.mu.size()));
    return p;
  }

  Real component_mass(Real m) const {
    Real a = integral ? lo - 0.5 : lo;
    Real b = integral ? hi + 0.5 : hi;
    return normal_cdf((b - m) / sigma) - normal_cdf((a - m) / sigma);
  }

  Real density(Real x) const {
    Real acc = 0;
    for (Real m : mu) {
      Real mass = component_mass(m);
      if (mass <= 0) continue;
      if (integral) {
        acc += (normal_cdf((x + 0.5 - m) / sigma) - normal_cdf((x - 0.5 - m) / sigma)) / mass;
      } else {
        Real z = (x - m) / sigma;
        acc += std::exp(-0.5 * z * z) / (sigma * std::sqrt(2.0 * M_PI) * mass);
      }
    }
    return acc / static_cast<Real>(mu.size());
  }

  Real sample_component(Rng& rng, Real m) const {
    for (int i = 0; i < 256; ++i) {
      Real x = m + sigma * rng.gaussian();
      if (x >= lo && x <= hi) return x;
    }
    return std::clamp(m, lo, hi);  // pathological sigma; keep it in-domain
  }

  Real sample(Rng& rng) const {
    Real m = mu[rng.uniform_index(mu.size())];
    if (!integral) return sample_component(rng, m);
    auto ilo = static_cast<long long>(lo);
    auto ihi = static_cast<long long>(hi);
    if (ihi - ilo + 1 <= 4096) {
      // Exact inverse-CDF over the component's integer masses.
      Real total = 0;
      std::vector<Real> w(static_cast<std::size_t>(ihi - ilo + 1));
      for (long long k = ilo; k <= ihi; ++k) {
        Real x = static_cast<Real>(k);
        w[static_cast<std::size_t>(k - ilo)] =
            normal_cdf((x + 0.5 - m) / sigma) - normal_cdf((x - 0.5 - m) / sigma);
        total += w[static_cast<std::size_t>(k - ilo)];
      }
      Real u = rng.uniform() * total;
      for (std::size_t i = 0; i < w.size(); ++i) {
        u -= w[i];
        if (u <= 0) return static_cast<Real>(ilo + static_cast<long long>(i));
      }
      return static_cast<Real>(ihi);
    }
    // Domain too wide to enumerate: round a truncated draw instead.
    return std::clamp(std::round(sample_component(rng, m)), lo, hi);
  }
};

Real numeric_value(const Trial& t, const ParamSpec& spec) {
  auto it = t.params.find(spec.name);
  if (it == t.params.end())
    throw ParameterError("tpe_suggest: trial history lacks parameter '" + spec.name + "'");
  if (const int* i = std::get_if<int>(&it->second)) return static_cast<Real>(*i);
  if (const Real* r = std::get_if<Real>(&it->second)) return *r;
  throw ParameterError("tpe_suggest: parameter '" + spec.name + "' is not numeric in history");
}

const std::string& choice_value(const Trial& t, const ParamSpec& spec) {
  auto it = t.params.find(spec.name);
  if (it == t.params.end())
    throw ParameterError("tpe_suggest: trial history lacks parameter '" + spec.name + "'");
  if (const std::string* s = std::get_if<std::string>(&it->second)) return *s;
  throw ParameterError("tpe_suggest: parameter '" + spec.name + "' is not categorical in history");
}

ParamValue suggest_numeric(std::span<const Trial* const> good, std::span<const Trial* const> rest,
                           const ParamSpec& spec, int n_candidates, Rng& rng) {
  std::vector<Real> lv, gv;
  lv.reserve(good.size());
  gv.reserve(rest.size());
  for (const Trial* t : good) lv.push_back(numeric_value(*t, spec));
  for (const Trial* t : rest) gv.push_back(numeric_value(*t, spec));
  Parzen l = Parzen::fit(std::move(lv), spec);
  Parzen g = Parzen::fit(std::move(gv), spec);
  Real best_x = 0, best_ratio = 0;
  bool have = false;
  for (int c = 0; c < n_candidates; ++c) {
    Real x = l.sample(rng);
    Real ld = l.density(x);
    Real gd = g.density(x);
    Real ratio = gd > 0 ? ld / gd
                        : (ld > 0 ? std::numeric_limits<Real>::infinity() : 0.0);
    if (!have || ratio > best_ratio) {
      best_x = x;
      best_ratio = ratio;
      have = true;
    }
  }
  if (spec.kind == ParamKind::uniform_int) return static_cast<int>(std::llround(best_x));
  return best_x;
}

ParamValue suggest_choice(std::span<const Trial* const> good, std::span<const Trial* const> rest,
                          const ParamSpec& spec, int n_candidates, Rng& rng) {
  std::size_t J = spec.options.size();
  std::vector<Real> lp(J), gp(J);
  auto smoothed = [&](std::span<const Trial* const> set, std::vector<Real>& out) {
    std::vector<int> counts(J, 0);
    for (const Trial* t : set) {
      const std::string& v = choice_value(*t, spec);
      auto it = std::find(spec.options.begin(), spec.options.end(), v);
      if (it == spec.options.end())
        throw ParameterError("tpe_suggest: value '" + v + "' outside options of '" + spec.name +
                             "'");
      ++counts[static_cast<std::size_t>(it - spec.options.begin())];
    }
    for (std::size_t j = 0; j < J; ++j)
      out[j] = (counts[j] + 1.0) / (static_cast<Real>(set.size()) + static_cast<Real>(J));
  };
  smoothed(good, lp);
  smoothed(rest, gp);
  std::size_t best = 0;
  Real best_ratio = 0;
  bool have = false;
  for (int c = 0; c < n_candidates; ++c) {
    Real u = rng.uniform();
    std::size_t j = J - 1;
    for (std::size_t i = 0; i < J; ++i) {
      u -= lp[i];
      if (u < 0) {
        j = i;
        break;
      }
    }
    Real ratio = lp[j] / gp[j];
    if (!have || ratio > best_ratio) {
      best = j;
      best_ratio = ratio;
      have = true;
    }
  }
  return spec.options[best];
}

int param_int(const Params& params, const std::string& name) {
  auto it = params.find(name);
  if (it == params.end())
    throw ParameterError("objective_topic_quality: missing parameter '" + name + "'");
  if (const int* i = std::get_if<int>(&it->second)) return *i;
  throw ParameterError("objective_topic_quality: parameter '" + name + "' must be an integer");
}

}  // namespace

SearchSpace& SearchSpace::uniform_int(const std::string& name, int lo, int hi) {
  check_new_param(*this, name);
  if (lo >= hi) throw ParameterError("SearchSpace: '" + name + "' needs lo < hi");
  params.push_back({name, ParamKind::uniform_int, static_cast<Real>(lo), static_cast<Real>(hi), {}});
  return *this;
}

SearchSpace& SearchSpace::uniform(const std::string& name, Real lo, Real hi) {
  check_new_param(*this, name);
  if (!(lo < hi)) throw ParameterError("SearchSpace: '" + name + "' needs lo < hi");
  params.push_back({name, ParamKind::uniform, lo, hi, {}});
  return *this;
}

SearchSpace& SearchSpace::choice(const std::string& name, std::vector<std::string> options) {
  check_new_param(*this, name);
  if (options.empty()) throw ParameterError("SearchSpace: '" + name + "' needs options");
  params.push_back({name, ParamKind::choice, 0, 0, std::move(options)});
  return *this;
}

const ParamSpec* SearchSpace::find(const std::string& name) const {
  for (const ParamSpec& p : params)
    if (p.name == name) return &p;
  return nullptr;
}

void Trials::add(Trial t) {
  if (t.status == TrialStatus::ok && !std::isfinite(t.loss))
    throw ValidationError("Trials: ok trial with non-finite loss");
  trials.push_back(std::move(t));
  const Trial& back = trials.back();
  if (back.status == TrialStatus::ok &&
      (best_index < 0 || back.loss < trials[static_cast<std::size_t>(best_index)].loss))
    best_index = n() - 1;
}

int Trials::n_ok() const {
  int k = 0;
  for (const Trial& t : trials)
    if (t.status == TrialStatus::ok) ++k;
  return k;
}

const Trial& Trials::best() const {
  if (best_index < 0) throw ValidationError("Trials: no successful trial yet");
  return trials[static_cast<std::size_t>(best_index)];
}

Params sample_prior(const SearchSpace& space, Rng& rng) {
  if (space.empty()) throw ParameterError("sample_prior: empty search space");
  Params out;
  for (const ParamSpec& p : space.params) {
    switch (p.kind) {
      case ParamKind::uniform_int:
        out[p.name] = static_cast<int>(
            rng.uniform_int(static_cast<long long>(p.lo), static_cast<long long>(p.hi)));
        break;
      case ParamKind::uniform:
        out[p.name] = rng.uniform(p.lo, p.hi);
        break;
      case ParamKind::choice:
        out[p.name] = p.options[rng.uniform_index(p.options.size())];
        break;
    }
  }
  return out;
}

std::pair<int, int> tpe_split(int n_ok, Real gamma) {
  if (n_ok < 1) return {0, 0};
  int nl = std::max<int>(1, static_cast<int>(std::ceil(gamma * n_ok)));
  nl = std::min(nl, n_ok);
  return {nl, n_ok - nl};
}

Params tpe_suggest(const Trials& trials, const SearchSpace& space, Real gamma, int n_startup,
                   int n_candidates, std::uint64_t seed) {
  if (space.empty()) throw ParameterError("tpe_suggest: empty search space");
  if (!(gamma > 0 && gamma < 1)) throw ParameterError("tpe_suggest: gamma must lie in (0, 1)");
  if (n_candidates < 1) throw ParameterError("tpe_suggest: n_candidates must be >= 1");
  Rng rng(seed);

  std::vector<const Trial*> ok;
  for (const Trial& t : trials.trials)
    if (t.status == TrialStatus::ok) ok.push_back(&t);
  // Startup, or not enough signal to build both estimators.
  if (trials.n() < n_startup || ok.size() < 2) return sample_prior(space, rng);

  std::stable_sort(ok.begin(), ok.end(),
                   [](const Trial* a, const Trial* b) { return a->loss < b->loss; });
  auto [nl, ng] = tpe_split(static_cast<int>(ok.size()), gamma);
  if (ng == 0) return sample_prior(space, rng);
  std::span<const Trial* const> good(ok.data(), static_cast<std::size_t>(nl));
  std::span<const Trial* const> rest(ok.data() + nl, static_cast<std::size_t>(ng));

  Params out;
  for (const ParamSpec& p : space.params) {
    out[p.name] = p.kind == ParamKind::choice ? suggest_choice(good, rest, p, n_candidates, rng)
                                              : suggest_numeric(good, rest, p, n_candidates, rng);
  }
  return out;
}

nlohmann::json params_json(const Params& params) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [name, value] : params)
    std::visit([&](const auto& v) { j[name] = v; }, value);
  return j;
}

Params params_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ParseError("params: expected a json object");
  Params out;
  for (const auto& [name, value] : j.items()) {
    if (value.is_number_integer())
      out[name] = value.get<int>();
    else if (value.is_number_float())
      out[name] = value.get<Real>();
    else if (value.is_string())
      out[name] = value.get<std::string>();
    else
      throw ParseError("params: unsupported value type for '" + name + "'");
  }
  return out;
}

nlohmann::json trial_json(const Trial& trial) {
  nlohmann::json j;
  j["params"] = params_json(trial.params);
  if (std::isfinite(trial.loss))
    j["loss"] = trial.loss;
  else
    j["loss"] = nullptr;
  j["status"] = trial.status == TrialStatus::ok ? "ok" : "failed";
  j["duration_seconds"] = trial.duration_seconds;
  return j;
}

Trial trial_from_json(const nlohmann::json& j) {
  Trial t;
  t.params = params_from_json(j.at("params"));
  t.loss = j.at("loss").is_null() ? kNan : j.at("loss").get<Real>();
  std::string status = j.at("status").get<std::string>();
  if (status == "ok")
    t.status = TrialStatus::ok;
  else if (status == "failed")
    t.status = TrialStatus::failed;
  else
    throw ParseError("trial: unknown status '" + status + "'");
  t.duration_seconds = j.at("duration_seconds").get<Real>();
  return t;
}

void save_trials(const fs::path& path, const Trials& trials) {
  std::string out;
  for (const Trial& t : trials.trials) {
    out += trial_json(t).dump();
    out += '\n';
  }
  write_text_file(path, out);
}

Trials load_trials(const fs::path& path) {
  Trials trials;
  for_each_jsonl(path, [&](std::size_t, const nlohmann::json& j) { trials.add(trial_from_json(j)); });
  return trials;
}

std::pair<Params, Trials> fmin(const Objective& objective, const SearchSpace& space, int max_evals,
                               std::uint64_t seed, const FminOptions& opt) {
  if (max_evals < 1) throw ParameterError("fmin: max_evals must be >= 1");
  if (space.empty()) throw ParameterError("fmin: empty search space");
  bool persist = !opt.trials_path.empty();
  Trials trials;
  if (persist && fs::exists(opt.trials_path)) trials = load_trials(opt.trials_path);

  while (trials.n() < max_evals) {
    int index = trials.n();
    std::uint64_t trial_seed = derive_seed(seed, "hpo/trial/" + std::to_string(index));
    Params params =
        tpe_suggest(trials, space, opt.gamma, opt.n_startup, opt.n_candidates, trial_seed);
    if (opt.accept) {
      // Retries draw from the prior: a modeled proposal is near-deterministic,
      // so re-suggesting could reject the same point forever.
      int attempt = 0;
      while (!opt.accept(params)) {
        if (++attempt > 1000)
          throw ValidationError("fmin: constraint rejected 1000 consecutive samples");
        Rng retry(derive_seed(trial_seed, "retry/" + std::to_string(attempt)));
        params = sample_prior(space, retry);
      }
    }

    Trial t;
    t.params = std::move(params);
    auto t0 = std::chrono::steady_clock::now();
    try {
      Real loss = objective(t.params);
      if (std::isfinite(loss)) {
        t.loss = loss;
      } else {
        t.loss = kNan;
        t.status = TrialStatus::failed;
        std::cerr << "fmin: trial " << index << " returned a non-finite loss; marked failed\n";
      }
    } catch (const std::exception& e) {
      t.loss = kNan;
      t.status = TrialStatus::failed;
      std::cerr << "fmin: trial " << index << " failed: " << e.what() << "\n";
    }
    t.duration_seconds =
        std::chrono::duration<Real>(std::chrono::steady_clock::now() - t0).count();
    trials.add(std::move(t));
    if (persist) append_line(opt.trials_path, trial_json(trials.trials.back()).dump());
  }

  if (trials.best_index < 0)
    throw ValidationError("fmin: no viable configuration (every trial failed)");
  return {trials.best().params, std::move(trials)};
}

SearchSpace default_topic_space() {
  SearchSpace s;
  s.uniform_int("min_topic_size", 10, 60)
      .uniform_int("n_neighbors", 5, 50)
      .uniform_int("n_components", 2, 15)
      .uniform_int("min_cluster_size", 10, 60)
      .uniform_int("min_samples", 5, 40);
  return s;
}

bool valid_topic_params(const Params& params) {
  auto ms = params.find("min_samples");
  auto mcs = params.find("min_cluster_size");
  if (ms == params.end() || mcs == params.end()) return true;
  const int* a = std::get_if<int>(&ms->second);
  const int* b = std::get_if<int>(&mcs->second);
  if (!a || !b) return true;
  return *a <= *b;
}

Real quality_loss(Real tc, Real td, Real tc_weight, Real td_weight) {
  return -(tc_weight * tc + td_weight * td);
}

Real objective_topic_quality(const Params& params, std::span<const TokenizedDocument> docs,
                             const Vocabulary& vocab, const EmbeddingMatrix& emb,
                             const ObjectiveOptions& opt) {
  int n_neighbors = param_int(params, "n_neighbors");
  int n_components = param_int(params, "n_components");
  int min_cluster_size = param_int(params, "min_cluster_size");
  int min_samples = param_int(params, "min_samples");
  int min_topic_size = param_int(params, "min_topic_size");
  if (emb.n() < 2) throw ParameterError("objective_topic_quality: need at least two documents");

  int k = std::min(n_neighbors, emb.n() - 1);
  FuzzyGraph graph = fuzzy_graph(knn(emb, k, Metric::cosine));
  CurveParams curve = fit_curve(opt.min_dist, opt.spread);
  Matrix points = emb.values.cast<Real>();
  Matrix layout = reduce(graph, points, n_components, opt.epochs,
                         derive_seed(opt.seed, "objective/reduce"), curve.a, curve.b);
  ClusterLabels labels = hdbscan(layout, min_cluster_size, min_samples);
  if (labels.n_clusters < 2) return 1.0;  // degenerate: nothing worth scoring

  TopicOptions topic_opt;
  topic_opt.top_n = opt.top_k;
  TopicModel model = build_topic_model(labels, docs, vocab, emb, topic_opt);
  if (min_topic_size >= 2)
    model = merge_small_topics(model, docs, vocab, emb, min_topic_size, topic_opt).first;

  auto lists = topic_term_lists(model, opt.top_k);
  if (lists.size() < 2) return 1.0;
  Real tc = 0;
  try {
    tc = npmi_coherence(lists, docs, opt.coherence_window);
  } catch (const ValidationError&) {
    return 1.0;  // every pair skipped; treat as degenerate
  }
  Real td = topic_diversity(lists, opt.top_k);
  return quality_loss(tc, td, opt.tc_weight, opt.td_weight);
}

}  // namespace chronotopic
