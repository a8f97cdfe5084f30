#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace chronotopic {

// Dense math types. Embeddings are stored float32 (matching common embedding
// dumps); everything derived from them accumulates in double.
using Real = double;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using MatrixF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using SparseRowMatrix = Eigen::SparseMatrix<Real, Eigen::RowMajor>;

// ---------------------------------------------------------------------------
// Errors. Each maps to a stable CLI exit code (see pipeline.hpp).
// ---------------------------------------------------------------------------

struct ChronoError : std::runtime_error {
  explicit ChronoError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Malformed input file (bad record, bad header, bad config value).
struct ParseError : ChronoError {
  using ChronoError::ChronoError;
};

/// Input violates a documented invariant (duplicate uid, uncovered year, ...).
struct ValidationError : ChronoError {
  using ChronoError::ChronoError;
};

/// Binary file layout does not match its declared header.
struct FormatError : ChronoError {
  using ChronoError::ChronoError;
};

/// Embeddings and corpus disagree on which documents exist.
struct AlignmentError : ChronoError {
  using ChronoError::ChronoError;
};

/// Out-of-domain argument (k >= n, K > |V|, ...).
struct ParameterError : ChronoError {
  using ChronoError::ChronoError;
};

// ---------------------------------------------------------------------------
// Deterministic RNG. SplitMix64: tiny, portable, fully reproducible across
// platforms (std:: distributions are implementation-defined, so every draw
// that must be bit-stable goes through this).
// ---------------------------------------------------------------------------

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  /// Uniform double in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  std::uint64_t uniform_index(std::uint64_t n) { return n ? next_u64() % n : 0; }

  /// Uniform integer in [lo, hi], inclusive.
  long long uniform_int(long long lo, long long hi) {
    return lo + static_cast<long long>(uniform_index(static_cast<std::uint64_t>(hi - lo + 1)));
  }

  /// Standard normal via Box-Muller (no cached spare, so the draw sequence
  /// is a pure function of the call count).
  double gaussian() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 <= 0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

 private:
  std::uint64_t state_;
};

/// FNV-1a 64-bit. Used for term hashing, seed derivation and file checksums.
inline std::uint64_t fnv1a64(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ull) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t fnv1a64(const void* data, std::size_t len,
                             std::uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

/// Derive a per-stage seed from the run seed. Every stage draws from its own
/// stream so inserting a stage never perturbs the others.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view stage) {
  Rng r(seed ^ fnv1a64(stage));
  return r.next_u64();
}

// ---------------------------------------------------------------------------
// Parallelism. One knob: CHRONOTOPIC_THREADS caps the worker count.
// ---------------------------------------------------------------------------

int max_threads();

/// Chunked parallel-for over [0, n). Each worker owns a contiguous range, so
/// writes to per-index slots are race-free. Falls back to a plain loop when
/// the range is small or a single thread is configured.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  int nthreads = max_threads();
  if (nthreads <= 1 || n < 256) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(nthreads), n);
  std::size_t chunk = (n + workers - 1) / workers;
  std::vector<std::thread> threads;
  threads.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    std::size_t lo = w * chunk;
    std::size_t hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    threads.emplace_back([lo, hi, &fn] {
      for (std::size_t i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& t : threads) t.join();
}

/// Digamma (derivative of log-gamma), for x > 0. Asymptotic series with
/// recurrence shift; |error| < 1e-12 over the range we use.
inline double digamma(double x) {
  double r = 0.0;
  while (x < 10.0) {
    r -= 1.0 / x;
    x += 1.0;
  }
  double f = 1.0 / (x * x);
  return r + std::log(x) - 0.5 / x -
         f * (1.0 / 12 - f * (1.0 / 120 - f * (1.0 / 252 - f * (1.0 / 240 - f * (1.0 / 132)))));
}

}  // namespace chronotopic
