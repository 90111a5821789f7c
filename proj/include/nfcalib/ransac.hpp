#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>

namespace nfcalib {

// Score of a RANSAC hypothesis: inlier ratio k in [0,1] and an error e (lower is better).
struct SampleScore {
  double inlier_ratio = -std::numeric_limits<double>::infinity();
  double error = std::numeric_limits<double>::infinity();

  bool empty() const { return !std::isfinite(inlier_ratio); }
};

// Candidate replacement rule trading inlier ratio against error with the
// threshold t_inl. A candidate wins when it has clearly more inliers, or a
// lower error at a comparable inlier ratio. A candidate with clearly fewer
// inliers never wins, whatever its error.
inline bool accept_candidate(const SampleScore& candidate, const SampleScore& best, double t_inl) {
  if (best.empty()) return true;
  const double dk = candidate.inlier_ratio - best.inlier_ratio;
  if (dk > t_inl) return true;
  if (dk < -t_inl) return false;
  return candidate.error < best.error;
}

// Deterministic per-stream seeds derived from one user seed (splitmix64).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

using Rng = std::mt19937_64;

// Draws `count` distinct indices from [0, n) into `out` by rejection; count is tiny.
template <typename Container>
void sample_distinct(Rng& rng, std::size_t n, std::size_t count, Container& out) {
  out.clear();
  for (std::size_t drawn = 0; drawn < count && drawn < n; ++drawn) {
    for (;;) {
      const std::size_t idx = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
      bool dup = false;
      for (auto v : out) dup = dup || (static_cast<std::size_t>(v) == idx);
      if (!dup) {
        out.push_back(idx);
        break;
      }
    }
  }
}

}  // namespace nfcalib
