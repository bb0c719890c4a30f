#pragma once

#include <cstdint>

#include "fabric/graph.hpp"

namespace fabric {

/// Counter-based generator: output k of stream s is splitmix64(seed, s, k), so every draw is
/// reproducible from (seed, stream, counter) on any platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) : seed_(seed), stream_(stream) {}

  std::uint64_t next_u64();
  /// Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [lo, hi].
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  double normal();
  VectorXd normal_vector(Index n);
  MatrixXd normal_matrix(Index r, Index c);
  /// Haar-distributed orthogonal d x d matrix (determinant sign random unless `proper`).
  MatrixXd orthogonal(Index d, bool proper = false);

  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace fabric
