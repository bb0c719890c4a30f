#include "fabric/random.hpp"

#include <cmath>
#include <numbers>

namespace fabric {

namespace {

std::uint64_t mix(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

std::uint64_t Rng::next_u64() {
  const std::uint64_t key = mix(seed_ + 0x9e3779b97f4a7c15ULL * (stream_ + 1));
  return mix(key + 0x9e3779b97f4a7c15ULL * ++counter_);
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

std::int64_t Rng::uniform_int(std::int64_t lo, std::int64_t hi) {
  const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
  return lo + static_cast<std::int64_t>(next_u64() % span);
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
  has_spare_ = true;
  return r * std::cos(2.0 * std::numbers::pi * u2);
}

VectorXd Rng::normal_vector(Index n) {
  VectorXd v(n);
  for (Index i = 0; i < n; ++i) v(i) = normal();
  return v;
}

MatrixXd Rng::normal_matrix(Index r, Index c) {
  MatrixXd M(r, c);
  for (Index j = 0; j < c; ++j)
    for (Index i = 0; i < r; ++i) M(i, j) = normal();
  return M;
}

MatrixXd Rng::orthogonal(Index d, bool proper) {
  Eigen::HouseholderQR<MatrixXd> qr(normal_matrix(d, d));
  MatrixXd Q = qr.householderQ();
  const MatrixXd R = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Index k = 0; k < d; ++k)
    if (R(k, k) < 0) Q.col(k) *= -1.0;
  if (proper && Q.determinant() < 0) Q.col(0) *= -1.0;
  return Q;
}

}  // namespace fabric
