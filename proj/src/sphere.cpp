#include "nsdn/sphere.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace nsdn {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

Rng make_stream(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  const std::uint64_t a = splitmix64(seed);
  const std::uint64_t b = splitmix64(a ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
  const std::uint64_t c = splitmix64(b ^ splitmix64(index + 0x8cb92ba72f3d8dd7ULL));
  std::seed_seq seq{static_cast<std::uint32_t>(c), static_cast<std::uint32_t>(c >> 32),
                    static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
  return Rng(seq);
}

DirectionSet fibonacci_directions(Eigen::Index n) {
  if (n < 1) throw ValidationError("fibonacci_directions needs n >= 1");
  const double golden_angle = std::numbers::pi * (3.0 - std::sqrt(5.0));
  DirectionSet dirs(3, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double z = 1.0 - (2.0 * static_cast<double>(i) + 1.0) / static_cast<double>(n);
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = golden_angle * static_cast<double>(i);
    dirs.col(i) = Direction(r * std::cos(phi), r * std::sin(phi), z).normalized();
  }
  return dirs;
}

const DirectionSet& dense_directions() {
  static const DirectionSet grid = fibonacci_directions(kDenseGridSize);
  return grid;
}

Direction random_direction(Rng& rng) {
  std::normal_distribution<double> normal;
  for (;;) {
    Direction d(normal(rng), normal(rng), normal(rng));
    const double n = d.norm();
    if (n > 1e-12) return d / n;
  }
}

Rotation3 random_rotation(Rng& rng) {
  std::normal_distribution<double> normal;
  Eigen::Vector4d q;
  do {
    q = Eigen::Vector4d(normal(rng), normal(rng), normal(rng), normal(rng));
  } while (q.norm() < 1e-12);
  q.normalize();
  const Eigen::Quaterniond quat(q[0], q[1], q[2], q[3]);
  // Re-orthonormalize so the Rotation3 invariant holds to round-off.
  Eigen::Matrix3d m = quat.toRotationMatrix();
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  m = svd.matrixU() * svd.matrixV().transpose();
  return Rotation3(m);
}

Rotation3 rotation_from_seed(std::uint64_t seed) {
  if (seed == 0) return Rotation3::identity();
  Rng rng = make_stream(seed, 0x524f54ULL);
  return random_rotation(rng);
}

double axis_angle_deg(const Direction& a, const Direction& b) {
  const double c = std::clamp(std::abs(a.normalized().dot(b.normalized())), 0.0, 1.0);
  return std::acos(c) * 180.0 / std::numbers::pi;
}

}  // namespace nsdn
