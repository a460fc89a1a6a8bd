#include "nsdn/sh.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <memory>
#include <mutex>
#include <numeric>
#include <numbers>

#include <Eigen/Geometry>

#include "nsdn/sphere.hpp"

namespace nsdn {

void check_order(int order) {
  if (!is_valid_order(order)) {
    throw ValidationError("SH order must be even and non-negative, got " + std::to_string(order));
  }
}

Eigen::MatrixXd basis_matrix(int order, const DirectionSet& dirs) {
  Eigen::MatrixXd b(dirs.cols(), coefficient_count(order));
  for (Eigen::Index i = 0; i < dirs.cols(); ++i) {
    b.row(i) = basis_row<double>(order, dirs.col(i)).transpose();
  }
  return b;
}

ShFitter::ShFitter(const DirectionSet& dirs, int order) : order_(order) {
  check_order(order);
  const Eigen::Index needed = coefficient_count(order);
  if (dirs.cols() < needed) {
    throw RankDeficientError("order-" + std::to_string(order) + " fit needs at least " +
                                 std::to_string(needed) + " directions, got " +
                                 std::to_string(dirs.cols()),
                             dirs.cols(), order, std::numeric_limits<double>::infinity());
  }
  basis_ = basis_matrix(order, dirs);
  Eigen::BDCSVD<Eigen::MatrixXd> svd(basis_, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  const double smax = sv[0];
  const double smin = sv[sv.size() - 1];
  condition_ = smin > 0.0 ? smax / smin : std::numeric_limits<double>::infinity();
  if (!(condition_ <= kMaxCondition)) {
    throw RankDeficientError("order-" + std::to_string(order) + " design matrix on " +
                                 std::to_string(dirs.cols()) +
                                 " directions is ill-conditioned (kappa = " +
                                 std::to_string(condition_) + ")",
                             dirs.cols(), order, condition_);
  }
  pinv_ = svd.matrixV() * sv.cwiseInverse().asDiagonal() * svd.matrixU().transpose();
}

ShVec ShFitter::fit(const Eigen::Ref<const Eigen::VectorXd>& values) const {
  if (values.size() != basis_.rows()) {
    throw ValidationError("fit expects " + std::to_string(basis_.rows()) + " values, got " +
                          std::to_string(values.size()));
  }
  return ShVec(order_, pinv_ * values);
}

Eigen::VectorXd ShFitter::eval(const ShVec& v) const {
  if (v.order() != order_) throw ValidationError("fitter/vector order mismatch");
  return basis_ * v.coeffs();
}

ShVec fit_sh(const DirectionSet& dirs, const Eigen::Ref<const Eigen::VectorXd>& values, int order) {
  if (dirs.cols() != values.size()) {
    throw ValidationError("fit_sh: " + std::to_string(dirs.cols()) + " directions but " +
                          std::to_string(values.size()) + " values");
  }
  return ShFitter(dirs, order).fit(values);
}

Eigen::VectorXd eval_sh(const ShVec& v, const DirectionSet& dirs) {
  return basis_matrix(v.order(), dirs) * v.coeffs();
}

double eval_sh(const ShVec& v, const Direction& d) {
  return basis_row<double>(v.order(), d).dot(v.coeffs());
}

Rotation3::Rotation3(const Eigen::Matrix3d& m) : m_(m) {
  const double orth = (m.transpose() * m - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
  if (!(orth <= kTolerance) || !(std::abs(m.determinant() - 1.0) <= kTolerance)) {
    throw ValidationError("matrix is not a proper rotation");
  }
}

Rotation3 Rotation3::inverse() const { return Rotation3(Eigen::Matrix3d(m_.transpose())); }

Rotation3 Rotation3::operator*(const Rotation3& other) const {
  return Rotation3(Eigen::Matrix3d(m_ * other.m_));
}

namespace {

constexpr int kCachedRotationOrders = 7;  // orders 0..12

const ShFitter& dense_fitter(int order) {
  static std::array<std::unique_ptr<const ShFitter>, kCachedRotationOrders> cache;
  static std::array<std::once_flag, kCachedRotationOrders> flags;
  const int slot = order / 2;
  std::call_once(flags[slot], [&] { cache[slot] = std::make_unique<ShFitter>(dense_directions(), order); });
  return *cache[slot];
}

}  // namespace

ShVec rotate_sh(const ShVec& v, const Rotation3& r) {
  const DirectionSet& grid = dense_directions();
  const Eigen::VectorXd samples = eval_sh(v, DirectionSet(r.inverse() * grid));
  if (v.order() / 2 < kCachedRotationOrders) return dense_fitter(v.order()).fit(samples);
  const Eigen::Index n = std::max<Eigen::Index>(kDenseGridSize, 3 * coefficient_count(v.order()));
  const DirectionSet dense = fibonacci_directions(n);
  return fit_sh(dense, eval_sh(v, DirectionSet(r.inverse() * dense)), v.order());
}

ShVec delta_fod(const Direction& d, int order) {
  return ShVec(order, basis_row<double>(order, d));
}

Eigen::VectorXd degree_energy(const ShVec& v) {
  Eigen::VectorXd e(v.order() / 2 + 1);
  for (int l = 0; l <= v.order(); l += 2) {
    e[l / 2] = v.coeffs().segment(sh_index(l, -l), 2 * l + 1).squaredNorm();
  }
  return e;
}

namespace {

// Pattern search in the tangent plane, starting from a grid maximum.
Direction refine_peak(const ShVec& v, Direction d, double step) {
  double best = eval_sh(v, d);
  while (step > 1e-9) {
    const Eigen::Vector3d u = d.unitOrthogonal();
    const Eigen::Vector3d w = d.cross(u);
    bool moved = false;
    for (const Eigen::Vector3d& t : {u, Eigen::Vector3d(-u), w, Eigen::Vector3d(-w)}) {
      const Direction c = (d + step * t).normalized();
      const double a = eval_sh(v, c);
      if (a > best) {
        best = a;
        d = c;
        moved = true;
        break;
      }
    }
    if (!moved) step *= 0.5;
  }
  return d;
}

}  // namespace

std::vector<Direction> find_peaks(const ShVec& v, const DirectionSet& grid, double neighbor_angle_deg,
                                  double rel_threshold) {
  const Eigen::VectorXd amp = eval_sh(v, grid);
  const double gmax = amp.maxCoeff();
  const double cos_nb = std::cos(neighbor_angle_deg * std::numbers::pi / 180.0);
  std::vector<Eigen::Index> maxima;
  for (Eigen::Index i = 0; i < grid.cols(); ++i) {
    if (amp[i] < rel_threshold * gmax || amp[i] <= 0.0) continue;
    bool is_max = true;
    for (Eigen::Index j = 0; j < grid.cols() && is_max; ++j) {
      if (j == i) continue;
      if (std::abs(grid.col(i).dot(grid.col(j))) < cos_nb) continue;
      // Ties broken by index so plateaus yield one maximum.
      if (amp[j] > amp[i] || (amp[j] == amp[i] && j < i)) is_max = false;
    }
    if (is_max) maxima.push_back(i);
  }

  const double step = std::sqrt(4.0 * std::numbers::pi / static_cast<double>(grid.cols())) / 2.0;
  std::vector<std::pair<double, Direction>> refined;
  for (Eigen::Index i : maxima) {
    const Direction d = refine_peak(v, grid.col(i), step);
    refined.emplace_back(eval_sh(v, d), d);
  }
  std::stable_sort(refined.begin(), refined.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<Direction> peaks;
  for (const auto& [a, d] : refined) {
    const bool duplicate = std::any_of(peaks.begin(), peaks.end(), [&](const Direction& p) {
      return std::abs(p.dot(d)) >= cos_nb;
    });
    if (!duplicate) peaks.push_back(d);
  }
  return peaks;
}

}  // namespace nsdn
