#pragma once

// Real, antipodally symmetric spherical harmonics.
//
// Only even degrees are represented. Coefficients are stored degree by
// degree, l = 0, 2, 4, ..., and within a degree m runs from -l to l:
//
//   index(l, m) = l (l + 1) / 2 + m
//
// so an order-L vector holds (L + 1)(L + 2) / 2 values (45 at L = 8, 66 at
// L = 10). The basis is orthonormal on the unit sphere without the
// Condon-Shortley phase:
//
//   Y_lm = sqrt(2) N_l^|m| P_l^|m|(cos theta) cos(m phi)     m > 0
//   Y_l0 =         N_l^0   P_l^0  (cos theta)
//   Y_lm = sqrt(2) N_l^|m| P_l^|m|(cos theta) sin(|m| phi)   m < 0

#include <Eigen/Core>
#include <Eigen/LU>
#include <Eigen/SVD>

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "nsdn/errors.hpp"

namespace nsdn {

using Direction = Eigen::Vector3d;
// Direction sets are stored column-wise.
using DirectionSet = Eigen::Matrix3Xd;

constexpr int kSignalOrder = 8;
constexpr int kFodOrder = 10;

constexpr bool is_valid_order(int order) { return order >= 0 && order % 2 == 0; }

constexpr Eigen::Index coefficient_count(int order) {
  return static_cast<Eigen::Index>(order + 1) * (order + 2) / 2;
}

constexpr Eigen::Index sh_index(int l, int m) {
  return static_cast<Eigen::Index>(l) * (l + 1) / 2 + m;
}

void check_order(int order);

template <typename Scalar>
class ShVector {
 public:
  using Coeffs = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  ShVector() : ShVector(0) {}

  explicit ShVector(int order) : order_(order) {
    check_order(order);
    coeffs_ = Coeffs::Zero(coefficient_count(order));
  }

  ShVector(int order, Coeffs coeffs) : order_(order), coeffs_(std::move(coeffs)) {
    check_order(order);
    if (coeffs_.size() != coefficient_count(order)) {
      throw ValidationError("order-" + std::to_string(order) + " SH vector needs " +
                            std::to_string(coefficient_count(order)) + " coefficients, got " +
                            std::to_string(coeffs_.size()));
    }
  }

  int order() const { return order_; }
  Eigen::Index size() const { return coeffs_.size(); }
  const Coeffs& coeffs() const { return coeffs_; }

  Scalar& operator[](Eigen::Index i) { return coeffs_[i]; }
  Scalar operator[](Eigen::Index i) const { return coeffs_[i]; }
  Scalar& at(int l, int m) { return coeffs_[sh_index(l, m)]; }
  Scalar at(int l, int m) const { return coeffs_[sh_index(l, m)]; }

  friend bool operator==(const ShVector& a, const ShVector& b) {
    return a.order_ == b.order_ && a.coeffs_ == b.coeffs_;
  }

 private:
  int order_;
  Coeffs coeffs_;
};

using ShVec = ShVector<double>;

// Basis values Y_lm(d) for all even l <= order, in storage order.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> basis_row(int order, const Eigen::Matrix<Scalar, 3, 1>& d) {
  using std::atan2;
  using std::cos;
  using std::sin;
  using std::sqrt;
  check_order(order);

  const Scalar r = d.norm();
  const Scalar x = d.z() / r;
  const Scalar s = sqrt(std::max(Scalar(0), Scalar(1) - x * x));
  const Scalar phi = atan2(d.y(), d.x());
  const Scalar inv_sqrt_4pi = Scalar(1) / sqrt(Scalar(4) * std::numbers::pi_v<Scalar>);
  const Scalar sqrt2 = std::numbers::sqrt2_v<Scalar>;

  // p(l, m) = N_l^m P_l^m(x), filled column by column in m.
  const int n = order + 1;
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> p =
      Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>::Zero(n, n);
  p(0, 0) = inv_sqrt_4pi;
  for (int m = 1; m <= order; ++m) {
    p(m, m) = sqrt(Scalar(2 * m + 1) / Scalar(2 * m)) * s * p(m - 1, m - 1);
  }
  for (int m = 0; m < order; ++m) {
    p(m + 1, m) = sqrt(Scalar(2 * m + 3)) * x * p(m, m);
    for (int l = m + 2; l <= order; ++l) {
      const Scalar a = sqrt(Scalar(4 * l * l - 1) / Scalar(l * l - m * m));
      const Scalar b = sqrt(Scalar((l - 1) * (l - 1) - m * m) / Scalar(4 * (l - 1) * (l - 1) - 1));
      p(l, m) = a * (x * p(l - 1, m) - b * p(l - 2, m));
    }
  }

  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> row(coefficient_count(order));
  for (int l = 0; l <= order; l += 2) {
    row[sh_index(l, 0)] = p(l, 0);
    for (int m = 1; m <= l; ++m) {
      row[sh_index(l, m)] = sqrt2 * p(l, m) * cos(Scalar(m) * phi);
      row[sh_index(l, -m)] = sqrt2 * p(l, m) * sin(Scalar(m) * phi);
    }
  }
  return row;
}

// One basis row per direction (rows = directions).
Eigen::MatrixXd basis_matrix(int order, const DirectionSet& dirs);

// Least-squares projector onto the order-L basis for a fixed direction set.
// Construction checks the sample count and the design matrix condition
// number; fitting is then a single matrix-vector product.
class ShFitter {
 public:
  static constexpr double kMaxCondition = 1e8;

  ShFitter(const DirectionSet& dirs, int order);

  ShVec fit(const Eigen::Ref<const Eigen::VectorXd>& values) const;
  Eigen::VectorXd eval(const ShVec& v) const;

  int order() const { return order_; }
  Eigen::Index count() const { return basis_.rows(); }
  double condition_number() const { return condition_; }
  const Eigen::MatrixXd& basis() const { return basis_; }

 private:
  int order_;
  Eigen::MatrixXd basis_;
  Eigen::MatrixXd pinv_;
  double condition_;
};

ShVec fit_sh(const DirectionSet& dirs, const Eigen::Ref<const Eigen::VectorXd>& values, int order);

Eigen::VectorXd eval_sh(const ShVec& v, const DirectionSet& dirs);
double eval_sh(const ShVec& v, const Direction& d);

class Rotation3 {
 public:
  static constexpr double kTolerance = 1e-9;

  Rotation3() : m_(Eigen::Matrix3d::Identity()) {}
  // Throws ValidationError unless m is orthogonal with determinant +1.
  explicit Rotation3(const Eigen::Matrix3d& m);

  static Rotation3 identity() { return Rotation3(); }

  const Eigen::Matrix3d& matrix() const { return m_; }
  Rotation3 inverse() const;
  Rotation3 operator*(const Rotation3& other) const;
  Direction operator*(const Direction& d) const { return m_ * d; }
  DirectionSet operator*(const DirectionSet& dirs) const { return m_ * dirs; }

 private:
  Eigen::Matrix3d m_;
};

// Coefficients of d -> f(R^-1 d), computed by resampling f on a dense
// Fibonacci set and refitting at the same order.
ShVec rotate_sh(const ShVec& v, const Rotation3& r);

// Band-limited antipodal delta: c_lm = Y_lm(d).
ShVec delta_fod(const Direction& d, int order);

// Sum of squared coefficients per degree, indexed by l / 2.
Eigen::VectorXd degree_energy(const ShVec& v);

// Local maxima of the amplitude, found on a direction set and refined off
// the grid, strongest first.
// Antipodal points are identified; maxima below rel_threshold * global
// maximum are dropped.
std::vector<Direction> find_peaks(const ShVec& v, const DirectionSet& grid,
                                  double neighbor_angle_deg = 15.0, double rel_threshold = 0.1);

}  // namespace nsdn
