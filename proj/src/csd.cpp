#include "nsdn/csd.hpp"

#include <Eigen/Geometry>
#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "nsdn/sphere.hpp"

namespace nsdn {

namespace {

constexpr int kResponseFitOrder = 16;

double zonal_peak(int l) { return std::sqrt((2.0 * l + 1.0) / (4.0 * std::numbers::pi)); }

int degree_of(Eigen::Index index) {
  int l = 0;
  while (sh_index(l + 2, -(l + 2)) <= index) l += 2;
  return l;
}

}  // namespace

void ResponseFunction::validate() const {
  if (zonal.size() < 1) throw ValidationError("response function is empty");
  if (!zonal.allFinite()) throw ValidationError("response function is not finite");
  if (!(zonal[0] > 0.0)) throw ValidationError("response r_0 must be positive");
}

ResponseFunction estimate_response(const Eigen::Ref<const Eigen::VectorXd>& single_fiber_signals,
                                   const Direction& fiber_direction, const DirectionSet& scheme) {
  if (single_fiber_signals.size() != scheme.cols()) {
    throw ValidationError("estimate_response: " + std::to_string(scheme.cols()) + " directions but " +
                          std::to_string(single_fiber_signals.size()) + " values");
  }
  // Zonal-only fit about the fiber axis, carried past the kept degrees so that
  // higher-degree signal content does not alias into them.
  const Direction axis = fiber_direction.normalized();
  const int terms = kResponseFitOrder / 2 + 1;
  Eigen::MatrixXd a(scheme.cols(), terms);
  for (Eigen::Index i = 0; i < scheme.cols(); ++i) {
    const double x = std::clamp(axis.dot(scheme.col(i).normalized()), -1.0, 1.0);
    for (int k = 0; k < terms; ++k) a(i, k) = zonal_peak(2 * k) * std::legendre(static_cast<unsigned>(2 * k), x);
  }
  const Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(a);
  if (cod.rank() < terms) throw ValidationError("estimate_response: scheme too sparse for the zonal fit");
  const Eigen::VectorXd coeffs = cod.solve(single_fiber_signals);
  ResponseFunction r;
  r.zonal = coeffs.head(kSignalOrder / 2 + 1);
  r.validate();
  return r;
}

ResponseFunction response_for_profile(const ScannerProfile& profile, double axial, double radial,
                                      const Direction& fiber) {
  ScannerProfile clean = profile;
  clean.rician_sigma = 0.0;
  const VoxelPhantom single({TensorCompartment{fiber.normalized(), axial, radial, 1.0}});
  Rng unused = make_stream(0, 0);
  return estimate_response(simulate_signal(single, clean, unused), fiber, clean.measured_directions());
}

ShVec convolve(const ShVec& fod, const ResponseFunction& response, int signal_order) {
  check_order(signal_order);
  ShVec s(signal_order);
  const int top = std::min(signal_order, fod.order());
  for (int l = 0; l <= top; l += 2) {
    const double k = l <= response.order() ? response.degree(l) / zonal_peak(l) : 0.0;
    for (int m = -l; m <= l; ++m) s.at(l, m) = k * fod.at(l, m);
  }
  return s;
}

void CsdConfig::validate(int input_order) const {
  check_order(output_order);
  if (output_order < input_order) throw ValidationError("CSD output order below input order");
  if (constraint_directions < 1) throw ValidationError("CSD needs constraint directions");
  if (max_iterations < 1) throw ValidationError("CSD needs at least one iteration");
  if (!(alpha >= 0.0) || !(tau >= 0.0)) throw ValidationError("CSD alpha and tau must be >= 0");
}

CsdSolver::CsdSolver(ResponseFunction response, CsdConfig config, int input_order)
    : response_(std::move(response)), config_(config), input_order_(input_order) {
  response_.validate();
  config_.validate(input_order_);
  if (response_.order() < input_order_) throw ValidationError("response order below signal order");
  kernel_.resize(coefficient_count(input_order_));
  for (Eigen::Index i = 0; i < kernel_.size(); ++i) {
    const int l = degree_of(i);
    kernel_[i] = response_.degree(l) / zonal_peak(l);
  }
  for (int l = 0; l <= input_order_; l += 2) {
    if (!(std::abs(response_.degree(l)) > 1e-12 * std::abs(response_.degree(0)))) {
      throw ValidationError("response degree " + std::to_string(l) + " is zero");
    }
  }
  constraint_ = basis_matrix(config_.output_order, fibonacci_directions(config_.constraint_directions));
}

ShVec CsdSolver::initial_fod(const ShVec& signal) const {
  ShVec f(config_.output_order);
  for (Eigen::Index i = 0; i < kernel_.size(); ++i) f[i] = signal[i] / kernel_[i];
  return f;
}

double CsdSolver::threshold_for(const ShVec& initial) const {
  return config_.tau * (constraint_ * initial.coeffs()).mean();
}

std::vector<bool> CsdSolver::constraint_set(const ShVec& fod, double threshold) const {
  const Eigen::VectorXd amp = constraint_ * fod.coeffs();
  std::vector<bool> active(static_cast<std::size_t>(amp.size()));
  for (Eigen::Index j = 0; j < amp.size(); ++j) active[static_cast<std::size_t>(j)] = amp[j] < threshold;
  return active;
}

double CsdSolver::objective(const ShVec& fod, const ShVec& signal, const std::vector<bool>& active) const {
  const Eigen::Index n_in = kernel_.size();
  double data = (kernel_.cwiseProduct(fod.coeffs().head(n_in)) - signal.coeffs()).squaredNorm();
  const Eigen::VectorXd amp = constraint_ * fod.coeffs();
  double penalty = 0.0;
  for (Eigen::Index j = 0; j < amp.size(); ++j) {
    if (active[static_cast<std::size_t>(j)]) penalty += amp[j] * amp[j];
  }
  return data + config_.alpha * config_.alpha * penalty;
}

CsdResult CsdSolver::deconvolve(const ShVec& signal) const {
  if (signal.order() != input_order_) {
    throw ValidationError("CSD expects an order-" + std::to_string(input_order_) + " signal");
  }
  const Eigen::Index n_in = kernel_.size();
  const Eigen::Index n_out = coefficient_count(config_.output_order);

  CsdResult result;
  result.fod = initial_fod(signal);
  const double threshold = threshold_for(result.fod);
  std::vector<bool> previous;
  for (int iter = 1; iter <= config_.max_iterations; ++iter) {
    const std::vector<bool> active = constraint_set(result.fod, threshold);
    if (iter > 1 && active == previous) {
      result.converged = true;
      break;
    }
    result.iterations = iter;
    const auto n_active = static_cast<Eigen::Index>(std::count(active.begin(), active.end(), true));
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n_in + n_active, n_out);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n_in + n_active);
    A.topLeftCorner(n_in, n_in).diagonal() = kernel_;
    rhs.head(n_in) = signal.coeffs();
    Eigen::Index row = n_in;
    for (std::size_t j = 0; j < active.size(); ++j) {
      if (active[j]) A.row(row++) = config_.alpha * constraint_.row(static_cast<Eigen::Index>(j));
    }
    // Minimum-norm solution leaves unconstrained l = 10 terms at zero.
    result.fod = ShVec(config_.output_order, A.completeOrthogonalDecomposition().solve(rhs));
    previous = active;
  }
  if (!result.converged) {
    result.converged = constraint_set(result.fod, threshold) == previous;
  }
  return result;
}

CsdResult csd_deconvolve(const ShVec& signal, const ResponseFunction& response, const CsdConfig& config) {
  return CsdSolver(response, config, signal.order()).deconvolve(signal);
}

}  // namespace nsdn
