#pragma once

#include "nsdn/phantom.hpp"
#include "nsdn/sh.hpp"

namespace nsdn {

// Zonal (m = 0) SH coefficients of a single-fiber signal aligned with z,
// one per even degree 0..8.
struct ResponseFunction {
  Eigen::VectorXd zonal;

  int order() const { return 2 * (static_cast<int>(zonal.size()) - 1); }
  double degree(int l) const { return zonal[l / 2]; }
  void validate() const;
};

ResponseFunction estimate_response(const Eigen::Ref<const Eigen::VectorXd>& single_fiber_signals,
                                   const Direction& fiber_direction, const DirectionSet& scheme);

// Noise-free single fiber rendered through the profile.
ResponseFunction response_for_profile(const ScannerProfile& profile,
                                      double axial = kDefaultAxialDiffusivity,
                                      double radial = kDefaultRadialDiffusivity,
                                      const Direction& fiber = Direction::UnitZ());

// Signal SH of the FOD convolved with the response (degrees above the
// response order vanish).
ShVec convolve(const ShVec& fod, const ResponseFunction& response, int signal_order = kSignalOrder);

struct CsdConfig {
  int output_order = kFodOrder;
  Eigen::Index constraint_directions = 300;
  double tau = 0.1;  // fraction of the mean initial FOD amplitude
  double alpha = 1.0;
  int max_iterations = 50;

  void validate(int input_order) const;
};

struct CsdResult {
  ShVec fod;
  bool converged = false;
  int iterations = 0;
};

// Soft-constrained super-resolved deconvolution.
//
// The forward operator scales degree l by k_l = r_l / Y_l0(z), which maps
// delta_fod(d) to the signal of a single fiber along d. Starting from the
// per-degree inverse on l <= 8, each iteration collects the constraint
// directions whose amplitude falls below tau times the mean initial
// amplitude and solves
//
//   min ||R f - s||^2 + alpha^2 ||L f||^2
//
// with L sampling f on that set, until the set repeats.
class CsdSolver {
 public:
  CsdSolver(ResponseFunction response, CsdConfig config = {}, int input_order = kSignalOrder);

  CsdResult deconvolve(const ShVec& signal) const;

  // ||R f - s||^2 + alpha^2 ||L f||^2 for a given constraint mask.
  double objective(const ShVec& fod, const ShVec& signal, const std::vector<bool>& active) const;
  std::vector<bool> constraint_set(const ShVec& fod, double threshold) const;
  ShVec initial_fod(const ShVec& signal) const;
  double threshold_for(const ShVec& initial) const;

  const Eigen::VectorXd& kernel() const { return kernel_; }

 private:
  ResponseFunction response_;
  CsdConfig config_;
  int input_order_;
  Eigen::VectorXd kernel_;      // per input coefficient
  Eigen::MatrixXd constraint_;  // constraint directions x output coefficients
};

CsdResult csd_deconvolve(const ShVec& signal, const ResponseFunction& response, const CsdConfig& config = {});

}  // namespace nsdn
