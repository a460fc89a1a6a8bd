#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>

#include "nsdn/csd.hpp"
#include "nsdn/mlp.hpp"
#include "nsdn/sh.hpp"
#include "nsdn/sphere.hpp"

namespace nsdn::testing {

// Coefficients drawn N(0, 1).
ShVec random_sh(Rng& rng, int order);

double max_abs_diff(const ShVec& a, const ShVec& b);

// Two-sided p-value by enumerating all 2^n sign flips of the non-zero
// differences, ranking ties by mean rank. n must be small.
double brute_force_signed_rank_p(std::span<const double> a, std::span<const double> b);

struct FdReport {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  // Parameters whose +-h step moved a rectifier input across zero.
  std::size_t skipped = 0;
  // Where the worst relative error occurred.
  int worst_layer = -1;
  Eigen::Index worst_row = 0;
  Eigen::Index worst_col = 0;  // -1 for a bias
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// Central differences of the paired objective for every parameter,
// compared with the library's analytic gradient. The oracle re-implements
// the forward pass and evaluates L(theta + h) - L(theta - h) in difference
// form, so the quotient carries no large cancellation error. Relative error
// is |a - n| / max(|a|, |n|, floor).
FdReport finite_difference_check(const MlpModel& model, const TrainingBatch<double>& batch, double lambda,
                                 double h, double floor);

// Seeded model with random biases and a batch of m random samples.
MlpModel random_model(std::uint64_t seed);
TrainingBatch<double> random_batch(std::uint64_t seed, Eigen::Index m);

// Largest angle (degrees) between the strongest CSD peak and the fiber over
// noiseless single-fiber voxels on the default site A scheme.
double csd_single_fiber_error_deg(int trials, std::uint64_t seed);

// Fraction of two-fiber 90 degree crossings at SNR 30 whose two strongest
// CSD peaks both lie within 10 degrees of the true axes.
double csd_crossing_success_rate(int trials, std::uint64_t seed);

// Fresh empty directory under the system temp dir.
std::filesystem::path scratch_dir(const std::string& name);
std::string slurp(const std::filesystem::path& p);

}  // namespace nsdn::testing
