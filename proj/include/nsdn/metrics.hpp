#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "nsdn/sh.hpp"

namespace nsdn {

constexpr int kHistogramBins = 100;

// Angular correlation coefficient: normalized inner product of the l >= 2
// coefficients. Throws UndefinedAccError when either side has no energy
// above degree 0, ValidationError on order mismatch.
double acc(const ShVec& u, const ShVec& v);

// Nullopt instead of throwing for the undefined case.
std::optional<double> try_acc(const ShVec& u, const ShVec& v);

using Histogram = std::array<long, kHistogramBins>;

// Even-width bins over [-1, 1]; 1.0 falls in the last bin.
int histogram_bin(double value);
Histogram histogram(std::span<const double> values);

// Lower median: element (n - 1) / 2 of the sorted sample.
std::optional<double> lower_median(std::span<const double> values);

struct AccReport {
  // One entry per input pair; nullopt where ACC is undefined.
  std::vector<std::optional<double>> per_voxel;
  std::vector<double> defined;  // defined values in input order
  std::size_t excluded = 0;
  std::optional<double> median;
  Histogram counts{};
};

AccReport acc_batch(std::span<const ShVec> us, std::span<const ShVec> vs);
AccReport summarize_acc(std::vector<std::optional<double>> per_voxel);

struct SignedRankResult {
  double p_value = 1.0;
  double w_plus = 0.0;      // sum of ranks of positive differences
  std::size_t n_used = 0;   // non-zero differences
  bool exact = true;
  bool degenerate = false;  // every difference was zero
};

// Two-sided Wilcoxon signed-rank test on a - b.
//
// Zero differences are dropped; tied |differences| share the mean rank.
// With at most kExactLimit non-zero differences the null distribution of
// W+ is enumerated exactly over all sign assignments; above that a normal
// approximation with tie-corrected variance and continuity correction is
// used. p = min(1, 2 min(P(W+ <= w), P(W+ >= w))).
SignedRankResult signed_rank_test(std::span<const double> a, std::span<const double> b);

constexpr std::size_t kExactLimit = 25;
constexpr std::size_t kMinSignedRankSamples = 5;

}  // namespace nsdn
