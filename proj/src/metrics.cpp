#include "nsdn/metrics.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <numeric>

namespace nsdn {

namespace {

constexpr double kAccRounding = 1e-12;

// Coefficients from index 1 onward are exactly the l >= 2 block.
auto anisotropic(const ShVec& v) { return v.coeffs().tail(v.size() - 1); }

}  // namespace

std::optional<double> try_acc(const ShVec& u, const ShVec& v) {
  if (u.order() != v.order()) {
    throw ValidationError("acc: order mismatch (" + std::to_string(u.order()) + " vs " +
                          std::to_string(v.order()) + ")");
  }
  const auto a = anisotropic(u);
  const auto b = anisotropic(v);
  const double na = a.norm();
  const double nb = b.norm();
  if (!(na > 0.0) || !(nb > 0.0)) return std::nullopt;
  const double value = a.dot(b) / (na * nb);
  assert(std::abs(value) <= 1.0 + kAccRounding);
  return std::clamp(value, -1.0, 1.0);
}

double acc(const ShVec& u, const ShVec& v) {
  auto value = try_acc(u, v);
  if (!value) throw UndefinedAccError("acc undefined: no energy in degrees l >= 2");
  return *value;
}

int histogram_bin(double value) {
  const int bin = static_cast<int>(std::floor((value + 1.0) * 0.5 * kHistogramBins));
  return std::clamp(bin, 0, kHistogramBins - 1);
}

Histogram histogram(std::span<const double> values) {
  Histogram h{};
  for (double v : values) ++h[histogram_bin(v)];
  return h;
}

std::optional<double> lower_median(std::span<const double> values) {
  if (values.empty()) return std::nullopt;
  std::vector<double> sorted(values.begin(), values.end());
  const auto mid = sorted.begin() + static_cast<std::ptrdiff_t>((sorted.size() - 1) / 2);
  std::nth_element(sorted.begin(), mid, sorted.end());
  return *mid;
}

AccReport summarize_acc(std::vector<std::optional<double>> per_voxel) {
  AccReport r;
  r.per_voxel = std::move(per_voxel);
  for (const auto& v : r.per_voxel) {
    if (v) {
      r.defined.push_back(*v);
    } else {
      ++r.excluded;
    }
  }
  r.median = lower_median(r.defined);
  r.counts = histogram(r.defined);
  return r;
}

AccReport acc_batch(std::span<const ShVec> us, std::span<const ShVec> vs) {
  if (us.size() != vs.size()) throw ValidationError("acc_batch: length mismatch");
  std::vector<std::optional<double>> values;
  values.reserve(us.size());
  for (std::size_t i = 0; i < us.size(); ++i) values.push_back(try_acc(us[i], vs[i]));
  return summarize_acc(std::move(values));
}

SignedRankResult signed_rank_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ValidationError("signed_rank_test: length mismatch");
  if (a.size() < kMinSignedRankSamples) {
    throw ValidationError("signed_rank_test needs at least " + std::to_string(kMinSignedRankSamples) +
                          " pairs");
  }

  std::vector<double> diffs;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    if (d != 0.0) diffs.push_back(d);
  }
  SignedRankResult result;
  result.n_used = diffs.size();
  if (diffs.empty()) {
    result.degenerate = true;
    return result;
  }

  const std::size_t n = diffs.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t i, std::size_t j) { return std::abs(diffs[i]) < std::abs(diffs[j]); });

  // Doubled mid-ranks stay integral under ties.
  std::vector<std::int64_t> rank2(n);
  double tie_term = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && std::abs(diffs[order[j + 1]]) == std::abs(diffs[order[i]])) ++j;
    const auto twice_mid = static_cast<std::int64_t>(i + 1 + j + 1);
    for (std::size_t k = i; k <= j; ++k) rank2[order[k]] = twice_mid;
    const double t = static_cast<double>(j - i + 1);
    tie_term += t * t * t - t;
    i = j + 1;
  }

  std::int64_t w2 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (diffs[i] > 0.0) w2 += rank2[i];
  }
  result.w_plus = static_cast<double>(w2) / 2.0;

  if (n <= kExactLimit) {
    const std::int64_t total2 = std::accumulate(rank2.begin(), rank2.end(), std::int64_t{0});
    // counts[s] = number of sign assignments with doubled W+ equal to s.
    std::vector<std::uint64_t> counts(static_cast<std::size_t>(total2) + 1, 0);
    counts[0] = 1;
    std::int64_t reach = 0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::int64_t s = reach; s >= 0; --s) {
        if (counts[static_cast<std::size_t>(s)] != 0) {
          counts[static_cast<std::size_t>(s + rank2[i])] += counts[static_cast<std::size_t>(s)];
        }
      }
      reach += rank2[i];
    }
    std::uint64_t lower = 0;
    std::uint64_t upper = 0;
    for (std::int64_t s = 0; s <= total2; ++s) {
      if (s <= w2) lower += counts[static_cast<std::size_t>(s)];
      if (s >= w2) upper += counts[static_cast<std::size_t>(s)];
    }
    const double denom = std::ldexp(1.0, static_cast<int>(n));
    const double tail = static_cast<double>(std::min(lower, upper)) / denom;
    result.p_value = std::min(1.0, 2.0 * tail);
    result.exact = true;
    return result;
  }

  const double nn = static_cast<double>(n);
  const double mean = nn * (nn + 1.0) / 4.0;
  const double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0 - tie_term / 48.0;
  result.exact = false;
  if (!(var > 0.0)) return result;
  const double z = (std::abs(result.w_plus - mean) - 0.5) / std::sqrt(var);
  result.p_value = z <= 0.0 ? 1.0 : std::min(1.0, std::erfc(z / std::sqrt(2.0)));
  return result;
}

}  // namespace nsdn
