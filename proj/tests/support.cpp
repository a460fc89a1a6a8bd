#include "support.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <vector>

#include <Eigen/Geometry>

#include "nsdn/phantom.hpp"

namespace nsdn::testing {

ShVec random_sh(Rng& rng, int order) {
  std::normal_distribution<double> n(0.0, 1.0);
  ShVec v(order);
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = n(rng);
  return v;
}

double max_abs_diff(const ShVec& a, const ShVec& b) { return (a.coeffs() - b.coeffs()).cwiseAbs().maxCoeff(); }

double brute_force_signed_rank_p(std::span<const double> a, std::span<const double> b) {
  std::vector<double> d;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] - b[i] != 0.0) d.push_back(a[i] - b[i]);
  }
  const std::size_t n = d.size();
  if (n == 0) return 1.0;
  // Doubled mean ranks, so every rank is an integer.
  std::vector<long> rank2(n);
  for (std::size_t i = 0; i < n; ++i) {
    long below = 0;
    long tied = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (std::abs(d[j]) < std::abs(d[i])) ++below;
      if (j != i && std::abs(d[j]) == std::abs(d[i])) ++tied;
    }
    rank2[i] = 2 * (below + 1) + tied;
  }
  long observed = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (d[i] > 0) observed += rank2[i];
  }
  long le = 0;
  long ge = 0;
  const unsigned long total = 1UL << n;
  for (unsigned long mask = 0; mask < total; ++mask) {
    long w = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (mask >> i & 1UL) w += rank2[i];
    }
    le += w <= observed;
    ge += w >= observed;
  }
  const double tail = static_cast<double>(std::min(le, ge)) / static_cast<double>(total);
  return std::min(1.0, 2.0 * tail);
}

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

double relu(double v) { return v > 0.0 ? v : 0.0; }

struct Trace {
  std::array<VectorXd, kLayerCount> pre;
  std::array<VectorXd, kLayerCount + 1> act;
};

Trace straight_line(const MlpModel& model, const VectorXd& x) {
  Trace t;
  t.act[0] = x;
  for (int k = 0; k < kLayerCount; ++k) {
    const auto& L = model.layer(k);
    VectorXd z(L.W.rows());
    for (Eigen::Index i = 0; i < L.W.rows(); ++i) {
      double s = L.b[i];
      for (Eigen::Index j = 0; j < L.W.cols(); ++j) s += L.W(i, j) * t.act[k][j];
      z[i] = s;
    }
    t.pre[k] = z;
    t.act[k + 1] = k < 2 ? VectorXd(z.unaryExpr(&relu)) : z;
  }
  return t;
}

struct Maps {
  MatrixXd from_act2;  // output change per unit change of act[2]
  MatrixXd from_pre2;
  MatrixXd from_pre3;
};

// Output change caused by moving pre[k][i] by delta. Returns false when a
// rectifier input crosses zero.
bool output_change(const MlpModel& model, const Maps& maps, const Trace& t, int k, Eigen::Index i, double delta,
                   VectorXd& dout) {
  switch (k) {
    case 4:
      dout = VectorXd::Zero(kOutputDim);
      dout[i] = delta;
      return true;
    case 3:
      dout = maps.from_pre3.col(i) * delta;
      return true;
    case 2:
      dout = maps.from_pre2.col(i) * delta;
      return true;
    case 1: {
      const double p = t.pre[1][i];
      if ((p > 0.0) != (p + delta > 0.0)) return false;
      // Without a crossing the rectifier moves by exactly delta or not at all.
      dout = maps.from_act2.col(i) * (p > 0.0 ? delta : 0.0);
      return true;
    }
    default: {
      const double p = t.pre[0][i];
      if ((p > 0.0) != (p + delta > 0.0)) return false;
      const double da1 = p > 0.0 ? delta : 0.0;
      if (da1 == 0.0) {
        dout = VectorXd::Zero(kOutputDim);
        return true;
      }
      const VectorXd dp1 = model.layer(1).W.col(i) * da1;
      VectorXd da2(dp1.size());
      for (Eigen::Index r = 0; r < dp1.size(); ++r) {
        const double q = t.pre[1][r];
        if ((q > 0.0) != (q + dp1[r] > 0.0)) return false;
        da2[r] = q > 0.0 ? dp1[r] : 0.0;
      }
      dout = maps.from_act2 * da2;
      return true;
    }
  }
}

}  // namespace

FdReport finite_difference_check(const MlpModel& model, const TrainingBatch<double>& batch, double lambda,
                                 double h, double floor) {
  const MlpModel analytic = gradients(model, batch, lambda);
  const Eigen::Index m = batch.size();
  const bool pairs = batch.has_pairs();

  Maps maps;
  maps.from_pre3 = model.layer(4).W;
  maps.from_pre2 = model.layer(4).W * model.layer(3).W;
  maps.from_act2 = maps.from_pre2 * model.layer(2).W;

  std::vector<Trace> tx;
  std::vector<Trace> ta;
  std::vector<Trace> tb;
  std::vector<VectorXd> residual;
  std::vector<VectorXd> gap;
  for (Eigen::Index s = 0; s < m; ++s) {
    tx.push_back(straight_line(model, batch.x.col(s)));
    residual.push_back(tx.back().act[kLayerCount] - batch.y_true.col(s));
    if (pairs) {
      ta.push_back(straight_line(model, batch.xa.col(s)));
      tb.push_back(straight_line(model, batch.xb.col(s)));
      gap.push_back(ta.back().act[kLayerCount] - tb.back().act[kLayerCount]);
    }
  }

  FdReport report;
  VectorXd plus;
  VectorXd minus;
  VectorXd plus_b;
  VectorXd minus_b;
  auto check = [&](int k, Eigen::Index i, Eigen::Index j, double a_grad) {
    // j < 0 selects the bias, whose multiplier is 1.
    double diff = 0.0;
    for (Eigen::Index s = 0; s < m; ++s) {
      const double ax = j < 0 ? 1.0 : tx[s].act[k][j];
      if (!output_change(model, maps, tx[s], k, i, h * ax, plus) ||
          !output_change(model, maps, tx[s], k, i, -h * ax, minus)) {
        ++report.skipped;
        return;
      }
      diff += (plus - minus).dot(2.0 * residual[s] + plus + minus) / static_cast<double>(m);
      if (pairs && lambda != 0.0) {
        const double aa = j < 0 ? 1.0 : ta[s].act[k][j];
        const double ab = j < 0 ? 1.0 : tb[s].act[k][j];
        VectorXd pa;
        VectorXd ma;
        if (!output_change(model, maps, ta[s], k, i, h * aa, pa) ||
            !output_change(model, maps, ta[s], k, i, -h * aa, ma) ||
            !output_change(model, maps, tb[s], k, i, h * ab, plus_b) ||
            !output_change(model, maps, tb[s], k, i, -h * ab, minus_b)) {
          ++report.skipped;
          return;
        }
        const VectorXd ep = pa - plus_b;
        const VectorXd em = ma - minus_b;
        diff += lambda * (ep - em).dot(2.0 * gap[s] + ep + em) / static_cast<double>(m);
      }
    }
    const double numeric = diff / (2.0 * h);
    const double rel = std::abs(a_grad - numeric) / std::max({std::abs(a_grad), std::abs(numeric), floor});
    if (rel > report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_layer = k;
      report.worst_row = i;
      report.worst_col = j;
      report.worst_analytic = a_grad;
      report.worst_numeric = numeric;
    }
    ++report.checked;
  };

  for (int k = 0; k < kLayerCount; ++k) {
    const auto& G = analytic.layer(k);
    for (Eigen::Index i = 0; i < G.W.rows(); ++i) {
      for (Eigen::Index j = 0; j < G.W.cols(); ++j) check(k, i, j, G.W(i, j));
      check(k, i, -1, G.b[i]);
    }
  }
  return report;
}

MlpModel random_model(std::uint64_t seed) {
  Rng rng = make_stream(seed, 101);
  MlpModel model = MlpModel::initialized(rng);
  std::uniform_real_distribution<double> u(-0.1, 0.1);
  for (int k = 0; k < kLayerCount; ++k) {
    auto& b = model.layer(k).b;
    for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = u(rng);
  }
  return model;
}

TrainingBatch<double> random_batch(std::uint64_t seed, Eigen::Index m) {
  Rng rng = make_stream(seed, 102);
  std::normal_distribution<double> n(0.0, 1.0);
  auto fill = [&](Eigen::Index rows) {
    Eigen::MatrixXd out(rows, m);
    for (Eigen::Index c = 0; c < m; ++c) {
      for (Eigen::Index r = 0; r < rows; ++r) out(r, c) = n(rng);
    }
    return out;
  };
  TrainingBatch<double> batch;
  batch.x = fill(kInputDim);
  batch.y_true = fill(kOutputDim);
  batch.xa = fill(kInputDim);
  batch.xb = fill(kInputDim);
  return batch;
}

double csd_single_fiber_error_deg(int trials, std::uint64_t seed) {
  ScannerProfile profile = default_profile_a();
  profile.rician_sigma = 0.0;
  const Acquisition acq(profile);
  const CsdSolver solver(response_for_profile(profile));
  Rng rng = make_stream(seed, 0);
  double worst = 0.0;
  for (int t = 0; t < trials; ++t) {
    const Direction d = random_direction(rng);
    const CsdResult r = solver.deconvolve(acq.acquire(VoxelPhantom({TensorCompartment{d}}), rng));
    const auto peaks = find_peaks(r.fod, dense_directions());
    worst = std::max(worst, peaks.empty() ? 90.0 : axis_angle_deg(peaks.front(), d));
  }
  return worst;
}

double csd_crossing_success_rate(int trials, std::uint64_t seed) {
  ScannerProfile profile = default_profile_a();
  profile.rician_sigma = 1.0 / 30.0;
  const Acquisition acq(profile);
  const CsdSolver solver(response_for_profile(profile));
  int ok = 0;
  for (int t = 0; t < trials; ++t) {
    Rng rng = make_stream(seed, 1, static_cast<std::uint64_t>(t));
    const Direction a = random_direction(rng);
    const Direction b = a.unitOrthogonal().normalized();
    const Rotation3 spin(Eigen::AngleAxisd(std::uniform_real_distribution<double>(0, 6.283185307179586)(rng), a)
                             .toRotationMatrix());
    const Direction c = spin * b;
    const VoxelPhantom phantom({TensorCompartment{a, kDefaultAxialDiffusivity, kDefaultRadialDiffusivity, 0.5},
                                TensorCompartment{c, kDefaultAxialDiffusivity, kDefaultRadialDiffusivity, 0.5}});
    const CsdResult r = solver.deconvolve(acq.acquire(phantom, rng));
    const auto peaks = find_peaks(r.fod, dense_directions());
    if (peaks.size() < 2) continue;
    const double direct = std::max(axis_angle_deg(peaks[0], a), axis_angle_deg(peaks[1], c));
    const double swapped = std::max(axis_angle_deg(peaks[0], c), axis_angle_deg(peaks[1], a));
    ok += std::min(direct, swapped) <= 10.0;
  }
  return static_cast<double>(ok) / trials;
}

std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("nsdn_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace nsdn::testing
