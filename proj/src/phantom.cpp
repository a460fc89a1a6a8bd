#include "nsdn/phantom.hpp"

#include <cmath>
#include <numeric>

namespace nsdn {

void GradientScheme::validate() const {
  if (directions.cols() < kMinSchemeDirections) {
    throw ValidationError("gradient scheme needs at least " + std::to_string(kMinSchemeDirections) +
                          " directions, got " + std::to_string(directions.cols()));
  }
  if (!(b_value > 0.0)) throw ValidationError("b-value must be positive");
  for (Eigen::Index i = 0; i < directions.cols(); ++i) {
    if (std::abs(directions.col(i).norm() - 1.0) > 1e-9) {
      throw ValidationError("gradient direction " + std::to_string(i) + " is not unit length");
    }
  }
}

void TensorCompartment::validate() const {
  if (std::abs(direction.norm() - 1.0) > 1e-9) throw ValidationError("compartment direction not unit");
  if (!(radial > 0.0) || !(axial >= radial)) {
    throw ValidationError("compartment needs axial >= radial > 0");
  }
  if (!(fraction > 0.0) || !(fraction <= 1.0)) throw ValidationError("compartment fraction outside (0, 1]");
}

Eigen::Matrix3d TensorCompartment::tensor() const {
  return radial * Eigen::Matrix3d::Identity() + (axial - radial) * direction * direction.transpose();
}

ShVec truth_fod_for(const std::vector<TensorCompartment>& compartments) {
  ShVec fod(kFodOrder);
  for (const auto& c : compartments) {
    fod = ShVec(kFodOrder, fod.coeffs() + c.fraction * basis_row<double>(kFodOrder, c.direction));
  }
  const double aniso = fod.coeffs().tail(fod.size() - 1).norm();
  if (!(aniso > 0.0)) throw ValidationError("truth FOD has no anisotropic energy");
  return ShVec(kFodOrder, fod.coeffs() / aniso);
}

VoxelPhantom::VoxelPhantom(std::vector<TensorCompartment> compartments)
    : compartments_(std::move(compartments)) {
  if (compartments_.empty()) throw ValidationError("phantom needs at least one compartment");
  double total = 0.0;
  for (const auto& c : compartments_) {
    c.validate();
    total += c.fraction;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ValidationError("compartment fractions must sum to 1");
  truth_fod_ = truth_fod_for(compartments_);
}

VoxelPhantom VoxelPhantom::rotated(const Rotation3& r) const {
  auto cs = compartments_;
  for (auto& c : cs) c.direction = (r * c.direction).normalized();
  return VoxelPhantom(std::move(cs));
}

void ScannerProfile::validate() const {
  scheme.validate();
  if (!(rician_sigma >= 0.0)) throw ValidationError("rician_sigma must be >= 0");
  if (!(gain > 0.0)) throw ValidationError("gain must be > 0");
  if (!(diffusivity_scale > 0.0)) throw ValidationError("diffusivity scale must be > 0");
}

ScannerProfile make_profile(Eigen::Index n_dirs, double b_value, double sigma, double gain,
                            std::uint64_t rotation_seed, double diffusivity_scale) {
  ScannerProfile p;
  p.scheme.directions = fibonacci_directions(n_dirs);
  p.scheme.b_value = b_value;
  p.rician_sigma = sigma;
  p.gain = gain;
  p.scheme_rotation = rotation_from_seed(rotation_seed);
  p.diffusivity_scale = diffusivity_scale;
  p.validate();
  return p;
}

ScannerProfile default_profile_truth() { return make_profile(100, 6000.0, 0.04, 1.0, 0, 1.0 / 3.0); }
ScannerProfile default_profile_a() { return make_profile(96, 2000.0, 0.02, 1.0, 0); }
ScannerProfile default_profile_b() { return make_profile(96, 2000.0, 0.04, 1.1, 7); }
ScannerProfile default_profile_c() { return make_profile(96, 2000.0, 0.03, 0.9, 11); }

Eigen::VectorXd simulate_signal(const VoxelPhantom& p, const ScannerProfile& s, Rng& rng) {
  const DirectionSet g = s.measured_directions();
  const double b = s.scheme.b_value * s.diffusivity_scale;
  Eigen::VectorXd signal = Eigen::VectorXd::Zero(g.cols());
  for (const auto& c : p.compartments()) {
    const Eigen::Matrix3d d = c.tensor();
    for (Eigen::Index i = 0; i < g.cols(); ++i) {
      signal[i] += c.fraction * std::exp(-b * g.col(i).dot(d * g.col(i)));
    }
  }
  signal *= s.gain;
  if (s.rician_sigma > 0.0) {
    std::normal_distribution<double> noise(0.0, s.rician_sigma);
    for (Eigen::Index i = 0; i < g.cols(); ++i) {
      const double n1 = noise(rng);
      const double n2 = noise(rng);
      signal[i] = std::hypot(signal[i] + n1, n2);
    }
  }
  return signal;
}

Acquisition::Acquisition(ScannerProfile profile)
    : profile_((profile.validate(), std::move(profile))),
      fitter_(profile_.measured_directions(), kSignalOrder) {}

ShVec Acquisition::acquire(const VoxelPhantom& p, Rng& rng) const {
  return fitter_.fit(simulate_signal(p, profile_, rng));
}

void FiberDistribution::validate() const {
  if (!(p_single >= 0.0 && p_single <= 1.0)) throw ValidationError("p_single outside [0, 1]");
  if (!(min_crossing_deg >= 0.0 && min_crossing_deg < 90.0)) {
    throw ValidationError("min_crossing_deg outside [0, 90)");
  }
  if (!(min_fraction > 0.0 && min_fraction <= 0.5)) throw ValidationError("min_fraction outside (0, 0.5]");
  if (!(radial > 0.0) || !(axial >= radial)) throw ValidationError("need axial >= radial > 0");
}

VoxelPhantom random_phantom(const FiberDistribution& dist, Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  TensorCompartment first{random_direction(rng), dist.axial, dist.radial, 1.0};
  if (unit(rng) < dist.p_single) return VoxelPhantom({first});

  Direction second;
  do {
    second = random_direction(rng);
  } while (axis_angle_deg(first.direction, second) < dist.min_crossing_deg);
  const double f = dist.min_fraction + (1.0 - 2.0 * dist.min_fraction) * unit(rng);
  first.fraction = f;
  return VoxelPhantom({first, TensorCompartment{second, dist.axial, dist.radial, 1.0 - f}});
}

namespace {

bool all_finite(const ShVec& v) { return v.coeffs().allFinite(); }

constexpr int kMaxResamples = 100;

template <typename Fn>
auto acquire_finite(Fn&& draw, std::size_t& failures) {
  for (int attempt = 0;; ++attempt) {
    auto result = draw();
    if (result.ok) return result;
    ++failures;
    if (attempt >= kMaxResamples) throw NonFiniteError("simulation keeps producing non-finite fits");
  }
}

}  // namespace

Dataset make_labeled(std::size_t n_base, const ScannerProfile& profile, const FiberDistribution& dist,
                     std::size_t n_rotations, std::uint64_t seed, std::uint64_t stream) {
  dist.validate();
  const Acquisition acquisition(profile);
  Dataset ds;
  ds.seed = seed;
  ds.labeled.reserve(n_base * (n_rotations + 1));
  ds.labeled_group.reserve(n_base * (n_rotations + 1));
  for (std::size_t i = 0; i < n_base; ++i) {
    Rng rng = make_stream(seed, stream, i);
    const VoxelPhantom base = random_phantom(dist, rng);
    for (std::size_t k = 0; k <= n_rotations; ++k) {
      const VoxelPhantom phantom = k == 0 ? base : base.rotated(random_rotation(rng));
      struct Draw {
        ShVec x;
        bool ok;
      };
      const Draw d = acquire_finite(
          [&] {
            ShVec x = acquisition.acquire(phantom, rng);
            const bool ok = all_finite(x);
            return Draw{std::move(x), ok};
          },
          ds.fit_failures);
      ds.labeled.push_back({d.x, phantom.truth_fod()});
      ds.labeled_group.push_back(i);
    }
  }
  return ds;
}

Dataset make_paired(std::size_t n, const ScannerProfile& profile_a, const ScannerProfile& profile_b,
                    const FiberDistribution& dist, std::uint64_t seed, std::uint64_t stream) {
  dist.validate();
  const Acquisition acq_a(profile_a);
  const Acquisition acq_b(profile_b);
  Dataset ds;
  ds.seed = seed;
  ds.paired.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng = make_stream(seed, stream, i);
    const VoxelPhantom phantom = random_phantom(dist, rng);
    struct Draw {
      PairedVoxel pair;
      bool ok;
    };
    const Draw d = acquire_finite(
        [&] {
          ShVec xa = acq_a.acquire(phantom, rng);
          ShVec xb = acq_b.acquire(phantom, rng);
          const bool ok = all_finite(xa) && all_finite(xb);
          return Draw{{std::move(xa), std::move(xb)}, ok};
        },
        ds.fit_failures);
    ds.paired.push_back(d.pair);
  }
  return ds;
}

Dataset make_dataset(std::size_t n_labeled, std::size_t n_paired, const ScannerProfile& profile_truth,
                     const ScannerProfile& profile_a, const ScannerProfile& profile_b,
                     const FiberDistribution& dist, std::size_t n_rotations, std::uint64_t seed) {
  if (n_labeled == 0 || n_paired == 0) throw ValidationError("make_dataset sizes must be > 0");
  Dataset ds = make_labeled(n_labeled, profile_truth, dist, n_rotations, seed, 1);
  Dataset pairs = make_paired(n_paired, profile_a, profile_b, dist, seed, 2);
  ds.paired = std::move(pairs.paired);
  ds.fit_failures += pairs.fit_failures;
  ds.profiles = {{"truth", profile_truth}, {"a", profile_a}, {"b", profile_b}};
  return ds;
}

}  // namespace nsdn
