#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "nsdn/sh.hpp"
#include "nsdn/sphere.hpp"

namespace nsdn {

constexpr double kDefaultAxialDiffusivity = 1.7e-3;   // mm^2/s
constexpr double kDefaultRadialDiffusivity = 0.3e-3;  // mm^2/s
constexpr Eigen::Index kMinSchemeDirections = 45;

struct GradientScheme {
  DirectionSet directions;
  double b_value = 2000.0;  // s/mm^2

  void validate() const;
};

struct TensorCompartment {
  Direction direction = Direction::UnitZ();
  double axial = kDefaultAxialDiffusivity;
  double radial = kDefaultRadialDiffusivity;
  double fraction = 1.0;

  void validate() const;
  Eigen::Matrix3d tensor() const;
};

// Multi-tensor voxel and its order-10 truth FOD: the fraction-weighted sum
// of delta_fod over compartment axes, scaled to unit l >= 2 energy.
class VoxelPhantom {
 public:
  explicit VoxelPhantom(std::vector<TensorCompartment> compartments);

  const std::vector<TensorCompartment>& compartments() const { return compartments_; }
  const ShVec& truth_fod() const { return truth_fod_; }

  VoxelPhantom rotated(const Rotation3& r) const;

 private:
  std::vector<TensorCompartment> compartments_;
  ShVec truth_fod_;
};

ShVec truth_fod_for(const std::vector<TensorCompartment>& compartments);

// Voxel-level surrogate of one acquisition site.
struct ScannerProfile {
  GradientScheme scheme;
  double rician_sigma = 0.0;  // relative to the b0-normalized signal
  double gain = 1.0;
  Rotation3 scheme_rotation;
  // Scales tissue diffusivities, e.g. fixed ex vivo tissue; b * scale is the
  // effective diffusion weighting.
  double diffusivity_scale = 1.0;

  void validate() const;
  DirectionSet measured_directions() const { return scheme_rotation * scheme.directions; }
};

ScannerProfile make_profile(Eigen::Index n_dirs, double b_value, double sigma, double gain,
                            std::uint64_t rotation_seed, double diffusivity_scale = 1.0);

// Ex vivo style labeled acquisition: 100 directions at b = 6000 on tissue
// with a third of the in vivo diffusivity, SNR 25.
ScannerProfile default_profile_truth();
ScannerProfile default_profile_a();
ScannerProfile default_profile_b();
ScannerProfile default_profile_c();

// Noise-free signal when rician_sigma == 0; rng is only consumed when
// sigma > 0.
Eigen::VectorXd simulate_signal(const VoxelPhantom& p, const ScannerProfile& s, Rng& rng);

// Fits an order-8 SH vector to simulated signals for one profile.
class Acquisition {
 public:
  explicit Acquisition(ScannerProfile profile);

  const ScannerProfile& profile() const { return profile_; }
  const ShFitter& fitter() const { return fitter_; }
  ShVec acquire(const VoxelPhantom& p, Rng& rng) const;

 private:
  ScannerProfile profile_;
  ShFitter fitter_;
};

struct FiberDistribution {
  double p_single = 0.5;
  double min_crossing_deg = 30.0;
  // The first of two fibers takes a fraction uniform in [min, 1 - min].
  double min_fraction = 0.3;
  double axial = kDefaultAxialDiffusivity;
  double radial = kDefaultRadialDiffusivity;

  void validate() const;
};

VoxelPhantom random_phantom(const FiberDistribution& dist, Rng& rng);

struct LabeledVoxel {
  ShVec x;  // order 8 signal
  ShVec y;  // order 10 truth FOD
};

struct PairedVoxel {
  ShVec xa;
  ShVec xb;
};

struct Dataset {
  std::vector<LabeledVoxel> labeled;
  // Base voxel index of each labeled entry; rotated copies share it.
  std::vector<std::size_t> labeled_group;
  std::vector<PairedVoxel> paired;

  std::uint64_t seed = 0;
  std::map<std::string, ScannerProfile> profiles;
  std::size_t fit_failures = 0;
};

// n_base voxels, each emitted once as drawn and n_rotations more times under
// independent uniform rotations, grouped per base voxel.
Dataset make_labeled(std::size_t n_base, const ScannerProfile& profile, const FiberDistribution& dist,
                     std::size_t n_rotations, std::uint64_t seed, std::uint64_t stream);

// Each phantom rendered through both profiles.
Dataset make_paired(std::size_t n, const ScannerProfile& profile_a, const ScannerProfile& profile_b,
                    const FiberDistribution& dist, std::uint64_t seed, std::uint64_t stream);

Dataset make_dataset(std::size_t n_labeled, std::size_t n_paired, const ScannerProfile& profile_truth,
                     const ScannerProfile& profile_a, const ScannerProfile& profile_b,
                     const FiberDistribution& dist, std::size_t n_rotations, std::uint64_t seed);

}  // namespace nsdn
