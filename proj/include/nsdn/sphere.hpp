#pragma once

#include <cstdint>
#include <random>

#include "nsdn/sh.hpp"

namespace nsdn {

using Rng = std::mt19937_64;

// Independent generator for (seed, stream, index); the same triple always
// yields the same sequence, so per-item work can run in any order.
Rng make_stream(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0);

// Deterministic Fibonacci lattice over the full sphere.
DirectionSet fibonacci_directions(Eigen::Index n);

constexpr Eigen::Index kDenseGridSize = 724;
const DirectionSet& dense_directions();

Direction random_direction(Rng& rng);
// Uniform (Haar) rotation from a normalized Gaussian quaternion.
Rotation3 random_rotation(Rng& rng);
Rotation3 rotation_from_seed(std::uint64_t seed);

// Angle in degrees between the axes through a and b, in [0, 90].
double axis_angle_deg(const Direction& a, const Direction& b);

}  // namespace nsdn
