#pragma once

#include "nogap/linalg.hpp"

#include <cstdint>
#include <random>
#include <vector>

namespace nogap {

using Rng = std::mt19937_64;

// Unit directions in R^dim from a Sobol sequence, Cranley-Patterson shifted by
// seed and pushed through Box-Muller. In one dimension returns +1, -1, +1, ...
std::vector<Vector> sphere_directions(int dim, int count, std::uint64_t seed);

// Points uniformly distributed in the closed ball of the given radius.
std::vector<Vector> ball_points(const Vector& center, double radius, int count, std::uint64_t seed);

// Removes near-duplicates (max-norm distance <= tol) keeping first occurrences.
std::vector<Vector> dedup_directions(const std::vector<Vector>& dirs, double tol);

}  // namespace nogap
