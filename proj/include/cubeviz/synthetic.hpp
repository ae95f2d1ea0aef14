#pragma once

#include <cubeviz/field.hpp>

#include <cstdint>
#include <utility>

namespace cubeviz::synthetic {

/// Unit cube [0, 1]^3 sampled at n^3 voxel centers.
Grid unit_grid(std::size_t n, std::string length_unit = "pc");

/// Two-component remnant stand-in on the unit cube: a thick ejecta shell in
/// the x < 0.5 half and a dense cloud clump in the x > 0.5 half. Both sit on a
/// uniform density floor and have compact support, so each component is
/// exactly at the floor in the other half.
struct ShellAndClump
{
    ScalarField ejecta;
    ScalarField cloud;
};

inline constexpr double density_floor = 1e-26;   // g/cm^3
inline constexpr double ejecta_peak = 1e-22;
inline constexpr double cloud_peak = 5e-23;

ShellAndClump shell_and_clump(std::size_t n);

/// Distance from the center of the unit cube.
ScalarField sphere_distance(std::size_t n);

/// Uniform random values in [lo, hi).
ScalarField random_field(const std::string& name, std::size_t n, double lo, double hi, std::uint64_t seed);

} // namespace cubeviz::synthetic
