#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kiras/common.hpp"

namespace kiras {

enum class TerrainType { Flat, Slope, Bars, DiscreteFootholds, Stairs };

TerrainType terrain_type_from_string(const std::string& s);
std::string to_string(TerrainType t);

struct TerrainMap {
  std::vector<double> height_samples;
  double spacing = 0.05;
  double origin_x = -6.0;
  TerrainType terrain_type = TerrainType::Flat;
  int difficulty_level = 0;
  double noise_amplitude = 0.0;

  double height(double x) const;  // linear interpolation, clamped at the ends
  double max_x() const { return origin_x + spacing * (static_cast<double>(height_samples.size()) - 1.0); }
};

// Track from x=-6 to x=18 with a flat spawn zone |x| <= 0.5; the obstacle
// pattern grows with distance from the spawn zone, mirrored on both sides.
// Rough types carry fractal noise, amplitude interpolated over levels.
TerrainMap generate_terrain(TerrainType type, int difficulty_level, std::uint64_t rng_seed);

std::string terrain_to_csv(const TerrainMap& map);

// promote at >= 80% of the commanded distance, demote below 40%
int update_curriculum(int level, double progress_fraction);

}  // namespace kiras
