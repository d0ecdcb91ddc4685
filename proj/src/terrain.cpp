#include "kiras/terrain.hpp"

#include <cmath>
#include <cstdio>

namespace kiras {

TerrainType terrain_type_from_string(const std::string& s) {
  if (s == "flat") return TerrainType::Flat;
  if (s == "slope") return TerrainType::Slope;
  if (s == "bars") return TerrainType::Bars;
  if (s == "discrete_footholds") return TerrainType::DiscreteFootholds;
  if (s == "stairs") return TerrainType::Stairs;
  throw InvalidArgument("unknown terrain type: " + s);
}

std::string to_string(TerrainType t) {
  switch (t) {
    case TerrainType::Flat: return "flat";
    case TerrainType::Slope: return "slope";
    case TerrainType::Bars: return "bars";
    case TerrainType::DiscreteFootholds: return "discrete_footholds";
    case TerrainType::Stairs: return "stairs";
  }
  return "flat";
}

double TerrainMap::height(double x) const {
  const double t = (x - origin_x) / spacing;
  const auto n = static_cast<double>(height_samples.size());
  if (t <= 0.0) return height_samples.front();
  if (t >= n - 1.0) return height_samples.back();
  const auto i = static_cast<size_t>(t);
  const double f = t - static_cast<double>(i);
  return height_samples[i] * (1.0 - f) + height_samples[i + 1] * f;
}

namespace {

double lerp(double a, double b, double t) { return a + (b - a) * t; }

// obstacle profile as a function of distance d >= 0 past the spawn zone
double pattern(TerrainType type, double frac, double d) {
  switch (type) {
    case TerrainType::Flat:
      return 0.0;
    case TerrainType::Slope: {
      const double angle = lerp(2.0, 20.0, frac) * M_PI / 180.0;
      return std::tan(angle) * d;
    }
    case TerrainType::Bars: {
      const double h = lerp(0.02, 0.12, frac);
      return std::fmod(d, 1.0) < 0.1 ? h : 0.0;
    }
    case TerrainType::DiscreteFootholds: {
      const double gap = lerp(0.05, 0.25, frac);
      return std::fmod(d, 0.8) < gap ? -0.1 : 0.0;
    }
    case TerrainType::Stairs: {
      const double rise = lerp(0.02, 0.12, frac);
      return rise * std::floor(d / 0.3);
    }
  }
  return 0.0;
}

// value noise summed over three octaves, linearly interpolated between
// per-octave lattice points, normalized to [-1, 1]
struct FractalNoise {
  std::vector<std::vector<double>> lattice;
  std::vector<double> wavelength{0.8, 0.4, 0.2};
  std::vector<double> weight{0.5, 0.3, 0.2};

  FractalNoise(Rng& rng, double x_lo, double x_hi) {
    lattice.resize(wavelength.size());
    for (size_t o = 0; o < wavelength.size(); ++o) {
      const auto n = static_cast<size_t>((x_hi - x_lo) / wavelength[o]) + 2;
      lattice[o].resize(n);
      for (auto& v : lattice[o]) v = uniform(rng, -1.0, 1.0);
    }
  }

  double at(double x, double x_lo) const {
    double s = 0.0;
    for (size_t o = 0; o < wavelength.size(); ++o) {
      const double t = (x - x_lo) / wavelength[o];
      const auto i = static_cast<size_t>(t);
      const double f = t - static_cast<double>(i);
      s += weight[o] * (lattice[o][i] * (1.0 - f) + lattice[o][i + 1] * f);
    }
    return s;
  }
};

}  // namespace

TerrainMap generate_terrain(TerrainType type, int difficulty_level, std::uint64_t rng_seed) {
  if (difficulty_level < 0 || difficulty_level > 9)
    throw InvalidArgument("difficulty level must be in 0..9");

  TerrainMap map;
  map.terrain_type = type;
  map.difficulty_level = difficulty_level;
  map.spacing = 0.05;
  map.origin_x = -6.0;
  const double x_hi = 18.0;
  const auto count = static_cast<size_t>(std::llround((x_hi - map.origin_x) / map.spacing)) + 1;
  map.height_samples.resize(count);

  const double frac = static_cast<double>(difficulty_level) / 9.0;
  map.noise_amplitude = type == TerrainType::Flat ? 0.0 : lerp(0.02, 0.07, frac);

  Rng rng(rng_seed);
  FractalNoise noise(rng, map.origin_x, x_hi);

  for (size_t i = 0; i < count; ++i) {
    const double x = map.origin_x + map.spacing * static_cast<double>(i);
    const double d = std::max(0.0, std::abs(x) - 0.5);
    double h = d > 0.0 ? pattern(type, frac, d) : 0.0;
    if (d > 0.0 && map.noise_amplitude > 0.0) h += map.noise_amplitude * noise.at(x, map.origin_x);
    map.height_samples[i] = h;
  }
  return map;
}

std::string terrain_to_csv(const TerrainMap& map) {
  std::string out = "position,height\n";
  char buf[80];
  for (size_t i = 0; i < map.height_samples.size(); ++i) {
    const double x = map.origin_x + map.spacing * static_cast<double>(i);
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g\n", x, map.height_samples[i]);
    out += buf;
  }
  return out;
}

int update_curriculum(int level, double progress_fraction) {
  if (level < 0 || level > 9) throw InvalidArgument("curriculum level must be in 0..9");
  if (progress_fraction >= 0.8) level += 1;
  else if (progress_fraction < 0.4) level -= 1;
  return std::min(std::max(level, 0), 9);
}

}  // namespace kiras
