#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "crfwi/model_core.hpp"

namespace crfwi::testing {

inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("crfwi_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::vector<double> random_vector(std::size_t n, std::uint64_t seed, double lo = -1.0,
                                         double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

inline VelocityGrid random_grid(std::size_t nz, std::size_t nx, double h, std::uint64_t seed,
                                double lo = 1800.0, double hi = 2600.0) {
  return VelocityGrid::make(nz, nx, h, h, random_vector(nz * nx, seed, lo, hi));
}

}  // namespace crfwi::testing
