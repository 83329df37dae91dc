#pragma once

#include <cstdint>
#include <random>

#include "polydich/linalg.hpp"

namespace polydich {

/// splitmix64 step, used to derive independent per-item seeds so parallel
/// loops stay deterministic regardless of scheduling.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t item) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (item + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::mt19937_64 seeded_engine(std::uint64_t seed, std::uint64_t item = 0) {
  return std::mt19937_64(mix_seed(seed, item));
}

inline Vector random_vector(std::mt19937_64& eng, int d) {
  std::normal_distribution<double> g(0.0, 1.0);
  Vector v(d);
  for (int i = 0; i < d; ++i) v(i) = g(eng);
  return v;
}

inline Vector random_unit_vector(std::mt19937_64& eng, int d) {
  Vector v = random_vector(eng, d);
  double n = v.norm();
  while (n < 1e-12) {
    v = random_vector(eng, d);
    n = v.norm();
  }
  return v / n;
}

inline Matrix random_matrix(std::mt19937_64& eng, int rows, int cols) {
  std::normal_distribution<double> g(0.0, 1.0);
  Matrix m(rows, cols);
  for (int j = 0; j < cols; ++j)
    for (int i = 0; i < rows; ++i) m(i, j) = g(eng);
  return m;
}

}  // namespace polydich
