#pragma once

#include <memory>

#include "polydich/admissibility.hpp"
#include "polydich/rng.hpp"
#include "polydich/system.hpp"

namespace testutil {

using namespace polydich;

inline std::shared_ptr<const OperatorSequence> shared_sys(OperatorSequence s) {
  return std::make_shared<OperatorSequence>(std::move(s));
}

inline std::shared_ptr<const OperatorSequence> diagonal_model(double lambda, int N, int d = 2) {
  return shared_sys(make_generator("diagonal-poly", {{"lambda", lambda}}, d, N));
}

/// A_n = n/(n+1): scalar polynomial contraction with rate 1.
inline std::shared_ptr<const OperatorSequence> scalar_contraction(int N) {
  return shared_sys(make_generator("diagonal-poly", {{"lambda", 1.0}, {"stable_dim", 1.0}}, 1, N));
}

/// A_n = (n+1)/n: scalar polynomial expansion with rate 1.
inline std::shared_ptr<const OperatorSequence> scalar_expansion(int N) {
  return shared_sys(make_generator("diagonal-poly", {{"lambda", 1.0}, {"stable_dim", 0.0}}, 1, N));
}

inline std::shared_ptr<const OperatorSequence> identity_system(int d, int N) {
  std::vector<Matrix> entries(std::size_t(N - 1), Matrix::Identity(d, d));
  return shared_sys(OperatorSequence(d, N, std::move(entries)));
}

inline std::shared_ptr<const OperatorSequence> counterexample(int N) {
  return shared_sys(make_generator("power2-counterexample", {}, 1, N));
}

/// Random upper-triangular system with a clear polynomial gap: unstable
/// rates on the leading diagonal block, stable rates trailing, constant
/// strictly-upper coupling. du = -1 picks the unstable dimension at random.
inline std::shared_ptr<const OperatorSequence> random_triangular_gap(std::uint64_t seed, int d,
                                                                     int N, int du = -1) {
  auto eng = seeded_engine(seed, 0x721);
  std::uniform_real_distribution<double> rate(0.7, 1.5);
  std::uniform_real_distribution<double> coupling(-0.25, 0.25);
  if (du < 0) du = int(eng() % std::uint64_t(d + 1));
  std::vector<double> rates(std::size_t(d));
  for (int i = 0; i < d; ++i) rates[std::size_t(i)] = rate(eng);
  Matrix upper = Matrix::Zero(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j) upper(i, j) = coupling(eng);
  std::vector<Matrix> entries;
  for (int m = 1; m < N; ++m) {
    Matrix a = upper;
    for (int i = 0; i < d; ++i) {
      a(i, i) = i < du ? std::pow(double(m + 1) / m, rates[std::size_t(i)])
                       : std::pow(double(m) / (m + 1), rates[std::size_t(i)]);
    }
    entries.push_back(a);
  }
  return shared_sys(OperatorSequence(d, N, std::move(entries)));
}

inline BoundedSequence random_y0(std::uint64_t seed, int d, int N) {
  auto eng = seeded_engine(seed, 0xF00D);
  std::vector<Vector> ys(static_cast<std::size_t>(N));
  ys[0] = Vector::Zero(d);
  for (int k = 2; k <= N; ++k) ys[std::size_t(k - 1)] = random_vector(eng, d);
  return BoundedSequence{std::move(ys), SpaceTag::Y0};
}

}  // namespace testutil
