#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "polydich/linalg.hpp"

namespace polydich {

/// Descriptor of how a sequence was produced; equal descriptors must
/// reproduce entrywise-equal matrices.
struct GeneratorSpec {
  std::string kind;
  std::map<std::string, double> params;
  bool operator==(const GeneratorSpec&) const = default;
};

/// Finite-horizon truncation of a sequence of d x d operators A_1..A_{N-1}.
/// Indices are 1-based; time runs over {1..N}.
class OperatorSequence {
 public:
  OperatorSequence(int dimension, int horizon, std::vector<Matrix> entries,
                   std::optional<GeneratorSpec> provenance = std::nullopt);

  int dimension() const { return dim_; }
  int horizon() const { return horizon_; }

  /// A_m for 1 <= m <= N-1.
  const Matrix& matrix(int m) const;

  const std::optional<GeneratorSpec>& provenance() const { return provenance_; }

 private:
  int dim_;
  int horizon_;
  std::vector<Matrix> entries_;  // entries_[m-1] = A_m
  std::optional<GeneratorSpec> provenance_;
};

/// Builds an OperatorSequence from a named generator. Kinds:
///   "diagonal-poly"          params: lambda (>0), optional lambda_u, stable_dim
///   "block-lyapunov"         params: stable_rates / unstable_rates via
///                            stable_rate_<i>, unstable_rate_<i> entries
///   "power2-counterexample"  d forced to 1; A_n = n when n = 2^l (l >= 1)
///   "nonuniform-diagonal"    params: lambda (>0), epsilon (>=0)
///   "explicit-file"          params ignored; use load_system() instead
OperatorSequence make_generator(const std::string& kind,
                                const std::map<std::string, double>& params,
                                int dimension, int horizon);

/// Same, reading matrices from a system-spec file (the "explicit-file" kind).
OperatorSequence make_generator_from_file(const std::string& path);

/// Memoizing evaluator of the transition products
///   A(m, n) = A_{m-1} ... A_n  (m > n),  A(n, n) = Id.
/// Products are strictly left-associated; values for n on a dyadic grid are
/// cached so repeated sweeps cost O(d^2 N log N) memory at most.
/// Concurrent readers are allowed; insertion is serialized.
class Cocycle {
 public:
  explicit Cocycle(std::shared_ptr<const OperatorSequence> sys);

  const OperatorSequence& system() const { return *sys_; }
  std::shared_ptr<const OperatorSequence> system_ptr() const { return sys_; }

  /// A(m, n) for 1 <= n <= m <= N. m < n is rejected: backward transport
  /// only exists on the unstable bundle (see cocycle_on_unstable).
  Matrix operator()(int m, int n) const;

 private:
  Matrix anchored(int m, int anchor) const;

  std::shared_ptr<const OperatorSequence> sys_;
  mutable std::mutex mu_;
  mutable std::map<int, std::map<int, Matrix>> cache_;  // anchor -> m -> A(m, anchor)
};

}  // namespace polydich
