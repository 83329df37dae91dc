#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "polydich/linalg.hpp"
#include "polydich/splitting.hpp"
#include "polydich/system.hpp"

namespace polydich {

enum class NormKind { base, explicit_weights, adapted_nonuniform, adapted_strong };
enum class BaseNorm { euclidean, sup, one };

std::string to_string(NormKind k);
std::string to_string(BaseNorm b);

struct NormValue {
  double value = 0.0;
  bool truncated = false;
};

/// Fitted decay/growth rates used to certify that the truncated sups in the
/// adapted norms cannot be attained beyond the evaluation horizon.
struct TailCertificate {
  bool has_decay = false;
  double D = 0.0, lambda = 0.0, epsilon = 0.0;       // stable side, base norm
  bool has_growth = false;
  double K = 0.0, b = 0.0, epsilon_growth = 0.0;     // full-cocycle envelope
};

/// A sequence of norms ||.||_n on R^d, n in {1..N}. The adapted kinds are
/// built from a splitting and turn a nonuniform dichotomy into a uniform one;
/// their sups are evaluated over m <= eval_horizon and are therefore lower
/// approximations unless a TailCertificate rules the tail out.
class NormSequence {
 public:
  static NormSequence base_norms(BaseNorm base = BaseNorm::euclidean);
  static NormSequence explicit_weights(BaseNorm base, std::vector<double> weights);

  /// ||x||_n = sup_{m>=n} ||A(m,n) P_n x|| (m/n)^lambda
  ///         + sup_{m<=n} ||A(m,n) Q_n x|| (n/m)^lambda
  static NormSequence adapted_nonuniform(std::shared_ptr<const OperatorSequence> sys,
                                         std::shared_ptr<const SplittingBundle> splitting,
                                         double lambda, int eval_horizon,
                                         std::optional<TailCertificate> tail = std::nullopt);

  /// Same stable part; the unstable part gains the forward term
  /// sup_{m>n} ||A(m,n) Q_n x|| (m/n)^{-b}. Enforces lambda <= b by clamping.
  static NormSequence adapted_strong(std::shared_ptr<const OperatorSequence> sys,
                                     std::shared_ptr<const SplittingBundle> splitting,
                                     double lambda, double b, int eval_horizon,
                                     std::optional<TailCertificate> tail = std::nullopt);

  NormKind kind() const { return kind_; }
  BaseNorm base_kind() const { return base_; }
  double lambda() const { return lambda_; }
  double growth_exponent() const { return b_; }
  bool lambda_was_clamped() const { return lambda_clamped_; }
  int eval_horizon() const { return eval_horizon_; }

  /// The reference norm ||.|| of the space.
  double base_eval(const Vector& x) const;

  /// ||x||_n. For adapted kinds this is the truncated value.
  double eval(int n, const Vector& x) const;
  NormValue eval_detailed(int n, const Vector& x) const;

  /// Operator norm of `map` from (R^d, ||.||_n) to (R^d, ||.||_m): exact for
  /// base/weighted kinds, a sampled lower estimate for adapted kinds.
  double operator_norm(int m, int n, const Matrix& map, int samples = 24) const;

  /// (C, epsilon) with ||x|| <= ||x||_m <= C m^eps ||x||, when known.
  std::optional<std::pair<double, double>> equivalence_constants;

 private:
  NormSequence() = default;

  NormKind kind_ = NormKind::base;
  BaseNorm base_ = BaseNorm::euclidean;
  std::vector<double> weights_;
  std::shared_ptr<const OperatorSequence> sys_;
  std::shared_ptr<const SplittingBundle> splitting_;
  double lambda_ = 0.0;
  double b_ = 0.0;
  bool lambda_clamped_ = false;
  int eval_horizon_ = 0;
  std::optional<TailCertificate> tail_;
};

struct EquivalenceReport {
  double C_hat = 0.0;
  double eps_hat = 0.0;
  bool ok = false;         // lower inequality ||x|| <= ||x||_m on all samples
  double worst_lower = 0.0;  // min of ||x||_m / ||x||
};

/// Estimates the smallest (C, eps) closing ||x||_m <= C m^eps ||x|| over the
/// sample set by log-log regression of the per-index max ratio.
EquivalenceReport check_norm_equivalence(const NormSequence& ns,
                                         std::span<const Vector> samples,
                                         std::span<const int> indices);

}  // namespace polydich
