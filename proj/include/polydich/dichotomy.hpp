#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "polydich/admissibility.hpp"
#include "polydich/norms.hpp"
#include "polydich/splitting.hpp"
#include "polydich/system.hpp"

namespace polydich {

struct CertifyOptions {
  /// Growth-exponent classification margin theta: slopes inside
  /// [-theta, theta] mean no usable gap.
  double classification_margin = 0.1;
  /// Residual n-exponents above this refuse certification outright (the
  /// growth envelope is not polynomial in any useful sense).
  double max_epsilon = 0.5;
  /// Residual n-exponent above which the uniform bound (pb) is reported as
  /// not holding (bounded = false in the growth fit).
  double uniform_margin = 0.1;
  double transversality_tol = 1e-6;
  int opnorm_samples = 24;
  std::uint64_t seed = 2026;
  /// Close the fitted constants over every index pair when N is at most
  /// this; otherwise a geometric grid is used.
  int exhaustive_pair_limit = 128;
  /// Run an invertibility report alongside certification and derive the
  /// proof-route constants (lambda = 1/log N_0, D = L e).
  bool with_admissibility = false;
};

struct StableSubspaceResult {
  int n = 0;
  Matrix basis;                 // d x d_s, orthonormal
  std::vector<double> slopes;   // per SVD direction, descending singular value
};

/// Classifies directions at time n by the fitted growth exponent of
/// log ||A(m,n) v||_m against log(m/n); the basis spans the directions with
/// slope < -theta. Throws GapError when a slope falls inside [-theta, theta].
StableSubspaceResult stable_subspace(const std::shared_ptr<const OperatorSequence>& sys,
                                     const NormSequence& norms, int n,
                                     const CertifyOptions& opts = {});

/// Orthonormalized image A(n,1) Z. Throws SingularError on rank drop.
Matrix unstable_subspace(const std::shared_ptr<const OperatorSequence>& sys, const Matrix& z_basis,
                         int n);

/// max_m ||A_m P_m - P_{m+1} A_m|| / max(1, ||A_m||).
double verify_equivariance(const DichotomyCertificate& cert, const OperatorSequence& sys);

/// Builds the equivariant splitting bundle: W forward from Z, V backward
/// from the terminal complement of W_N. Throws on rank drops, transversality
/// failures, or singular unstable steps.
std::shared_ptr<SplittingBundle> build_splitting(const std::shared_ptr<const OperatorSequence>& sys,
                                                 const Matrix& z_basis,
                                                 const CertifyOptions& opts = {});

struct FitResult {
  double D = 0.0;
  double lambda = 0.0;
  double lambda_stable = 0.0;
  double lambda_unstable = 0.0;
  double max_violation = 0.0;  // zero by construction of D
};

/// Fits (d1)/(d2): decay of A(m,n) P_n forward and of the unstable backward
/// transport, measured as operator norms under `norms`. D closes both
/// inequalities on the grid; lambda = min of the two fitted rates.
FitResult fit_constants(const std::shared_ptr<const OperatorSequence>& sys,
                        const NormSequence& norms, const SplittingBundle& splitting,
                        const CertifyOptions& opts = {});

struct NonuniformFitResult {
  double D = 0.0;
  double lambda = 0.0;
  double epsilon = 0.0;
  double max_violation = 0.0;
};

/// Two-stage fit of (nd1)/(nd2) in the base norm: rate from the (m/n)
/// dependence, then the n-exponent from the residual log-constants.
NonuniformFitResult fit_nonuniform_constants(const std::shared_ptr<const OperatorSequence>& sys,
                                             const NormSequence& base_norm,
                                             const SplittingBundle& splitting,
                                             const CertifyOptions& opts = {});

struct GrowthFit {
  double M = 0.0;
  double a = 0.0;
  bool bounded = false;  // uniform envelope (pb) plausible at this horizon
  int witness = 0;       // argmax_m of the single-step norm when not bounded
  double K = 0.0;        // nonuniform envelope (npg)
  double b = 0.0;
  double epsilon = 0.0;
  double single_step_peak = 0.0;
};

/// Fits the growth envelopes (pb) and (npg) of the full cocycle.
GrowthFit fit_growth_bound(const std::shared_ptr<const OperatorSequence>& sys,
                           const NormSequence& norms, const CertifyOptions& opts = {});

struct GammaResult {
  double gamma_n = 2.0;
  double proj_bound = 1.0;   // 2 / gamma_n
  double theory_lower = 0.0; // (1/(M N0^a)) ((1/D) N0^lambda - D N0^{-lambda})
  long long N0 = 0;
  bool converged = true;
};

/// gamma_n = inf ||v_s + v_u||_n over unit stable/unstable pairs. Exact via
/// principal angles for Euclidean-type norms, grid + refinement otherwise.
GammaResult gamma(const SplittingBundle& splitting, const NormSequence& norms, int n,
                  const DichotomyConstants* fitted = nullptr);

struct LyapunovEntry {
  int vector_index = 0;
  double slope = 0.0;
  double r_squared = 0.0;
  int window_lo = 0;
  int window_hi = 0;
  bool vanished = false;
};

struct LyapunovReport {
  std::vector<LyapunovEntry> rows;
};

/// Least-squares slope of log ||A(n,1) v|| against log n over the window.
/// A vanishing orbit yields slope -inf with entry.vanished set.
LyapunovEntry polynomial_lyapunov_exponent(const std::shared_ptr<const OperatorSequence>& sys,
                                           const Vector& v, int window_lo, int window_hi);

LyapunovReport lyapunov_basis_report(const std::shared_ptr<const OperatorSequence>& sys,
                                     int window_lo, int window_hi);

/// Full certification pipeline. Never throws on analysis-negative inputs:
/// the returned certificate carries refusal_stage/refusal_reason and keeps
/// whatever partial data was computed.
DichotomyCertificate certify(const std::shared_ptr<const OperatorSequence>& sys,
                             const NormSequence& norms, const CertifyOptions& opts = {});

struct Evidence {
  bool ok = false;
  std::map<std::string, double> data;
  std::string note;
};

/// Operational test of the contraction theorem: polynomial envelope bounded
/// and the kernel sums stay uniformly bounded on random Y_0 probes.
Evidence check_contraction(const std::shared_ptr<const OperatorSequence>& sys,
                           const NormSequence& norms, const CertifyOptions& opts = {});

/// Operational test of the expansion theorem: envelope bounded, uniform
/// minimal growth, and T_Z invertible for Z = X.
Evidence check_expansion(const std::shared_ptr<const OperatorSequence>& sys,
                         const NormSequence& norms, const CertifyOptions& opts = {});

}  // namespace polydich
