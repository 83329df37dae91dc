#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "polydich/linalg.hpp"
#include "polydich/system.hpp"

namespace polydich {

/// Stable/unstable basis pair at a single time index.
struct SubspacePair {
  int n = 0;
  Matrix stable_basis;    // d x d_s, orthonormal
  Matrix unstable_basis;  // d x d_u, orthonormal
  std::vector<double> classification_scores;  // fitted growth exponents per direction
};

/// The full splitting over the horizon: orthonormal bases V_n of the stable
/// bundle and W_n of the unstable bundle Z(n), oblique projections P_n onto
/// V_n along W_n, and the unstable one-step maps in W-coordinates.
///
/// V is propagated backward from the terminal index and W forward from Z, so
/// A_n V_n is contained in span(V_{n+1}) and A_n W_n spans W_{n+1} up to
/// roundoff; the intertwining A_n P_n = P_{n+1} A_n then holds by
/// construction rather than only approximately.
struct SplittingBundle {
  int horizon = 0;
  int dim = 0;
  std::vector<Matrix> stable_basis;        // [n-1] = V_n, d x d_s
  std::vector<Matrix> unstable_basis;      // [n-1] = W_n, d x d_u
  std::vector<Matrix> projection;          // [n-1] = P_n
  std::vector<Matrix> unstable_step;       // [n-1] = W_{n+1}^T A_n W_n, n < N
  std::vector<Matrix> unstable_step_inv;   // inverses of the above

  int dim_stable() const { return stable_basis.empty() ? 0 : int(stable_basis[0].cols()); }
  int dim_unstable() const { return unstable_basis.empty() ? 0 : int(unstable_basis[0].cols()); }

  const Matrix& P(int n) const { return projection[std::size_t(n - 1)]; }
  Matrix Q(int n) const { return Matrix::Identity(dim, dim) - P(n); }
  const Matrix& V(int n) const { return stable_basis[std::size_t(n - 1)]; }
  const Matrix& W(int n) const { return unstable_basis[std::size_t(n - 1)]; }

  /// Backward unstable transport A(m, n) : Z(n) -> Z(m) for m <= n, as a
  /// d x d matrix acting through the W bases (zero on the stable part).
  Matrix unstable_transport(int m, int n) const;

  /// Coordinate transport on the unstable bundle: W_m-coords of A(m,n) W_n
  /// for m <= n (inverse chain) and m >= n (forward chain).
  Matrix unstable_coord_transport(int m, int n) const;
};

/// Fitted dichotomy data: rates, growth bounds, projections, gamma sweep.
struct DichotomyConstants {
  double D = 0.0;
  double lambda = 0.0;
  double lambda_stable = 0.0;
  double lambda_unstable = 0.0;
  // nonuniform variant, measured in the base norm
  double D_nonuniform = 0.0;
  double epsilon = 0.0;
  // growth bounds
  double M = 0.0;
  double a = 0.0;
  double K = 0.0;
  double b = 0.0;
  double epsilon_growth = 0.0;
  double epsilon_shared = 0.0;  // max over (nd1),(nd2),(npg)
};

struct CertificateFlags {
  bool dichotomy = false;
  bool contraction = false;
  bool expansion = false;
  bool strong = false;
};

struct DichotomyCertificate {
  int horizon = 0;
  int dim = 0;
  std::shared_ptr<const SplittingBundle> splitting;
  DichotomyConstants constants;
  CertificateFlags flags;
  std::vector<double> gamma;        // [n-1]
  std::vector<double> proj_norms;   // [n-1], measured ||P_n||
  double sup_proj_norm = 0.0;
  long long threshold_scale = 0;    // largest N_0 used by the proof-route bounds
  // paper-faithful constants from the N_0 route, when an admissibility run
  // accompanied certification
  std::optional<double> proof_lambda;
  std::optional<double> proof_D;
  std::map<std::string, double> residuals;
  std::map<std::string, double> diagnostics;
  // set when certification was refused; flags.dichotomy is false then
  std::string refusal_stage;
  std::string refusal_reason;

  bool refused() const { return !refusal_stage.empty(); }
  int dim_unstable() const { return splitting ? splitting->dim_unstable() : 0; }
};

/// Oblique projection onto pair.stable_basis along pair.unstable_basis.
/// Throws if the concatenated basis is numerically rank-deficient.
Matrix splitting_projection(const SubspacePair& pair, double transversality_tol = 1e-6);

/// Inverse of the unstable restriction: the d_u x d_u matrix of
/// (A(n, m)|_{Z(m)})^{-1} mapping Z(n)-coordinates to Z(m)-coordinates,
/// for m <= n. Throws SingularError when a step is not invertible.
Matrix cocycle_on_unstable(const Cocycle& c, int m, int n, const SplittingBundle& bundle);
Matrix cocycle_on_unstable(const Cocycle& c, int m, int n, const DichotomyCertificate& cert);

}  // namespace polydich
