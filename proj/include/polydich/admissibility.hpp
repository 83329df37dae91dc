#pragma once

#include <Eigen/SparseCore>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "polydich/norms.hpp"
#include "polydich/splitting.hpp"
#include "polydich/system.hpp"

namespace polydich {

enum class SpaceTag { Y, YZ, Y0 };

std::string to_string(SpaceTag t);

/// A finite sequence x_1..x_N of d-vectors with its space membership tag.
struct BoundedSequence {
  std::vector<Vector> entries;  // entries[k-1] = x_k
  SpaceTag tag = SpaceTag::Y;

  int length() const { return int(entries.size()); }
  const Vector& at(int k) const { return entries[std::size_t(k - 1)]; }
  Vector& at(int k) { return entries[std::size_t(k - 1)]; }

  /// ||x||_inf = max_k ||x_k||_k under the given norm sequence.
  double sup_norm(const NormSequence& ns) const;
};

/// Validating constructors. Y0 requires x_1 = 0; YZ requires x_1 in span(Z)
/// with relative residual <= 1e-10.
BoundedSequence make_sequence_y(std::vector<Vector> entries);
BoundedSequence make_sequence_y0(std::vector<Vector> entries);
BoundedSequence make_sequence_yz(std::vector<Vector> entries, const Matrix& z_basis);

/// The admissibility operator on sequences with x_1 constrained to Z:
///   (T_Z x)_1 = 0,  (T_Z x)_{m+1} = (m+1)(x_{m+1} - A_m x_m).
struct TZOperator {
  std::shared_ptr<const OperatorSequence> system;
  Matrix Z_basis;  // d x z, possibly zero columns; must have full column rank
  NormSequence norms;

  int horizon() const { return system->horizon(); }
  int z_dim() const { return int(Z_basis.cols()); }
};

TZOperator make_tz_operator(std::shared_ptr<const OperatorSequence> sys, Matrix z_basis,
                            NormSequence norms);

/// Applies T_Z. The input must be tagged Y_Z (or Y0, which embeds).
BoundedSequence tz_apply(const TZOperator& t, const BoundedSequence& x);

/// ||x||_{T_Z} = ||x||_inf + ||T_Z x||_inf.
double graph_norm(const TZOperator& t, const BoundedSequence& x);

struct GreenSolveResult {
  BoundedSequence x;
  double max_defect = 0.0;  // max_n ||x_{n+1} - A_n x_n - y_{n+1}/(n+1)|| relative
  bool truncated = true;    // the backward sum was cut at the horizon
  double tail_bound = 0.0;  // a-posteriori bound on the dropped tail, when available
};

/// Solves T_Z x = y through the explicit kernel
///   x_n = sum_{k<=n} (1/k) A(n,k) P_k y_k - sum_{k>n} (1/k) A(n,k) Q_k y_k,
/// evaluated by one forward and one backward recursion. Requires equivariant
/// projections and Z = Im Q_1.
GreenSolveResult green_solve(const TZOperator& t, const DichotomyCertificate& cert,
                             const BoundedSequence& y);

/// Contraction case (Z = {0}, P = Id): x_n = sum_{k<=n} (1/k) A(n,k) y_k.
BoundedSequence green_solve_contraction(const TZOperator& t, const BoundedSequence& y);

/// Finite-dimensional realization of T_Z. Unknowns are the Z-coordinates of
/// x_1 followed by x_2..x_N; block row m encodes y_{m+1} = (m+1)(x_{m+1} -
/// A_m x_m). The matrix is block lower-bidiagonal.
struct TruncationSystem {
  Eigen::SparseMatrix<double> matrix;  // (N-1) d rows, z + (N-1) d columns
  int dim = 0;
  int horizon = 0;
  int z_dim = 0;

  int rows() const { return int(matrix.rows()); }
  int cols() const { return int(matrix.cols()); }
  /// Column of coordinate i of x_m (m >= 2), or of Z-coordinate i of x_1.
  int col_of(int m, int i) const { return m == 1 ? i : z_dim + (m - 2) * dim + i; }
  /// Row of coordinate i of y_{m+1}, m in {1..N-1}.
  int row_of(int m, int i) const { return (m - 1) * dim + i; }
};

TruncationSystem assemble_truncation(const TZOperator& t);

struct InvertibilityReport {
  bool invertible = false;
  double inv_norm_upper = 0.0;
  double inv_norm_lower = 0.0;
  double conditioning = 0.0;
  bool truncated = true;
  std::string reason;  // set when the decision came from a structural defect
};

struct InvertibilityOptions {
  int probes = 256;
  std::uint64_t seed = 2026;
  double rank_tol = 1e-8;
  /// Dense SVD below this size, power iteration above.
  int dense_limit = 1500;
};

/// Squares the truncation by appending terminal rows that kill the Z(N)
/// component of x_N (taken from the certificate splitting when given, from
/// the orthogonal complement of A(N,1) Z otherwise), then decides
/// invertibility by sigma_min/sigma_max > rank_tol and estimates the inverse
/// norm empirically in the configured sequence norms.
InvertibilityReport invertibility_report(const TZOperator& t,
                                         const DichotomyCertificate* cert = nullptr,
                                         const InvertibilityOptions& opts = {});

struct TestSequencePair {
  BoundedSequence x_seq;
  BoundedSequence y_seq;
  double lower_bound = 0.0;          // best available bound on ||T_Z^{-1}||
  std::vector<double> per_k;         // per-start values (unstable family)
  double construction_residual = 0.0;  // ||T_Z x_seq - y_seq||_inf
};

/// Perron test pair seeded by x in the stable fiber at n, pushed to m:
/// lower_bound = ||A(m,n) x||_m * sum_{j=n+1..m} 1/(j ||A(j,n) x||_j).
TestSequencePair test_sequence_stable(const TZOperator& t, int n, int m, const Vector& x);

/// Test pair seeded by z in Z \ {0}, supported on {2..n}; the tail sum is
/// truncated at the horizon. per_k[k-1] holds the bound evaluated at start k.
TestSequencePair test_sequence_unstable(const TZOperator& t, const Vector& z, int n);

}  // namespace polydich
