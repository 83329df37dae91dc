#pragma once

#include <Eigen/Dense>
#include <utility>
#include <vector>

namespace polydich {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Spectral (2-)norm. Matrices here are small (d <= 4), so a full SVD is fine.
double spectral_norm(const Matrix& a);

/// Orthonormal basis of the column span of `a` (rank decided at `rel_tol`
/// relative to the largest singular value).
Matrix orthonormal_columns(const Matrix& a, double rel_tol = 1e-12);

/// Orthonormal basis of the orthogonal complement of span(a). `a` may have
/// zero columns, in which case the full identity basis is returned.
Matrix orthogonal_complement(const Matrix& a, int dim);

/// Orthonormal basis of the right nullspace {x : a x = 0}, with singular
/// values below rel_tol * sigma_max treated as zero.
Matrix right_nullspace(const Matrix& a, double rel_tol);

/// Principal angles between the spans of two orthonormal bases, ascending.
std::vector<double> principal_angles(const Matrix& u, const Matrix& v);

/// Smallest and largest singular value of a (rectangular) matrix.
std::pair<double, double> singular_value_range(const Matrix& a);

/// Least-squares fit of y = intercept + slope * x. Returns {slope,
/// intercept, r_squared}. With fewer than two distinct x the slope is 0.
struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
};
LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace polydich
