#include "polydich/linalg.hpp"

#include <Eigen/SVD>
#include <cmath>

namespace polydich {

double spectral_norm(const Matrix& a) {
  if (a.size() == 0) return 0.0;
  return Eigen::JacobiSVD<Matrix>(a).singularValues()(0);
}

Matrix orthonormal_columns(const Matrix& a, double rel_tol) {
  if (a.cols() == 0) return Matrix(a.rows(), 0);
  Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeThinU);
  const auto& sv = svd.singularValues();
  const double cutoff = sv(0) * rel_tol;
  int rank = 0;
  while (rank < sv.size() && sv(rank) > cutoff) ++rank;
  return svd.matrixU().leftCols(rank);
}

Matrix orthogonal_complement(const Matrix& a, int dim) {
  if (a.cols() == 0) return Matrix::Identity(dim, dim);
  Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeFullU);
  const auto& sv = svd.singularValues();
  const double cutoff = (sv.size() > 0 ? sv(0) : 0.0) * 1e-12;
  int rank = 0;
  while (rank < sv.size() && sv(rank) > cutoff) ++rank;
  return svd.matrixU().rightCols(dim - rank);
}

Matrix right_nullspace(const Matrix& a, double rel_tol) {
  Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  const double cutoff = (sv.size() > 0 ? sv(0) : 0.0) * rel_tol;
  int rank = 0;
  while (rank < sv.size() && sv(rank) > cutoff) ++rank;
  return svd.matrixV().rightCols(a.cols() - rank);
}

std::vector<double> principal_angles(const Matrix& u, const Matrix& v) {
  if (u.cols() == 0 || v.cols() == 0) return {};
  Matrix g = u.transpose() * v;
  Eigen::JacobiSVD<Matrix> svd(g);
  std::vector<double> angles;
  const auto& sv = svd.singularValues();  // descending cosines
  for (int i = 0; i < sv.size(); ++i) {
    angles.push_back(std::acos(std::clamp(sv(i), -1.0, 1.0)));
  }
  return angles;  // ascending angles
}

std::pair<double, double> singular_value_range(const Matrix& a) {
  Eigen::JacobiSVD<Matrix> svd(a);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0) return {0.0, 0.0};
  return {sv(sv.size() - 1), sv(0)};
}

LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  LineFit out;
  const std::size_t n = x.size();
  if (n == 0 || y.size() != n) return out;
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= double(n);
  my /= double(n);
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0) {
    out.intercept = my;
    return out;
  }
  out.slope = sxy / sxx;
  out.intercept = my - out.slope * mx;
  out.r_squared = (syy > 0) ? (sxy * sxy) / (sxx * syy) : 1.0;
  return out;
}

}  // namespace polydich
