#include "polydich/oracle.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "polydich/error.hpp"

namespace polydich::oracle {

namespace {

void check_limits(int d, int N, const OracleConfig& cfg) {
  if (d > cfg.max_dimension)
    throw ConfigError("oracle limit exceeded: dimension " + std::to_string(d) + " > " +
                      std::to_string(cfg.max_dimension));
  if (N > cfg.max_horizon)
    throw ConfigError("oracle limit exceeded: horizon " + std::to_string(N) + " > " +
                      std::to_string(cfg.max_horizon));
}

}  // namespace

Matrix dense_cocycle(const OperatorSequence& sys, int m, int n, const OracleConfig& cfg) {
  check_limits(sys.dimension(), sys.horizon(), cfg);
  if (n < 1 || m > sys.horizon() || m < n)
    throw std::out_of_range("dense_cocycle needs 1 <= n <= m <= N");
  Matrix prod = Matrix::Identity(sys.dimension(), sys.dimension());
  for (int j = n; j < m; ++j) prod = sys.matrix(j) * prod;
  return prod;
}

BoundedSequence dense_tz_solve(const TZOperator& t, const DichotomyCertificate* cert,
                               const BoundedSequence& y, const OracleConfig& cfg) {
  const int N = t.horizon();
  const int d = t.system->dimension();
  check_limits(d, N, cfg);
  if (y.tag != SpaceTag::Y0) throw DomainError("dense_tz_solve: right-hand side must be in Y_0");
  if (y.length() != N) throw DomainError("dense_tz_solve: sequence length mismatch");
  const int z = t.z_dim();
  const int size = z + (N - 1) * d;

  Matrix big = Matrix::Zero(size, size);
  Vector rhs = Vector::Zero(size);
  auto col_of = [&](int m, int i) { return m == 1 ? i : z + (m - 2) * d + i; };

  for (int m = 1; m <= N - 1; ++m) {
    const Matrix& a = t.system->matrix(m);
    const double w = double(m + 1);
    const int row = (m - 1) * d;
    for (int i = 0; i < d; ++i) {
      big(row + i, col_of(m + 1, i)) += w;
      rhs(row + i) = y.at(m + 1)(i);
    }
    if (m == 1) {
      Matrix az = a * t.Z_basis;
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < z; ++j) big(row + i, j) -= w * az(i, j);
    } else {
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) big(row + i, col_of(m, j)) -= w * a(i, j);
    }
  }

  if (z > 0) {
    Matrix rows;
    if (cert && cert->splitting) {
      if (cert->splitting->dim_unstable() != z)
        throw CertificateError("Z-dimension incompatible with the certified unstable dimension");
      rows = orthogonal_complement(cert->splitting->V(N), d).transpose();
    } else {
      Matrix zn = dense_cocycle(*t.system, N, 1, cfg) * t.Z_basis;
      Matrix w = orthonormal_columns(zn, 1e-10);
      if (w.cols() != z) throw SingularError("unstable image degenerate");
      rows = w.transpose();
    }
    for (int i = 0; i < z; ++i)
      for (int j = 0; j < d; ++j) big((N - 1) * d + i, col_of(N, j)) = rows(i, j);
  }

  Eigen::FullPivLU<Matrix> lu(big);
  if (!lu.isInvertible()) throw SingularError("dense truncation singular");
  Vector sol = lu.solve(rhs);

  std::vector<Vector> xs(static_cast<std::size_t>(N));
  xs[0] = z > 0 ? Vector(t.Z_basis * sol.head(z)) : Vector(Vector::Zero(d));
  for (int m = 2; m <= N; ++m) xs[std::size_t(m - 1)] = sol.segment(col_of(m, 0), d);

  // residual check against the defining rows
  double resid = 0.0;
  double scale = 0.0;
  for (int k = 1; k <= N; ++k) scale = std::max(scale, y.at(k).norm());
  for (int m = 1; m <= N - 1; ++m)
    resid = std::max(resid, (double(m + 1) * (xs[std::size_t(m)] - t.system->matrix(m) * xs[std::size_t(m - 1)]) -
                             y.at(m + 1))
                                .norm());
  if (resid > 1e-8 * std::max(1.0, scale))
    throw SingularError("dense solve residual too large: " + std::to_string(resid));

  return BoundedSequence{std::move(xs), SpaceTag::YZ};
}

double exhaustive_gamma(const SubspacePair& pair, const NormSequence& norms, int n,
                        int grid_density, const OracleConfig& cfg) {
  const int d = int(std::max(pair.stable_basis.rows(), pair.unstable_basis.rows()));
  check_limits(d, 1, cfg);
  const int ds = int(pair.stable_basis.cols());
  const int du = int(pair.unstable_basis.cols());
  if (ds == 0 || du == 0) return 2.0;
  if (ds > 2 || du > 2)
    throw ConfigError("exhaustive_gamma handles subspace dimensions up to 2");

  auto norm_at = [&](const Vector& v) { return norms.eval(n, v); };

  // Enumerate the unit sphere of a <=2-dimensional coordinate space.
  auto sphere = [&](int dim, int density) {
    std::vector<Vector> pts;
    if (dim == 1) {
      Vector p(1);
      p(0) = 1.0;
      pts.push_back(p);
      p(0) = -1.0;
      pts.push_back(p);
    } else {
      for (int i = 0; i < density; ++i) {
        const double th = 2.0 * M_PI * i / density;
        Vector p(2);
        p(0) = std::cos(th);
        p(1) = std::sin(th);
        pts.push_back(p);
      }
    }
    return pts;
  };

  auto value = [&](const Vector& cs, const Vector& cu) {
    Vector vs = pair.stable_basis * cs;
    Vector vu = pair.unstable_basis * cu;
    const double a = norm_at(vs), b = norm_at(vu);
    if (a <= 0 || b <= 0) return 2.0;
    return norm_at(vs / a + vu / b);
  };

  double best = 2.0;
  Vector best_s, best_u;
  for (const Vector& cs : sphere(ds, grid_density))
    for (const Vector& cu : sphere(du, grid_density)) {
      const double v = value(cs, cu);
      if (v < best) {
        best = v;
        best_s = cs;
        best_u = cu;
      }
    }

  // Local refinement: shrink an angular bracket around the best pair.
  auto rotate = [](const Vector& c, double dth) {
    if (c.size() == 1) return c;
    Vector out(2);
    const double th = std::atan2(c(1), c(0)) + dth;
    out(0) = std::cos(th);
    out(1) = std::sin(th);
    return out;
  };
  double width = 2.0 * M_PI / grid_density;
  for (int level = 0; level < 24; ++level) {
    bool improved = false;
    for (int i = -2; i <= 2; ++i)
      for (int j = -2; j <= 2; ++j) {
        Vector cs = rotate(best_s, width * i / 2.0);
        Vector cu = rotate(best_u, width * j / 2.0);
        const double v = value(cs, cu);
        if (v < best) {
          best = v;
          best_s = cs;
          best_u = cu;
          improved = true;
        }
      }
    width *= improved ? 0.7 : 0.5;
    if (width < 1e-9) break;
  }
  return best;
}

}  // namespace polydich::oracle
