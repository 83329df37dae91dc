#include "polydich/splitting.hpp"

#include <Eigen/Dense>

#include "polydich/error.hpp"

namespace polydich {

Matrix SplittingBundle::unstable_coord_transport(int m, int n) const {
  const int du = dim_unstable();
  Matrix t = Matrix::Identity(du, du);
  if (m <= n) {
    // (M_{n-1} ... M_m)^{-1} = M_m^{-1} M_{m+1}^{-1} ... M_{n-1}^{-1}
    for (int k = m; k <= n - 1; ++k) t = t * unstable_step_inv[std::size_t(k - 1)];
  } else {
    for (int k = n; k < m; ++k) t = unstable_step[std::size_t(k - 1)] * t;
  }
  return t;
}

Matrix SplittingBundle::unstable_transport(int m, int n) const {
  return W(m) * unstable_coord_transport(m, n) * W(n).transpose() * Q(n);
}

Matrix splitting_projection(const SubspacePair& pair, double transversality_tol) {
  const int d = int(pair.stable_basis.rows() > 0 ? pair.stable_basis.rows()
                                                 : pair.unstable_basis.rows());
  const int ds = int(pair.stable_basis.cols());
  const int du = int(pair.unstable_basis.cols());
  if (ds + du != d)
    throw ConfigError("splitting_projection: basis dimensions do not fill the space");
  if (ds == 0) return Matrix::Zero(d, d);
  if (du == 0) return Matrix::Identity(d, d);

  Matrix k(d, d);
  k.leftCols(ds) = pair.stable_basis;
  k.rightCols(du) = pair.unstable_basis;
  auto [smin, smax] = singular_value_range(k);
  if (smax <= 0 || smin / smax < transversality_tol)
    throw SingularError("splitting_projection: stable and unstable bases are not transversal "
                        "(sigma_min/sigma_max = " + std::to_string(smin / std::max(smax, 1e-300)) + ")");
  // P = [V 0] [V W]^{-1}
  Matrix kinv = k.partialPivLu().solve(Matrix::Identity(d, d));
  return pair.stable_basis * kinv.topRows(ds);
}

static Matrix unstable_inverse_chain(const Cocycle& c, int m, int n,
                                     const SplittingBundle& bundle) {
  const auto& sys = c.system();
  const int N = sys.horizon();
  if (m < 1 || n > N) throw std::out_of_range("cocycle_on_unstable indices outside horizon");
  if (m > n) throw std::invalid_argument("cocycle_on_unstable requires m <= n");
  const int du = bundle.dim_unstable();
  if (du == 0) return Matrix(0, 0);
  Matrix t = Matrix::Identity(du, du);
  for (int k = m; k <= n - 1; ++k) {
    const Matrix& step = bundle.unstable_step[std::size_t(k - 1)];
    auto lu = step.partialPivLu();
    // A reliable singularity check on these small blocks: compare the
    // reconstructed inverse against the forward map.
    Matrix inv = lu.solve(Matrix::Identity(du, du));
    if (!inv.allFinite() ||
        (step * inv - Matrix::Identity(du, du)).norm() > 1e-6 * std::max(1.0, step.norm()))
      throw SingularError("unstable restriction not invertible at step " + std::to_string(k));
    t = t * inv;
  }
  return t;
}

Matrix cocycle_on_unstable(const Cocycle& c, int m, int n, const SplittingBundle& bundle) {
  return unstable_inverse_chain(c, m, n, bundle);
}

Matrix cocycle_on_unstable(const Cocycle& c, int m, int n, const DichotomyCertificate& cert) {
  if (!cert.splitting) throw CertificateError("certificate carries no splitting");
  return unstable_inverse_chain(c, m, n, *cert.splitting);
}

}  // namespace polydich
