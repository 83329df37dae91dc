#include "polydich/admissibility.hpp"

#include <Eigen/Dense>
#include <Eigen/SparseLU>
#include <algorithm>
#include <cmath>

#include "polydich/error.hpp"
#include "polydich/parallel.hpp"
#include "polydich/rng.hpp"

namespace polydich {

std::string to_string(SpaceTag t) {
  switch (t) {
    case SpaceTag::Y: return "Y";
    case SpaceTag::YZ: return "YZ";
    case SpaceTag::Y0: return "Y0";
  }
  return "?";
}

double BoundedSequence::sup_norm(const NormSequence& ns) const {
  double s = 0.0;
  for (int k = 1; k <= length(); ++k) s = std::max(s, ns.eval(k, at(k)));
  return s;
}

static void check_entries(const std::vector<Vector>& entries) {
  if (entries.empty()) throw ConfigError("sequence must have at least one entry");
  const auto d = entries.front().size();
  for (const Vector& v : entries)
    if (v.size() != d || !v.allFinite())
      throw ConfigError("sequence entries must be finite vectors of equal dimension");
}

BoundedSequence make_sequence_y(std::vector<Vector> entries) {
  check_entries(entries);
  return BoundedSequence{std::move(entries), SpaceTag::Y};
}

BoundedSequence make_sequence_y0(std::vector<Vector> entries) {
  check_entries(entries);
  if (entries.front().norm() != 0.0)
    throw DomainError("not in Y_0: first entry must be zero");
  return BoundedSequence{std::move(entries), SpaceTag::Y0};
}

BoundedSequence make_sequence_yz(std::vector<Vector> entries, const Matrix& z_basis) {
  check_entries(entries);
  const Vector& x1 = entries.front();
  const double nx = x1.norm();
  if (nx > 0) {
    if (z_basis.cols() == 0)
      throw DomainError("not in Y_Z: first entry must vanish for Z = {0}");
    Vector c = z_basis.colPivHouseholderQr().solve(x1);
    const double resid = (z_basis * c - x1).norm();
    if (resid > 1e-10 * nx)
      throw DomainError("not in Y_Z: first entry is outside span(Z) (relative residual " +
                        std::to_string(resid / nx) + ")");
  }
  return BoundedSequence{std::move(entries), SpaceTag::YZ};
}

TZOperator make_tz_operator(std::shared_ptr<const OperatorSequence> sys, Matrix z_basis,
                            NormSequence norms) {
  if (!sys) throw ConfigError("T_Z needs an operator sequence");
  if (z_basis.cols() > 0) {
    if (z_basis.rows() != sys->dimension())
      throw ConfigError("Z basis row count does not match the dimension");
    auto [smin, smax] = singular_value_range(z_basis);
    if (smax == 0 || smin / smax < 1e-10)
      throw ConfigError("Z-basis rank-deficient");
  } else {
    z_basis = Matrix(sys->dimension(), 0);
  }
  return TZOperator{std::move(sys), std::move(z_basis), std::move(norms)};
}

BoundedSequence tz_apply(const TZOperator& t, const BoundedSequence& x) {
  if (x.tag == SpaceTag::Y)
    throw DomainError("T_Z domain mismatch: sequence is not tagged Y_Z or Y_0");
  const int N = t.horizon();
  if (x.length() != N) throw DomainError("sequence length does not match the horizon");
  const int d = t.system->dimension();
  std::vector<Vector> y(static_cast<std::size_t>(N));
  y[0] = Vector::Zero(d);
  for (int m = 1; m <= N - 1; ++m)
    y[std::size_t(m)] = double(m + 1) * (x.at(m + 1) - t.system->matrix(m) * x.at(m));
  return BoundedSequence{std::move(y), SpaceTag::Y0};
}

double graph_norm(const TZOperator& t, const BoundedSequence& x) {
  return x.sup_norm(t.norms) + tz_apply(t, x).sup_norm(t.norms);
}

namespace {

double equivariance_residual(const OperatorSequence& sys, const SplittingBundle& sp) {
  double worst = 0.0;
  for (int m = 1; m <= sys.horizon() - 1; ++m) {
    const Matrix& a = sys.matrix(m);
    const double r = spectral_norm(a * sp.P(m) - sp.P(m + 1) * a) / std::max(1.0, spectral_norm(a));
    worst = std::max(worst, r);
  }
  return worst;
}

void require_equivariant(const TZOperator& t, const DichotomyCertificate& cert) {
  if (!cert.splitting) throw CertificateError("certificate carries no splitting");
  const double r = equivariance_residual(*t.system, *cert.splitting);
  if (r > 1e-8)
    throw CertificateError("certificate projections are not equivariant (residual " +
                           std::to_string(r) + ")");
}

void require_z_matches_unstable(const TZOperator& t, const DichotomyCertificate& cert) {
  const auto& sp = *cert.splitting;
  if (t.z_dim() != sp.dim_unstable())
    throw CertificateError("Z dimension does not match the certified unstable dimension");
  if (t.z_dim() == 0) return;
  auto angles = principal_angles(orthonormal_columns(t.Z_basis), sp.W(1));
  if (!angles.empty() && angles.back() > 1e-6)
    throw CertificateError("Z is not Im Q_1 of the certificate (max principal angle " +
                           std::to_string(angles.back()) + ")");
}

}  // namespace

GreenSolveResult green_solve(const TZOperator& t, const DichotomyCertificate& cert,
                             const BoundedSequence& y) {
  if (y.tag != SpaceTag::Y0) throw DomainError("green_solve: right-hand side must be in Y_0");
  const int N = t.horizon();
  if (y.length() != N) throw DomainError("green_solve: sequence length mismatch");
  require_equivariant(t, cert);
  require_z_matches_unstable(t, cert);

  const auto& sp = *cert.splitting;
  const int d = t.system->dimension();
  const int du = sp.dim_unstable();

  // Stable sum, forward: S_{n+1} = A_n S_n + P_{n+1} y_{n+1} / (n+1).
  std::vector<Vector> stable(static_cast<std::size_t>(N));
  stable[0] = sp.P(1) * y.at(1);
  for (int n = 1; n <= N - 1; ++n)
    stable[std::size_t(n)] =
        t.system->matrix(n) * stable[std::size_t(n - 1)] + sp.P(n + 1) * y.at(n + 1) / double(n + 1);

  // Unstable sum in W-coordinates, backward:
  // u_n = M_n^{-1} (u_{n+1} + W_{n+1}^T Q_{n+1} y_{n+1} / (n+1)), u_N = 0.
  std::vector<Vector> x(static_cast<std::size_t>(N));
  if (du > 0) {
    Vector u = Vector::Zero(du);
    x[std::size_t(N - 1)] = stable[std::size_t(N - 1)] - sp.W(N) * u;
    for (int n = N - 1; n >= 1; --n) {
      Vector w = sp.W(n + 1).transpose() * (sp.Q(n + 1) * y.at(n + 1)) / double(n + 1);
      u = sp.unstable_step_inv[std::size_t(n - 1)] * (u + w);
      x[std::size_t(n - 1)] = stable[std::size_t(n - 1)] - sp.W(n) * u;
    }
  } else {
    for (int n = 1; n <= N; ++n) x[std::size_t(n - 1)] = stable[std::size_t(n - 1)];
  }

  // x_1 lands in Im Q_1 because y_1 = 0 kills the stable seed.
  GreenSolveResult out;
  out.x = BoundedSequence{std::move(x), SpaceTag::YZ};

  double ybase = 0.0;
  for (int k = 1; k <= N; ++k) ybase = std::max(ybase, y.at(k).norm());
  const double scale = std::max(1.0, ybase);
  for (int n = 1; n <= N - 1; ++n) {
    const Vector defect =
        out.x.at(n + 1) - t.system->matrix(n) * out.x.at(n) - y.at(n + 1) / double(n + 1);
    out.max_defect = std::max(out.max_defect, defect.norm() / scale);
  }
  if (out.max_defect > 1e-8)
    throw CertificateError("green_solve defect identity violated (relative residual " +
                           std::to_string(out.max_defect) + ")");

  out.truncated = true;
  if (cert.constants.lambda > 0 && cert.constants.D > 0) {
    // Dropped tail: sum_{k>N} (1/k) ||A(n,k) Q_k y_k||_n <= (D/lambda) (n/N)^lambda ||y||.
    out.tail_bound = cert.constants.D / cert.constants.lambda * y.sup_norm(t.norms);
  }
  return out;
}

BoundedSequence green_solve_contraction(const TZOperator& t, const BoundedSequence& y) {
  if (y.tag != SpaceTag::Y0)
    throw DomainError("green_solve_contraction: right-hand side must be in Y_0");
  const int N = t.horizon();
  if (y.length() != N) throw DomainError("green_solve_contraction: sequence length mismatch");
  std::vector<Vector> x(static_cast<std::size_t>(N));
  x[0] = y.at(1);  // = 0 for Y_0 input
  for (int n = 1; n <= N - 1; ++n)
    x[std::size_t(n)] = t.system->matrix(n) * x[std::size_t(n - 1)] + y.at(n + 1) / double(n + 1);
  return BoundedSequence{std::move(x), SpaceTag::Y0};
}

TruncationSystem assemble_truncation(const TZOperator& t) {
  const int N = t.horizon();
  if (N < 2) throw ConfigError("truncation needs horizon >= 2");
  const int d = t.system->dimension();
  const int z = t.z_dim();

  TruncationSystem ts;
  ts.dim = d;
  ts.horizon = N;
  ts.z_dim = z;
  ts.matrix.resize((N - 1) * d, z + (N - 1) * d);

  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(std::size_t((N - 1) * d * (d + 1)));
  for (int m = 1; m <= N - 1; ++m) {
    const Matrix& a = t.system->matrix(m);
    const double w = double(m + 1);
    // +(m+1) x_{m+1}
    for (int i = 0; i < d; ++i) trip.emplace_back(ts.row_of(m, i), ts.col_of(m + 1, i), w);
    // -(m+1) A_m x_m; for m = 1 the unknowns are Z-coordinates of x_1
    if (m == 1) {
      Matrix az = a * t.Z_basis;
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < z; ++j)
          if (az(i, j) != 0.0) trip.emplace_back(ts.row_of(m, i), ts.col_of(1, j), -w * az(i, j));
    } else {
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
          if (a(i, j) != 0.0) trip.emplace_back(ts.row_of(m, i), ts.col_of(m, j), -w * a(i, j));
    }
  }
  ts.matrix.setFromTriplets(trip.begin(), trip.end());
  return ts;
}

namespace {

/// Forward-substitution solve of the squared truncation: a particular orbit
/// plus a homogeneous correction through the terminal constraint rows.
struct StructuredSolver {
  const TZOperator* t = nullptr;
  Matrix terminal_rows;              // z x d, rows R with R x_N = 0
  std::vector<Matrix> hom;           // hom[m-1] = A(m,1) Z, d x z
  Eigen::PartialPivLU<Matrix> gate;  // R * A(N,1) Z
  bool usable = false;

  void build(const TZOperator& tz, const Matrix& rows) {
    t = &tz;
    terminal_rows = rows;
    const int N = tz.horizon();
    const int z = tz.z_dim();
    hom.assign(std::size_t(N), Matrix());
    hom[0] = tz.Z_basis;
    for (int m = 1; m <= N - 1; ++m) hom[std::size_t(m)] = tz.system->matrix(m) * hom[std::size_t(m - 1)];
    if (z > 0) {
      Matrix g = terminal_rows * hom[std::size_t(N - 1)];
      gate.compute(g);
      Matrix gid = gate.solve(Matrix::Identity(z, z));
      usable = gid.allFinite() &&
               (g * gid - Matrix::Identity(z, z)).norm() <= 1e-6 * std::max(1.0, g.norm());
    } else {
      usable = true;
    }
  }

  /// Solves T x = y (terminal rows = 0). y must have y_1 = 0 semantics.
  BoundedSequence solve(const BoundedSequence& y) const {
    const int N = t->horizon();
    const int d = t->system->dimension();
    std::vector<Vector> x(static_cast<std::size_t>(N));
    x[0] = Vector::Zero(d);
    for (int m = 1; m <= N - 1; ++m)
      x[std::size_t(m)] = t->system->matrix(m) * x[std::size_t(m - 1)] + y.at(m + 1) / double(m + 1);
    if (t->z_dim() > 0) {
      Vector c = gate.solve(-(terminal_rows * x[std::size_t(N - 1)]));
      for (int m = 1; m <= N; ++m) x[std::size_t(m - 1)] += hom[std::size_t(m - 1)] * c;
    }
    return BoundedSequence{std::move(x), SpaceTag::YZ};
  }
};

std::pair<double, double> extremal_singular_values_sparse(const Eigen::SparseMatrix<double>& m,
                                                          std::uint64_t seed) {
  const int n = int(m.cols());
  auto eng = seeded_engine(seed, 0xABCD);
  Vector v = random_unit_vector(eng, n);
  double smax = 0.0;
  for (int it = 0; it < 80; ++it) {
    Vector w = m.transpose() * (m * v);
    const double nw = w.norm();
    if (nw == 0) break;
    smax = std::sqrt(nw);
    v = w / nw;
  }
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu(m);
  if (lu.info() != Eigen::Success) return {0.0, smax};
  Eigen::SparseMatrix<double> mt = m.transpose();
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lut(mt);
  if (lut.info() != Eigen::Success) return {0.0, smax};
  Vector u = random_unit_vector(eng, n);
  double inv_smin = 0.0;
  for (int it = 0; it < 80; ++it) {
    Vector w = lu.solve(lut.solve(u));
    if (!w.allFinite()) return {0.0, smax};
    const double nw = w.norm();
    if (nw == 0) break;
    inv_smin = std::sqrt(nw);
    u = w / nw;
  }
  return {inv_smin > 0 ? 1.0 / inv_smin : 0.0, smax};
}

}  // namespace

InvertibilityReport invertibility_report(const TZOperator& t, const DichotomyCertificate* cert,
                                         const InvertibilityOptions& opts) {
  InvertibilityReport rep;
  rep.truncated = true;
  const int N = t.horizon();
  const int d = t.system->dimension();
  const int z = t.z_dim();

  TruncationSystem ts = assemble_truncation(t);

  // Terminal boundary rows: kill the Z(N)-component of x_N.
  Matrix rows;
  if (z > 0) {
    if (cert && cert->splitting) {
      if (cert->splitting->dim_unstable() != z) {
        // Fredholm index != 0 at this truncation: the system cannot be
        // squared against the certified splitting.
        rep.invertible = false;
        rep.reason = "Z-dimension incompatible with the certified unstable dimension";
        Matrix dense(ts.matrix);
        if (dense.rows() <= opts.dense_limit && dense.cols() <= opts.dense_limit) {
          auto [smin, smax] = singular_value_range(dense);
          rep.conditioning = smin > 0 ? smax / smin : 0.0;
        }
        return rep;
      }
      rows = orthogonal_complement(cert->splitting->V(N), d).transpose();
    } else {
      Cocycle cocy(t.system);
      Matrix zn = cocy(N, 1) * t.Z_basis;
      Matrix w = orthonormal_columns(zn, 1e-10);
      if (w.cols() != z) {
        rep.invertible = false;
        rep.reason = "unstable image degenerate: A(N,1) Z lost rank";
        return rep;
      }
      rows = w.transpose();
    }
  } else {
    rows = Matrix(0, d);
  }

  // Square matrix: original rows plus terminal rows acting on the x_N block.
  const int size = z + (N - 1) * d;
  Eigen::SparseMatrix<double> square(size, size);
  {
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(std::size_t(ts.matrix.nonZeros()) + std::size_t(z) * d);
    for (int k = 0; k < ts.matrix.outerSize(); ++k)
      for (Eigen::SparseMatrix<double>::InnerIterator it(ts.matrix, k); it; ++it)
        trip.emplace_back(int(it.row()), int(it.col()), it.value());
    for (int i = 0; i < z; ++i)
      for (int j = 0; j < d; ++j)
        if (rows(i, j) != 0.0)
          trip.emplace_back((N - 1) * d + i, ts.col_of(N, j), rows(i, j));
    square.setFromTriplets(trip.begin(), trip.end());
  }

  double smin = 0.0, smax = 0.0;
  if (size <= opts.dense_limit) {
    Matrix dense(square);
    std::tie(smin, smax) = singular_value_range(dense);
  } else {
    std::tie(smin, smax) = extremal_singular_values_sparse(square, opts.seed);
  }
  rep.conditioning = smin > 0 ? smax / smin : std::numeric_limits<double>::infinity();
  rep.invertible = smax > 0 && smin / smax > opts.rank_tol;
  if (!rep.invertible) {
    if (rep.reason.empty()) rep.reason = "truncated system numerically singular";
    rep.conditioning = smin > 0 ? smax / smin : 0.0;
    return rep;
  }

  StructuredSolver solver;
  solver.build(t, rows);
  if (!solver.usable) {
    rep.invertible = false;
    rep.reason = "terminal gate matrix singular";
    return rep;
  }

  // Randomized probe of ||T_Z^{-1}|| in the sequence sup-norms.
  std::vector<double> ratios(std::size_t(opts.probes), 0.0);
#pragma omp parallel for schedule(static)
  for (int p = 0; p < opts.probes; ++p) {
    auto eng = seeded_engine(opts.seed, std::uint64_t(p));
    std::vector<Vector> ys(static_cast<std::size_t>(N));
    ys[0] = Vector::Zero(d);
    for (int k = 2; k <= N; ++k) ys[std::size_t(k - 1)] = random_vector(eng, d);
    BoundedSequence y{std::move(ys), SpaceTag::Y0};
    const double ny = y.sup_norm(t.norms);
    if (ny <= 0) continue;
    BoundedSequence x = solver.solve(y);
    ratios[std::size_t(p)] = x.sup_norm(t.norms) / ny;
  }
  double upper = 0.0;
  for (double r : ratios) upper = std::max(upper, r);

  // Adversarial test sequences sharpen the lower bound (and fold into the
  // empirical upper estimate: they are exact preimage pairs).
  double lower = 0.0;
  if (cert && cert->splitting) {
    const auto& sp = *cert->splitting;
    if (sp.dim_stable() > 0) {
      for (int n : {1, std::max(1, N / 8), std::max(1, N / 4)}) {
        const int m = std::min(N, std::max(n + 1, 4 * n));
        for (int col = 0; col < sp.dim_stable(); ++col) {
          try {
            auto pair = test_sequence_stable(t, n, m, sp.V(n).col(col));
            const double ny = pair.y_seq.sup_norm(t.norms);
            if (ny > 0) lower = std::max(lower, pair.x_seq.sup_norm(t.norms) / ny);
          } catch (const Error&) {
            // vanishing orbit: skip this probe
          }
        }
      }
    }
    if (z > 0 && N > 3) {
      for (int col = 0; col < z; ++col) {
        try {
          auto pair = test_sequence_unstable(t, t.Z_basis.col(col), std::max(3, N / 2));
          const double ny = pair.y_seq.sup_norm(t.norms);
          if (ny > 0) lower = std::max(lower, pair.x_seq.sup_norm(t.norms) / ny);
        } catch (const Error&) {
        }
      }
    }
  }
  if (lower == 0.0) lower = upper;  // no certificate: probes are the only pairs
  rep.inv_norm_lower = lower;
  rep.inv_norm_upper = std::max(upper, lower);
  return rep;
}

TestSequencePair test_sequence_stable(const TZOperator& t, int n, int m, const Vector& x) {
  const int N = t.horizon();
  if (n < 1 || m > N || m < n + 1)
    throw std::out_of_range("test_sequence_stable needs 1 <= n < m <= N");
  const int d = t.system->dimension();

  // Orbit v_k = A(k, n) x and its norms ||v_k||_k.
  std::vector<Vector> orbit(static_cast<std::size_t>(N + 1));
  std::vector<double> norms(std::size_t(N + 1), 0.0);
  orbit[std::size_t(n)] = x;
  norms[std::size_t(n)] = t.norms.eval(n, x);
  for (int k = n + 1; k <= N; ++k) {
    orbit[std::size_t(k)] = t.system->matrix(k - 1) * orbit[std::size_t(k - 1)];
    norms[std::size_t(k)] = t.norms.eval(k, orbit[std::size_t(k)]);
  }
  for (int k = n + 1; k <= m; ++k)
    if (norms[std::size_t(k)] <= 0)
      throw SingularError("orbit vanishes at index " + std::to_string(k));

  TestSequencePair out;
  std::vector<Vector> ys(std::size_t(N), Vector::Zero(d));
  std::vector<Vector> xs(std::size_t(N), Vector::Zero(d));
  double partial = 0.0;
  for (int k = n + 1; k <= N; ++k) {
    if (k <= m) {
      ys[std::size_t(k - 1)] = orbit[std::size_t(k)] / norms[std::size_t(k)];
      partial += 1.0 / (double(k) * norms[std::size_t(k)]);
    }
    xs[std::size_t(k - 1)] = partial * orbit[std::size_t(k)];
  }
  out.y_seq = BoundedSequence{std::move(ys), SpaceTag::Y0};
  out.x_seq = BoundedSequence{std::move(xs), SpaceTag::YZ};
  // partial now holds sum_{j=n+1..m} 1/(j ||A(j,n)x||_j)
  out.lower_bound = norms[std::size_t(m)] * partial;
  // residual of T_Z x = y
  BoundedSequence applied = tz_apply(t, out.x_seq);
  double resid = 0.0;
  for (int k = 1; k <= N; ++k)
    resid = std::max(resid, t.norms.eval(k, applied.at(k) - out.y_seq.at(k)));
  out.construction_residual = resid;
  return out;
}

TestSequencePair test_sequence_unstable(const TZOperator& t, const Vector& z, int n) {
  const int N = t.horizon();
  if (n <= 2 || n > N) throw std::out_of_range("test_sequence_unstable needs 2 < n <= N");
  if (z.norm() == 0) throw DomainError("test_sequence_unstable needs z != 0");
  const int d = t.system->dimension();

  std::vector<Vector> orbit(static_cast<std::size_t>(N + 1));
  std::vector<double> norms(std::size_t(N + 1), 0.0);
  orbit[1] = z;
  norms[1] = t.norms.eval(1, z);
  for (int k = 2; k <= N; ++k) {
    orbit[std::size_t(k)] = t.system->matrix(k - 1) * orbit[std::size_t(k - 1)];
    norms[std::size_t(k)] = t.norms.eval(k, orbit[std::size_t(k)]);
  }
  for (int k = 1; k <= n; ++k)
    if (norms[std::size_t(k)] <= 0)
      throw SingularError("orbit vanishes at index " + std::to_string(k));

  TestSequencePair out;
  std::vector<Vector> ys(std::size_t(N), Vector::Zero(d));
  std::vector<Vector> xs(std::size_t(N), Vector::Zero(d));
  for (int k = 2; k <= n; ++k) ys[std::size_t(k - 1)] = -orbit[std::size_t(k)] / norms[std::size_t(k)];
  for (int k = 1; k <= n - 1; ++k) {
    double s = 0.0;
    for (int j = k + 1; j <= n; ++j) s += 1.0 / (double(j) * norms[std::size_t(j)]);
    xs[std::size_t(k - 1)] = s * orbit[std::size_t(k)];
  }
  out.y_seq = BoundedSequence{std::move(ys), SpaceTag::Y0};
  out.x_seq = BoundedSequence{std::move(xs), SpaceTag::YZ};

  // Lower bounds per start k with the infinite tail truncated at N.
  out.per_k.assign(std::size_t(N), 0.0);
  double best = 0.0;
  for (int k = 1; k <= N - 1; ++k) {
    if (norms[std::size_t(k)] <= 0) continue;
    double s = 0.0;
    bool valid = true;
    for (int j = k + 1; j <= N; ++j) {
      if (norms[std::size_t(j)] <= 0) {
        valid = false;
        break;
      }
      s += 1.0 / (double(j) * norms[std::size_t(j)]);
    }
    if (!valid) continue;
    out.per_k[std::size_t(k - 1)] = norms[std::size_t(k)] * s;
    best = std::max(best, out.per_k[std::size_t(k - 1)]);
  }
  out.lower_bound = best;

  BoundedSequence applied = tz_apply(t, out.x_seq);
  double resid = 0.0;
  for (int k = 1; k <= N; ++k)
    resid = std::max(resid, t.norms.eval(k, applied.at(k) - out.y_seq.at(k)));
  out.construction_residual = resid;
  return out;
}

}  // namespace polydich
