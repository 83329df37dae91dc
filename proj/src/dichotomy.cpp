#include "polydich/dichotomy.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>

#include "polydich/error.hpp"
#include "polydich/parallel.hpp"
#include "polydich/rng.hpp"

namespace polydich {

namespace {

constexpr double kVanished = -std::numeric_limits<double>::infinity();

std::vector<int> dyadic_indices(int lo, int hi) {
  std::vector<int> out;
  for (long long n = lo; n <= hi; n *= 2) out.push_back(int(n));
  return out;
}

std::vector<int> forward_targets(int n, int N) {
  std::vector<int> ms = {n};
  if (n + 1 <= N) ms.push_back(n + 1);
  const double r = std::exp(1.0 / 3.0);
  for (double x = n * r; x < double(N); x *= r) {
    const int m = int(std::lround(x));
    if (m > n && m < N) ms.push_back(m);
  }
  if (N > n) ms.push_back(N);
  std::sort(ms.begin(), ms.end());
  ms.erase(std::unique(ms.begin(), ms.end()), ms.end());
  return ms;
}

std::vector<int> backward_targets(int n) {
  std::vector<int> ms = {n};
  if (n - 1 >= 1) ms.push_back(n - 1);
  const double r = std::exp(1.0 / 3.0);
  for (double x = n / r; x > 1.0; x /= r) {
    const int m = int(std::lround(x));
    if (m < n && m > 1) ms.push_back(m);
  }
  if (n > 1) ms.push_back(1);
  std::sort(ms.begin(), ms.end());
  ms.erase(std::unique(ms.begin(), ms.end()), ms.end());
  return ms;
}

/// One group of rate samples at fixed start n: predictor t >= 0 and log of
/// the measured ratio. Vanishing ratios are dropped but remembered.
struct RateGroup {
  int n = 0;
  std::vector<double> t;
  std::vector<double> logr;
};

struct TwoStageResult {
  double slope = 0.0;     // d logr / d t
  double epsilon = 0.0;   // residual n-exponent, clamped at 0
  double logC = 0.0;      // closes logr <= logC + slope * t + eps * log n
  bool has_slope = false;
  std::vector<std::pair<double, double>> intercepts;  // (log n, needed log-constant)
};

/// Pooled within-group regression for the rate, then a regression of the
/// per-group closing constants against log n. Points with t below
/// `slope_t_min` are excluded from the rate estimate (they carry no rate
/// information and would absorb single-step spikes into the slope).
TwoStageResult two_stage_fit(const std::vector<RateGroup>& groups, bool fit_epsilon,
                             double slope_t_min = 0.2) {
  TwoStageResult out;
  double sxx = 0.0, sxy = 0.0;
  for (const auto& g : groups) {
    double mt = 0.0, mv = 0.0;
    int cnt = 0;
    for (std::size_t i = 0; i < g.t.size(); ++i) {
      if (g.t[i] < slope_t_min) continue;
      mt += g.t[i];
      mv += g.logr[i];
      ++cnt;
    }
    if (cnt < 2) continue;
    mt /= cnt;
    mv /= cnt;
    for (std::size_t i = 0; i < g.t.size(); ++i) {
      if (g.t[i] < slope_t_min) continue;
      sxx += (g.t[i] - mt) * (g.t[i] - mt);
      sxy += (g.t[i] - mt) * (g.logr[i] - mv);
    }
  }
  if (sxx > 0) {
    out.slope = sxy / sxx;
    out.has_slope = true;
  }
  for (const auto& g : groups) {
    if (g.t.empty()) continue;
    double need = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < g.t.size(); ++i)
      need = std::max(need, g.logr[i] - out.slope * g.t[i]);
    out.intercepts.emplace_back(std::log(double(g.n)), need);
  }
  if (fit_epsilon && out.intercepts.size() >= 2) {
    std::vector<double> xs, ys;
    for (auto& [ln, c] : out.intercepts) {
      xs.push_back(ln);
      ys.push_back(c);
    }
    out.epsilon = std::max(0.0, fit_line(xs, ys).slope);
  }
  double logc = -std::numeric_limits<double>::infinity();
  for (auto& [ln, c] : out.intercepts) logc = std::max(logc, c - out.epsilon * ln);
  out.logC = logc;
  return out;
}

std::vector<int> fit_start_indices(int N, bool exhaustive, bool forward) {
  if (exhaustive) {
    std::vector<int> all(static_cast<std::size_t>(N));
    for (int n = 1; n <= N; ++n) all[std::size_t(n - 1)] = n;
    return all;
  }
  (void)forward;
  return dyadic_indices(1, N);
}

/// Measures forward ratios ||A(m,n) B_n||_{m<-n} for every target m by one
/// incremental sweep; `map_at_n` supplies B_n (e.g. P_n or the identity).
template <typename MapAt, typename Record>
void sweep_forward_ratios(const OperatorSequence& sys, const NormSequence& norms,
                          const std::vector<int>& starts, MapAt map_at_n, Record record,
                          int opnorm_samples) {
  const int N = sys.horizon();
  const int count = int(starts.size());
#pragma omp parallel for schedule(dynamic)
  for (int gi = 0; gi < count; ++gi) {
    const int n = starts[std::size_t(gi)];
    const std::vector<int> targets = forward_targets(n, N);
    Matrix t = map_at_n(n);
    std::size_t next = 0;
    for (int m = n; m <= N && next < targets.size(); ++m) {
      if (m > n) t = sys.matrix(m - 1) * t;
      if (m == targets[next]) {
        record(gi, n, m, norms.operator_norm(m, n, t, opnorm_samples));
        ++next;
      }
    }
  }
}

Matrix stable_part_map(const SplittingBundle& sp, int n) { return sp.P(n); }

/// Backward ratios ||A(m,n) Q_n||_{m<-n} on the unstable bundle.
template <typename Record>
void sweep_backward_ratios(const OperatorSequence& sys, const NormSequence& norms,
                           const SplittingBundle& sp, const std::vector<int>& starts,
                           Record record, int opnorm_samples) {
  (void)sys;
  const int count = int(starts.size());
#pragma omp parallel for schedule(dynamic)
  for (int gi = 0; gi < count; ++gi) {
    const int n = starts[std::size_t(gi)];
    const std::vector<int> targets = backward_targets(n);
    const int du = sp.dim_unstable();
    Matrix x = Matrix::Identity(du, du);  // Z(n)-coords -> Z(m)-coords
    Matrix tail = sp.W(n).transpose() * sp.Q(n);
    // targets ascending; walk m downward
    std::vector<int> desc(targets.rbegin(), targets.rend());
    std::size_t di = 0;
    for (int m = n; m >= 1 && di < desc.size(); --m) {
      if (m < n) x = sp.unstable_step_inv[std::size_t(m - 1)] * x;
      if (m == desc[di]) {
        Matrix g = sp.W(m) * x * tail;
        record(gi, n, m, norms.operator_norm(m, n, g, opnorm_samples));
        ++di;
      }
    }
  }
}

}  // namespace

StableSubspaceResult stable_subspace(const std::shared_ptr<const OperatorSequence>& sys,
                                     const NormSequence& norms, int n,
                                     const CertifyOptions& opts) {
  const int N = sys->horizon();
  if (n < 1 || n > N / 2)
    throw std::out_of_range("stable_subspace needs n <= N/2 for a usable forward window");
  const int d = sys->dimension();
  Cocycle cocy(sys);
  Matrix full = cocy(N, n);
  Eigen::JacobiSVD<Matrix> svd(full, Eigen::ComputeFullV);
  Matrix dirs = svd.matrixV();  // descending singular values

  StableSubspaceResult out;
  out.n = n;
  out.slopes.assign(std::size_t(d), 0.0);
  std::vector<int> stable_cols;
  const std::vector<int> targets = forward_targets(n, N);
  for (int i = 0; i < d; ++i) {
    Vector v = dirs.col(i);
    std::vector<double> xs, ys;
    bool vanished = false;
    std::size_t next = 0;
    for (int m = n; m <= N && next < targets.size(); ++m) {
      if (m > n) v = sys->matrix(m - 1) * v;
      if (m == targets[next]) {
        const double r = norms.eval(m, v);
        if (r <= 0) {
          vanished = true;
          break;
        }
        xs.push_back(std::log(double(m) / n));
        ys.push_back(std::log(r));
        ++next;
      }
    }
    double slope;
    if (vanished) {
      slope = kVanished;  // orbit dies: maximally stable
    } else {
      LineFit fit = fit_line(xs, ys);
      slope = fit.slope;
    }
    out.slopes[std::size_t(i)] = slope;
    if (slope < -opts.classification_margin) {
      stable_cols.push_back(i);
    } else if (slope <= opts.classification_margin) {
      throw GapError("spectral gap too small: direction " + std::to_string(i) + " at n = " +
                     std::to_string(n) + " has growth exponent " + std::to_string(slope));
    }
  }
  Matrix basis(d, int(stable_cols.size()));
  for (std::size_t j = 0; j < stable_cols.size(); ++j) basis.col(int(j)) = dirs.col(stable_cols[j]);
  out.basis = orthonormal_columns(basis);
  return out;
}

Matrix unstable_subspace(const std::shared_ptr<const OperatorSequence>& sys,
                         const Matrix& z_basis, int n) {
  if (n < 1 || n > sys->horizon()) throw std::out_of_range("unstable_subspace index");
  if (z_basis.cols() == 0) return Matrix(sys->dimension(), 0);
  Cocycle cocy(sys);
  Matrix image = cocy(n, 1) * z_basis;
  Matrix w = orthonormal_columns(image, 1e-10);
  if (w.cols() != z_basis.cols())
    throw SingularError("unstable image degenerate: A(n,1) Z lost rank at n = " +
                        std::to_string(n));
  return w;
}

double verify_equivariance(const DichotomyCertificate& cert, const OperatorSequence& sys) {
  if (!cert.splitting) throw CertificateError("certificate carries no splitting");
  const auto& sp = *cert.splitting;
  double worst = 0.0;
  for (int m = 1; m <= sys.horizon() - 1; ++m) {
    const Matrix& a = sys.matrix(m);
    worst = std::max(worst, spectral_norm(a * sp.P(m) - sp.P(m + 1) * a) /
                                std::max(1.0, spectral_norm(a)));
  }
  return worst;
}

std::shared_ptr<SplittingBundle> build_splitting(
    const std::shared_ptr<const OperatorSequence>& sys, const Matrix& z_basis,
    const CertifyOptions& opts) {
  const int N = sys->horizon();
  const int d = sys->dimension();
  const int du = int(z_basis.cols());
  const int ds = d - du;

  auto bundle = std::make_shared<SplittingBundle>();
  bundle->horizon = N;
  bundle->dim = d;
  bundle->stable_basis.resize(std::size_t(N));
  bundle->unstable_basis.resize(std::size_t(N));
  bundle->projection.resize(std::size_t(N));
  bundle->unstable_step.resize(std::size_t(N - 1));
  bundle->unstable_step_inv.resize(std::size_t(N - 1));

  // Unstable bundle forward: W_{n+1} spans A_n W_n.
  bundle->unstable_basis[0] = du > 0 ? orthonormal_columns(z_basis) : Matrix(d, 0);
  if (bundle->unstable_basis[0].cols() != du)
    throw ConfigError("Z-basis rank-deficient");
  for (int n = 1; n <= N - 1; ++n) {
    const Matrix& w = bundle->unstable_basis[std::size_t(n - 1)];
    Matrix img = sys->matrix(n) * w;
    Matrix wn = orthonormal_columns(img, 1e-10);
    if (wn.cols() != du)
      throw SingularError("unstable image degenerate: A_n Z(n) lost rank at n = " +
                          std::to_string(n));
    bundle->unstable_basis[std::size_t(n)] = wn;
    Matrix step = du > 0 ? Matrix(wn.transpose() * img) : Matrix(0, 0);
    bundle->unstable_step[std::size_t(n - 1)] = step;
    if (du > 0) {
      auto lu = step.partialPivLu();
      Matrix inv = lu.solve(Matrix::Identity(du, du));
      if (!inv.allFinite() ||
          (step * inv - Matrix::Identity(du, du)).norm() > 1e-8 * std::max(1.0, step.norm()))
        throw SingularError("unstable restriction not invertible at n = " + std::to_string(n));
      bundle->unstable_step_inv[std::size_t(n - 1)] = inv;
    } else {
      bundle->unstable_step_inv[std::size_t(n - 1)] = Matrix(0, 0);
    }
  }

  // Stable bundle backward: V_n is the preimage of span(V_{n+1}), anchored at
  // the terminal complement of W_N. Backward iteration contracts toward the
  // true stable directions, and the terminal anchoring matches the boundary
  // rows used to square the admissibility truncation.
  if (ds == 0) {
    for (int n = 1; n <= N; ++n) bundle->stable_basis[std::size_t(n - 1)] = Matrix(d, 0);
  } else if (du == 0) {
    for (int n = 1; n <= N; ++n) bundle->stable_basis[std::size_t(n - 1)] = Matrix::Identity(d, d);
  } else {
    bundle->stable_basis[std::size_t(N - 1)] =
        orthogonal_complement(bundle->unstable_basis[std::size_t(N - 1)], d);
    for (int n = N - 1; n >= 1; --n) {
      const Matrix& vnext = bundle->stable_basis[std::size_t(n)];
      const Matrix& a = sys->matrix(n);
      Matrix blocked = (Matrix::Identity(d, d) - vnext * vnext.transpose()) * a;
      Eigen::JacobiSVD<Matrix> svd(blocked, Eigen::ComputeFullV);
      const auto& sv = svd.singularValues();
      const double scale = std::max(sv.size() > 0 ? sv(0) : 0.0, spectral_norm(a));
      if (du < d && sv(du) > 1e-8 * std::max(1.0, scale))
        throw SingularError("stable preimage dimension mismatch at n = " + std::to_string(n));
      bundle->stable_basis[std::size_t(n - 1)] = svd.matrixV().rightCols(ds);
    }
  }

  for (int n = 1; n <= N; ++n) {
    SubspacePair pair{n, bundle->stable_basis[std::size_t(n - 1)],
                      bundle->unstable_basis[std::size_t(n - 1)], {}};
    bundle->projection[std::size_t(n - 1)] = splitting_projection(pair, opts.transversality_tol);
  }
  return bundle;
}

FitResult fit_constants(const std::shared_ptr<const OperatorSequence>& sys,
                        const NormSequence& norms, const SplittingBundle& splitting,
                        const CertifyOptions& opts) {
  const int N = sys->horizon();
  const bool exhaustive = N <= opts.exhaustive_pair_limit;
  const std::vector<int> starts = fit_start_indices(N, exhaustive, true);
  const int ds = splitting.dim_stable();
  const int du = splitting.dim_unstable();

  FitResult out;
  double lambda_s = std::numeric_limits<double>::infinity();
  double lambda_u = std::numeric_limits<double>::infinity();

  std::vector<RateGroup> fgroups(starts.size()), bgroups(starts.size());
  if (ds > 0) {
    sweep_forward_ratios(
        *sys, norms, starts, [&](int n) { return stable_part_map(splitting, n); },
        [&](int gi, int n, int m, double r) {
          auto& g = fgroups[std::size_t(gi)];
          g.n = n;
          if (r > 1e-300) {
            g.t.push_back(std::log(double(m) / n));
            g.logr.push_back(std::log(r));
          }
        },
        opts.opnorm_samples);
    TwoStageResult st = two_stage_fit(fgroups, false);
    if (!st.has_slope) throw GapError("no polynomial decay: insufficient rate data (stable)");
    lambda_s = -st.slope;
    if (lambda_s <= 0)
      throw GapError("no polynomial decay: fitted stable rate " + std::to_string(lambda_s));
  }
  if (du > 0) {
    sweep_backward_ratios(
        *sys, norms, splitting, starts,
        [&](int gi, int n, int m, double r) {
          auto& g = bgroups[std::size_t(gi)];
          g.n = n;
          if (r > 1e-300) {
            g.t.push_back(std::log(double(n) / m));
            g.logr.push_back(std::log(r));
          }
        },
        opts.opnorm_samples);
    TwoStageResult un = two_stage_fit(bgroups, false);
    if (!un.has_slope) throw GapError("no polynomial decay: insufficient rate data (unstable)");
    lambda_u = -un.slope;
    if (lambda_u <= 0)
      throw GapError("no polynomial decay: fitted unstable rate " + std::to_string(lambda_u));
  }

  out.lambda_stable = std::isfinite(lambda_s) ? lambda_s : 0.0;
  out.lambda_unstable = std::isfinite(lambda_u) ? lambda_u : 0.0;
  out.lambda = std::min(lambda_s, lambda_u);
  if (!std::isfinite(out.lambda)) throw GapError("no polynomial decay: empty splitting");

  // Close D over the collected grid at the reconciled lambda.
  double logD = -std::numeric_limits<double>::infinity();
  for (const auto& g : fgroups)
    for (std::size_t i = 0; i < g.t.size(); ++i)
      logD = std::max(logD, g.logr[i] + out.lambda * g.t[i]);
  for (const auto& g : bgroups)
    for (std::size_t i = 0; i < g.t.size(); ++i)
      logD = std::max(logD, g.logr[i] + out.lambda * g.t[i]);
  out.D = std::exp(logD);
  out.max_violation = 0.0;
  return out;
}

NonuniformFitResult fit_nonuniform_constants(const std::shared_ptr<const OperatorSequence>& sys,
                                             const NormSequence& base_norm,
                                             const SplittingBundle& splitting,
                                             const CertifyOptions& opts) {
  if (base_norm.kind() != NormKind::base && base_norm.kind() != NormKind::explicit_weights)
    throw ConfigError("fit_nonuniform_constants measures in a base norm");
  const int N = sys->horizon();
  const bool exhaustive = N <= opts.exhaustive_pair_limit;
  const std::vector<int> starts = fit_start_indices(N, exhaustive, true);
  const int ds = splitting.dim_stable();
  const int du = splitting.dim_unstable();

  double lambda_s = std::numeric_limits<double>::infinity();
  double lambda_u = std::numeric_limits<double>::infinity();
  double eps = 0.0;

  std::vector<RateGroup> fgroups(starts.size()), bgroups(starts.size());
  if (ds > 0) {
    sweep_forward_ratios(
        *sys, base_norm, starts, [&](int n) { return stable_part_map(splitting, n); },
        [&](int gi, int n, int m, double r) {
          auto& g = fgroups[std::size_t(gi)];
          g.n = n;
          if (r > 1e-300) {
            g.t.push_back(std::log(double(m) / n));
            g.logr.push_back(std::log(r));
          }
        },
        opts.opnorm_samples);
    TwoStageResult st = two_stage_fit(fgroups, true);
    if (!st.has_slope) throw GapError("no polynomial decay: insufficient rate data (stable)");
    lambda_s = -st.slope;
    if (lambda_s <= 0)
      throw GapError("no polynomial decay: fitted stable rate " + std::to_string(lambda_s));
    eps = std::max(eps, st.epsilon);
  }
  if (du > 0) {
    sweep_backward_ratios(
        *sys, base_norm, splitting, starts,
        [&](int gi, int n, int m, double r) {
          auto& g = bgroups[std::size_t(gi)];
          g.n = n;
          if (r > 1e-300) {
            g.t.push_back(std::log(double(n) / m));
            g.logr.push_back(std::log(r));
          }
        },
        opts.opnorm_samples);
    TwoStageResult un = two_stage_fit(bgroups, true);
    if (!un.has_slope) throw GapError("no polynomial decay: insufficient rate data (unstable)");
    lambda_u = -un.slope;
    if (lambda_u <= 0)
      throw GapError("no polynomial decay: fitted unstable rate " + std::to_string(lambda_u));
    eps = std::max(eps, un.epsilon);
  }

  NonuniformFitResult out;
  out.lambda = std::min(lambda_s, lambda_u);
  if (!std::isfinite(out.lambda)) throw GapError("no polynomial decay: empty splitting");
  out.epsilon = eps;

  double logD = -std::numeric_limits<double>::infinity();
  for (const auto& g : fgroups)
    for (std::size_t i = 0; i < g.t.size(); ++i)
      logD = std::max(logD, g.logr[i] + out.lambda * g.t[i] - eps * std::log(double(g.n)));
  for (const auto& g : bgroups)
    for (std::size_t i = 0; i < g.t.size(); ++i)
      logD = std::max(logD, g.logr[i] + out.lambda * g.t[i] - eps * std::log(double(g.n)));
  out.D = std::exp(logD);
  out.max_violation = 0.0;
  return out;
}

GrowthFit fit_growth_bound(const std::shared_ptr<const OperatorSequence>& sys,
                           const NormSequence& norms, const CertifyOptions& opts) {
  const int N = sys->horizon();
  const bool exhaustive = N <= opts.exhaustive_pair_limit;
  const std::vector<int> starts = fit_start_indices(N, exhaustive, true);
  const int d = sys->dimension();

  std::vector<RateGroup> groups(starts.size());
  sweep_forward_ratios(
      *sys, norms, starts, [&](int) { return Matrix::Identity(d, d); },
      [&](int gi, int n, int m, double r) {
        auto& g = groups[std::size_t(gi)];
        g.n = n;
        if (r > 1e-300) {
          g.t.push_back(std::log(double(m) / n));
          g.logr.push_back(std::log(r));
        }
      },
      opts.opnorm_samples);
  TwoStageResult fit = two_stage_fit(groups, true);

  GrowthFit out;
  out.a = fit.has_slope ? fit.slope : 0.0;
  out.b = out.a;

  // Single-step growth: under (pb), sup_n ||A_n|| <= M 2^a, so any
  // polynomial n-trend in the one-step norms rules the uniform bound out.
  std::vector<double> xs, ys;
  double peak = 0.0;
  int witness = 1;
  for (int n = 1; n <= N - 1; ++n) {
    const double s = norms.operator_norm(n + 1, n, sys->matrix(n), opts.opnorm_samples);
    if (s > peak) {
      peak = s;
      witness = n;
    }
    if (s > 1e-300) {
      xs.push_back(std::log(double(n)));
      ys.push_back(std::log(s));
    }
  }
  const double single_step_slope = std::max(0.0, fit_line(xs, ys).slope);
  out.single_step_peak = peak;
  out.witness = witness;
  out.bounded = fit.epsilon <= opts.uniform_margin && single_step_slope <= opts.uniform_margin;
  out.epsilon = std::max(fit.epsilon, single_step_slope);

  // (pb) closes without the n-factor, (npg) with it.
  double logM = -std::numeric_limits<double>::infinity();
  double logK = -std::numeric_limits<double>::infinity();
  for (const auto& g : groups)
    for (std::size_t i = 0; i < g.t.size(); ++i) {
      logM = std::max(logM, g.logr[i] - out.a * g.t[i]);
      logK = std::max(logK, g.logr[i] - out.b * g.t[i] - out.epsilon * std::log(double(g.n)));
    }
  out.M = std::exp(logM);
  out.K = std::exp(logK);
  return out;
}

GammaResult gamma(const SplittingBundle& splitting, const NormSequence& norms, int n,
                  const DichotomyConstants* fitted) {
  GammaResult out;
  const int ds = splitting.dim_stable();
  const int du = splitting.dim_unstable();
  if (ds == 0 || du == 0) {
    out.gamma_n = 2.0;  // infimum over an empty constraint set, by convention
    out.proj_bound = 1.0;
    return out;
  }
  const Matrix& v = splitting.V(n);
  const Matrix& w = splitting.W(n);

  const bool euclidean_like = (norms.kind() == NormKind::base ||
                               norms.kind() == NormKind::explicit_weights) &&
                              norms.base_kind() == BaseNorm::euclidean;
  if (euclidean_like) {
    auto angles = principal_angles(v, w);
    const double theta = angles.empty() ? std::acos(-1.0) / 2 : angles.front();
    out.gamma_n = 2.0 * std::sin(theta / 2.0);
    out.converged = true;
  } else {
    // Grid over the two unit spheres in subspace coordinates, then local
    // refinement by shrinking random perturbations.
    auto eng = seeded_engine(0x67616d6dULL, std::uint64_t(n));
    auto norm_at = [&](const Vector& x) { return norms.eval(n, x); };
    auto value = [&](Vector cs, Vector cu) {
      Vector vs = v * cs;
      Vector vu = w * cu;
      const double ns = norm_at(vs), nu = norm_at(vu);
      if (ns <= 0 || nu <= 0) return 2.0;
      return norm_at(vs / ns + vu / nu);
    };
    double best = 2.0;
    Vector bs, bu;
    const int coarse = 128;
    for (int i = 0; i < coarse; ++i) {
      Vector cs = random_unit_vector(eng, ds);
      Vector cu = random_unit_vector(eng, du);
      const double val = value(cs, cu);
      if (val < best) {
        best = val;
        bs = cs;
        bu = cu;
      }
    }
    double step = 0.5;
    int stale = 0;
    while (step > 1e-6 && stale < 200) {
      Vector cs = (bs + step * random_vector(eng, ds)).normalized();
      Vector cu = (bu + step * random_vector(eng, du)).normalized();
      const double val = value(cs, cu);
      if (val < best - 1e-14) {
        best = val;
        bs = cs;
        bu = cu;
        stale = 0;
      } else if (++stale % 40 == 0) {
        step *= 0.5;
      }
    }
    out.gamma_n = best;
    out.converged = step <= 1e-5;
  }
  out.proj_bound = 2.0 / out.gamma_n;

  if (fitted && fitted->D > 0 && fitted->lambda > 0 && fitted->M > 0) {
    const double D = fitted->D, lam = fitted->lambda;
    long long n0 = (long long)std::floor(std::pow(D, 1.0 / lam)) + 1;
    out.N0 = n0;
    const double num = (1.0 / D) * std::pow(double(n0), lam) - D * std::pow(double(n0), -lam);
    out.theory_lower = num / (fitted->M * std::pow(double(n0), fitted->a));
  }
  return out;
}

LyapunovEntry polynomial_lyapunov_exponent(const std::shared_ptr<const OperatorSequence>& sys,
                                           const Vector& v, int window_lo, int window_hi) {
  const int N = sys->horizon();
  if (window_lo < 1 || window_hi > N || window_lo >= window_hi)
    throw std::out_of_range("lyapunov window outside {1..N}");
  LyapunovEntry entry;
  entry.window_lo = window_lo;
  entry.window_hi = window_hi;

  std::vector<int> samples;
  if (window_hi - window_lo <= 128) {
    for (int n = window_lo; n <= window_hi; ++n) samples.push_back(n);
  } else {
    const double r = std::pow(double(window_hi) / window_lo, 1.0 / 63.0);
    double x = window_lo;
    for (int i = 0; i < 64; ++i, x *= r) {
      const int n = std::clamp(int(std::lround(x)), window_lo, window_hi);
      samples.push_back(n);
    }
    samples.erase(std::unique(samples.begin(), samples.end()), samples.end());
  }

  Vector orbit = v;
  std::vector<double> xs, ys;
  std::size_t next = 0;
  for (int m = 1; m <= window_hi && next < samples.size(); ++m) {
    if (m > 1) orbit = sys->matrix(m - 1) * orbit;
    if (m == samples[next]) {
      const double r = orbit.norm();
      if (r <= 0) {
        entry.vanished = true;
        entry.slope = kVanished;
        entry.r_squared = 0.0;
        return entry;
      }
      xs.push_back(std::log(double(m)));
      ys.push_back(std::log(r));
      ++next;
    }
  }
  LineFit fit = fit_line(xs, ys);
  entry.slope = fit.slope;
  entry.r_squared = fit.r_squared;
  return entry;
}

LyapunovReport lyapunov_basis_report(const std::shared_ptr<const OperatorSequence>& sys,
                                     int window_lo, int window_hi) {
  LyapunovReport rep;
  const int d = sys->dimension();
  for (int i = 0; i < d; ++i) {
    LyapunovEntry e = polynomial_lyapunov_exponent(sys, Vector::Unit(d, i), window_lo, window_hi);
    e.vector_index = i;
    rep.rows.push_back(e);
  }
  return rep;
}

DichotomyCertificate certify(const std::shared_ptr<const OperatorSequence>& sys,
                             const NormSequence& norms, const CertifyOptions& opts) {
  DichotomyCertificate cert;
  cert.horizon = sys->horizon();
  cert.dim = sys->dimension();
  const int N = sys->horizon();
  const int d = sys->dimension();

  auto refuse = [&](const std::string& stage, const std::string& why) {
    cert.refusal_stage = stage;
    cert.refusal_reason = why;
    return cert;
  };

  // Growth envelope first: it is the theorem's standing hypothesis and the
  // cheapest way to reject non-polynomial inputs.
  GrowthFit growth;
  try {
    growth = fit_growth_bound(sys, norms, opts);
  } catch (const Error& e) {
    return refuse("growth", e.what());
  }
  cert.constants.M = growth.M;
  cert.constants.a = growth.a;
  cert.constants.K = growth.K;
  cert.constants.b = growth.b;
  cert.constants.epsilon_growth = growth.epsilon;
  cert.diagnostics["growth_bounded"] = growth.bounded ? 1.0 : 0.0;
  cert.diagnostics["growth_witness"] = double(growth.witness);
  cert.diagnostics["single_step_peak"] = growth.single_step_peak;
  if (!growth.bounded && growth.epsilon > opts.max_epsilon)
    return refuse("growth", "growth envelope not polynomially bounded: sup_n ||A_n|| diverges "
                            "(witness n = " + std::to_string(growth.witness) + ")");

  // Classify stable dimensions over a dyadic grid of start times.
  std::vector<int> grid = dyadic_indices(1, std::max(1, N / 2));
  std::vector<StableSubspaceResult> classified;
  std::vector<std::string> failures;
  for (int n : grid) {
    try {
      classified.push_back(stable_subspace(sys, norms, n, opts));
    } catch (const Error& e) {
      failures.push_back(e.what());
    } catch (const std::out_of_range&) {
    }
  }
  if (classified.empty())
    return refuse("subspace", failures.empty() ? "no classifiable start times" : failures.front());
  if (classified.front().n != 1)
    return refuse("subspace", "stable classification failed at n = 1: " +
                                  (failures.empty() ? std::string("unavailable") : failures.front()));

  std::map<int, int> votes;
  for (const auto& c : classified) ++votes[int(c.basis.cols())];
  int ds = 0, best_vote = -1;
  for (auto [dim, count] : votes)
    if (count > best_vote) {
      best_vote = count;
      ds = dim;
    }
  int dissent = 0;
  for (const auto& c : classified)
    if (int(c.basis.cols()) != ds) ++dissent;
  cert.diagnostics["dimension_dissent"] = double(dissent);
  if (int(classified.front().basis.cols()) != ds)
    return refuse("subspace", "stable dimension at n = 1 disagrees with the majority vote");

  // Z: orthogonal complement of the classified X(1).
  Matrix z_basis = orthogonal_complement(classified.front().basis, d);

  std::shared_ptr<SplittingBundle> bundle;
  try {
    bundle = build_splitting(sys, z_basis, opts);
  } catch (const Error& e) {
    return refuse("bundle", e.what());
  }
  cert.splitting = bundle;

  // Structural residuals.
  {
    double p2 = 0.0, trans = 1.0, stable_angle = 0.0, unstable_angle = 0.0;
    for (int n = 1; n <= N; ++n) {
      const Matrix& p = bundle->P(n);
      p2 = std::max(p2, (p * p - p).norm());
      Matrix k(d, d);
      if (bundle->dim_stable() > 0) k.leftCols(bundle->dim_stable()) = bundle->V(n);
      if (bundle->dim_unstable() > 0) k.rightCols(bundle->dim_unstable()) = bundle->W(n);
      auto [smin, smax] = singular_value_range(k);
      trans = std::min(trans, smax > 0 ? smin : 0.0);
    }
    for (int n = 1; n <= N - 1; ++n) {
      const Matrix& a = sys->matrix(n);
      const double scale = std::max(1.0, spectral_norm(a));
      if (bundle->dim_stable() > 0) {
        const Matrix& vn = bundle->V(n + 1);
        stable_angle = std::max(stable_angle,
                                spectral_norm((Matrix::Identity(d, d) - vn * vn.transpose()) * a *
                                              bundle->V(n)) /
                                    scale);
      }
      if (bundle->dim_unstable() > 0) {
        const Matrix& wn = bundle->W(n + 1);
        unstable_angle = std::max(unstable_angle,
                                  spectral_norm((Matrix::Identity(d, d) - wn * wn.transpose()) * a *
                                                bundle->W(n)) /
                                      scale);
      }
    }
    cert.residuals["projection_idempotent"] = p2;
    cert.residuals["transversality_sigma_min"] = trans;
    cert.residuals["stable_invariance"] = stable_angle;
    cert.residuals["unstable_invariance"] = unstable_angle;
    cert.residuals["equivariance"] = verify_equivariance(cert, *sys);
    if (p2 > 1e-9) return refuse("bundle", "projection idempotency residual too large");
    if (trans < opts.transversality_tol)
      return refuse("bundle", "splitting not transversal");
    if (cert.residuals["equivariance"] > 1e-8)
      return refuse("bundle", "projections not equivariant");
  }

  // Rates.
  try {
    FitResult fit = fit_constants(sys, norms, *bundle, opts);
    cert.constants.D = fit.D;
    cert.constants.lambda = fit.lambda;
    cert.constants.lambda_stable = fit.lambda_stable;
    cert.constants.lambda_unstable = fit.lambda_unstable;
    cert.residuals["fit_violation"] = fit.max_violation;
  } catch (const Error& e) {
    return refuse("fit", e.what());
  }
  try {
    NormSequence base = NormSequence::base_norms(
        norms.kind() == NormKind::base || norms.kind() == NormKind::explicit_weights
            ? norms.base_kind()
            : BaseNorm::euclidean);
    NonuniformFitResult nfit = fit_nonuniform_constants(sys, base, *bundle, opts);
    cert.constants.D_nonuniform = nfit.D;
    cert.constants.epsilon = nfit.epsilon;
  } catch (const Error& e) {
    return refuse("fit-nonuniform", e.what());
  }
  cert.constants.epsilon_shared = std::max(cert.constants.epsilon, cert.constants.epsilon_growth);

  // Gamma sweep and projection norms.
  {
    const bool cheap = norms.kind() == NormKind::base || norms.kind() == NormKind::explicit_weights;
    std::vector<int> sweep;
    if (cheap)
      for (int n = 1; n <= N; ++n) sweep.push_back(n);
    else
      sweep = dyadic_indices(1, N);
    cert.gamma.assign(std::size_t(N), 0.0);
    cert.proj_norms.assign(std::size_t(N), 0.0);
    long long n0 = 0;
    const int count = int(sweep.size());
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < count; ++i) {
      const int n = sweep[std::size_t(i)];
      GammaResult g = gamma(*bundle, norms, n, &cert.constants);
      cert.gamma[std::size_t(n - 1)] = g.gamma_n;
      cert.proj_norms[std::size_t(n - 1)] = norms.operator_norm(n, n, bundle->P(n),
                                                                opts.opnorm_samples);
#pragma omp critical(polydich_gamma)
      n0 = std::max(n0, g.N0);
    }
    cert.threshold_scale = n0;
    double sup = 0.0, min_gamma = 2.0;
    for (int n : sweep) {
      sup = std::max(sup, cert.proj_norms[std::size_t(n - 1)]);
      min_gamma = std::min(min_gamma, cert.gamma[std::size_t(n - 1)]);
    }
    cert.sup_proj_norm = sup;
    cert.diagnostics["min_gamma"] = min_gamma;
  }

  // Flags.
  cert.flags.dichotomy = true;
  cert.flags.contraction = bundle->dim_unstable() == 0;
  cert.flags.expansion = bundle->dim_stable() == 0;
  cert.flags.strong = growth.epsilon <= opts.max_epsilon;

  if (opts.with_admissibility) {
    TZOperator tz = make_tz_operator(sys, bundle->dim_unstable() > 0 ? Matrix(bundle->W(1))
                                                                     : Matrix(d, 0),
                                     norms);
    InvertibilityOptions iopts;
    iopts.seed = opts.seed;
    InvertibilityReport rep = invertibility_report(tz, &cert, iopts);
    cert.diagnostics["invertible"] = rep.invertible ? 1.0 : 0.0;
    cert.diagnostics["inv_norm_upper"] = rep.inv_norm_upper;
    cert.diagnostics["inv_norm_lower"] = rep.inv_norm_lower;
    cert.diagnostics["conditioning"] = rep.conditioning;
    if (rep.invertible) {
      const double L = std::max(cert.constants.M * std::pow(2.0, cert.constants.a),
                                cert.constants.M * std::pow(2.0, cert.constants.a + 1) *
                                    rep.inv_norm_upper);
      // N_0 with L ||T^{-1}|| / (log N_0 - 1) <= 1/e, i.e. log N_0 >= 1 + e L u.
      const double log_n0 = 1.0 + std::exp(1.0) * L * rep.inv_norm_upper;
      cert.proof_lambda = 1.0 / log_n0;
      cert.proof_D = L * std::exp(1.0);
      const double n0 = std::exp(std::min(log_n0, 42.0));  // cap near 2^60
      cert.threshold_scale = std::max<long long>(cert.threshold_scale, (long long)std::ceil(n0));
      cert.diagnostics["proof_L"] = L;
    }
  }
  return cert;
}

Evidence check_contraction(const std::shared_ptr<const OperatorSequence>& sys,
                           const NormSequence& norms, const CertifyOptions& opts) {
  Evidence ev;
  GrowthFit growth = fit_growth_bound(sys, norms, opts);
  ev.data["growth_bounded"] = growth.bounded ? 1.0 : 0.0;
  ev.data["growth_witness"] = double(growth.witness);

  const int N = sys->horizon();
  const int d = sys->dimension();
  TZOperator tz = make_tz_operator(sys, Matrix(d, 0), norms);

  // Decay of the full cocycle = (d1) with P = Id.
  double bound = 0.0;
  bool have_bound = false;
  if (growth.a < -opts.classification_margin) {
    double lambda = std::min(-growth.a, 1.0 - 1e-9);  // the kernel bound needs lambda in (0,1)
    bound = growth.M * (1.0 + 1.0 / lambda);
    have_bound = true;
    ev.data["lambda"] = -growth.a;
    ev.data["D"] = growth.M;
    ev.data["bound"] = bound;
  }

  double worst_ratio = 0.0;
  const int probes = 64;
  std::vector<double> ratios(std::size_t(probes), 0.0);
#pragma omp parallel for schedule(static)
  for (int p = 0; p < probes; ++p) {
    auto eng = seeded_engine(opts.seed, 7000 + std::uint64_t(p));
    std::vector<Vector> ys(static_cast<std::size_t>(N));
    ys[0] = Vector::Zero(d);
    for (int k = 2; k <= N; ++k) ys[std::size_t(k - 1)] = random_vector(eng, d);
    BoundedSequence y{std::move(ys), SpaceTag::Y0};
    BoundedSequence x = green_solve_contraction(tz, y);
    const double ny = y.sup_norm(norms);
    if (ny > 0) ratios[std::size_t(p)] = x.sup_norm(norms) / ny;
  }
  for (double r : ratios) worst_ratio = std::max(worst_ratio, r);
  ev.data["worst_ratio"] = worst_ratio;

  bool outputs_bounded;
  if (have_bound) {
    outputs_bounded = worst_ratio <= bound * (1.0 + 1e-8);
  } else {
    // No decay fit: compare the probe ratio across doubling horizons. A true
    // contraction stabilizes; harmonic-type growth keeps climbing.
    auto ratio_at = [&](int horizon) {
      std::vector<Vector> ys(static_cast<std::size_t>(horizon));
      ys[0] = Vector::Zero(d);
      for (int k = 2; k <= horizon; ++k) ys[std::size_t(k - 1)] = Vector::Ones(d);
      std::vector<Matrix> sub;
      for (int m = 1; m < horizon; ++m) sub.push_back(sys->matrix(m));
      auto half = std::make_shared<OperatorSequence>(d, horizon, std::move(sub));
      TZOperator tz_half = make_tz_operator(half, Matrix(d, 0), norms);
      BoundedSequence y{std::move(ys), SpaceTag::Y0};
      return green_solve_contraction(tz_half, y).sup_norm(norms);
    };
    const double r_half = ratio_at(N / 2);
    const double r_full = ratio_at(N);
    ev.data["probe_half"] = r_half;
    ev.data["probe_full"] = r_full;
    outputs_bounded = r_full <= r_half * 1.05;
  }
  ev.data["outputs_bounded"] = outputs_bounded ? 1.0 : 0.0;

  ev.ok = growth.bounded && have_bound && outputs_bounded;
  if (!growth.bounded)
    ev.note = "growth envelope unbounded (witness n = " + std::to_string(growth.witness) + ")";
  else if (!have_bound)
    ev.note = "no polynomial decay in the full cocycle";
  else if (!outputs_bounded)
    ev.note = "kernel sums exceed the fitted bound";
  return ev;
}

Evidence check_expansion(const std::shared_ptr<const OperatorSequence>& sys,
                         const NormSequence& norms, const CertifyOptions& opts) {
  Evidence ev;
  GrowthFit growth = fit_growth_bound(sys, norms, opts);
  ev.data["growth_bounded"] = growth.bounded ? 1.0 : 0.0;

  // Minimal growth: sigma_min of A(m,n) must expand at a positive rate.
  const int N = sys->horizon();
  const int d = sys->dimension();
  std::vector<int> starts = dyadic_indices(1, std::max(1, N / 2));
  std::vector<double> xs, ys;
  Cocycle cocy(sys);
  for (int n : starts) {
    for (int m : forward_targets(n, N)) {
      if (m <= n) continue;
      auto [smin, smax] = singular_value_range(cocy(m, n));
      if (smin > 1e-300) {
        xs.push_back(std::log(double(m) / n));
        ys.push_back(std::log(smin));
      }
    }
  }
  const double min_growth_slope = fit_line(xs, ys).slope;
  ev.data["min_growth_slope"] = min_growth_slope;
  const bool expanding = !xs.empty() && min_growth_slope > opts.classification_margin;

  bool invertible = false;
  if (expanding) {
    TZOperator tz = make_tz_operator(sys, Matrix::Identity(d, d), norms);
    InvertibilityOptions iopts;
    iopts.seed = opts.seed;
    InvertibilityReport rep = invertibility_report(tz, nullptr, iopts);
    invertible = rep.invertible;
    ev.data["invertible"] = rep.invertible ? 1.0 : 0.0;
    ev.data["inv_norm_upper"] = rep.inv_norm_upper;
    ev.data["conditioning"] = rep.conditioning;
  }

  ev.ok = growth.bounded && expanding && invertible;
  if (!growth.bounded)
    ev.note = "growth envelope unbounded";
  else if (!expanding)
    ev.note = "unstable fit has no positive slope";
  else if (!invertible)
    ev.note = "T_Z not invertible for Z = X";
  return ev;
}

}  // namespace polydich
