#include "polydich/robustness.hpp"

#include <algorithm>
#include <cmath>

#include "polydich/admissibility.hpp"
#include "polydich/error.hpp"
#include "polydich/parallel.hpp"
#include "polydich/rng.hpp"

namespace polydich {

std::string to_string(PerturbationRegime r) {
  return r == PerturbationRegime::strong ? "strong" : "weak";
}

double PerturbationSpec::budget(int m) const {
  const double expo = (regime == PerturbationRegime::strong ? 2.0 : 1.0) + epsilon;
  return c / std::pow(double(m + 1), expo);
}

OperatorSequence perturb(const OperatorSequence& sys, const PerturbationSpec& spec,
                         const DichotomyCertificate* cert) {
  if (spec.c < 0) throw ConfigError("perturbation budget c must be >= 0");
  if (spec.epsilon < 0) throw ConfigError("perturbation epsilon must be >= 0");
  const int N = sys.horizon();
  const int d = sys.dimension();

  if (spec.mode == PerturbationMode::explicit_deltas) {
    if (spec.explicit_deltas.size() != std::size_t(N - 1))
      throw ConfigError("explicit perturbation needs horizon-1 deltas");
    int worst = 0;
    double worst_excess = 0.0;
    for (int m = 1; m <= N - 1; ++m) {
      const double norm = spectral_norm(spec.explicit_deltas[std::size_t(m - 1)]);
      const double excess = norm - spec.budget(m);
      if (excess > worst_excess) {
        worst_excess = excess;
        worst = m;
      }
    }
    if (worst_excess > 1e-12 * std::max(1.0, spec.c))
      throw ConfigError("explicit perturbation exceeds the budget, worst index m = " +
                        std::to_string(worst));
    std::vector<Matrix> entries;
    for (int m = 1; m <= N - 1; ++m)
      entries.push_back(sys.matrix(m) + spec.explicit_deltas[std::size_t(m - 1)]);
    return OperatorSequence(d, N, std::move(entries));
  }

  std::vector<Matrix> entries(static_cast<std::size_t>(N - 1));
  for (int m = 1; m <= N - 1; ++m) {
    Matrix dir;
    if (spec.mode == PerturbationMode::adversarial_aligned && cert && cert->splitting &&
        cert->splitting->dim_stable() > 0 && cert->splitting->dim_unstable() > 0) {
      const auto& sp = *cert->splitting;
      Matrix sens = sys.matrix(m) * sp.P(m) - sp.P(m + 1) * sys.matrix(m);
      if (spectral_norm(sens) > 1e-12) {
        Eigen::JacobiSVD<Matrix> svd(sens, Eigen::ComputeFullU | Eigen::ComputeFullV);
        dir = svd.matrixU().col(0) * svd.matrixV().col(0).transpose();
      } else {
        // Equivariance is exact: push the top stable direction at m straight
        // into the least-contracted unstable direction at m+1.
        dir = sp.W(m + 1).col(0) * sp.V(m).col(0).transpose();
      }
    } else {
      auto eng = seeded_engine(spec.seed, std::uint64_t(m));
      dir = random_matrix(eng, d, d);
      const double s = spectral_norm(dir);
      if (s <= 0) dir = Matrix::Identity(d, d);
      else dir /= s;
    }
    entries[std::size_t(m - 1)] = sys.matrix(m) + spec.budget(m) * dir;
  }
  return OperatorSequence(d, N, std::move(entries));
}

OperatorGapReport operator_gap(const std::shared_ptr<const OperatorSequence>& sys_a,
                               const std::shared_ptr<const OperatorSequence>& sys_b,
                               const NormSequence& norms, const Matrix& z_basis,
                               const PerturbationSpec& spec, int probes,
                               std::uint64_t probe_seed) {
  if (!norms.equivalence_constants)
    throw ConfigError("operator_gap needs norms with known equivalence constants (C, eps)");
  if (sys_a->dimension() != sys_b->dimension() || sys_a->horizon() != sys_b->horizon())
    throw ConfigError("operator_gap: systems must share dimension and horizon");
  const auto [C, eps] = *norms.equivalence_constants;
  (void)eps;
  const int N = sys_a->horizon();
  const int d = sys_a->dimension();

  OperatorGapReport rep;
  rep.gap_bound = spec.c * C;

  TZOperator ta = make_tz_operator(sys_a, z_basis, norms);

  std::vector<double> gaps(std::size_t(probes), 0.0);
  std::vector<double> pointwise(std::size_t(probes), 0.0);
#pragma omp parallel for schedule(static)
  for (int p = 0; p < probes; ++p) {
    auto eng = seeded_engine(probe_seed, std::uint64_t(p));
    std::vector<Vector> xs(static_cast<std::size_t>(N));
    xs[0] = z_basis.cols() > 0 ? Vector(z_basis * random_vector(eng, int(z_basis.cols())))
                               : Vector(Vector::Zero(d));
    for (int k = 2; k <= N; ++k) xs[std::size_t(k - 1)] = random_vector(eng, d);
    BoundedSequence x{std::move(xs), SpaceTag::YZ};

    const double gnorm = graph_norm(ta, x);
    if (gnorm <= 0) continue;
    double diff_sup = 0.0;
    double worst_point = 0.0;
    for (int m = 1; m <= N - 1; ++m) {
      const Vector dv = (sys_a->matrix(m) - sys_b->matrix(m)) * x.at(m);
      diff_sup = std::max(diff_sup, double(m + 1) * norms.eval(m + 1, dv));
      // pointwise form: ||(A_m - B_m) x||_{m+1} <= cC/(m+1) ||x||_m
      const double lhs = norms.eval(m + 1, dv);
      const double rhs = spec.c * C / double(m + 1) * norms.eval(m, x.at(m));
      if (rhs > 0) worst_point = std::max(worst_point, lhs / rhs);
      else if (lhs > 0) worst_point = std::numeric_limits<double>::infinity();
    }
    gaps[std::size_t(p)] = diff_sup / gnorm;
    pointwise[std::size_t(p)] = worst_point;
  }
  for (double g : gaps) rep.empirical_gap = std::max(rep.empirical_gap, g);
  for (double w : pointwise) rep.worst_pointwise = std::max(rep.worst_pointwise, w);
  // The pointwise form holds in the strong regime; the weak budget only
  // yields the flat cC bound.
  rep.pointwise_ok = spec.regime != PerturbationRegime::strong ||
                     rep.worst_pointwise <= 1.0 + 1e-9;
  return rep;
}

SmallnessReport smallness_condition(double gap_bound, double inv_norm_upper) {
  SmallnessReport rep;
  rep.margin = 1.0 - gap_bound * inv_norm_upper;
  rep.ok = rep.margin > 0.0;
  return rep;
}

GronwallReport gronwall_growth_check(const std::shared_ptr<const OperatorSequence>& sys_a,
                                     const std::shared_ptr<const OperatorSequence>& sys_b,
                                     const NormSequence& norms, double M, double a, double C,
                                     double c, std::uint64_t seed) {
  (void)sys_a;
  const int N = sys_b->horizon();
  const int d = sys_b->dimension();
  GronwallReport rep;
  const double mcc = M * C * c;
  rep.envelope_constant = M * std::exp(mcc);
  rep.envelope_exponent = a + mcc;

  double worst = 0.0;
  int wm = 0, wn = 0;
  auto eng = seeded_engine(seed, 0);
  for (long long n = 1; n <= N; n *= 2) {
    // transport a batch of random unit vectors from n forward
    const int batch = 4;
    std::vector<Vector> vs;
    std::vector<double> norm_at_n;
    for (int i = 0; i < batch; ++i) {
      Vector v = random_unit_vector(eng, d);
      vs.push_back(v);
      norm_at_n.push_back(norms.eval(int(n), v));
    }
    for (int m = int(n); m <= N; ++m) {
      if (m > n)
        for (auto& v : vs) v = sys_b->matrix(m - 1) * v;
      for (int i = 0; i < batch; ++i) {
        if (norm_at_n[std::size_t(i)] <= 0) continue;
        const double envelope = rep.envelope_constant *
                                std::pow(double(m) / double(n), rep.envelope_exponent) *
                                norm_at_n[std::size_t(i)];
        const double ratio = norms.eval(m, vs[std::size_t(i)]) / envelope;
        if (ratio > worst) {
          worst = ratio;
          wm = m;
          wn = int(n);
        }
      }
    }
  }
  rep.worst_violation = std::max(0.0, worst - 1.0);
  rep.worst_m = wm;
  rep.worst_n = wn;
  rep.ok = worst <= 1.0 + 1e-9;

  // Intermediate product bound: prod (1 + MCc/(j+1)) <= exp(MCc (1 + log(m/n))).
  rep.product_ok = true;
  for (long long n = 1; n <= N; n *= 2) {
    double prod = 1.0;
    for (int j = int(n); j <= N - 1; ++j) {
      prod *= 1.0 + mcc / double(j + 1);
      const double bound = std::exp(mcc * (1.0 + std::log(double(j + 1) / double(n))));
      if (prod > bound * (1.0 + 1e-12)) {
        rep.product_ok = false;
        break;
      }
    }
  }
  return rep;
}

RobustnessReport robustness_experiment(const std::shared_ptr<const OperatorSequence>& sys,
                                       const PerturbationSpec& spec,
                                       const RobustnessOptions& opts) {
  RobustnessReport rep;
  rep.c = spec.c;
  rep.regime = spec.regime;

  NormSequence base = NormSequence::base_norms();
  rep.before = certify(sys, base, opts.certify);
  if (rep.before.refused())
    throw CertificateError("robustness_experiment: unperturbed system refused certification (" +
                           rep.before.refusal_reason + ")");
  if (!rep.before.flags.strong)
    throw CertificateError("robustness_experiment needs a strong certificate");

  const auto& consts = rep.before.constants;
  rep.epsilon_used = consts.epsilon_shared;

  // Adapted norms of the strong construction, with tail certificates from
  // the fitted constants.
  TailCertificate tail;
  tail.has_decay = true;
  tail.D = consts.D_nonuniform;
  tail.lambda = consts.lambda;
  tail.epsilon = consts.epsilon;
  tail.has_growth = true;
  tail.K = consts.K;
  tail.b = consts.b;
  tail.epsilon_growth = consts.epsilon_growth;
  NormSequence adapted = NormSequence::adapted_strong(sys, rep.before.splitting, consts.lambda,
                                                      std::max(consts.b, consts.lambda),
                                                      sys->horizon(), tail);

  // Measure (C, eps) of (ln) for the adapted family.
  {
    auto eng = seeded_engine(opts.certify.seed, 0xC0);
    std::vector<Vector> samples;
    const int d = sys->dimension();
    for (int i = 0; i < d; ++i) samples.push_back(Vector::Unit(d, i));
    for (int i = 0; i < 16; ++i) samples.push_back(random_unit_vector(eng, d));
    std::vector<int> indices;
    for (long long n = 1; n <= sys->horizon(); n *= 2) indices.push_back(int(n));
    EquivalenceReport eq = check_norm_equivalence(adapted, samples, indices);
    adapted.equivalence_constants = std::make_pair(eq.C_hat, eq.eps_hat);
    rep.C_used = eq.C_hat;
  }

  // Growth envelope of A and ||T_Z^{-1}|| under the adapted norms.
  GrowthFit growth_a = fit_growth_bound(sys, adapted, opts.certify);
  const Matrix z_basis = rep.before.dim_unstable() > 0 ? Matrix(rep.before.splitting->W(1))
                                                       : Matrix(sys->dimension(), 0);
  {
    TZOperator tz = make_tz_operator(sys, z_basis, adapted);
    InvertibilityOptions iopts;
    iopts.seed = opts.certify.seed;
    InvertibilityReport inv = invertibility_report(tz, &rep.before, iopts);
    if (!inv.invertible)
      throw CertificateError("robustness_experiment: unperturbed T_Z not invertible");
    rep.inv_norm_upper = inv.inv_norm_upper;
  }

  rep.gap_bound = spec.c * rep.C_used;
  auto small = smallness_condition(rep.gap_bound, rep.inv_norm_upper);
  rep.smallness_ok = small.ok;
  rep.smallness_margin = small.margin;

  rep.seeds.resize(std::size_t(opts.num_seeds));
  std::vector<DichotomyCertificate> after(static_cast<std::size_t>(opts.num_seeds));
  std::vector<GronwallReport> gronwall(static_cast<std::size_t>(opts.num_seeds));
#pragma omp parallel for schedule(dynamic)
  for (int s = 0; s < opts.num_seeds; ++s) {
    PerturbationSpec per_seed = spec;
    per_seed.seed = mix_seed(spec.seed, std::uint64_t(s));
    auto sys_b = std::make_shared<OperatorSequence>(perturb(*sys, per_seed, &rep.before));

    SeedOutcome& out = rep.seeds[std::size_t(s)];
    out.seed = per_seed.seed;

    OperatorGapReport gap =
        operator_gap(sys, sys_b, adapted, z_basis, per_seed, opts.gap_probes,
                     mix_seed(opts.certify.seed, 0xAB00 + std::uint64_t(s)));
    out.empirical_gap = gap.empirical_gap;

    DichotomyCertificate cb = certify(sys_b, base, opts.certify);
    out.recertified = !cb.refused() && cb.flags.dichotomy;
    out.strong = cb.flags.strong;
    out.lambda = cb.constants.lambda;
    out.D = cb.constants.D;
    out.epsilon = cb.constants.epsilon;
    after[std::size_t(s)] = std::move(cb);

    GrowthFit gb = fit_growth_bound(sys_b, adapted, opts.certify);
    out.a_hat = gb.a;

    gronwall[std::size_t(s)] = gronwall_growth_check(sys, sys_b, adapted, growth_a.M, growth_a.a,
                                                     rep.C_used, spec.c,
                                                     mix_seed(77, std::uint64_t(s)));
    out.gronwall_ok = gronwall[std::size_t(s)].ok;
  }
  for (const auto& s : rep.seeds) rep.empirical_gap = std::max(rep.empirical_gap, s.empirical_gap);
  if (!after.empty()) rep.after = std::move(after.front());
  if (!gronwall.empty()) rep.gronwall = gronwall.front();

  bool all_strong = true, all_recert = true;
  for (const auto& s : rep.seeds) {
    all_strong = all_strong && s.strong;
    all_recert = all_recert && s.recertified;
  }
  rep.conclusion_strong =
      spec.regime == PerturbationRegime::strong && rep.smallness_ok && all_recert && all_strong;
  if (spec.regime == PerturbationRegime::weak)
    rep.note = "weak budget (1+eps): only the plain nonuniform dichotomy is asserted for the "
               "perturbed family; the strong conclusion needs the (2+eps) budget";
  return rep;
}

}  // namespace polydich
