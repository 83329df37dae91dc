#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "polydich/error.hpp"
#include "polydich/io.hpp"
#include "polydich/robustness.hpp"

using namespace polydich;
using testutil::diagonal_model;

namespace {
const NormSequence kBase = NormSequence::base_norms();

NormSequence adapted_for(const std::shared_ptr<const OperatorSequence>& sys,
                         const DichotomyCertificate& cert) {
  NormSequence ns = NormSequence::adapted_strong(sys, cert.splitting, cert.constants.lambda,
                                                 std::max(cert.constants.b, cert.constants.lambda),
                                                 sys->horizon());
  auto eng = seeded_engine(1);
  std::vector<Vector> samples;
  for (int i = 0; i < 2; ++i) samples.push_back(Vector::Unit(2, i));
  for (int i = 0; i < 12; ++i) samples.push_back(random_unit_vector(eng, 2));
  std::vector<int> indices;
  for (int n = 1; n <= sys->horizon(); n *= 2) indices.push_back(n);
  EquivalenceReport eq = check_norm_equivalence(ns, samples, indices);
  ns.equivalence_constants = std::make_pair(eq.C_hat, eq.eps_hat);
  return ns;
}
}  // namespace

TEST_CASE("perturbation budgets") {
  auto sys = diagonal_model(1.0, 32);
  PerturbationSpec spec;
  spec.c = 0.1;
  spec.epsilon = 0.0;
  spec.seed = 5;

  SUBCASE("c = 0 reproduces the system exactly") {
    spec.c = 0.0;
    OperatorSequence b = perturb(*sys, spec);
    for (int m = 1; m < 32; ++m) CHECK((b.matrix(m) - sys->matrix(m)).norm() == 0.0);
  }
  SUBCASE("strong budget at m = 3 is c/16, saturated") {
    OperatorSequence b = perturb(*sys, spec);
    const double gap = spectral_norm(sys->matrix(3) - b.matrix(3));
    CHECK(gap == doctest::Approx(0.1 / 16.0).epsilon(1e-10));
  }
  SUBCASE("weak budget at m = 3 is c/4") {
    spec.regime = PerturbationRegime::weak;
    OperatorSequence b = perturb(*sys, spec);
    CHECK(spectral_norm(sys->matrix(3) - b.matrix(3)) == doctest::Approx(0.1 / 4.0).epsilon(1e-10));
  }
  SUBCASE("every index saturates the budget") {
    OperatorSequence b = perturb(*sys, spec);
    for (int m = 1; m < 32; ++m) {
      const double gap = spectral_norm(sys->matrix(m) - b.matrix(m));
      CHECK(gap == doctest::Approx(spec.budget(m)).epsilon(1e-10));
    }
  }
  SUBCASE("deterministic in the seed") {
    OperatorSequence b1 = perturb(*sys, spec);
    OperatorSequence b2 = perturb(*sys, spec);
    for (int m = 1; m < 32; ++m) CHECK((b1.matrix(m) - b2.matrix(m)).norm() == 0.0);
  }
  SUBCASE("explicit deltas over budget are rejected with the worst index") {
    PerturbationSpec ex = spec;
    ex.mode = PerturbationMode::explicit_deltas;
    ex.explicit_deltas.assign(31, Matrix::Zero(2, 2));
    ex.explicit_deltas[6](0, 1) = 1.0;  // way over c/(8)^2 at m = 7
    CHECK_THROWS_WITH_AS((void)perturb(*sys, ex), doctest::Contains("m = 7"), ConfigError);
  }
  SUBCASE("explicit deltas within budget are applied") {
    PerturbationSpec ex = spec;
    ex.mode = PerturbationMode::explicit_deltas;
    ex.explicit_deltas.assign(31, Matrix::Zero(2, 2));
    ex.explicit_deltas[2] = 0.5 * ex.budget(3) * Matrix::Identity(2, 2);
    OperatorSequence b = perturb(*sys, ex);
    CHECK((b.matrix(3) - sys->matrix(3) - ex.explicit_deltas[2]).norm() == 0.0);
  }
}

TEST_CASE("operator_gap") {
  const int N = 64;
  auto sys = diagonal_model(1.0, N);
  DichotomyCertificate cert = certify(sys, kBase);
  REQUIRE_FALSE(cert.refused());
  NormSequence adapted = adapted_for(sys, cert);
  Matrix z = cert.splitting->W(1);

  PerturbationSpec spec;
  spec.c = 0.05;
  spec.seed = 11;

  SUBCASE("B = A gives zero gap") {
    PerturbationSpec zero = spec;
    zero.c = 0.0;
    auto same = std::make_shared<OperatorSequence>(perturb(*sys, zero));
    OperatorGapReport rep = operator_gap(sys, same, adapted, z, zero);
    CHECK(rep.empirical_gap == 0.0);
    CHECK(rep.gap_bound == 0.0);
  }
  SUBCASE("empirical gap stays below c C") {
    auto pert = std::make_shared<OperatorSequence>(perturb(*sys, spec));
    OperatorGapReport rep = operator_gap(sys, pert, adapted, z, spec);
    CHECK(rep.gap_bound == doctest::Approx(spec.c * adapted.equivalence_constants->first));
    CHECK(rep.empirical_gap <= rep.gap_bound * (1.0 + 1e-9));
    CHECK(rep.pointwise_ok);
  }
  SUBCASE("doubling c doubles the bound") {
    PerturbationSpec twice = spec;
    twice.c = 2 * spec.c;
    auto pert = std::make_shared<OperatorSequence>(perturb(*sys, twice));
    OperatorGapReport rep = operator_gap(sys, pert, adapted, z, twice);
    CHECK(rep.gap_bound == doctest::Approx(2.0 * spec.c * adapted.equivalence_constants->first));
  }
  SUBCASE("missing equivalence constants are a configuration error") {
    NormSequence bare = NormSequence::adapted_strong(sys, cert.splitting, 1.0, 1.0, N);
    auto pert = std::make_shared<OperatorSequence>(perturb(*sys, spec));
    CHECK_THROWS_AS((void)operator_gap(sys, pert, bare, z, spec), ConfigError);
  }
}

TEST_CASE("smallness_condition arithmetic") {
  CHECK(smallness_condition(0.0, 5.0).ok);
  CHECK(smallness_condition(0.0, 5.0).margin == 1.0);
  auto mid = smallness_condition(0.5, 1.5);
  CHECK(mid.ok);
  CHECK(mid.margin == doctest::Approx(0.25));
  CHECK_FALSE(smallness_condition(0.5, 2.0).ok);
  CHECK_FALSE(smallness_condition(2.0, 1.0).ok);
}

TEST_CASE("gronwall_growth_check") {
  const int N = 64;
  auto sys = diagonal_model(1.0, N);
  DichotomyCertificate cert = certify(sys, kBase);
  NormSequence adapted = adapted_for(sys, cert);
  GrowthFit growth = fit_growth_bound(sys, adapted);

  SUBCASE("c = 0 reduces to the plain growth envelope") {
    GronwallReport rep = gronwall_growth_check(sys, sys, adapted, growth.M, growth.a,
                                               adapted.equivalence_constants->first, 0.0);
    CHECK(rep.ok);
    CHECK(rep.envelope_constant == doctest::Approx(growth.M));
    CHECK(rep.envelope_exponent == doctest::Approx(growth.a));
    CHECK(rep.product_ok);
  }
  SUBCASE("saturated perturbation passes with slack") {
    PerturbationSpec spec;
    spec.c = 0.05;
    spec.seed = 3;
    auto pert = std::make_shared<OperatorSequence>(perturb(*sys, spec));
    GronwallReport rep = gronwall_growth_check(sys, pert, adapted, growth.M, growth.a,
                                               adapted.equivalence_constants->first, spec.c);
    CHECK(rep.ok);
    CHECK(rep.worst_violation == 0.0);
    CHECK(rep.product_ok);
  }
}

TEST_CASE("robustness_experiment") {
  const int N = 64;
  auto sys = diagonal_model(1.0, N);
  RobustnessOptions opts;
  opts.num_seeds = 4;
  opts.gap_probes = 16;

  SUBCASE("c = 0: identical certificates before and after") {
    PerturbationSpec spec;
    spec.c = 0.0;
    RobustnessReport rep = robustness_experiment(sys, spec, opts);
    CHECK(rep.smallness_ok);
    CHECK(dump_canonical(certificate_to_json(rep.before)) ==
          dump_canonical(certificate_to_json(rep.after)));
    CHECK(rep.empirical_gap == 0.0);
  }
  SUBCASE("small c recertifies strong across seeds") {
    PerturbationSpec spec;
    spec.c = 0.02;
    spec.seed = 17;
    RobustnessReport rep = robustness_experiment(sys, spec, opts);
    CHECK(rep.smallness_ok);
    CHECK(rep.conclusion_strong);
    for (const auto& s : rep.seeds) {
      CHECK(s.recertified);
      CHECK(s.strong);
      CHECK(s.gronwall_ok);
    }
    CHECK(rep.empirical_gap <= rep.gap_bound * (1 + 1e-9));
  }
  SUBCASE("weak regime refrains from the strong conclusion") {
    PerturbationSpec spec;
    spec.c = 0.02;
    spec.regime = PerturbationRegime::weak;
    RobustnessReport rep = robustness_experiment(sys, spec, opts);
    CHECK_FALSE(rep.conclusion_strong);
    CHECK(rep.note.find("weak budget") != std::string::npos);
  }
  SUBCASE("certificate continuity as c decreases") {
    double prev_dev = std::numeric_limits<double>::infinity();
    for (double c : {0.08, 0.04, 0.02}) {
      PerturbationSpec spec;
      spec.c = c;
      spec.seed = 23;
      RobustnessReport rep = robustness_experiment(sys, spec, opts);
      double dev = 0.0;
      for (const auto& s : rep.seeds)
        dev = std::max(dev, std::abs(s.lambda - rep.before.constants.lambda) +
                                std::abs(s.D - rep.before.constants.D));
      CHECK(dev <= prev_dev + 1e-9);
      prev_dev = dev;
    }
  }
  SUBCASE("non-strong systems are rejected up front") {
    PerturbationSpec spec;
    spec.c = 0.01;
    CHECK_THROWS_AS((void)robustness_experiment(testutil::counterexample(64), spec, opts),
                    CertificateError);
  }
}
