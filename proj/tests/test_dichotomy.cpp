#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "polydich/dichotomy.hpp"
#include "polydich/error.hpp"
#include "polydich/io.hpp"
#include "polydich/oracle.hpp"

using namespace polydich;
using testutil::counterexample;
using testutil::diagonal_model;
using testutil::identity_system;
using testutil::random_triangular_gap;
using testutil::scalar_contraction;
using testutil::scalar_expansion;

namespace {
const NormSequence kBase = NormSequence::base_norms();
}

TEST_CASE("stable_subspace classifies the diagonal model") {
  auto sys = diagonal_model(1.0, 64);
  StableSubspaceResult res = stable_subspace(sys, kBase, 2);
  REQUIRE(res.basis.cols() == 1);
  CHECK(std::abs(res.basis.col(0)(0)) == doctest::Approx(1.0).epsilon(1e-10));
  bool found_minus_one = false, found_plus_one = false;
  for (double s : res.slopes) {
    if (std::abs(s + 1.0) < 0.05) found_minus_one = true;
    if (std::abs(s - 1.0) < 0.05) found_plus_one = true;
  }
  CHECK(found_minus_one);
  CHECK(found_plus_one);
}

TEST_CASE("stable_subspace refuses the identity: no gap") {
  CHECK_THROWS_AS((void)stable_subspace(identity_system(2, 64), kBase, 1), GapError);
}

TEST_CASE("stable_subspace on a block model finds the block dimension") {
  auto sys = testutil::shared_sys(make_generator(
      "block-lyapunov",
      {{"stable_rate_0", 1.0}, {"stable_rate_1", 0.7}, {"unstable_rate_0", 0.9}}, 3, 128));
  StableSubspaceResult res = stable_subspace(sys, kBase, 1);
  CHECK(res.basis.cols() == 2);
}

TEST_CASE("unstable_subspace") {
  auto sys = diagonal_model(1.0, 32);
  Matrix z(2, 1);
  z << 0, 1;
  SUBCASE("n = 1 returns Z itself") {
    Matrix w = unstable_subspace(sys, z, 1);
    CHECK(std::abs(w.col(0).dot(z.col(0))) == doctest::Approx(1.0));
  }
  SUBCASE("diagonal action preserves the axis") {
    for (int n : {4, 17, 32}) {
      Matrix w = unstable_subspace(sys, z, n);
      CHECK(std::abs(w(1, 0)) == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
  SUBCASE("trivial Z") { CHECK(unstable_subspace(sys, Matrix(2, 0), 5).cols() == 0); }
}

TEST_CASE("splitting_projection") {
  SUBCASE("orthogonal axes give diag(1, 0)") {
    SubspacePair pair;
    pair.stable_basis = Vector::Unit(2, 0);
    pair.unstable_basis = Vector::Unit(2, 1);
    Matrix p = splitting_projection(pair);
    CHECK((p - Vector::Unit(2, 0) * Vector::Unit(2, 0).transpose()).norm() <= 1e-14);
  }
  SUBCASE("oblique pair gives [[1,-1],[0,0]]") {
    SubspacePair pair;
    pair.stable_basis = Vector::Unit(2, 0);
    Vector diag(2);
    diag << 1, 1;
    pair.unstable_basis = diag.normalized();
    Matrix p = splitting_projection(pair);
    Matrix expect(2, 2);
    expect << 1, -1, 0, 0;
    CHECK((p - expect).norm() <= 1e-13);
  }
  SUBCASE("P^2 = P on random pairs") {
    auto eng = seeded_engine(9);
    for (int trial = 0; trial < 25; ++trial) {
      SubspacePair pair;
      pair.stable_basis = random_unit_vector(eng, 3);
      Matrix u(3, 2);
      u.col(0) = random_unit_vector(eng, 3);
      u.col(1) = random_unit_vector(eng, 3);
      pair.unstable_basis = orthonormal_columns(u);
      Matrix k(3, 3);
      k.col(0) = pair.stable_basis;
      k.rightCols(2) = pair.unstable_basis;
      if (singular_value_range(k).first < 1e-3) continue;
      Matrix p = splitting_projection(pair);
      CHECK((p * p - p).norm() <= 1e-9);
    }
  }
  SUBCASE("near-parallel bases are rejected") {
    SubspacePair pair;
    pair.stable_basis = Vector::Unit(2, 0);
    Vector almost(2);
    almost << 1.0, 1e-9;
    pair.unstable_basis = almost.normalized();
    CHECK_THROWS_AS((void)splitting_projection(pair), SingularError);
  }
}

TEST_CASE("verify_equivariance") {
  auto sys = diagonal_model(1.0, 32);
  Matrix z(2, 1);
  z << 0, 1;
  DichotomyCertificate cert;
  cert.horizon = 32;
  cert.dim = 2;
  cert.splitting = build_splitting(sys, z);
  SUBCASE("axis projections commute with the diagonal flow") {
    CHECK(verify_equivariance(cert, *sys) <= 1e-14);
  }
  SUBCASE("a corrupted projection shows up") {
    auto broken = std::make_shared<SplittingBundle>(*cert.splitting);
    broken->projection[2] += 0.05 * Matrix::Ones(2, 2);  // P_3
    DichotomyCertificate bad = cert;
    bad.splitting = broken;
    CHECK(verify_equivariance(bad, *sys) > 1e-3);
  }
  SUBCASE("pipeline output on a coupled system stays equivariant") {
    auto tri = random_triangular_gap(21, 3, 64);
    DichotomyCertificate c2 = certify(tri, kBase);
    REQUIRE_FALSE(c2.refused());
    CHECK(verify_equivariance(c2, *tri) <= 1e-8);
  }
}

TEST_CASE("fit_constants") {
  SUBCASE("diagonal model under base norms: lambda ~ 1, D ~ 1") {
    auto sys = diagonal_model(1.0, 64);
    Matrix z(2, 1);
    z << 0, 1;
    auto bundle = build_splitting(sys, z);
    FitResult fit = fit_constants(sys, kBase, *bundle);
    CHECK(fit.lambda >= 0.95);
    CHECK(fit.lambda <= 1.05);
    CHECK(fit.D >= 1.0);
    CHECK(fit.D <= 1.1);
    CHECK(fit.max_violation == 0.0);
  }
  SUBCASE("adapted-strong norms give constants within the sharpened bound") {
    auto sys = diagonal_model(1.0, 64);
    Matrix z(2, 1);
    z << 0, 1;
    auto bundle = build_splitting(sys, z);
    NormSequence strong = NormSequence::adapted_strong(sys, bundle, 1.0, 1.0, 64);
    FitResult fit = fit_constants(sys, strong, *bundle);
    CHECK(fit.D <= 2.0 + 1e-6);
  }
  SUBCASE("identity system has no polynomial decay") {
    auto sys = identity_system(1, 64);
    auto bundle = build_splitting(sys, Matrix(1, 0));
    CHECK_THROWS_AS((void)fit_constants(sys, kBase, *bundle), GapError);
  }
}

TEST_CASE("fit_nonuniform_constants") {
  SUBCASE("uniform model: epsilon ~ 0") {
    auto sys = diagonal_model(1.0, 128);
    Matrix z(2, 1);
    z << 0, 1;
    auto bundle = build_splitting(sys, z);
    NonuniformFitResult fit = fit_nonuniform_constants(sys, kBase, *bundle);
    CHECK(fit.epsilon <= 0.02);
    CHECK(fit.lambda == doctest::Approx(1.0).epsilon(0.05));
  }
  SUBCASE("lacunary generator: epsilon recovered within 20 percent") {
    const double eps0 = 0.2;
    auto sys = testutil::shared_sys(
        make_generator("nonuniform-diagonal", {{"lambda", 1.0}, {"epsilon", eps0}}, 2, 512));
    Matrix z(2, 1);
    z << 0, 1;
    auto bundle = build_splitting(sys, z);
    NonuniformFitResult fit = fit_nonuniform_constants(sys, kBase, *bundle);
    CHECK(fit.epsilon >= 0.8 * eps0);
    CHECK(fit.epsilon <= 1.2 * eps0);
    CHECK(fit.epsilon >= 0.0);
  }
}

TEST_CASE("fit_growth_bound") {
  SUBCASE("diagonal model: a ~ 1, M ~ 1, bounded") {
    GrowthFit g = fit_growth_bound(diagonal_model(1.0, 128), kBase);
    CHECK(g.bounded);
    CHECK(g.a == doctest::Approx(1.0).epsilon(0.05));
    CHECK(g.M == doctest::Approx(1.0).epsilon(0.05));
  }
  SUBCASE("counterexample: unbounded with the largest power of two as witness") {
    GrowthFit g = fit_growth_bound(counterexample(1024), kBase);
    CHECK_FALSE(g.bounded);
    CHECK(g.witness == 512);
    CHECK(g.single_step_peak == doctest::Approx(512.0));
  }
  SUBCASE("identity: a ~ 0, M ~ 1") {
    GrowthFit g = fit_growth_bound(identity_system(2, 64), kBase);
    CHECK(g.bounded);
    CHECK(std::abs(g.a) <= 0.01);
    CHECK(g.M == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("gamma") {
  auto sys = diagonal_model(1.0, 32);
  Matrix z(2, 1);
  z << 0, 1;
  auto bundle = build_splitting(sys, z);
  SUBCASE("orthogonal axes: sqrt(2), projection bound sqrt(2)") {
    GammaResult g = gamma(*bundle, kBase, 4);
    CHECK(g.gamma_n == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
    CHECK(g.proj_bound == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
  }
  SUBCASE("angle-theta pair: gamma = 2 sin(theta/2), against the grid oracle") {
    for (double theta : {0.3, 0.9, M_PI / 3, 2.4}) {
      SubspacePair pair;
      pair.stable_basis = Vector::Unit(2, 0);
      Vector u(2);
      u << std::cos(theta), std::sin(theta);
      pair.unstable_basis = u;
      SplittingBundle local;
      local.horizon = 1;
      local.dim = 2;
      local.stable_basis = {pair.stable_basis};
      local.unstable_basis = {pair.unstable_basis};
      local.projection = {splitting_projection(pair)};
      GammaResult g = gamma(local, kBase, 1);
      const double expect = 2.0 * std::sin(std::min(theta, M_PI - theta) / 2.0);
      CHECK(g.gamma_n == doctest::Approx(expect).epsilon(1e-10));
      CHECK(oracle::exhaustive_gamma(pair, kBase, 1) ==
            doctest::Approx(g.gamma_n).epsilon(1e-3));
    }
  }
  SUBCASE("trivial side: gamma = 2 by convention") {
    auto contraction_bundle = build_splitting(scalar_contraction(16), Matrix(1, 0));
    GammaResult g = gamma(*contraction_bundle, kBase, 3);
    CHECK(g.gamma_n == 2.0);
    CHECK(g.proj_bound == 1.0);
  }
  SUBCASE("theory lower bound is positive and honored on the diagonal model") {
    DichotomyCertificate cert = certify(sys, kBase);
    GammaResult g = gamma(*bundle, kBase, 2, &cert.constants);
    CHECK(g.N0 >= 2);
    CHECK(g.theory_lower > 0.0);
    CHECK(g.gamma_n >= g.theory_lower - 1e-9);
  }
}

TEST_CASE("polynomial Lyapunov exponents") {
  auto sys = diagonal_model(1.0, 256);
  LyapunovEntry s = polynomial_lyapunov_exponent(sys, Vector::Unit(2, 0), 1, 256);
  LyapunovEntry u = polynomial_lyapunov_exponent(sys, Vector::Unit(2, 1), 1, 256);
  CHECK(s.slope == doctest::Approx(-1.0).epsilon(0.02));
  CHECK(u.slope == doctest::Approx(1.0).epsilon(0.02));
  CHECK(s.r_squared > 0.999);

  LyapunovEntry flat = polynomial_lyapunov_exponent(identity_system(2, 64), Vector::Ones(2), 1, 64);
  CHECK(std::abs(flat.slope) <= 1e-12);

  LyapunovEntry dead = polynomial_lyapunov_exponent(counterexample(64), Vector::Ones(1), 1, 64);
  CHECK(dead.vanished);
  CHECK(dead.slope == -std::numeric_limits<double>::infinity());
}

TEST_CASE("certify flags") {
  SUBCASE("diagonal model: dichotomy + strong") {
    DichotomyCertificate cert = certify(diagonal_model(1.0, 128), kBase);
    REQUIRE_FALSE(cert.refused());
    CHECK(cert.flags.dichotomy);
    CHECK(cert.flags.strong);
    CHECK_FALSE(cert.flags.contraction);
    CHECK_FALSE(cert.flags.expansion);
    CHECK(cert.constants.lambda == doctest::Approx(1.0).epsilon(0.05));
  }
  SUBCASE("scalar contraction: contraction + strong") {
    DichotomyCertificate cert = certify(scalar_contraction(128), kBase);
    REQUIRE_FALSE(cert.refused());
    CHECK(cert.flags.contraction);
    CHECK(cert.flags.strong);
    CHECK_FALSE(cert.flags.expansion);
  }
  SUBCASE("scalar expansion: expansion") {
    DichotomyCertificate cert = certify(scalar_expansion(128), kBase);
    REQUIRE_FALSE(cert.refused());
    CHECK(cert.flags.expansion);
  }
  SUBCASE("counterexample: refused at the growth stage, no flags") {
    DichotomyCertificate cert = certify(counterexample(256), kBase);
    CHECK(cert.refused());
    CHECK(cert.refusal_stage == "growth");
    CHECK_FALSE(cert.flags.dichotomy);
    CHECK_FALSE(cert.flags.contraction);
    CHECK_FALSE(cert.flags.strong);
  }
  SUBCASE("identity: refused, no usable gap") {
    DichotomyCertificate cert = certify(identity_system(2, 64), kBase);
    CHECK(cert.refused());
    CHECK(cert.refusal_stage == "subspace");
  }
}

TEST_CASE("certificate invariants on a certified coupled system") {
  auto sys = random_triangular_gap(33, 3, 64);
  DichotomyCertificate cert = certify(sys, kBase);
  REQUIRE_FALSE(cert.refused());
  CHECK(cert.residuals.at("projection_idempotent") <= 1e-9);
  CHECK(cert.residuals.at("equivariance") <= 1e-8);
  CHECK(cert.residuals.at("transversality_sigma_min") > 1e-6);
  // ||P_n|| <= 2/gamma_n for every n
  for (int n = 1; n <= cert.horizon; ++n) {
    CHECK(cert.proj_norms[std::size_t(n - 1)] <=
          2.0 / cert.gamma[std::size_t(n - 1)] + 1e-6);
  }
  CHECK(cert.sup_proj_norm <= 2.0 / cert.diagnostics.at("min_gamma") + 1e-6);
}

TEST_CASE("certify with an admissibility run reports proof-route constants") {
  CertifyOptions opts;
  opts.with_admissibility = true;
  DichotomyCertificate cert = certify(diagonal_model(1.0, 64), kBase, opts);
  REQUIRE_FALSE(cert.refused());
  CHECK(cert.diagnostics.at("invertible") == 1.0);
  REQUIRE(cert.proof_lambda.has_value());
  REQUIRE(cert.proof_D.has_value());
  // the proof-route constants are valid but loose
  CHECK(*cert.proof_lambda <= cert.constants.lambda);
  CHECK(*cert.proof_D >= cert.constants.D);
  CHECK(cert.threshold_scale >= 2);
  // bound relation: fitted one-sided growth stays under L = max(M 2^a, M 2^{a+1} ||T^{-1}||)
  const double L = cert.diagnostics.at("proof_L");
  CHECK(cert.constants.M * std::pow(2.0, cert.constants.a) <= L + 1e-9);
}

TEST_CASE("check_contraction") {
  SUBCASE("scalar contraction passes") {
    Evidence ev = check_contraction(scalar_contraction(128), kBase);
    CHECK(ev.ok);
    CHECK(ev.data.at("outputs_bounded") == 1.0);
  }
  SUBCASE("counterexample fails on growth despite bounded kernel sums") {
    Evidence ev = check_contraction(counterexample(256), kBase);
    CHECK_FALSE(ev.ok);
    CHECK(ev.data.at("growth_bounded") == 0.0);
    // the kernel outputs themselves stay bounded: the paper's point
    CHECK(ev.data.at("worst_ratio") <= 2.0 + 1e-9);
  }
  SUBCASE("identity fails with harmonic growth evidence") {
    Evidence ev = check_contraction(identity_system(1, 128), kBase);
    CHECK_FALSE(ev.ok);
    // green_solve_contraction on y = 1 grows like the harmonic numbers
    CHECK(ev.data.at("probe_full") > ev.data.at("probe_half"));
    CHECK(ev.note == "no polynomial decay in the full cocycle");
  }
}

TEST_CASE("check_expansion") {
  SUBCASE("scalar expansion passes") {
    Evidence ev = check_expansion(scalar_expansion(64), kBase);
    CHECK(ev.ok);
  }
  SUBCASE("scalar contraction fails: no positive minimal growth") {
    Evidence ev = check_expansion(scalar_contraction(64), kBase);
    CHECK_FALSE(ev.ok);
    CHECK(ev.note == "unstable fit has no positive slope");
  }
  SUBCASE("identity fails") {
    Evidence ev = check_expansion(identity_system(1, 64), kBase);
    CHECK_FALSE(ev.ok);
  }
}

TEST_CASE("certification is deterministic") {
  auto sys = random_triangular_gap(99, 2, 48);
  DichotomyCertificate a = certify(sys, kBase);
  DichotomyCertificate b = certify(sys, kBase);
  CHECK(dump_canonical(certificate_to_json(a)) == dump_canonical(certificate_to_json(b)));
}
