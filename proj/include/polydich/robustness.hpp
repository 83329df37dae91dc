#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "polydich/dichotomy.hpp"
#include "polydich/norms.hpp"
#include "polydich/splitting.hpp"
#include "polydich/system.hpp"

namespace polydich {

enum class PerturbationMode { random_direction, adversarial_aligned, explicit_deltas };
enum class PerturbationRegime { strong, weak };

std::string to_string(PerturbationRegime r);

struct PerturbationSpec {
  double c = 0.0;
  double epsilon = 0.0;  // the certificate's reconciled epsilon
  PerturbationMode mode = PerturbationMode::random_direction;
  PerturbationRegime regime = PerturbationRegime::strong;
  std::uint64_t seed = 1;
  std::vector<Matrix> explicit_deltas;  // explicit mode only

  /// c/(m+1)^{2+eps} in the strong regime, c/(m+1)^{1+eps} in the weak one.
  double budget(int m) const;
};

/// B_m = A_m + budget(m) E_m with ||E_m|| = 1. random_direction saturates the
/// budget exactly; adversarial_aligned pushes along the stable-to-unstable
/// coupling direction of the certificate (heuristic); explicit deltas are
/// validated against the budget and rejected with the worst index otherwise.
OperatorSequence perturb(const OperatorSequence& sys, const PerturbationSpec& spec,
                         const DichotomyCertificate* cert = nullptr);

struct OperatorGapReport {
  double gap_bound = 0.0;      // c C, from (ln)
  double empirical_gap = 0.0;  // max ||(T - T~) x||_inf / ||x||_{T_Z}
  bool pointwise_ok = true;    // per-step bound cC/(m+1) ||x||_m on probes
  double worst_pointwise = 0.0;
};

/// Bounds ||T_Z - T~_Z|| for the perturbed pair. Requires
/// norms.equivalence_constants to be set.
OperatorGapReport operator_gap(const std::shared_ptr<const OperatorSequence>& sys_a,
                               const std::shared_ptr<const OperatorSequence>& sys_b,
                               const NormSequence& norms, const Matrix& z_basis,
                               const PerturbationSpec& spec, int probes = 64,
                               std::uint64_t probe_seed = 77);

struct SmallnessReport {
  bool ok = false;
  double margin = 0.0;  // 1 - gap_bound * inv_norm_upper
};

/// Neumann-series transfer criterion: the perturbed operator stays
/// invertible when gap_bound * ||T_Z^{-1}|| < 1. An estimate, not a proof.
SmallnessReport smallness_condition(double gap_bound, double inv_norm_upper);

struct GronwallReport {
  bool ok = false;
  double worst_violation = 0.0;  // max ratio over the envelope, minus 1
  int worst_m = 0, worst_n = 0;
  bool product_ok = false;       // prod (1 + MCc/(j+1)) <= exp(MCc (1 + log(m/n)))
  double envelope_constant = 0.0;   // M e^{MCc}
  double envelope_exponent = 0.0;   // a + MCc
};

/// Checks the induction bound for the perturbed cocycle on a grid of
/// (m, n, x) samples: ||B(m,n) x||_m <= M e^{MCc} (m/n)^{a+MCc} ||x||_n.
GronwallReport gronwall_growth_check(const std::shared_ptr<const OperatorSequence>& sys_a,
                                     const std::shared_ptr<const OperatorSequence>& sys_b,
                                     const NormSequence& norms, double M, double a, double C,
                                     double c, std::uint64_t seed = 99);

struct SeedOutcome {
  std::uint64_t seed = 0;
  bool recertified = false;
  bool strong = false;
  double lambda = 0.0;
  double D = 0.0;
  double epsilon = 0.0;
  double a_hat = 0.0;        // growth exponent of B in the A-adapted norms
  double empirical_gap = 0.0;
  bool gronwall_ok = false;
};

struct RobustnessOptions {
  int num_seeds = 32;
  CertifyOptions certify;
  int gap_probes = 64;
};

struct RobustnessReport {
  double c = 0.0;
  PerturbationRegime regime = PerturbationRegime::strong;
  double gap_bound = 0.0;
  double empirical_gap = 0.0;  // max over seeds
  bool smallness_ok = false;
  double smallness_margin = 0.0;
  double inv_norm_upper = 0.0;
  double C_used = 0.0;
  double epsilon_used = 0.0;
  DichotomyCertificate before;
  DichotomyCertificate after;  // first seed
  GronwallReport gronwall;     // first seed
  std::vector<SeedOutcome> seeds;
  bool conclusion_strong = false;
  std::string note;
};

/// Full Thm-5.1-style experiment: adapted norms, gap, smallness, perturbed
/// re-certification and the Gronwall envelope, over an ensemble of seeds.
RobustnessReport robustness_experiment(const std::shared_ptr<const OperatorSequence>& sys,
                                       const PerturbationSpec& spec,
                                       const RobustnessOptions& opts = {});

}  // namespace polydich
