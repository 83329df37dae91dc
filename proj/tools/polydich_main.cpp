// polydich: certification of polynomial dichotomies for nonautonomous
// discrete-time linear systems, admissibility solving, Lyapunov analysis,
// and robustness experiments. All outputs are deterministic given the
// config and seed.

#include <CLI11.hpp>
#include <cstdio>
#include <iostream>
#include <memory>
#include <string>

#include "polydich/dichotomy.hpp"
#include "polydich/error.hpp"
#include "polydich/io.hpp"
#include "polydich/oracle.hpp"
#include "polydich/parallel.hpp"
#include "polydich/robustness.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitNegative = 2;

using namespace polydich;

NormSequence resolve_norms(const std::string& spec,
                           std::shared_ptr<const OperatorSequence> sys = nullptr,
                           const DichotomyCertificate* cert = nullptr) {
  if (spec == "base" || spec == "euclidean" || spec == "sup" || spec == "one")
    return norms_from_json(nlohmann::json(spec), std::move(sys), cert);
  return norms_from_json(read_json_file(spec), std::move(sys), cert);
}

void emit(const std::string& out_path, const nlohmann::json& j) {
  const std::string text = dump_canonical(j);
  if (out_path.empty() || out_path == "-")
    std::cout << text;
  else
    write_file(out_path, text);
}

int cmd_certify(const std::string& system_path, const std::string& norm_spec,
                const std::string& out_path, std::uint64_t seed) {
  auto sys = std::make_shared<OperatorSequence>(load_system(system_path));
  CertifyOptions opts;
  opts.seed = seed;
  NormSequence norms = resolve_norms(norm_spec, sys);
  DichotomyCertificate cert = certify(sys, norms, opts);
  emit(out_path, certificate_to_json(cert));
  if (cert.refused()) {
    std::cerr << "refused at stage " << cert.refusal_stage << ": " << cert.refusal_reason
              << "\n";
    return kExitNegative;
  }
  return kExitOk;
}

int cmd_solve(const std::string& system_path, const std::string& norm_spec,
              const std::string& cert_path, const std::string& rhs_path,
              const std::string& z_choice, const std::string& out_path, bool green,
              bool truncated, bool report, std::uint64_t seed) {
  if (int(green) + int(truncated) + int(report) != 1)
    throw ConfigError("pick exactly one of --green / --truncated / --report");
  auto sys = std::make_shared<OperatorSequence>(load_system(system_path));

  std::unique_ptr<DichotomyCertificate> cert;
  if (!cert_path.empty()) {
    cert = std::make_unique<DichotomyCertificate>(
        certificate_from_json(read_json_file(cert_path), sys));
  }
  NormSequence norms = resolve_norms(norm_spec, sys, cert.get());

  Matrix z_basis(sys->dimension(), 0);
  if (z_choice == "full") {
    z_basis = Matrix::Identity(sys->dimension(), sys->dimension());
  } else if (z_choice == "zero" || (z_choice == "cert" && !cert)) {
    z_basis = Matrix(sys->dimension(), 0);
  } else if (z_choice == "cert") {
    if (cert->splitting && cert->splitting->dim_unstable() > 0) z_basis = cert->splitting->W(1);
  } else {
    throw ConfigError("--Z must be zero, full, or cert");
  }
  TZOperator tz = make_tz_operator(sys, z_basis, norms);

  if (report) {
    InvertibilityOptions opts;
    opts.seed = seed;
    InvertibilityReport rep = invertibility_report(tz, cert.get(), opts);
    emit(out_path, invertibility_to_json(rep));
    if (!rep.reason.empty()) std::cerr << rep.reason << "\n";
    return kExitOk;
  }

  BoundedSequence y = sequence_from_json(read_json_file(rhs_path));
  nlohmann::json out;
  if (green) {
    if (!cert) throw ConfigError("--green needs --cert");
    GreenSolveResult res = green_solve(tz, *cert, y);
    out = sequence_to_json(res.x);
    out["max_defect"] = res.max_defect;
    out["truncated"] = res.truncated;
    out["tail_bound"] = res.tail_bound;
  } else {
    BoundedSequence x = oracle::dense_tz_solve(tz, cert.get(), y);
    out = sequence_to_json(x);
  }
  emit(out_path, out);
  return kExitOk;
}

int cmd_perturb(const std::string& system_path, double c, const std::string& regime,
                double epsilon, int seeds, const std::string& out_path, std::uint64_t seed) {
  auto sys = std::make_shared<OperatorSequence>(load_system(system_path));
  PerturbationSpec spec;
  spec.c = c;
  spec.seed = seed;
  spec.epsilon = epsilon;
  if (regime == "strong")
    spec.regime = PerturbationRegime::strong;
  else if (regime == "weak")
    spec.regime = PerturbationRegime::weak;
  else
    throw ConfigError("--regime must be strong or weak");
  RobustnessOptions opts;
  opts.num_seeds = seeds;
  opts.certify.seed = seed;
  RobustnessReport rep = robustness_experiment(sys, spec, opts);
  emit(out_path, robustness_to_json(rep));
  if (!rep.smallness_ok) {
    std::cerr << "smallness criterion failed (margin " << rep.smallness_margin << ")\n";
    return kExitNegative;
  }
  for (const auto& s : rep.seeds)
    if (!s.recertified) {
      std::cerr << "a perturbed system refused certification (seed " << s.seed << ")\n";
      return kExitNegative;
    }
  return kExitOk;
}

int cmd_lyapunov(const std::string& system_path, const std::string& out_path, int window_lo,
                 int window_hi) {
  auto sys = std::make_shared<OperatorSequence>(load_system(system_path));
  if (window_hi <= 0) window_hi = sys->horizon();
  LyapunovReport rep = lyapunov_basis_report(sys, window_lo, window_hi);
  std::string csv = "vector_index, slope, r_squared, window_lo, window_hi\n";
  char buf[160];
  for (const auto& r : rep.rows) {
    if (r.vanished)
      std::snprintf(buf, sizeof buf, "%d, -inf, 0, %d, %d\n", r.vector_index, r.window_lo,
                    r.window_hi);
    else
      std::snprintf(buf, sizeof buf, "%d, %.17g, %.17g, %d, %d\n", r.vector_index, r.slope,
                    r.r_squared, r.window_lo, r.window_hi);
    csv += buf;
  }
  if (out_path.empty() || out_path == "-")
    std::cout << csv;
  else
    write_file(out_path, csv);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"polynomial dichotomy certification via admissibility"};
  app.require_subcommand(1);

  int threads = 0;
  app.add_option("--threads", threads, "cap worker threads")->envname("POLYDICH_THREADS");

  std::string system_path, norm_spec = "base", out_path, cert_path, rhs_path;
  std::uint64_t seed = 2026;

  auto* certify_cmd = app.add_subcommand("certify", "certify a polynomial dichotomy");
  certify_cmd->add_option("--system", system_path, "system spec JSON")->required();
  certify_cmd->add_option("--norms", norm_spec, "norm spec (base|sup|one or JSON path)");
  certify_cmd->add_option("--out", out_path, "certificate output path");
  certify_cmd->add_option("--seed", seed, "probe seed");

  auto* solve_cmd = app.add_subcommand("solve", "apply or invert the admissibility operator");
  bool green = false, truncated = false, report = false;
  std::string z_choice = "cert";
  solve_cmd->add_option("--system", system_path, "system spec JSON")->required();
  solve_cmd->add_option("--norms", norm_spec, "norm spec");
  solve_cmd->add_option("--cert", cert_path, "certificate JSON");
  solve_cmd->add_option("--rhs", rhs_path, "right-hand side sequence (Y_0)");
  solve_cmd->add_option("--Z", z_choice, "zero | full | cert");
  solve_cmd->add_option("--out", out_path, "output path");
  solve_cmd->add_option("--seed", seed, "probe seed");
  solve_cmd->add_flag("--green", green, "solve through the explicit kernel");
  solve_cmd->add_flag("--truncated", truncated, "dense solve of the truncation (desk scale)");
  solve_cmd->add_flag("--report", report, "invertibility report");

  auto* perturb_cmd = app.add_subcommand("perturb", "robustness experiment");
  double c = 0.0, epsilon = 0.0;
  int seeds = 32;
  std::string regime = "strong";
  perturb_cmd->add_option("--system", system_path, "system spec JSON")->required();
  perturb_cmd->add_option("--c", c, "perturbation budget constant")->required();
  perturb_cmd->add_option("--regime", regime, "strong | weak");
  perturb_cmd->add_option("--epsilon", epsilon, "budget exponent offset");
  perturb_cmd->add_option("--seeds", seeds, "ensemble size");
  perturb_cmd->add_option("--out", out_path, "report output path");
  perturb_cmd->add_option("--seed", seed, "base seed");

  auto* lyap_cmd = app.add_subcommand("lyapunov", "polynomial Lyapunov exponents of the basis");
  int window_lo = 1, window_hi = 0;
  lyap_cmd->add_option("--system", system_path, "system spec JSON")->required();
  lyap_cmd->add_option("--out", out_path, "CSV output path");
  lyap_cmd->add_option("--window-lo", window_lo, "window start");
  lyap_cmd->add_option("--window-hi", window_hi, "window end (default: horizon)");

  CLI11_PARSE(app, argc, argv);
  polydich::set_max_threads(threads);

  try {
    if (certify_cmd->parsed()) return cmd_certify(system_path, norm_spec, out_path, seed);
    if (solve_cmd->parsed())
      return cmd_solve(system_path, norm_spec, cert_path, rhs_path, z_choice, out_path, green,
                       truncated, report, seed);
    if (perturb_cmd->parsed())
      return cmd_perturb(system_path, c, regime, epsilon, seeds, out_path, seed);
    if (lyap_cmd->parsed()) return cmd_lyapunov(system_path, out_path, window_lo, window_hi);
  } catch (const polydich::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}
