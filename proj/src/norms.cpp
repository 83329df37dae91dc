#include "polydich/norms.hpp"

#include <algorithm>
#include <cmath>

#include "polydich/error.hpp"
#include "polydich/rng.hpp"

namespace polydich {

std::string to_string(NormKind k) {
  switch (k) {
    case NormKind::base: return "base";
    case NormKind::explicit_weights: return "explicit-weights";
    case NormKind::adapted_nonuniform: return "adapted-nonuniform";
    case NormKind::adapted_strong: return "adapted-strong";
  }
  return "?";
}

std::string to_string(BaseNorm b) {
  switch (b) {
    case BaseNorm::euclidean: return "euclidean";
    case BaseNorm::sup: return "sup";
    case BaseNorm::one: return "one";
  }
  return "?";
}

NormSequence NormSequence::base_norms(BaseNorm base) {
  NormSequence ns;
  ns.kind_ = NormKind::base;
  ns.base_ = base;
  ns.equivalence_constants = std::make_pair(1.0, 0.0);
  return ns;
}

NormSequence NormSequence::explicit_weights(BaseNorm base, std::vector<double> weights) {
  for (double w : weights)
    if (!(w > 0)) throw ConfigError("explicit-weights: weights must be positive");
  NormSequence ns;
  ns.kind_ = NormKind::explicit_weights;
  ns.base_ = base;
  ns.weights_ = std::move(weights);
  return ns;
}

NormSequence NormSequence::adapted_nonuniform(std::shared_ptr<const OperatorSequence> sys,
                                              std::shared_ptr<const SplittingBundle> splitting,
                                              double lambda, int eval_horizon,
                                              std::optional<TailCertificate> tail) {
  if (!sys || !splitting)
    throw ConfigError("adapted norms need a system and a splitting (projections)");
  if (lambda <= 0) throw ConfigError("adapted norms: lambda must be > 0");
  if (eval_horizon < 1 || eval_horizon > sys->horizon())
    throw ConfigError("adapted norms: eval_horizon outside {1..N}");
  NormSequence ns;
  ns.kind_ = NormKind::adapted_nonuniform;
  ns.sys_ = std::move(sys);
  ns.splitting_ = std::move(splitting);
  ns.lambda_ = lambda;
  ns.eval_horizon_ = eval_horizon;
  ns.tail_ = std::move(tail);
  return ns;
}

NormSequence NormSequence::adapted_strong(std::shared_ptr<const OperatorSequence> sys,
                                          std::shared_ptr<const SplittingBundle> splitting,
                                          double lambda, double b, int eval_horizon,
                                          std::optional<TailCertificate> tail) {
  NormSequence ns = adapted_nonuniform(std::move(sys), std::move(splitting), lambda,
                                       eval_horizon, std::move(tail));
  if (b <= 0) throw ConfigError("adapted-strong: b must be > 0");
  ns.kind_ = NormKind::adapted_strong;
  // The strong construction needs lambda <= b.
  if (ns.lambda_ > b) {
    ns.lambda_ = b;
    ns.lambda_clamped_ = true;
  }
  ns.b_ = b;
  return ns;
}

double NormSequence::base_eval(const Vector& x) const {
  switch (base_) {
    case BaseNorm::euclidean: return x.norm();
    case BaseNorm::sup: return x.size() ? x.cwiseAbs().maxCoeff() : 0.0;
    case BaseNorm::one: return x.cwiseAbs().sum();
  }
  return 0.0;
}

double NormSequence::eval(int n, const Vector& x) const { return eval_detailed(n, x).value; }

NormValue NormSequence::eval_detailed(int n, const Vector& x) const {
  if (kind_ == NormKind::base) return {base_eval(x), false};
  if (kind_ == NormKind::explicit_weights) {
    if (n < 1 || std::size_t(n) > weights_.size())
      throw std::out_of_range("weighted norm index outside the weight table");
    return {weights_[std::size_t(n - 1)] * base_eval(x), false};
  }

  const int N = sys_->horizon();
  const int H = eval_horizon_;
  if (n < 1 || n > N) throw std::out_of_range("norm index outside {1..N}");
  const auto& sp = *splitting_;
  const int du = sp.dim_unstable();

  NormValue out;

  // Stable part: sup_{m in [n..H]} ||A(m,n) P_n x|| (m/n)^lambda.
  double stable_sup = 0.0;
  double base_px = 0.0;
  {
    Vector v = sp.P(n) * x;
    base_px = base_eval(v);
    for (int m = n;; ++m) {
      stable_sup = std::max(stable_sup, base_eval(v) * std::pow(double(m) / n, lambda_));
      if (m >= H) break;
      v = sys_->matrix(m) * v;
    }
  }
  // The sup runs over all m >= n in exact terms; only a decay certificate
  // can rule the tail beyond H out.
  bool stable_tail_ok = false;
  if (tail_ && tail_->has_decay && tail_->lambda >= lambda_) {
    const double bound = tail_->D * std::pow(double(n), tail_->epsilon) * base_px *
                         std::pow(double(H + 1) / n, lambda_ - tail_->lambda);
    stable_tail_ok = stable_sup >= bound * (1.0 - 1e-12);
  }
  out.truncated = !stable_tail_ok;

  // Unstable backward part: sup_{m in [1..n]} ||A(m,n) Q_n x|| (n/m)^lambda.
  double unstable_back = 0.0;
  Vector coords;
  double base_qx = 0.0;
  if (du > 0) {
    Vector q = sp.Q(n) * x;
    base_qx = base_eval(q);
    coords = sp.W(n).transpose() * q;
    Vector c = coords;
    for (int m = n;; --m) {
      Vector vec = sp.W(m) * c;
      unstable_back = std::max(unstable_back, base_eval(vec) * std::pow(double(n) / m, lambda_));
      if (m <= 1) break;
      c = sp.unstable_step_inv[std::size_t(m - 2)] * c;
    }
  }

  double total = stable_sup + unstable_back;

  if (kind_ == NormKind::adapted_strong && du > 0) {
    // Forward unstable part: sup_{m in (n..H]} ||A(m,n) Q_n x|| (m/n)^{-b}.
    double unstable_fwd = 0.0;
    Vector c = coords;
    for (int m = n;; ++m) {
      if (m > n)
        unstable_fwd = std::max(unstable_fwd,
                                base_eval(sp.W(m) * c) * std::pow(double(m) / n, -b_));
      if (m >= H) break;
      c = sp.unstable_step[std::size_t(m - 1)] * c;
    }
    bool growth_tail_ok = false;
    if (tail_ && tail_->has_growth && tail_->b <= b_) {
      const double bound = tail_->K * std::pow(double(n), tail_->epsilon_growth) * base_qx *
                           std::pow(double(H + 1) / n, tail_->b - b_);
      growth_tail_ok = std::max(unstable_fwd, unstable_back) >= bound * (1.0 - 1e-12);
    }
    if (!growth_tail_ok) out.truncated = true;
    total += unstable_fwd;
  }

  out.value = total;
  return out;
}

double NormSequence::operator_norm(int m, int n, const Matrix& map, int samples) const {
  if (kind_ == NormKind::base || kind_ == NormKind::explicit_weights) {
    double scale = 1.0;
    if (kind_ == NormKind::explicit_weights)
      scale = weights_[std::size_t(m - 1)] / weights_[std::size_t(n - 1)];
    switch (base_) {
      case BaseNorm::euclidean: return scale * spectral_norm(map);
      case BaseNorm::sup: {
        double best = 0.0;  // induced inf-norm: max absolute row sum
        for (int i = 0; i < map.rows(); ++i) best = std::max(best, map.row(i).cwiseAbs().sum());
        return scale * best;
      }
      case BaseNorm::one: {
        double best = 0.0;  // induced 1-norm: max absolute column sum
        for (int j = 0; j < map.cols(); ++j) best = std::max(best, map.col(j).cwiseAbs().sum());
        return scale * best;
      }
    }
  }
  // Sampled estimate for the adapted kinds: canonical axes plus a fixed
  // deterministic probe set.
  const int d = int(map.cols());
  double best = 0.0;
  auto probe = [&](const Vector& x) {
    const double nx = eval(n, x);
    if (nx <= 0) return;
    best = std::max(best, eval(m, map * x) / nx);
  };
  for (int i = 0; i < d; ++i) probe(Vector::Unit(d, i));
  auto eng = seeded_engine(0x706f6c79ULL, std::uint64_t(m) << 32 | std::uint64_t(n));
  for (int s = 0; s < samples; ++s) probe(random_unit_vector(eng, d));
  return best;
}

EquivalenceReport check_norm_equivalence(const NormSequence& ns,
                                         std::span<const Vector> samples,
                                         std::span<const int> indices) {
  EquivalenceReport rep;
  if (samples.empty() || indices.empty())
    throw ConfigError("check_norm_equivalence needs samples and indices");
  std::vector<double> logm, logr;
  double worst_lower = std::numeric_limits<double>::infinity();
  double max_ratio_overall = 0.0;
  std::vector<std::pair<int, double>> per_index;
  for (int m : indices) {
    double r = 0.0;
    for (const Vector& x : samples) {
      const double bx = ns.base_eval(x);
      if (bx <= 0) continue;
      const double nx = ns.eval(m, x);
      r = std::max(r, nx / bx);
      worst_lower = std::min(worst_lower, nx / bx);
    }
    per_index.emplace_back(m, r);
    logm.push_back(std::log(double(m)));
    logr.push_back(std::log(std::max(r, 1e-300)));
    max_ratio_overall = std::max(max_ratio_overall, r);
  }
  LineFit fit = fit_line(logm, logr);
  rep.eps_hat = std::max(fit.slope, 0.0);
  double c = 0.0;
  for (auto& [m, r] : per_index) c = std::max(c, r / std::pow(double(m), rep.eps_hat));
  rep.C_hat = c;
  rep.worst_lower = worst_lower;
  rep.ok = worst_lower >= 1.0 - 1e-10;
  return rep;
}

}  // namespace polydich
