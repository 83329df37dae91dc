#include "polydich/system.hpp"

#include <cmath>
#include <stdexcept>

#include "polydich/error.hpp"
#include "polydich/io.hpp"

namespace polydich {

namespace {

bool finite(const Matrix& m) { return m.allFinite(); }

bool is_power_of_two(long n) { return n >= 2 && (n & (n - 1)) == 0; }

double get_param(const std::map<std::string, double>& params, const std::string& key,
                 std::optional<double> fallback = std::nullopt) {
  auto it = params.find(key);
  if (it != params.end()) return it->second;
  if (fallback) return *fallback;
  throw ConfigError("generator parameter missing: " + key);
}

std::vector<double> rate_list(const std::map<std::string, double>& params,
                              const std::string& prefix) {
  std::vector<double> rates;
  for (int i = 0;; ++i) {
    auto it = params.find(prefix + std::to_string(i));
    if (it == params.end()) break;
    rates.push_back(it->second);
  }
  return rates;
}

}  // namespace

OperatorSequence::OperatorSequence(int dimension, int horizon, std::vector<Matrix> entries,
                                   std::optional<GeneratorSpec> provenance)
    : dim_(dimension), horizon_(horizon), entries_(std::move(entries)),
      provenance_(std::move(provenance)) {
  if (dim_ < 1) throw ConfigError("dimension must be positive");
  if (horizon_ < 2) throw ConfigError("horizon must be at least 2");
  if (entries_.size() != std::size_t(horizon_ - 1))
    throw ConfigError("expected horizon-1 matrices, got " + std::to_string(entries_.size()));
  for (const Matrix& a : entries_) {
    if (a.rows() != dim_ || a.cols() != dim_ || !finite(a))
      throw ConfigError("every entry must be a finite d x d matrix");
  }
}

const Matrix& OperatorSequence::matrix(int m) const {
  if (m < 1 || m > horizon_ - 1)
    throw std::out_of_range("operator index " + std::to_string(m) + " outside {1.." +
                            std::to_string(horizon_ - 1) + "}");
  return entries_[std::size_t(m - 1)];
}

OperatorSequence make_generator(const std::string& kind,
                                const std::map<std::string, double>& params, int dimension,
                                int horizon) {
  GeneratorSpec spec{kind, params};
  std::vector<Matrix> entries;
  entries.reserve(std::size_t(std::max(0, horizon - 1)));

  if (kind == "diagonal-poly") {
    const double lambda = get_param(params, "lambda");
    const double lambda_u = get_param(params, "lambda_u", lambda);
    if (lambda <= 0) throw ConfigError("diagonal-poly: stable rate lambda must be > 0");
    if (lambda_u <= 0) throw ConfigError("diagonal-poly: unstable rate lambda_u must be > 0");
    const int ds = int(get_param(params, "stable_dim", dimension > 1 ? dimension / 2 : 1));
    if (ds < 0 || ds > dimension) throw ConfigError("diagonal-poly: stable_dim out of range");
    for (int m = 1; m < horizon; ++m) {
      Matrix a = Matrix::Zero(dimension, dimension);
      const double contract = std::pow(double(m) / double(m + 1), lambda);
      const double expand = std::pow(double(m + 1) / double(m), lambda_u);
      for (int i = 0; i < dimension; ++i) a(i, i) = (i < ds) ? contract : expand;
      entries.push_back(a);
    }
    return OperatorSequence(dimension, horizon, std::move(entries), spec);
  }

  if (kind == "block-lyapunov") {
    const std::vector<double> stable = rate_list(params, "stable_rate_");
    const std::vector<double> unstable = rate_list(params, "unstable_rate_");
    const int d = int(stable.size() + unstable.size());
    if (d == 0) throw ConfigError("block-lyapunov: no rates given");
    if (dimension != d)
      throw ConfigError("block-lyapunov: dimension does not match rate count");
    for (double r : stable)
      if (r <= 0) throw ConfigError("block-lyapunov: stable rates must be > 0");
    for (double r : unstable)
      if (r <= 0) throw ConfigError("block-lyapunov: unstable rates must be > 0");
    for (int m = 1; m < horizon; ++m) {
      Matrix a = Matrix::Zero(d, d);
      int i = 0;
      for (double r : stable) a(i, i) = std::pow(double(m) / double(m + 1), r), ++i;
      for (double r : unstable) a(i, i) = std::pow(double(m + 1) / double(m), r), ++i;
      entries.push_back(a);
    }
    return OperatorSequence(d, horizon, std::move(entries), spec);
  }

  if (kind == "power2-counterexample") {
    // Scalar sequence: A_n = n on {2, 4, 8, ...}, zero elsewhere. n = 1 is
    // excluded (the exponent l runs over {1, 2, ...}).
    for (int m = 1; m < horizon; ++m) {
      Matrix a(1, 1);
      a(0, 0) = is_power_of_two(m) ? double(m) : 0.0;
      entries.push_back(a);
    }
    return OperatorSequence(1, horizon, std::move(entries), spec);
  }

  if (kind == "nonuniform-diagonal") {
    // Stable rate carries a lacunary dip h(n) = n^{-eps} on n = 2^l, so that
    // the transported product satisfies |A(m,n) e_s| = (m/n)^{-lambda} h(m)/h(n):
    // the constant needed at a lacunary start n is exactly n^eps, while the
    // overall polynomial growth envelope stays intact.
    const double lambda = get_param(params, "lambda");
    const double eps = get_param(params, "epsilon");
    const double lambda_u = get_param(params, "lambda_u", lambda);
    if (lambda <= 0) throw ConfigError("nonuniform-diagonal: lambda must be > 0");
    if (eps < 0) throw ConfigError("nonuniform-diagonal: epsilon must be >= 0");
    if (dimension != 2) throw ConfigError("nonuniform-diagonal: dimension must be 2");
    auto dip = [eps](int n) {
      return is_power_of_two(n) ? std::pow(double(n), -eps) : 1.0;
    };
    for (int m = 1; m < horizon; ++m) {
      Matrix a = Matrix::Zero(2, 2);
      a(0, 0) = std::pow(double(m) / double(m + 1), lambda) * dip(m + 1) / dip(m);
      a(1, 1) = std::pow(double(m + 1) / double(m), lambda_u);
      entries.push_back(a);
    }
    return OperatorSequence(2, horizon, std::move(entries), spec);
  }

  if (kind == "explicit-file") {
    throw ConfigError("explicit-file: use make_generator_from_file / load_system");
  }

  throw ConfigError("unknown generator kind: " + kind);
}

OperatorSequence make_generator_from_file(const std::string& path) {
  return load_system(path);
}

Cocycle::Cocycle(std::shared_ptr<const OperatorSequence> sys) : sys_(std::move(sys)) {
  if (!sys_) throw ConfigError("cocycle requires an operator sequence");
}

Matrix Cocycle::operator()(int m, int n) const {
  const int N = sys_->horizon();
  if (n < 1 || m > N)
    throw std::out_of_range("cocycle indices outside {1.." + std::to_string(N) + "}");
  if (m < n)
    throw std::invalid_argument(
        "cocycle(m, n) requires m >= n; backward transport is only defined on the "
        "unstable bundle, use cocycle_on_unstable");
  const int d = sys_->dimension();
  if (m == n) return Matrix::Identity(d, d);

  // Split at the smallest dyadic anchor >= n when it helps; the remaining
  // short product A(anchor, n) has fewer than n factors.
  int anchor = 1;
  while (anchor < n) anchor *= 2;
  if (anchor <= m && anchor > n) {
    Matrix head = Matrix::Identity(d, d);
    for (int j = n; j < anchor; ++j) head = sys_->matrix(j) * head;
    if (anchor == m) return head;
    return anchored(m, anchor) * head;
  }
  if (anchor == n) return anchored(m, anchor);
  Matrix prod = Matrix::Identity(d, d);
  for (int j = n; j < m; ++j) prod = sys_->matrix(j) * prod;
  return prod;
}

Matrix Cocycle::anchored(int m, int anchor) const {
  const int d = sys_->dimension();
  int base = anchor;
  Matrix acc = Matrix::Identity(d, d);
  {
    std::lock_guard<std::mutex> lock(mu_);
    auto row = cache_.find(anchor);
    if (row != cache_.end() && !row->second.empty()) {
      // Extend from the largest cached product at or below m.
      auto it = row->second.upper_bound(m);
      if (it != row->second.begin()) {
        --it;
        base = it->first;
        acc = it->second;
      }
    }
  }
  for (int j = base; j < m; ++j) acc = sys_->matrix(j) * acc;
  if (m > anchor) {
    std::lock_guard<std::mutex> lock(mu_);
    cache_[anchor].emplace(m, acc);
  }
  return acc;
}

}  // namespace polydich
