#pragma once

#include "polydich/admissibility.hpp"
#include "polydich/norms.hpp"
#include "polydich/splitting.hpp"
#include "polydich/system.hpp"

namespace polydich::oracle {

/// Brute-force reference implementations, intentionally naive and serial;
/// they share no evaluation path with the main kernels and refuse inputs
/// beyond desk scale.
struct OracleConfig {
  int max_dimension = 3;
  int max_horizon = 64;
};

/// Naive left product A_{m-1} ... A_n, no caching.
Matrix dense_cocycle(const OperatorSequence& sys, int m, int n, const OracleConfig& cfg = {});

/// Assembles the squared truncation densely from the defining formula and
/// solves it with a full-pivot LU. Terminal rows come from the certificate
/// splitting (or the orthogonal complement of A(N,1) Z without one).
BoundedSequence dense_tz_solve(const TZOperator& t, const DichotomyCertificate* cert,
                               const BoundedSequence& y, const OracleConfig& cfg = {});

/// Grid minimum of ||v_s + v_u||_n over unit pairs, with local refinement.
/// An upper bound on the true gamma_n within grid resolution.
double exhaustive_gamma(const SubspacePair& pair, const NormSequence& norms, int n,
                        int grid_density = 720, const OracleConfig& cfg = {});

}  // namespace polydich::oracle
