#pragma once

#include <nlohmann/json.hpp>
#include <memory>
#include <string>

#include "polydich/admissibility.hpp"
#include "polydich/dichotomy.hpp"
#include "polydich/norms.hpp"
#include "polydich/robustness.hpp"
#include "polydich/splitting.hpp"
#include "polydich/system.hpp"

namespace polydich {

/// Deterministic serialization: object keys sorted, floats printed as
/// decimals with 17 significant digits, two-space indentation.
std::string dump_canonical(const nlohmann::json& j);
void write_file(const std::string& path, const std::string& contents);
nlohmann::json read_json_file(const std::string& path);

// System spec files: either {"dimension", "horizon", "generator": {...}} or
// {"dimension", "horizon", "matrices": [[row-major d x d], ...]} with
// matrices[i] = A_{i+1}. Unknown fields are rejected.
OperatorSequence load_system(const std::string& path);
OperatorSequence system_from_json(const nlohmann::json& j);
nlohmann::json system_to_json(const OperatorSequence& sys, bool materialize = false);

// Sequence files: {"entries": [[...d floats...], ...], "tag": "Y0"|"YZ"|"Y"}.
// YZ entries are validated against z_basis when one is supplied.
BoundedSequence sequence_from_json(const nlohmann::json& j, const Matrix* z_basis = nullptr);
nlohmann::json sequence_to_json(const BoundedSequence& seq);

nlohmann::json certificate_to_json(const DichotomyCertificate& cert);
DichotomyCertificate certificate_from_json(const nlohmann::json& j,
                                           std::shared_ptr<const OperatorSequence> sys);

nlohmann::json invertibility_to_json(const InvertibilityReport& rep);
nlohmann::json robustness_to_json(const RobustnessReport& rep);

/// Norm spec: {"kind": ..., "base": ..., "lambda": ..., "b": ...,
/// "eval_horizon": ..., "weights": [...]}; adapted kinds need the system and
/// a certificate for the projections.
NormSequence norms_from_json(const nlohmann::json& j,
                             std::shared_ptr<const OperatorSequence> sys = nullptr,
                             const DichotomyCertificate* cert = nullptr);

/// Rebuilds the splitting bundle of a certificate from its serialized
/// projections plus the system (bases from range/kernel, steps recomputed).
std::shared_ptr<SplittingBundle> splitting_from_projections(
    const std::shared_ptr<const OperatorSequence>& sys, const std::vector<Matrix>& projections);

}  // namespace polydich
