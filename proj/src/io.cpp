#include "polydich/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "polydich/error.hpp"

namespace polydich {

using nlohmann::json;

namespace {

void dump_rec(const json& j, std::string& out, int indent) {
  const std::string pad(std::size_t(indent) * 2, ' ');
  const std::string pad_in(std::size_t(indent + 1) * 2, ' ');
  switch (j.type()) {
    case json::value_t::object: {
      if (j.empty()) {
        out += "{}";
        return;
      }
      out += "{\n";
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) out += ",\n";
        first = false;
        out += pad_in + json(it.key()).dump() + ": ";
        dump_rec(it.value(), out, indent + 1);
      }
      out += "\n" + pad + "}";
      return;
    }
    case json::value_t::array: {
      if (j.empty()) {
        out += "[]";
        return;
      }
      out += "[\n";
      bool first = true;
      for (const auto& v : j) {
        if (!first) out += ",\n";
        first = false;
        out += pad_in;
        dump_rec(v, out, indent + 1);
      }
      out += "\n" + pad + "]";
      return;
    }
    case json::value_t::number_float: {
      const double v = j.get<double>();
      if (!std::isfinite(v)) throw ConfigError("cannot serialize non-finite float");
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.17g", v);
      out += buf;
      return;
    }
    default:
      out += j.dump();
      return;
  }
}

std::vector<double> as_double_list(const json& j, const std::string& what) {
  if (!j.is_array()) throw ConfigError(what + " must be an array");
  std::vector<double> out;
  for (const auto& v : j) {
    if (!v.is_number()) throw ConfigError(what + " must contain numbers");
    out.push_back(v.get<double>());
  }
  return out;
}

Matrix matrix_from_row_major(const std::vector<double>& vals, int rows, int cols,
                             const std::string& what) {
  if (int(vals.size()) != rows * cols)
    throw ConfigError(what + ": expected " + std::to_string(rows * cols) + " entries, got " +
                      std::to_string(vals.size()));
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = vals[std::size_t(i * cols + j)];
  return m;
}

json matrix_to_row_major(const Matrix& m) {
  json arr = json::array();
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j) arr.push_back(m(i, j));
  return arr;
}

void reject_unknown(const json& j, std::initializer_list<const char*> allowed,
                    const std::string& what) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed)
      if (it.key() == k) ok = true;
    if (!ok) throw ConfigError(what + ": unknown field \"" + it.key() + "\"");
  }
}

}  // namespace

std::string dump_canonical(const json& j) {
  std::string out;
  dump_rec(j, out, 0);
  out += "\n";
  return out;
}

void write_file(const std::string& path, const std::string& contents) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open for writing: " + path);
  f << contents;
  if (!f) throw ConfigError("write failed: " + path);
}

json read_json_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open: " + path);
  json j;
  try {
    f >> j;
  } catch (const json::parse_error& e) {
    throw ConfigError("malformed JSON in " + path + ": " + e.what());
  }
  return j;
}

OperatorSequence system_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("system spec must be an object");
  reject_unknown(j, {"dimension", "horizon", "generator", "matrices"}, "system spec");
  if (!j.contains("dimension") || !j.contains("horizon"))
    throw ConfigError("system spec needs dimension and horizon");
  const int d = j.at("dimension").get<int>();
  const int N = j.at("horizon").get<int>();

  if (j.contains("generator") == j.contains("matrices"))
    throw ConfigError("system spec needs exactly one of generator / matrices");

  if (j.contains("generator")) {
    const json& g = j.at("generator");
    reject_unknown(g, {"kind", "params"}, "generator");
    std::map<std::string, double> params;
    if (g.contains("params"))
      for (auto it = g.at("params").begin(); it != g.at("params").end(); ++it)
        params[it.key()] = it.value().get<double>();
    return make_generator(g.at("kind").get<std::string>(), params, d, N);
  }

  const json& ms = j.at("matrices");
  if (!ms.is_array() || int(ms.size()) != N - 1)
    throw ConfigError("matrices must list horizon-1 entries (matrices[i] = A_{i+1})");
  std::vector<Matrix> entries;
  for (int i = 0; i < N - 1; ++i)
    entries.push_back(
        matrix_from_row_major(as_double_list(ms[std::size_t(i)], "matrix"), d, d, "matrix"));
  return OperatorSequence(d, N, std::move(entries));
}

OperatorSequence load_system(const std::string& path) {
  return system_from_json(read_json_file(path));
}

json system_to_json(const OperatorSequence& sys, bool materialize) {
  json j;
  j["dimension"] = sys.dimension();
  j["horizon"] = sys.horizon();
  if (sys.provenance() && !materialize) {
    json g;
    g["kind"] = sys.provenance()->kind;
    json p = json::object();
    for (const auto& [k, v] : sys.provenance()->params) p[k] = v;
    g["params"] = p;
    j["generator"] = g;
  } else {
    json ms = json::array();
    for (int m = 1; m <= sys.horizon() - 1; ++m) ms.push_back(matrix_to_row_major(sys.matrix(m)));
    j["matrices"] = ms;
  }
  return j;
}

BoundedSequence sequence_from_json(const json& j, const Matrix* z_basis) {
  if (!j.is_object()) throw ConfigError("sequence file must be an object");
  reject_unknown(j, {"entries", "tag"}, "sequence file");
  if (!j.contains("entries") || !j.contains("tag"))
    throw ConfigError("sequence file needs entries and tag");
  std::vector<Vector> entries;
  for (const auto& e : j.at("entries")) {
    std::vector<double> vals = as_double_list(e, "sequence entry");
    Vector v(int(vals.size()));
    for (std::size_t i = 0; i < vals.size(); ++i) v(int(i)) = vals[i];
    entries.push_back(std::move(v));
  }
  const std::string tag = j.at("tag").get<std::string>();
  if (tag == "Y") return make_sequence_y(std::move(entries));
  if (tag == "Y0") return make_sequence_y0(std::move(entries));
  if (tag == "YZ") {
    if (z_basis) return make_sequence_yz(std::move(entries), *z_basis);
    BoundedSequence s{std::move(entries), SpaceTag::YZ};
    return s;
  }
  throw ConfigError("unknown sequence tag: " + tag);
}

json sequence_to_json(const BoundedSequence& seq) {
  json j;
  json entries = json::array();
  for (const Vector& v : seq.entries) {
    json row = json::array();
    for (int i = 0; i < v.size(); ++i) row.push_back(v(i));
    entries.push_back(row);
  }
  j["entries"] = entries;
  j["tag"] = to_string(seq.tag);
  return j;
}

json certificate_to_json(const DichotomyCertificate& cert) {
  json j;
  j["flags"] = {{"dichotomy", cert.flags.dichotomy},
                {"contraction", cert.flags.contraction},
                {"expansion", cert.flags.expansion},
                {"strong", cert.flags.strong}};
  j["constants"] = {{"D", cert.constants.D},         {"lambda", cert.constants.lambda},
                    {"epsilon", cert.constants.epsilon}, {"M", cert.constants.M},
                    {"a", cert.constants.a},         {"K", cert.constants.K},
                    {"b", cert.constants.b}};
  json projections = json::array();
  if (cert.splitting)
    for (int n = 1; n <= cert.horizon; ++n)
      projections.push_back(matrix_to_row_major(cert.splitting->P(n)));
  j["projections"] = projections;
  j["gamma"] = cert.gamma;
  json residuals = json::object();
  for (const auto& [k, v] : cert.residuals) residuals[k] = v;
  residuals["sup_proj_norm"] = cert.sup_proj_norm;
  for (const auto& [k, v] : cert.diagnostics) residuals["diag_" + k] = v;
  j["residuals"] = residuals;
  j["N0"] = cert.threshold_scale;
  j["grid"] = {{"dimension", cert.dim}, {"horizon", cert.horizon}};
  if (cert.refused()) j["refusal"] = {{"stage", cert.refusal_stage}, {"reason", cert.refusal_reason}};
  return j;
}

std::shared_ptr<SplittingBundle> splitting_from_projections(
    const std::shared_ptr<const OperatorSequence>& sys, const std::vector<Matrix>& projections) {
  const int N = sys->horizon();
  const int d = sys->dimension();
  if (int(projections.size()) != N)
    throw ConfigError("certificate projections must cover {1..N}");
  auto bundle = std::make_shared<SplittingBundle>();
  bundle->horizon = N;
  bundle->dim = d;
  bundle->stable_basis.resize(std::size_t(N));
  bundle->unstable_basis.resize(std::size_t(N));
  bundle->projection = projections;
  bundle->unstable_step.resize(std::size_t(N - 1));
  bundle->unstable_step_inv.resize(std::size_t(N - 1));
  for (int n = 1; n <= N; ++n) {
    const Matrix& p = projections[std::size_t(n - 1)];
    bundle->stable_basis[std::size_t(n - 1)] = orthonormal_columns(p, 1e-9);
    bundle->unstable_basis[std::size_t(n - 1)] =
        orthonormal_columns(Matrix::Identity(d, d) - p, 1e-9);
  }
  const int du = bundle->dim_unstable();
  for (int n = 1; n <= N - 1; ++n) {
    if (du == 0) {
      bundle->unstable_step[std::size_t(n - 1)] = Matrix(0, 0);
      bundle->unstable_step_inv[std::size_t(n - 1)] = Matrix(0, 0);
      continue;
    }
    Matrix step = bundle->W(n + 1).transpose() * sys->matrix(n) * bundle->W(n);
    auto lu = step.partialPivLu();
    Matrix inv = lu.solve(Matrix::Identity(du, du));
    if (!inv.allFinite() ||
        (step * inv - Matrix::Identity(du, du)).norm() > 1e-6 * std::max(1.0, step.norm()))
      throw SingularError("unstable restriction not invertible at n = " + std::to_string(n));
    bundle->unstable_step[std::size_t(n - 1)] = step;
    bundle->unstable_step_inv[std::size_t(n - 1)] = inv;
  }
  return bundle;
}

DichotomyCertificate certificate_from_json(const json& j,
                                           std::shared_ptr<const OperatorSequence> sys) {
  DichotomyCertificate cert;
  cert.horizon = sys->horizon();
  cert.dim = sys->dimension();
  const json& flags = j.at("flags");
  cert.flags.dichotomy = flags.at("dichotomy").get<bool>();
  cert.flags.contraction = flags.at("contraction").get<bool>();
  cert.flags.expansion = flags.at("expansion").get<bool>();
  cert.flags.strong = flags.at("strong").get<bool>();
  const json& c = j.at("constants");
  cert.constants.D = c.at("D").get<double>();
  cert.constants.lambda = c.at("lambda").get<double>();
  cert.constants.epsilon = c.at("epsilon").get<double>();
  cert.constants.M = c.at("M").get<double>();
  cert.constants.a = c.at("a").get<double>();
  cert.constants.K = c.at("K").get<double>();
  cert.constants.b = c.at("b").get<double>();
  if (j.contains("gamma")) cert.gamma = j.at("gamma").get<std::vector<double>>();
  if (j.contains("N0")) cert.threshold_scale = j.at("N0").get<long long>();
  if (j.contains("refusal")) {
    cert.refusal_stage = j.at("refusal").at("stage").get<std::string>();
    cert.refusal_reason = j.at("refusal").at("reason").get<std::string>();
  }
  const json& ps = j.at("projections");
  if (!ps.empty()) {
    std::vector<Matrix> projections;
    const int d = cert.dim;
    for (const auto& p : ps)
      projections.push_back(matrix_from_row_major(as_double_list(p, "projection"), d, d,
                                                  "projection"));
    cert.splitting = splitting_from_projections(sys, projections);
  }
  return cert;
}

json invertibility_to_json(const InvertibilityReport& rep) {
  json j;
  j["invertible"] = rep.invertible;
  j["inv_norm_upper"] = rep.inv_norm_upper;
  j["inv_norm_lower"] = rep.inv_norm_lower;
  j["conditioning"] = rep.conditioning;
  j["truncated"] = rep.truncated;
  return j;
}

json robustness_to_json(const RobustnessReport& rep) {
  json j;
  j["c"] = rep.c;
  j["regime"] = to_string(rep.regime);
  j["gap_bound"] = rep.gap_bound;
  j["empirical_gap"] = rep.empirical_gap;
  j["smallness_ok"] = rep.smallness_ok;
  j["before"] = certificate_to_json(rep.before);
  j["after"] = certificate_to_json(rep.after);
  j["gronwall"] = {{"ok", rep.gronwall.ok},
                   {"worst_violation", rep.gronwall.worst_violation},
                   {"product_ok", rep.gronwall.product_ok},
                   {"envelope_constant", rep.gronwall.envelope_constant},
                   {"envelope_exponent", rep.gronwall.envelope_exponent}};
  json seeds = json::array();
  for (const auto& s : rep.seeds) {
    seeds.push_back({{"seed", s.seed},
                     {"recertified", s.recertified},
                     {"strong", s.strong},
                     {"lambda", s.lambda},
                     {"D", s.D},
                     {"epsilon", s.epsilon},
                     {"a_hat", s.a_hat},
                     {"empirical_gap", s.empirical_gap},
                     {"gronwall_ok", s.gronwall_ok}});
  }
  j["seeds"] = seeds;
  return j;
}

NormSequence norms_from_json(const json& j, std::shared_ptr<const OperatorSequence> sys,
                             const DichotomyCertificate* cert) {
  if (j.is_string()) {
    const std::string s = j.get<std::string>();
    if (s == "base" || s == "euclidean") return NormSequence::base_norms();
    if (s == "sup") return NormSequence::base_norms(BaseNorm::sup);
    if (s == "one") return NormSequence::base_norms(BaseNorm::one);
    throw ConfigError("unknown norm spec: " + s);
  }
  reject_unknown(j, {"kind", "base", "lambda", "b", "eval_horizon", "weights"}, "norm spec");
  const std::string kind = j.value("kind", "base");
  BaseNorm base = BaseNorm::euclidean;
  if (j.contains("base")) {
    const std::string b = j.at("base").get<std::string>();
    if (b == "euclidean") base = BaseNorm::euclidean;
    else if (b == "sup") base = BaseNorm::sup;
    else if (b == "one") base = BaseNorm::one;
    else throw ConfigError("unknown base norm: " + b);
  }
  if (kind == "base") return NormSequence::base_norms(base);
  if (kind == "explicit-weights")
    return NormSequence::explicit_weights(base, as_double_list(j.at("weights"), "weights"));
  if (kind == "adapted-nonuniform" || kind == "adapted-strong") {
    if (!sys || !cert || !cert->splitting)
      throw ConfigError("adapted norm kinds need a system and a certificate");
    const double lambda = j.value("lambda", cert->constants.lambda);
    const int H = j.value("eval_horizon", sys->horizon());
    if (kind == "adapted-nonuniform")
      return NormSequence::adapted_nonuniform(sys, cert->splitting, lambda, H);
    const double b = j.value("b", std::max(cert->constants.b, lambda));
    return NormSequence::adapted_strong(sys, cert->splitting, lambda, b, H);
  }
  throw ConfigError("unknown norm kind: " + kind);
}

}  // namespace polydich
