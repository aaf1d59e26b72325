#pragma once

// The model triple (inverse mass matrix, potential, actuation codistribution)
// in a coordinate chart, plus chart changes: affine pre-transforms and the
// coordinate reordering that makes span{dq^1..dq^(n-m)} (raised by the
// metric) complementary to the actuation codistribution.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "eshape/error.hpp"
#include "eshape/expr.hpp"
#include "eshape/model_file.hpp"
#include "eshape/numerics.hpp"

namespace eshape {

using expr::Expr;
using ExprMatrix = std::vector<std::vector<Expr>>;

/// Deterministic uniform samples from the box center +- half_width.
inline std::vector<Vec> random_points(const Vec& center, double half_width, std::size_t count,
                                      std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-half_width, half_width);
  std::vector<Vec> pts(count, center);
  for (auto& p : pts)
    for (double& x : p) x += u(rng);
  return pts;
}

/// Immutable model description.  Expressions may reference the named
/// constants and the coordinate names; evaluation goes through programs
/// compiled once at construction against the slot layout
/// [constants..., coordinates...].
class ModelSpec {
 public:
  ModelSpec(std::vector<std::string> coords, std::vector<std::pair<std::string, double>> constants,
            ExprMatrix mass_inverse, Expr potential, ExprMatrix actuation, Vec equilibrium)
      : coords_(std::move(coords)),
        constants_(std::move(constants)),
        mass_inverse_(std::move(mass_inverse)),
        potential_(std::move(potential)),
        actuation_(std::move(actuation)),
        equilibrium_(std::move(equilibrium)) {
    const std::size_t n = coords_.size();
    if (n == 0) throw ModelError("model needs at least one coordinate");
    if (mass_inverse_.size() != n)
      throw ModelError("mass_inverse must be " + std::to_string(n) + "x" + std::to_string(n));
    for (const auto& row : mass_inverse_)
      if (row.size() != n)
        throw ModelError("mass_inverse must be " + std::to_string(n) + "x" + std::to_string(n));
    for (const auto& row : actuation_)
      if (row.size() != n)
        throw ModelError("each actuation row needs " + std::to_string(n) + " entries");
    if (equilibrium_.size() != n) throw ModelError("equilibrium needs " + std::to_string(n) + " entries");
    if (actuation_.empty()) throw ModelError("at least one actuation row required");
    if (actuation_.size() >= n) throw ModelError("m < n required (underactuated system)");

    std::set<std::string> seen;
    for (const auto& [name, value] : constants_) {
      if (!seen.insert(name).second) throw ModelError("duplicate constant '" + name + "'");
      slot_names_.push_back(name);
      constant_values_.push_back(value);
    }
    for (const auto& c : coords_) {
      if (!seen.insert(c).second) throw ModelError("coordinate '" + c + "' clashes with another name");
      slot_names_.push_back(c);
    }
    compile();
  }

  std::size_t n() const noexcept { return coords_.size(); }
  std::size_t m() const noexcept { return actuation_.size(); }
  /// Degree of underactuation n - m.
  std::size_t dou() const noexcept { return n() - m(); }

  const std::vector<std::string>& coords() const noexcept { return coords_; }
  const std::vector<std::pair<std::string, double>>& constants() const noexcept { return constants_; }
  const ExprMatrix& mass_inverse_exprs() const noexcept { return mass_inverse_; }
  const Expr& potential_expr() const noexcept { return potential_; }
  const ExprMatrix& actuation_exprs() const noexcept { return actuation_; }
  const Vec& equilibrium() const noexcept { return equilibrium_; }
  const std::vector<std::string>& slot_names() const noexcept { return slot_names_; }

  std::optional<double> constant(const std::string& name) const {
    for (const auto& [k, v] : constants_)
      if (k == name) return v;
    return std::nullopt;
  }

  /// Slot values for evaluating a compiled program at q.
  Vec slots(std::span<const double> q) const {
    if (q.size() != n()) throw Error("point has wrong dimension");
    Vec s(constant_values_);
    s.insert(s.end(), q.begin(), q.end());
    return s;
  }

  expr::Env env(std::span<const double> q) const {
    expr::Env e;
    for (const auto& [k, v] : constants_) e[k] = v;
    for (std::size_t i = 0; i < n(); ++i) e[coords_[i]] = q[i];
    return e;
  }

  expr::Program compile(const Expr& e) const { return expr::Program(e, slot_names_); }

  /// H^{ij}(q).
  Mat mass_inverse(std::span<const double> q) const {
    return eval_matrix(compiled_->mass_inverse, slots(q));
  }
  /// dH^{ij}/dq^k at q, symbolic.
  Mat mass_inverse_derivative(std::span<const double> q, std::size_t k) const {
    return eval_matrix(compiled_->mass_inverse_d[k], slots(q));
  }
  double potential(std::span<const double> q) const { return compiled_->potential(slots(q)); }
  /// Symbolic gradient of h at q.
  Vec potential_gradient(std::span<const double> q) const {
    Vec s = slots(q), g(n());
    for (std::size_t k = 0; k < n(); ++k) g[k] = compiled_->potential_d[k](s);
    return g;
  }
  /// m x n matrix of actuation coefficients theta_{ai}(q).
  Mat actuation(std::span<const double> q) const { return eval_matrix(compiled_->actuation, slots(q)); }
  /// d theta_{a i} / dq^k, symbolic.
  Mat actuation_derivative(std::span<const double> q, std::size_t k) const {
    return eval_matrix(compiled_->actuation_d.at(k), slots(q));
  }

  /// Copy with some constants replaced.  Unknown names are an error.
  ModelSpec with_constants(const std::map<std::string, double>& overrides) const {
    auto consts = constants_;
    for (const auto& [name, value] : overrides) {
      auto it = std::find_if(consts.begin(), consts.end(), [&](const auto& kv) { return kv.first == name; });
      if (it == consts.end()) throw ModelError("unknown constant '" + name + "'");
      it->second = value;
    }
    return ModelSpec(coords_, std::move(consts), mass_inverse_, potential_, actuation_, equilibrium_);
  }

 private:
  struct Compiled {
    std::vector<std::vector<expr::Program>> mass_inverse;
    std::vector<std::vector<std::vector<expr::Program>>> mass_inverse_d;  // [k][i][j]
    expr::Program potential;
    std::vector<expr::Program> potential_d;
    std::vector<std::vector<expr::Program>> actuation;
    std::vector<std::vector<std::vector<expr::Program>>> actuation_d;  // [k][a][i]
  };

  static Mat eval_matrix(const std::vector<std::vector<expr::Program>>& p, std::span<const double> s) {
    Mat out(p.size(), p.empty() ? 0 : p[0].size());
    for (std::size_t i = 0; i < out.rows(); ++i)
      for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) = p[i][j](s);
    return out;
  }

  void compile() {
    auto c = std::make_shared<Compiled>();
    auto compile_matrix = [&](const ExprMatrix& m) {
      std::vector<std::vector<expr::Program>> out;
      for (const auto& row : m) {
        out.emplace_back();
        for (const auto& e : row) out.back().emplace_back(e, slot_names_);
      }
      return out;
    };
    c->mass_inverse = compile_matrix(mass_inverse_);
    for (const auto& coord : coords_) {
      ExprMatrix d = mass_inverse_;
      for (auto& row : d)
        for (auto& e : row) e = expr::diff(e, coord);
      c->mass_inverse_d.push_back(compile_matrix(d));
      c->potential_d.emplace_back(expr::diff(potential_, coord), slot_names_);
      ExprMatrix da = actuation_;
      for (auto& row : da)
        for (auto& e : row) e = expr::diff(e, coord);
      c->actuation_d.push_back(compile_matrix(da));
    }
    c->potential = expr::Program(potential_, slot_names_);
    c->actuation = compile_matrix(actuation_);
    compiled_ = std::move(c);
  }

  std::vector<std::string> coords_;
  std::vector<std::pair<std::string, double>> constants_;
  ExprMatrix mass_inverse_;
  Expr potential_;
  ExprMatrix actuation_;
  Vec equilibrium_;
  std::vector<std::string> slot_names_;
  Vec constant_values_;
  std::shared_ptr<const Compiled> compiled_;
};

// ---------------------------------------------------------------------------
// Invariants

/// Checks the model invariants and throws ModelError naming the first one
/// violated.
inline void validate(const ModelSpec& spec) {
  const std::size_t n = spec.n();
  const Vec& q0 = spec.equilibrium();

  for (const Vec& q : random_points(q0, 0.5, 100, 0x5eed)) {
    Mat h;
    try {
      h = spec.mass_inverse(q);
    } catch (const DomainError&) {
      continue;  // outside the chart domain; symmetry is only checked where defined
    }
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        if (std::fabs(h(i, j) - h(j, i)) > 1e-12 * (1.0 + std::fabs(h(i, j))))
          throw ModelError("invariant violated: mass_inverse is not symmetric (entry " +
                           std::to_string(i + 1) + std::to_string(j + 1) + ")");
  }

  const Mat h0 = spec.mass_inverse(q0);
  const double lmin = min_eigen_sym(h0);
  if (!(lmin > 0.0))
    throw ModelError("invariant violated: mass_inverse is not positive-definite at the equilibrium "
                     "(least eigenvalue " + std::to_string(lmin) + ")");

  const Mat th = spec.actuation(q0);
  const Mat gram = th * th.transpose();
  double trace = 0.0;
  for (std::size_t a = 0; a < gram.rows(); ++a) trace += gram(a, a);
  if (!(min_eigen_sym(gram) > 1e-12 * std::max(1.0, trace)))
    throw ModelError("invariant violated: actuation rows are linearly dependent at the equilibrium");

  const Vec g = spec.potential_gradient(q0);
  if (norm_inf(g) > 1e-8)
    throw ModelError("invariant violated: equilibrium is not a critical point of h (|grad h| = " +
                     std::to_string(norm_inf(g)) + ")");
}

// ---------------------------------------------------------------------------
// Affine charts q' = T (q - c)

struct AffineChart {
  Mat T;
  Vec c;
  /// Names of the new coordinates; empty keeps the old names.
  std::vector<std::string> coords;

  Vec to_chart(std::span<const double> q) const {
    Vec d(q.begin(), q.end());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] -= c[i];
    return T * d;
  }
  Vec from_chart(std::span<const double> qp) const {
    Vec q = solve_linear(T, qp);
    for (std::size_t i = 0; i < q.size(); ++i) q[i] += c[i];
    return q;
  }
};

namespace detail {

// sum_k coeff[k] * terms[k], dropping zero coefficients.
inline Expr linear_combination(const std::vector<double>& coeff, const std::vector<Expr>& terms,
                               double offset = 0.0) {
  Expr sum = Expr::number(0.0);
  for (std::size_t k = 0; k < terms.size(); ++k) {
    if (coeff[k] == 0.0) continue;
    sum = sum + Expr::number(coeff[k]) * terms[k];
  }
  return offset == 0.0 ? sum : sum + Expr::number(offset);
}

}  // namespace detail

/// Re-expresses the model in the coordinates q' = T (q - c):
/// H' = T H T^t, h' = h o q(q'), theta' = theta T^{-1}.
inline ModelSpec apply_affine(const ModelSpec& spec, const AffineChart& chart) {
  const std::size_t n = spec.n();
  if (chart.T.rows() != n || chart.T.cols() != n || chart.c.size() != n)
    throw ModelError("chart dimensions do not match the model");
  Mat tinv;
  try {
    tinv = inverse(chart.T);
  } catch (const SingularMatrixError&) {
    throw ModelError("chart matrix T is singular");
  }
  std::vector<std::string> names = chart.coords.empty() ? spec.coords() : chart.coords;
  if (names.size() != n) throw ModelError("chart must name " + std::to_string(n) + " coordinates");

  std::vector<Expr> new_vars;
  for (const auto& nm : names) new_vars.push_back(Expr::variable(nm));
  std::map<std::string, Expr> old_in_new;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> row(tinv.row(i).begin(), tinv.row(i).end());
    old_in_new[spec.coords()[i]] = detail::linear_combination(row, new_vars, chart.c[i]);
  }

  ExprMatrix h_old(n, std::vector<Expr>(n));
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t l = 0; l < n; ++l) h_old[k][l] = expr::substitute(spec.mass_inverse_exprs()[k][l], old_in_new);

  ExprMatrix h_new(n, std::vector<Expr>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      std::vector<double> coeff;
      std::vector<Expr> terms;
      for (std::size_t k = 0; k < n; ++k)
        for (std::size_t l = 0; l < n; ++l) {
          coeff.push_back(chart.T(i, k) * chart.T(j, l));
          terms.push_back(h_old[k][l]);
        }
      h_new[i][j] = detail::linear_combination(coeff, terms);
    }

  ExprMatrix th_new;
  for (const auto& row : spec.actuation_exprs()) {
    std::vector<Expr> subst;
    for (const auto& e : row) subst.push_back(expr::substitute(e, old_in_new));
    std::vector<Expr> out(n);
    for (std::size_t j = 0; j < n; ++j) {
      std::vector<double> coeff(n);
      for (std::size_t k = 0; k < n; ++k) coeff[k] = tinv(k, j);
      out[j] = detail::linear_combination(coeff, subst);
    }
    th_new.push_back(std::move(out));
  }

  return ModelSpec(std::move(names), spec.constants(), std::move(h_new),
                   expr::substitute(spec.potential_expr(), old_in_new), std::move(th_new),
                   chart.to_chart(spec.equilibrium()));
}

/// Translates the chart so the equilibrium sits at the origin.
inline ModelSpec centered(const ModelSpec& spec) {
  if (norm_inf(spec.equilibrium()) == 0.0) return spec;
  return apply_affine(spec, {Mat::identity(spec.n()), spec.equilibrium(), {}});
}

// ---------------------------------------------------------------------------
// Chart adaptation by coordinate reordering

struct ChartAdaptation {
  /// New coordinate i is old coordinate permutation[i].
  std::vector<std::size_t> permutation;
  /// Determinant of the stacked [H_{mu k}; theta_{a k}] matrix at q0 in the
  /// reordered chart.
  double determinant = 0.0;

  bool is_identity() const {
    for (std::size_t i = 0; i < permutation.size(); ++i)
      if (permutation[i] != i) return false;
    return true;
  }
};

/// Stacked complementarity matrix at q: rows 1..n-m are rows of H_{ij}
/// (the inverse of the model's mass_inverse), rows n-m+1..n the actuation
/// coefficients.
inline Mat stacked_matrix(const Mat& h_lower, const Mat& thetas, std::size_t dou) {
  const std::size_t n = h_lower.rows();
  Mat s(n, n);
  for (std::size_t mu = 0; mu < dou; ++mu)
    for (std::size_t k = 0; k < n; ++k) s(mu, k) = h_lower(mu, k);
  for (std::size_t a = 0; a < thetas.rows(); ++a)
    for (std::size_t k = 0; k < n; ++k) s(dou + a, k) = thetas(a, k);
  return s;
}

/// Certifies complementarity: |det| > 1e-10 times the Hadamard bound of the
/// matrix (product of its row norms).
inline bool complementary(const Mat& stacked, double* det_out = nullptr) {
  double hadamard = 1.0;
  for (std::size_t i = 0; i < stacked.rows(); ++i) {
    double s = 0.0;
    for (double v : stacked.row(i)) s += v * v;
    hadamard *= std::sqrt(s);
  }
  const double det = determinant(stacked);
  if (det_out) *det_out = det;
  return hadamard > 0.0 && std::fabs(det) > 1e-10 * hadamard;
}

/// Finds a reordering of the coordinates for which the first n-m rows of
/// H_{ij}(q0) together with the actuation rows form a non-singular matrix.
/// The identity is used when admissible; otherwise the lexicographically
/// first admissible permutation.
inline ChartAdaptation adapt_chart(const ModelSpec& spec) {
  const std::size_t n = spec.n(), d = spec.dou();
  const Vec& q0 = spec.equilibrium();
  const Mat h_lower = inverse(spec.mass_inverse(q0));
  const Mat thetas = spec.actuation(q0);

  // Admissibility only depends on which coordinates occupy the first d slots,
  // and the lexicographically smallest permutation with a given leading set
  // lists that set sorted, then the rest sorted.  Walking the d-subsets in
  // lexicographic order therefore yields the lexicographically first
  // admissible permutation, starting with the identity.
  std::vector<std::size_t> subset(d);
  std::iota(subset.begin(), subset.end(), std::size_t{0});
  for (;;) {
    std::vector<std::size_t> perm(subset);
    for (std::size_t i = 0; i < n; ++i)
      if (!std::binary_search(subset.begin(), subset.end(), i)) perm.push_back(i);

    Mat s(n, n);
    for (std::size_t mu = 0; mu < d; ++mu)
      for (std::size_t k = 0; k < n; ++k) s(mu, k) = h_lower(perm[mu], perm[k]);
    for (std::size_t a = 0; a < spec.m(); ++a)
      for (std::size_t k = 0; k < n; ++k) s(d + a, k) = thetas(a, perm[k]);
    double det = 0.0;
    if (complementary(s, &det)) return {perm, det};

    // next d-subset of {0..n-1} in lexicographic order
    std::size_t i = d;
    while (i > 0 && subset[i - 1] == n - d + i - 1) --i;
    if (i == 0) break;
    ++subset[i - 1];
    for (std::size_t j = i; j < d; ++j) subset[j] = subset[j - 1] + 1;
  }
  throw ModelError("no coordinate ordering makes the complement transversal to the actuation");
}

/// Applies a coordinate reordering (new coordinate i = old permutation[i]).
inline ModelSpec apply_permutation(const ModelSpec& spec, const std::vector<std::size_t>& perm) {
  const std::size_t n = spec.n();
  AffineChart chart{Mat(n, n), Vec(n, 0.0), {}};
  for (std::size_t i = 0; i < n; ++i) {
    chart.T(i, perm[i]) = 1.0;
    chart.coords.push_back(spec.coords()[perm[i]]);
  }
  return apply_affine(spec, chart);
}

// ---------------------------------------------------------------------------
// Model files

namespace detail {

inline Expr parse_field(const file::Value& v, const std::string& where) {
  try {
    if (v.is_number()) return Expr::number(v.number());
    if (v.is_string()) return expr::parse(v.string());
  } catch (const ParseError& e) {
    throw ModelError(where + ": " + e.what());
  }
  throw ModelError(where + ": expected a number or an expression string");
}

// Number or constant-only expression.
inline double constant_field(const file::Value& v, const expr::Env& consts, const std::string& where) {
  Expr e = parse_field(v, where);
  try {
    return expr::eval(e, consts);
  } catch (const Error& err) {
    throw ModelError(where + ": " + err.what());
  }
}

inline const file::Value& require(const file::Section* s, const char* section, const char* key) {
  if (!s) throw ModelError(std::string("missing section [") + section + "]");
  const file::Entry* e = s->find(key);
  if (!e) throw ModelError(std::string("missing key '") + key + "' in [" + section + "]");
  return e->value;
}

inline const std::vector<file::Value>& require_array(const file::Value& v, const std::string& where) {
  if (!v.is_array()) throw ModelError(where + ": expected an array");
  return v.array();
}

// Parses "<i><j>" (single digits) or "<i>_<j>" index suffixes, 1-based.
inline std::optional<std::pair<std::size_t, std::size_t>> matrix_index(std::string_view key,
                                                                       std::string_view prefix) {
  if (key.substr(0, prefix.size()) != prefix) return std::nullopt;
  std::string_view rest = key.substr(prefix.size());
  auto to_index = [](std::string_view s) -> std::optional<std::size_t> {
    if (s.empty()) return std::nullopt;
    std::size_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size() || v == 0) return std::nullopt;
    return v - 1;
  };
  if (auto us = rest.find('_'); us != std::string_view::npos) {
    auto i = to_index(rest.substr(0, us)), j = to_index(rest.substr(us + 1));
    if (i && j) return std::pair{*i, *j};
    return std::nullopt;
  }
  if (rest.size() == 2) {
    auto i = to_index(rest.substr(0, 1)), j = to_index(rest.substr(1, 1));
    if (i && j) return std::pair{*i, *j};
  }
  return std::nullopt;
}

// Reads a symmetric matrix section of "<prefix>ij" keys; entries missing
// below the diagonal are completed by symmetry.
inline ExprMatrix symmetric_section(const file::Section& s, std::string_view prefix, std::size_t n) {
  std::vector<std::vector<std::optional<Expr>>> m(n, std::vector<std::optional<Expr>>(n));
  for (const auto& e : s.entries) {
    auto idx = matrix_index(e.key, prefix);
    if (!idx || idx->first >= n || idx->second >= n)
      throw ModelError("[" + s.name + "]: unexpected key '" + e.key + "'");
    m[idx->first][idx->second] = parse_field(e.value, "[" + s.name + "] " + e.key);
  }
  ExprMatrix out(n, std::vector<Expr>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (m[i][j])
        out[i][j] = *m[i][j];
      else if (m[j][i])
        out[i][j] = *m[j][i];
      else
        throw ModelError("[" + s.name + "]: missing entry " + std::string(prefix) + std::to_string(i + 1) +
                         std::to_string(j + 1));
    }
  return out;
}

}  // namespace detail

/// Parses and validates a model file.  `overrides` replace declared
/// constants before anything is evaluated.
inline ModelSpec parse_model(std::string_view text, const std::map<std::string, double>& overrides = {}) {
  const file::Document doc = file::parse_document(text);
  const file::Section* model = doc.find("model");

  std::vector<std::string> coords;
  for (const auto& v : detail::require_array(detail::require(model, "model", "coords"), "[model] coords")) {
    if (!v.is_string()) throw ModelError("[model] coords: expected strings");
    coords.push_back(v.string());
  }
  if (const auto* e = model->find("n")) {
    if (!e->value.is_number() || e->value.number() != static_cast<double>(coords.size()))
      throw ModelError("[model] n does not match the number of coords");
  }
  const std::size_t n = coords.size();

  std::vector<std::pair<std::string, double>> constants;
  expr::Env const_env;
  if (const auto* s = doc.find("constants")) {
    for (const auto& e : s->entries) {
      double v = detail::constant_field(e.value, const_env, "[constants] " + e.key);
      constants.emplace_back(e.key, v);
      const_env[e.key] = v;
    }
  }
  for (const auto& [name, value] : overrides) {
    auto it = std::find_if(constants.begin(), constants.end(), [&](const auto& kv) { return kv.first == name; });
    if (it == constants.end()) throw ModelError("unknown constant '" + name + "'");
    it->second = value;
    const_env[name] = value;
  }

  Vec equilibrium(n, 0.0);
  if (const auto* e = model->find("equilibrium")) {
    const auto& arr = detail::require_array(e->value, "[model] equilibrium");
    if (arr.size() != n) throw ModelError("[model] equilibrium needs " + std::to_string(n) + " entries");
    for (std::size_t i = 0; i < n; ++i)
      equilibrium[i] = detail::constant_field(arr[i], const_env, "[model] equilibrium");
  }

  const file::Section* mi = doc.find("mass_inverse");
  if (!mi) throw ModelError("missing section [mass_inverse]");
  ExprMatrix mass_inverse = detail::symmetric_section(*mi, "H", n);

  Expr potential = detail::parse_field(detail::require(doc.find("potential"), "potential", "h"), "[potential] h");

  const file::Section* act = doc.find("actuation");
  if (!act || act->entries.empty()) throw ModelError("missing section [actuation]");
  std::vector<std::pair<std::size_t, std::vector<Expr>>> rows;
  for (const auto& e : act->entries) {
    std::size_t idx = 0;
    std::string_view key = e.key;
    if (key.substr(0, 5) != "theta" ||
        std::from_chars(key.data() + 5, key.data() + key.size(), idx).ec != std::errc() || idx == 0)
      throw ModelError("[actuation]: unexpected key '" + e.key + "' (expected theta<k>)");
    const auto& arr = detail::require_array(e.value, "[actuation] " + e.key);
    if (arr.size() != n)
      throw ModelError("[actuation] " + e.key + " needs " + std::to_string(n) + " entries");
    std::vector<Expr> row;
    for (const auto& v : arr) row.push_back(detail::parse_field(v, "[actuation] " + e.key));
    rows.emplace_back(idx, std::move(row));
  }
  std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  ExprMatrix actuation;
  for (auto& r : rows) actuation.push_back(std::move(r.second));

  ModelSpec spec(coords, constants, mass_inverse, potential, actuation, equilibrium);

  if (const auto* chart = doc.find("chart")) {
    AffineChart c{Mat::identity(n), Vec(n, 0.0), {}};
    if (const auto* e = chart->find("T")) {
      const auto& rows_v = detail::require_array(e->value, "[chart] T");
      if (rows_v.size() != n) throw ModelError("[chart] T must be " + std::to_string(n) + "x" + std::to_string(n));
      for (std::size_t i = 0; i < n; ++i) {
        const auto& r = detail::require_array(rows_v[i], "[chart] T");
        if (r.size() != n) throw ModelError("[chart] T must be " + std::to_string(n) + "x" + std::to_string(n));
        for (std::size_t j = 0; j < n; ++j) c.T(i, j) = detail::constant_field(r[j], const_env, "[chart] T");
      }
    }
    if (const auto* e = chart->find("c")) {
      const auto& arr = detail::require_array(e->value, "[chart] c");
      if (arr.size() != n) throw ModelError("[chart] c needs " + std::to_string(n) + " entries");
      for (std::size_t i = 0; i < n; ++i) c.c[i] = detail::constant_field(arr[i], const_env, "[chart] c");
    }
    if (const auto* e = chart->find("coords")) {
      for (const auto& v : detail::require_array(e->value, "[chart] coords")) {
        if (!v.is_string()) throw ModelError("[chart] coords: expected strings");
        c.coords.push_back(v.string());
      }
    }
    spec = apply_affine(spec, c);
  }

  validate(spec);
  return spec;
}

inline ModelSpec load_model(const std::string& path, const std::map<std::string, double>& overrides = {}) {
  return parse_model(file::read_text_file(path), overrides);
}

}  // namespace eshape
