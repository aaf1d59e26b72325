#pragma once

// Test models and closed-form oracles shared by the test binaries.

#include <cmath>
#include <string>
#include <vector>

#include "eshape/model.hpp"
#include "eshape/pipeline.hpp"

namespace fixtures {

using eshape::ModelSpec;
using eshape::Vec;

/// Pendulum constants used throughout: A=2, B=1, C=1, D1=D2=1, g=3.
struct Pendulum {
  double a = 2, b = 1, c = 1, d1 = 1, d2 = 1, g = 3;

  double bb(double x, double y) const { return b * std::cos((1 + g) * x - y); }
  double bx(double x, double y) const { return -(1 + g) * b * std::sin((1 + g) * x - y); }
  double det(double x, double y) const { return a - g * bb(x, y); }

  /// Hand-derived G from differentiating the (x, y) metric and projection.
  double G(double x, double y) const { return 2 * g * g * bx(x, y) / ((1 + g) * det(x, y)); }
  /// Antiderivative of -G along x: K = |A - g b|^{e} / |A - g b(0,y)|^{e}, e = 2g/(1+g).
  double K(double x, double y, double exponent_sign = +1.0) const {
    const double e = exponent_sign * 2 * g / (1 + g);
    return std::pow(std::fabs(det(x, y)), e) / std::pow(std::fabs(det(0, y)), e);
  }
  double u(double x, double y) const { return -d1 * std::sin(x) * K(x, y) / det(x, y); }
  /// P = (1, g) / (A - g b)
  Vec phat(double x, double y) const { return {1 / det(x, y), g / det(x, y)}; }
  /// H_{ij} in (x, y)
  eshape::Mat h_lower(double x, double y) const {
    const double bv = bb(x, y);
    return {{a - 2 * bv * g + c * g * g, bv - g * c}, {bv - g * c, c}};
  }
};


/// The built-in pendulum after loading, centering and chart adaptation.
inline ModelSpec pendulum_spec(const std::map<std::string, double>& overrides = {}) {
  return eshape::centered(eshape::parse_model(eshape::builtin_model("double-pendulum"), overrides));
}

/// Random pendulum points in the box +-half whose whole x-segment from 0 stays
/// a margin away from the singular set A - g b = 0.
inline std::vector<Vec> pendulum_points(std::size_t count, std::uint64_t seed, double half = 0.2,
                                        double margin = 0.1) {
  const Pendulum p;
  std::vector<Vec> out;
  std::uint64_t s = seed;
  while (out.size() < count) {
    for (const Vec& q : eshape::random_points({0, 0}, half, 4 * count, s++)) {
      if (out.size() == count) break;
      if (p.det(q[0], q[1]) < -margin && p.det(0, q[1]) < -margin) out.push_back(q);
    }
  }
  return out;
}

/// Flat model with identity metric in n = 2 and W spanned by dq^k (k = 1, 2).
inline ModelSpec flat2(std::size_t actuated) {
  using eshape::expr::parse;
  eshape::ExprMatrix h{{parse("1"), parse("0")}, {parse("0"), parse("1")}};
  eshape::ExprMatrix th{{parse(actuated == 1 ? "1" : "0"), parse(actuated == 2 ? "1" : "0")}};
  return ModelSpec({"q1", "q2"}, {}, h, parse("q1^2 + q2^2"), th, {0, 0});
}

/// n = 3, m = 1 flat model: identity metric, W = span{dq3}, potential given.
inline ModelSpec flat3(const std::string& potential) {
  using eshape::expr::parse;
  eshape::ExprMatrix h{{parse("1"), parse("0"), parse("0")},
                       {parse("0"), parse("1"), parse("0")},
                       {parse("0"), parse("0"), parse("1")}};
  eshape::ExprMatrix th{{parse("0"), parse("0"), parse("1")}};
  return ModelSpec({"q1", "q2", "q3"}, {}, h, parse(potential), th, {0, 0, 0});
}

/// Non-constant metric, two unactuated directions: used for frame identities.
inline ModelSpec curved3() {
  using eshape::expr::parse;
  eshape::ExprMatrix h{{parse("2 + sin(q1)*sin(q1)"), parse("0.3*cos(q2)"), parse("0.1")},
                       {parse("0.3*cos(q2)"), parse("1.5 + q3^2"), parse("0.2*sin(q1)")},
                       {parse("0.1"), parse("0.2*sin(q1)"), parse("1")}};
  eshape::ExprMatrix th{{parse("0.2"), parse("0.1*cos(q1)"), parse("1")}};
  return ModelSpec({"q1", "q2", "q3"}, {}, h, parse("cos(q1) + q2^2 + q3^2"), th, {0, 0, 0});
}

}  // namespace fixtures
