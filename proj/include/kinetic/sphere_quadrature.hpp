#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "kinetic/vec3.hpp"

namespace kinetic {

/// Point set on S² with weights summing to 4π.
struct SphereQuadrature {
  std::vector<Vec3> directions;
  std::vector<double> weights;

  std::size_t size() const { return directions.size(); }

  /// One representative per antipodal pair, weight doubled. Valid when the set
  /// is centrally symmetric and the integrand is even in ω.
  SphereQuadrature half() const {
    SphereQuadrature out;
    for (std::size_t i = 0; i < directions.size(); ++i) {
      const Vec3& d = directions[i];
      const bool keep = d.z > 0.0 || (d.z == 0.0 && (d.y > 0.0 || (d.y == 0.0 && d.x > 0.0)));
      if (!keep) continue;
      out.directions.push_back(d);
      out.weights.push_back(2.0 * weights[i]);
    }
    return out;
  }
};

/// 32-point icosahedral rule: the 12 icosahedron vertices and the 20 face centres,
/// weights 25/840 and 27/840 of 4π. Exact for polynomials of degree ≤ 9 and
/// invariant under the coordinate reflections.
inline SphereQuadrature icosahedral32() {
  const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
  const double four_pi = 4.0 * std::numbers::pi;
  SphereQuadrature q;
  auto push = [&](Vec3 v, double w) {
    q.directions.push_back(v * (1.0 / norm(v)));
    q.weights.push_back(w);
  };
  const double w_vertex = four_pi * 25.0 / 840.0;
  const double w_face = four_pi * 27.0 / 840.0;
  for (double s1 : {1.0, -1.0})
    for (double s2 : {1.0, -1.0}) {
      push({0.0, s1, s2 * phi}, w_vertex);
      push({s1, s2 * phi, 0.0}, w_vertex);
      push({s2 * phi, 0.0, s1}, w_vertex);
    }
  for (double a : {1.0, -1.0})
    for (double b : {1.0, -1.0})
      for (double c : {1.0, -1.0}) push({a, b, c}, w_face);
  for (double s1 : {1.0, -1.0})
    for (double s2 : {1.0, -1.0}) {
      push({0.0, s1 * phi, s2 / phi}, w_face);
      push({s1 * phi, s2 / phi, 0.0}, w_face);
      push({s2 / phi, 0.0, s1 * phi}, w_face);
    }
  return q;
}

}  // namespace kinetic
