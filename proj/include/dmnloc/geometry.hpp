// Copyright 2026 The dmnloc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef DMNLOC_GEOMETRY_HPP
#define DMNLOC_GEOMETRY_HPP

#include <array>
#include <cmath>

namespace dmnloc {

// Wrap an angle into (-pi, pi].
inline double wrap_angle(double a) {
  double r = std::remainder(a, 2.0 * M_PI);
  if (r <= -M_PI) r += 2.0 * M_PI;
  return r;
}

/// Planar pose (x, y, yaw). Yaw is kept in (-pi, pi] by every operation here.
struct PlanarPose {
  double x = 0.0;
  double y = 0.0;
  double yaw = 0.0;
};

/// Relative motion expressed in the previous pose's local frame:
/// dx forward, dy left, dyaw counter-clockwise.
struct Egomotion {
  double dx = 0.0;
  double dy = 0.0;
  double dyaw = 0.0;
};

/// Square environment of side 2*half_width meters, centered on the origin.
struct EnvironmentExtent {
  double half_width = 20.0;
};

// The 4-vector pose encoding (x, y, sin yaw, cos yaw) fed to the networks.
inline std::array<double, 4> encode4(const PlanarPose& p) {
  return {p.x, p.y, std::sin(p.yaw), std::cos(p.yaw)};
}

// Express `target` in `origin`'s frame: rotate the offset by -origin.yaw.
inline PlanarPose egocentric(const PlanarPose& target, const PlanarPose& origin) {
  const double c = std::cos(origin.yaw);
  const double s = std::sin(origin.yaw);
  const double ox = target.x - origin.x;
  const double oy = target.y - origin.y;
  return {c * ox + s * oy, -s * ox + c * oy, wrap_angle(target.yaw - origin.yaw)};
}

// Fixed transition geometry: apply a local-frame motion to a pose.
inline PlanarPose compose(const PlanarPose& base, const Egomotion& motion) {
  const double c = std::cos(base.yaw);
  const double s = std::sin(base.yaw);
  return {base.x + c * motion.dx - s * motion.dy,
          base.y + s * motion.dx + c * motion.dy,
          wrap_angle(base.yaw + motion.dyaw)};
}

// Relative motion taking `from` to `to`, in `from`'s local frame.
// compose(from, between(from, to)) == to up to rounding.
inline Egomotion between(const PlanarPose& from, const PlanarPose& to) {
  const double c = std::cos(from.yaw);
  const double s = std::sin(from.yaw);
  const double ox = to.x - from.x;
  const double oy = to.y - from.y;
  return {c * ox + s * oy, -s * ox + c * oy, wrap_angle(to.yaw - from.yaw)};
}

inline Egomotion inverse(const Egomotion& m) {
  const double c = std::cos(m.dyaw);
  const double s = std::sin(m.dyaw);
  return {-(c * m.dx + s * m.dy), -(-s * m.dx + c * m.dy), -m.dyaw};
}

// Scale coordinates to model units ([-1,1] inside the extent). No clamping:
// poses beyond the extent pass through so a filter may wander past the edge.
inline PlanarPose normalize(const PlanarPose& p, const EnvironmentExtent& e) {
  return {p.x / e.half_width, p.y / e.half_width, p.yaw};
}

inline PlanarPose denormalize(const PlanarPose& p, const EnvironmentExtent& e) {
  return {p.x * e.half_width, p.y * e.half_width, p.yaw};
}

}  // namespace dmnloc

#endif  // DMNLOC_GEOMETRY_HPP
