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

#include <cmath>
#include <vector>

#include "doctest.h"
#include "dmnloc/geometry.hpp"
#include "dmnloc/rng.hpp"

using namespace dmnloc;

namespace {

PlanarPose random_pose(Rng& rng, double span = 10.0) {
  return {rng.uniform(-span, span), rng.uniform(-span, span),
          wrap_angle(rng.uniform(-M_PI, M_PI))};
}

bool close(const PlanarPose& a, const PlanarPose& b, double tol) {
  return std::fabs(a.x - b.x) < tol && std::fabs(a.y - b.y) < tol &&
         std::fabs(wrap_angle(a.yaw - b.yaw)) < tol;
}

}  // namespace

TEST_SUITE_BEGIN("geometry");

TEST_CASE("encode4 examples") {
  auto e = encode4({0, 0, 0});
  CHECK(e[0] == 0.0);
  CHECK(e[1] == 0.0);
  CHECK(e[2] == doctest::Approx(0.0));
  CHECK(e[3] == doctest::Approx(1.0));

  e = encode4({1, 2, M_PI / 2});
  CHECK(e[0] == 1.0);
  CHECK(e[1] == 2.0);
  CHECK(e[2] == doctest::Approx(1.0));
  CHECK(e[3] == doctest::Approx(0.0).epsilon(1e-12));

  e = encode4({-3, 4, M_PI});
  CHECK(e[2] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(e[3] == doctest::Approx(-1.0));
}

TEST_CASE("encode4 unit circle property") {
  Rng rng(5);
  for (int i = 0; i < 200; ++i) {
    const auto e = encode4(random_pose(rng));
    CHECK(std::fabs(e[2] * e[2] + e[3] * e[3] - 1.0) < 1e-12);
  }
}

TEST_CASE("egocentric examples") {
  Rng rng(6);
  const PlanarPose s = random_pose(rng);
  CHECK(close(egocentric(s, s), {0, 0, 0}, 1e-12));

  const PlanarPose rel = egocentric({1, 0, 0}, {0, 0, M_PI / 2});
  CHECK(rel.x == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(rel.y == doctest::Approx(-1.0));
  CHECK(rel.yaw == doctest::Approx(-M_PI / 2));
}

TEST_CASE("egocentric round trip through compose") {
  Rng rng(8);
  for (int i = 0; i < 500; ++i) {
    const PlanarPose target = random_pose(rng);
    const PlanarPose origin = random_pose(rng);
    const PlanarPose rel = egocentric(target, origin);
    const PlanarPose back = compose(origin, {rel.x, rel.y, rel.yaw});
    CHECK(close(back, target, 1e-9));
  }
}

TEST_CASE("egocentric is invariant under a common rigid transform") {
  Rng rng(9);
  for (int i = 0; i < 200; ++i) {
    const PlanarPose target = random_pose(rng);
    const PlanarPose origin = random_pose(rng);
    const PlanarPose frame = random_pose(rng);
    auto apply = [&](const PlanarPose& p) {
      const double c = std::cos(frame.yaw), s = std::sin(frame.yaw);
      return PlanarPose{frame.x + c * p.x - s * p.y, frame.y + s * p.x + c * p.y,
                        wrap_angle(frame.yaw + p.yaw)};
    };
    const PlanarPose a = egocentric(target, origin);
    const PlanarPose b = egocentric(apply(target), apply(origin));
    CHECK(close(a, b, 1e-9));
  }
}

TEST_CASE("compose examples") {
  const PlanarPose moved = compose({1, 1, M_PI / 2}, {1, 0, 0});
  CHECK(moved.x == doctest::Approx(1.0));
  CHECK(moved.y == doctest::Approx(2.0));
  CHECK(moved.yaw == doctest::Approx(M_PI / 2));

  Rng rng(10);
  const PlanarPose base = random_pose(rng);
  CHECK(close(compose(base, {0, 0, 0}), base, 1e-15));
}

TEST_CASE("chain of motions and exact inverses returns to start") {
  Rng rng(12);
  PlanarPose pose = random_pose(rng);
  const PlanarPose start = pose;
  std::vector<Egomotion> motions;
  for (int i = 0; i < 50; ++i) {
    motions.push_back({rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-M_PI, M_PI)});
    pose = compose(pose, motions.back());
  }
  for (int i = 49; i >= 0; --i) pose = compose(pose, inverse(motions[i]));
  CHECK(close(pose, start, 1e-9));
}

TEST_CASE("between recovers the motion linking two poses") {
  Rng rng(13);
  for (int i = 0; i < 200; ++i) {
    const PlanarPose from = random_pose(rng);
    const PlanarPose to = random_pose(rng);
    CHECK(close(compose(from, between(from, to)), to, 1e-12));
  }
}

TEST_CASE("normalize examples and round trip") {
  const EnvironmentExtent extent{20.0};
  const PlanarPose corner = normalize({20, -20, 0.3}, extent);
  CHECK(corner.x == doctest::Approx(1.0));
  CHECK(corner.y == doctest::Approx(-1.0));
  CHECK(corner.yaw == 0.3);

  const PlanarPose origin = normalize({0, 0, 1.1}, extent);
  CHECK(origin.x == 0.0);
  CHECK(origin.y == 0.0);

  Rng rng(14);
  for (int i = 0; i < 200; ++i) {
    const PlanarPose p = random_pose(rng, 30.0);  // beyond the extent: no clamping
    const PlanarPose back = denormalize(normalize(p, extent), extent);
    CHECK(close(back, p, 1e-12));
  }
}

TEST_CASE("yaw stays in (-pi, pi]") {
  Rng rng(15);
  for (int i = 0; i < 500; ++i) {
    const double raw = rng.uniform(-50.0, 50.0);
    const double w = wrap_angle(raw);
    CHECK(w > -M_PI);
    CHECK(w <= M_PI);
  }
  CHECK(wrap_angle(M_PI) == doctest::Approx(M_PI));
  CHECK(wrap_angle(-M_PI) == doctest::Approx(M_PI));
  CHECK(wrap_angle(3 * M_PI) == doctest::Approx(M_PI));
}

TEST_SUITE_END();
