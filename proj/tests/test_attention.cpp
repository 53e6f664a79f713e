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

#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "dmnloc/attention.hpp"
#include "dmnloc/rng.hpp"
#include "oracles.hpp"

using namespace dmnloc;

namespace {

ModelSpec tiny_spec(const std::string& variant = "dmn-pf") {
  ModelSpec s = ModelSpec::from_variant(variant);
  s.img_h = 8;
  s.img_w = 32;
  s.channel_scale = 0.25;
  return s;
}

RenderedImage random_image(const ModelSpec& s, Rng& rng) {
  RenderedImage img;
  img.h = s.img_h;
  img.w = s.img_w;
  img.rgb.resize(static_cast<std::size_t>(s.img_h) * s.img_w * 3);
  for (float& v : img.rgb) v = static_cast<float>(rng.uniform());
  return img;
}

ViewEmbeddingMap random_map(int n, const ModelSpec& s, ParameterStore& params, Rng& rng) {
  std::vector<ContextObservation> contexts;
  for (int i = 0; i < n; ++i) {
    ContextObservation c;
    c.image = random_image(s, rng);
    c.pose = {rng.uniform(-1, 1), rng.uniform(-1, 1), wrap_angle(rng.uniform(-M_PI, M_PI))};
    contexts.push_back(std::move(c));
  }
  return build_map(contexts, params, s);
}

PlanarPose rigid_apply(const PlanarPose& frame, const PlanarPose& p) {
  const double c = std::cos(frame.yaw), sn = std::sin(frame.yaw);
  return {frame.x + c * p.x - sn * p.y, frame.y + sn * p.x + c * p.y,
          wrap_angle(frame.yaw + p.yaw)};
}

}  // namespace

TEST_SUITE_BEGIN("attention");

TEST_CASE("tiled coordinate block repeats encode4 at every cell") {
  Graph g;
  const PlanarPose rel{0.3, -0.7, 1.1};
  const auto e = encode4(rel);
  Tensor enc({4});
  enc.v = {e[0], e[1], e[2], e[3]};
  const Tensor& tiled = g.value(g.tile4(g.constant(enc), 2, 8));
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 8; ++c)
      for (int j = 0; j < 4; ++j) CHECK(tiled.at(r, c, j) == e[static_cast<std::size_t>(j)]);
}

TEST_CASE("zero weights give zero keys") {
  ModelSpec s = tiny_spec();
  ParameterStore params = build_parameters(s, 1);
  for (auto& e : params.entries()) std::fill(e.value.v.begin(), e.value.v.end(), 0.0);
  Rng rng(3);
  const ViewEmbeddingMap map = random_map(1, s, params, rng);
  const Tensor key = view_key(map.entries[0].embedding, {0.1, 0.2, 0.3}, params, s);
  for (double x : key.v) CHECK(x == 0.0);
  const Tensor qkey = query_key(random_image(s, rng), params, s);
  for (double x : qkey.v) CHECK(x == 0.0);
}

TEST_CASE("query key shape") {
  ModelSpec s = tiny_spec();
  ParameterStore params = build_parameters(s, 2);
  Rng rng(5);
  const Tensor qkey = query_key(random_image(s, rng), params, s);
  CHECK(qkey.shape[0] == 2);
  CHECK(qkey.shape[1] == 8);
  CHECK(qkey.shape[2] == 8);  // 32c at c = 0.25
}

TEST_CASE("view key gradient w.r.t. the relative pose matches finite differences") {
  ModelSpec s = tiny_spec();
  s.img_h = 4;
  s.img_w = 8;
  s.channel_scale = 0.125;
  ParameterStore params = build_parameters(s, 3);
  Rng rng(7);
  const ViewEmbeddingMap map = random_map(1, s, params, rng);

  ParameterStore inputs;
  Tensor pose({3});
  pose.v = {0.37, -0.21, 0.55};
  inputs.create("pose", pose);
  auto build = [&](Graph& g) {
    const NodeId vi = g.constant(map.entries[0].embedding);
    const NodeId enc = g.encode4(g.param(inputs, "pose"));
    return g.reduce_sum(view_key_node(g, params, s, vi, enc));
  };
  auto value = [&] {
    Graph g;
    return g.scalar(build(g));
  };
  Graph g;
  GradStore grads = g.backward(build(g));
  CHECK(oracles::max_fd_rel_err(inputs.get("pose"), *grads.find("pose"), value, 1e-5) < 1e-4);
}

TEST_CASE("query key gradient w.r.t. parameters matches finite differences") {
  ModelSpec s = tiny_spec();
  s.img_h = 4;
  s.img_w = 8;
  s.channel_scale = 0.125;
  ParameterStore params = build_parameters(s, 4);
  Rng rng(11);
  const RenderedImage q = random_image(s, rng);
  auto value = [&] {
    Graph g;
    return g.scalar(g.reduce_sum(query_key_node(g, params, s, image_node(g, q))));
  };
  Graph g;
  GradStore grads = g.backward(g.reduce_sum(query_key_node(g, params, s, image_node(g, q))));
  for (const char* name : {"cnn3.0.w", "cnn3.5.w", "cnn3.2.b"})
    CHECK(oracles::max_fd_rel_err(params.get(name), *grads.find(name), value, 1e-5) < 1e-4);
}

TEST_CASE("singleton map gets full attention weight") {
  ModelSpec s = tiny_spec();
  ParameterStore params = build_parameters(s, 5);
  Rng rng(13);
  const ViewEmbeddingMap map = random_map(1, s, params, rng);
  const auto [readout, lambda] = attend(map, random_image(s, rng), {0.1, 0.1, 0.2}, params, s);
  REQUIRE(lambda.size() == 1);
  CHECK(lambda[0] == doctest::Approx(1.0));
}

TEST_CASE("two identical entries split attention and preserve the readout") {
  ModelSpec s = tiny_spec();
  ParameterStore params = build_parameters(s, 6);
  Rng rng(17);
  const ViewEmbeddingMap one = random_map(1, s, params, rng);
  ViewEmbeddingMap two = one;
  two.entries.push_back(one.entries[0]);
  const RenderedImage q = random_image(s, rng);
  const PlanarPose cand{0.2, -0.1, 0.4};
  const auto [r1, l1] = attend(one, q, cand, params, s);
  const auto [r2, l2] = attend(two, q, cand, params, s);
  REQUIRE(l2.size() == 2);
  CHECK(l2[0] == doctest::Approx(0.5));
  CHECK(l2[1] == doctest::Approx(0.5));
  for (std::size_t i = 0; i < r1.features.numel(); ++i)
    CHECK(r2.features.v[i] == doctest::Approx(r1.features.v[i]).epsilon(1e-12));
}

TEST_CASE("attention weights sum to one and readout is permutation invariant") {
  ModelSpec s = tiny_spec();
  ParameterStore params = build_parameters(s, 7);
  Rng rng(19);
  const ViewEmbeddingMap map = random_map(4, s, params, rng);
  const RenderedImage q = random_image(s, rng);
  const PlanarPose cand{-0.3, 0.5, -1.2};
  const auto [readout, lambda] = attend(map, q, cand, params, s);

  double sum = 0.0;
  for (double l : lambda) {
    CHECK(l >= 0.0);
    sum += l;
  }
  CHECK(std::fabs(sum - 1.0) < 1e-9);

  ViewEmbeddingMap shuffled;
  const int order[4] = {2, 0, 3, 1};
  for (int i : order) shuffled.entries.push_back(map.entries[static_cast<std::size_t>(i)]);
  const auto [readout2, lambda2] = attend(shuffled, q, cand, params, s);
  for (std::size_t i = 0; i < readout.features.numel(); ++i)
    CHECK(readout2.features.v[i] == doctest::Approx(readout.features.v[i]).epsilon(1e-12));
  for (int i = 0; i < 4; ++i)
    CHECK(lambda2[static_cast<std::size_t>(i)] ==
          doctest::Approx(lambda[static_cast<std::size_t>(order[i])]).epsilon(1e-12));
}

TEST_CASE("egocentric attention is invariant under a common rigid transform") {
  ModelSpec s = tiny_spec();
  ParameterStore params = build_parameters(s, 8);
  Rng rng(23);
  const ViewEmbeddingMap map = random_map(3, s, params, rng);
  const RenderedImage q = random_image(s, rng);
  const PlanarPose cand{0.15, -0.35, 0.8};
  const PlanarPose frame{0.4, 0.6, 2.1};

  const auto [r1, l1] = attend(map, q, cand, params, s);
  ViewEmbeddingMap moved = map;
  for (auto& e : moved.entries) e.viewpoint = rigid_apply(frame, e.viewpoint);
  const auto [r2, l2] = attend(moved, q, rigid_apply(frame, cand), params, s);
  for (std::size_t i = 0; i < l1.size(); ++i)
    CHECK(l2[i] == doctest::Approx(l1[i]).epsilon(1e-9));
  for (std::size_t i = 0; i < r1.features.numel(); ++i)
    CHECK(r2.features.v[i] == doctest::Approx(r1.features.v[i]).epsilon(1e-9));
}

TEST_CASE("without egocentric transforms the rigid invariance must break") {
  ModelSpec s = tiny_spec("no-egocentric");
  ParameterStore params = build_parameters(s, 9);
  Rng rng(29);
  const ViewEmbeddingMap map = random_map(3, s, params, rng);
  const RenderedImage q = random_image(s, rng);
  const PlanarPose cand{0.15, -0.35, 0.8};
  const PlanarPose frame{0.4, 0.6, 2.1};
  const auto [r1, l1] = attend(map, q, cand, params, s);
  ViewEmbeddingMap moved = map;
  for (auto& e : moved.entries) e.viewpoint = rigid_apply(frame, e.viewpoint);
  const auto [r2, l2] = attend(moved, q, rigid_apply(frame, cand), params, s);
  double max_diff = 0.0;
  for (std::size_t i = 0; i < r1.features.numel(); ++i)
    max_diff = std::max(max_diff, std::fabs(r1.features.v[i] - r2.features.v[i]));
  CHECK(max_diff > 1e-6);
}

TEST_CASE("readout is a convex combination of per-entry features") {
  ModelSpec s = tiny_spec();
  ParameterStore params = build_parameters(s, 10);
  Rng rng(31);
  const ViewEmbeddingMap map = random_map(4, s, params, rng);
  const RenderedImage q = random_image(s, rng);
  const PlanarPose cand{0.0, 0.0, 0.0};
  const auto [readout, lambda] = attend(map, q, cand, params, s);

  // Recompute per-entry blocks [CNN4(V_i) || key_i] directly.
  std::vector<Tensor> blocks;
  for (const auto& e : map.entries) {
    Graph g;
    const NodeId vi = g.constant(e.embedding);
    const NodeId processed = processed_embedding_node(g, params, s, vi);
    Tensor enc({4});
    const auto e4 = encode4(egocentric(e.viewpoint, cand));
    enc.v = {e4[0], e4[1], e4[2], e4[3]};
    const NodeId key = view_key_node(g, params, s, vi, g.constant(enc));
    blocks.push_back(g.value(g.concat({processed, key})));
  }
  for (std::size_t i = 0; i < readout.features.numel(); ++i) {
    double lo = blocks[0].v[i], hi = blocks[0].v[i];
    for (const auto& b : blocks) {
      lo = std::min(lo, b.v[i]);
      hi = std::max(hi, b.v[i]);
    }
    CHECK(readout.features.v[i] >= lo - 1e-12);
    CHECK(readout.features.v[i] <= hi + 1e-12);
  }
}

TEST_CASE("uniform weighting replaces attention in the ablation") {
  ModelSpec s = tiny_spec("no-attention");
  ParameterStore params = build_parameters(s, 11);
  Rng rng(37);
  const ViewEmbeddingMap map = random_map(3, s, params, rng);
  const auto [readout, lambda] = attend(map, random_image(s, rng), {0, 0, 0}, params, s);
  for (double l : lambda) CHECK(l == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("attend rejects an empty map") {
  ModelSpec s = tiny_spec();
  ParameterStore params = build_parameters(s, 12);
  Rng rng(41);
  ViewEmbeddingMap empty;
  CHECK_THROWS(attend(empty, random_image(s, rng), {0, 0, 0}, params, s));
}

TEST_SUITE_END();
