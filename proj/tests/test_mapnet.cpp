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
#include "dmnloc/mapnet.hpp"
#include "dmnloc/rng.hpp"
#include "oracles.hpp"

using namespace dmnloc;

namespace {

RenderedImage random_image(int h, int w, Rng& rng) {
  RenderedImage img;
  img.h = h;
  img.w = w;
  img.rgb.resize(static_cast<std::size_t>(h) * w * 3);
  for (float& v : img.rgb) v = static_cast<float>(rng.uniform());
  return img;
}

std::vector<ContextObservation> random_contexts(int n, const ModelSpec& spec, Rng& rng) {
  std::vector<ContextObservation> out;
  for (int i = 0; i < n; ++i) {
    ContextObservation c;
    c.image = random_image(spec.img_h, spec.img_w, rng);
    c.pose = {rng.uniform(-1, 1), rng.uniform(-1, 1), wrap_angle(rng.uniform(-M_PI, M_PI))};
    out.push_back(std::move(c));
  }
  return out;
}

ModelSpec tiny_spec(const std::string& variant = "dmn-pf") {
  ModelSpec s = ModelSpec::from_variant(variant);
  s.img_h = 8;
  s.img_w = 32;
  s.channel_scale = 0.25;
  return s;
}

}  // namespace

TEST_SUITE_BEGIN("mapnet");

TEST_CASE("embedding spec matches the two stride-2 downsamplings") {
  const ModelSpec s = tiny_spec();
  const EmbeddingSpec e = EmbeddingSpec::from(s);
  CHECK(e.h == 2);
  CHECK(e.w == 8);
  CHECK(e.d == 16);  // 64 * 0.25
}

TEST_CASE("encode_context output shape for the default configuration") {
  ModelSpec s = tiny_spec();
  Rng rng(3);
  ParameterStore params = build_parameters(s, 1);
  const Tensor v = encode_context(random_contexts(1, s, rng)[0], params, s);
  CHECK(v.rank == 3);
  CHECK(v.shape[0] == 2);
  CHECK(v.shape[1] == 8);
  CHECK(v.shape[2] == 16);
}

TEST_CASE("encode_context shape tracks image extents 8..64") {
  Rng rng(5);
  for (int h : {8, 12, 16}) {
    for (int w : {8, 24, 64}) {
      ModelSpec s = tiny_spec();
      s.img_h = h;
      s.img_w = w;
      ParameterStore params = build_parameters(s, 1);
      const Tensor v = encode_context(random_contexts(1, s, rng)[0], params, s);
      CHECK(v.shape[0] == (h + 3) / 4);
      CHECK(v.shape[1] == (w + 3) / 4);
      CHECK(v.shape[2] == s.emb_d());
    }
  }
}

TEST_CASE("all-zero weights give an all-zero embedding") {
  ModelSpec s = tiny_spec();
  ParameterStore params = build_parameters(s, 1);
  for (auto& e : params.entries()) std::fill(e.value.v.begin(), e.value.v.end(), 0.0);
  Rng rng(7);
  const Tensor v = encode_context(random_contexts(1, s, rng)[0], params, s);
  for (double x : v.v) CHECK(x == 0.0);
}

TEST_CASE("encode_context rejects mismatched image extents") {
  ModelSpec s = tiny_spec();
  ParameterStore params = build_parameters(s, 1);
  Rng rng(9);
  ContextObservation ctx;
  ctx.image = random_image(16, 16, rng);
  CHECK_THROWS(encode_context(ctx, params, s));
}

TEST_CASE("encode_context gradient w.r.t. the image matches finite differences") {
  ModelSpec s = tiny_spec();
  s.img_h = 4;
  s.img_w = 8;
  s.channel_scale = 0.125;
  ParameterStore params = build_parameters(s, 1);
  Rng rng(11);
  ParameterStore inputs;
  Tensor img({4, 8, 3});
  for (double& x : img.v) x = rng.uniform(0.05, 0.95);
  inputs.create("img", img);

  auto value = [&] {
    Graph g;
    return g.scalar(
        g.reduce_sum(encode_context_node(g, params, s, g.param(inputs, "img"))));
  };
  Graph g;
  GradStore grads =
      g.backward(g.reduce_sum(encode_context_node(g, params, s, g.param(inputs, "img"))));
  CHECK(oracles::max_fd_rel_err(inputs.get("img"), *grads.find("img"), value, 1e-5) < 1e-4);
}

TEST_CASE("build_map keeps one entry per context in order") {
  ModelSpec s = tiny_spec();
  ParameterStore params = build_parameters(s, 2);
  Rng rng(13);
  auto contexts = random_contexts(4, s, rng);
  const ViewEmbeddingMap map = build_map(contexts, params, s);
  REQUIRE(map.entries.size() == 4);
  for (int i = 0; i < 4; ++i) {
    CHECK(map.entries[i].viewpoint.x == contexts[i].pose.x);
    CHECK(map.entries[i].viewpoint.yaw == contexts[i].pose.yaw);
  }

  // Degenerate single-context map still works.
  const ViewEmbeddingMap one = build_map({contexts[0]}, params, s);
  CHECK(one.entries.size() == 1);

  // Duplicate contexts appear as two identical entries.
  const ViewEmbeddingMap dup = build_map({contexts[0], contexts[0]}, params, s);
  REQUIRE(dup.entries.size() == 2);
  CHECK(dup.entries[0].embedding.v == dup.entries[1].embedding.v);
}

TEST_CASE("build_map is equivariant to context permutation") {
  ModelSpec s = tiny_spec();
  ParameterStore params = build_parameters(s, 3);
  Rng rng(17);
  auto contexts = random_contexts(4, s, rng);
  const ViewEmbeddingMap a = build_map(contexts, params, s);
  std::vector<ContextObservation> reversed(contexts.rbegin(), contexts.rend());
  const ViewEmbeddingMap b = build_map(reversed, params, s);
  for (int i = 0; i < 4; ++i)
    CHECK(a.entries[i].embedding.v == b.entries[3 - i].embedding.v);
}

TEST_CASE("latent image map: mean of per-context features") {
  ModelSpec s = tiny_spec("latent-image-pf");
  ParameterStore params = build_parameters(s, 4);
  Rng rng(19);
  auto contexts = random_contexts(3, s, rng);

  // Identical contexts repeated k times equal the single-context map.
  const LatentImageMap single = build_latent_image_map({contexts[0]}, params, s);
  const LatentImageMap repeated =
      build_latent_image_map({contexts[0], contexts[0], contexts[0]}, params, s);
  for (std::size_t i = 0; i < single.features.numel(); ++i)
    CHECK(repeated.features.v[i] == doctest::Approx(single.features.v[i]).epsilon(1e-12));

  // Shape independent of context count.
  for (int n = 1; n <= 8; ++n) {
    auto more = random_contexts(n, s, rng);
    const LatentImageMap m = build_latent_image_map(more, params, s);
    CHECK(m.features.shape[0] == s.emb_h());
    CHECK(m.features.shape[1] == s.emb_w());
    CHECK(m.features.shape[2] == s.emb_d());
  }

  // Mean equals the brute-force average of per-context maps.
  const LatentImageMap all = build_latent_image_map(contexts, params, s);
  Tensor avg = build_latent_image_map({contexts[0]}, params, s).features;
  for (int i = 1; i < 3; ++i) {
    const Tensor fi = build_latent_image_map({contexts[static_cast<std::size_t>(i)]}, params, s).features;
    for (std::size_t j = 0; j < avg.numel(); ++j) avg.v[j] += fi.v[j];
  }
  for (std::size_t j = 0; j < avg.numel(); ++j) {
    avg.v[j] /= 3.0;
    CHECK(all.features.v[j] == doctest::Approx(avg.v[j]).epsilon(1e-12));
  }
}

TEST_CASE("latent maps are invariant to context permutation") {
  Rng rng(23);
  for (const char* variant : {"latent-image-pf", "latent-vector-pf"}) {
    ModelSpec s = tiny_spec(variant);
    ParameterStore params = build_parameters(s, 5);
    auto contexts = random_contexts(4, s, rng);
    std::vector<ContextObservation> reversed(contexts.rbegin(), contexts.rend());
    Tensor a, b;
    if (s.map_kind == MapKind::kLatentImage) {
      a = build_latent_image_map(contexts, params, s).features;
      b = build_latent_image_map(reversed, params, s).features;
    } else {
      a = build_latent_vector_map(contexts, params, s).features;
      b = build_latent_vector_map(reversed, params, s).features;
    }
    for (std::size_t i = 0; i < a.numel(); ++i)
      CHECK(a.v[i] == doctest::Approx(b.v[i]).epsilon(1e-12));
  }
}

TEST_CASE("latent vector map has a fixed length and parameter parity") {
  ModelSpec s = tiny_spec("latent-vector-pf");
  ParameterStore params = build_parameters(s, 6);
  Rng rng(29);
  const int width = latent_vector_width(s);
  for (int n = 1; n <= 8; n *= 2) {
    auto contexts = random_contexts(n, s, rng);
    const LatentVectorMap m = build_latent_vector_map(contexts, params, s);
    CHECK(m.features.rank == 1);
    CHECK(m.features.shape[0] == width);
  }

  // Identical contexts: mean equals the single vector.
  auto ctx = random_contexts(1, s, rng);
  const LatentVectorMap one = build_latent_vector_map(ctx, params, s);
  const LatentVectorMap three = build_latent_vector_map({ctx[0], ctx[0], ctx[0]}, params, s);
  for (std::size_t i = 0; i < one.features.numel(); ++i)
    CHECK(three.features.v[i] == doctest::Approx(one.features.v[i]).epsilon(1e-12));

  // Parameter parity with the view-embedding pipeline within 20%.
  ModelSpec ve = tiny_spec("dmn-pf");
  const double dmn_count = static_cast<double>(build_parameters(ve, 1).parameter_count());
  const double lv_count = static_cast<double>(params.parameter_count());
  CHECK(std::fabs(lv_count - dmn_count) / dmn_count < 0.20);
}

TEST_CASE("regression head parameter parity with the filter head") {
  const ModelSpec pf = tiny_spec("dmn-pf");
  const ModelSpec rg = tiny_spec("regression");
  const double a = static_cast<double>(build_parameters(pf, 1).parameter_count());
  const double b = static_cast<double>(build_parameters(rg, 1).parameter_count());
  CHECK(std::fabs(a - b) / a < 0.20);
}

TEST_CASE("ablation variants stay within 5% of the full model's parameters") {
  const double full = static_cast<double>(build_parameters(tiny_spec("dmn-pf"), 1).parameter_count());
  for (const char* variant : {"no-attention", "no-egocentric", "no-both"}) {
    const double count =
        static_cast<double>(build_parameters(tiny_spec(variant), 1).parameter_count());
    CHECK(std::fabs(count - full) / full < 0.05);
  }
}

TEST_CASE("parameter construction is deterministic and seed dependent") {
  const ModelSpec s = tiny_spec();
  ParameterStore a = build_parameters(s, 7);
  ParameterStore b = build_parameters(s, 7);
  ParameterStore c = build_parameters(s, 8);
  REQUIRE(a.size() == b.size());
  bool any_diff = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a.entry(i).value.v == b.entry(i).value.v);
    any_diff = any_diff || a.entry(i).value.v != c.entry(i).value.v;
  }
  CHECK(any_diff);
}

TEST_SUITE_END();
