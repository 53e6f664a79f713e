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

#include "dmnloc/mapnet.hpp"

#include <cmath>
#include <cstdlib>
#include <stdexcept>

namespace dmnloc {

int ModelSpec::ch(int base) const {
  const int w = static_cast<int>(std::lround(base * channel_scale));
  return w < 1 ? 1 : w;
}

const std::vector<std::string>& variant_names() {
  static const std::vector<std::string> names = {
      "dmn-pf",           "regression",
      "latent-image-pf",  "latent-image-regression",
      "latent-vector-pf", "latent-vector-regression",
      "no-attention",     "no-egocentric",
      "no-both"};
  return names;
}

ModelSpec ModelSpec::from_variant(const std::string& variant) {
  ModelSpec s;
  s.variant = variant;
  if (variant == "dmn-pf") {
  } else if (variant == "regression") {
    s.algorithm = Algorithm::kRegression;
  } else if (variant == "latent-image-pf") {
    s.map_kind = MapKind::kLatentImage;
  } else if (variant == "latent-image-regression") {
    s.map_kind = MapKind::kLatentImage;
    s.algorithm = Algorithm::kRegression;
  } else if (variant == "latent-vector-pf") {
    s.map_kind = MapKind::kLatentVector;
  } else if (variant == "latent-vector-regression") {
    s.map_kind = MapKind::kLatentVector;
    s.algorithm = Algorithm::kRegression;
  } else if (variant == "no-attention") {
    s.attention = false;
  } else if (variant == "no-egocentric") {
    s.egocentric = false;
  } else if (variant == "no-both") {
    s.attention = false;
    s.egocentric = false;
  } else {
    throw std::invalid_argument("unknown variant: " + variant);
  }
  return s;
}

ModelSpec ModelSpec::from_config(const Config& cfg) {
  ModelSpec s = from_variant(cfg.str("variant"));
  s.img_h = static_cast<int>(cfg.integer("img_h"));
  s.img_w = static_cast<int>(cfg.integer("img_w"));
  s.channel_scale = cfg.real("channel_scale");
  s.attention_softmax = cfg.flag("attention_softmax");
  s.share_cnn45 = cfg.flag("share_cnn45");
  s.fc_final_relu = cfg.flag("fc_final_relu");
  if (s.emb_d() < 4) throw std::invalid_argument("channel_scale too small: embedding depth < 4");
  return s;
}

const std::vector<LayerDef>& cnn1_layers() {
  static const std::vector<LayerDef> layers = {
      {32, 2, 2, true}, {32, 3, 1, true}, {64, 2, 2, true}, {64, 3, 1, true}};
  return layers;
}
const std::vector<LayerDef>& cnn2_layers() {
  static const std::vector<LayerDef> layers = {{64, 3, 1, true}, {32, 3, 1, false}};
  return layers;
}
const std::vector<LayerDef>& cnn3_layers() {
  static const std::vector<LayerDef> layers = {{32, 2, 2, true}, {32, 3, 1, true},
                                               {64, 2, 2, true}, {32, 3, 1, true},
                                               {64, 3, 1, true}, {32, 3, 1, false}};
  return layers;
}
const std::vector<LayerDef>& cnn4_layers() {
  static const std::vector<LayerDef> layers = {{128, 3, 1, true}, {64, 3, 1, true}};
  return layers;
}
const std::vector<LayerDef>& cnn5_layers() {
  static const std::vector<LayerDef> layers = {{32, 2, 2, true},  {32, 3, 1, true},
                                               {64, 2, 2, true},  {64, 3, 1, true},
                                               {128, 3, 1, true}, {64, 3, 1, true}};
  return layers;
}
const std::vector<LayerDef>& cnn6_layers() {
  static const std::vector<LayerDef> layers = {{64, 3, 1, true}, {64, 3, 1, true}, {64, 3, 1, true}};
  return layers;
}

const std::vector<std::string>& map_encoder_prefixes() {
  static const std::vector<std::string> prefixes = {"cnn1.", "ctxmix.", "ctxfc."};
  return prefixes;
}

namespace {

void create_conv_group(ParameterStore& store, const ModelSpec& spec, const std::string& prefix,
                       const std::vector<LayerDef>& layers, int in_channels, std::uint64_t seed) {
  int cin = in_channels;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerDef& l = layers[i];
    const int cout = spec.ch(l.filters);
    const std::string wname = prefix + std::to_string(i) + ".w";
    const std::string bname = prefix + std::to_string(i) + ".b";
    const int fan_in = l.kernel * l.kernel * cin;
    const int fan_out = l.kernel * l.kernel * cout;
    store.create(wname, glorot_uniform({l.kernel, l.kernel, cin, cout}, fan_in, fan_out, seed, wname));
    store.create(bname, Tensor({cout}));
    cin = cout;
  }
}

void create_dense(ParameterStore& store, const std::string& wname, const std::string& bname,
                  int n, int m, std::uint64_t seed) {
  store.create(wname, glorot_uniform({n, m}, n, m, seed, wname));
  store.create(bname, Tensor({m}));
}

int cnn6_input_channels(const ModelSpec& spec) {
  switch (spec.map_kind) {
    case MapKind::kViewEmbed: {
      int c = spec.ch(64) + spec.key_channels() + spec.ch(64);  // readout + CNN5 features
      if (!spec.egocentric) c += 4;  // candidate pose conditioning on the query side
      return c;
    }
    case MapKind::kLatentImage:
      return spec.emb_d() + spec.ch(64) + 4;
    case MapKind::kLatentVector:
      return 0;  // dense path, no CNN6
  }
  return 0;
}

ParameterStore build_parameters_with_width(const ModelSpec& spec, std::uint64_t seed, int lv_width) {
  ParameterStore store;
  const int head_out = spec.algorithm == Algorithm::kRegression ? 3 : 1;
  create_conv_group(store, spec, "cnn1.", cnn1_layers(), 3, seed);
  if (spec.map_kind == MapKind::kViewEmbed) {
    create_conv_group(store, spec, "cnn2.", cnn2_layers(), spec.emb_d() + 4, seed);
    create_conv_group(store, spec, "cnn3.", cnn3_layers(), 3, seed);
    if (!spec.share_cnn45) create_conv_group(store, spec, "cnn4.", cnn4_layers(), spec.emb_d(), seed);
  }
  if (spec.map_kind == MapKind::kLatentImage)
    create_conv_group(store, spec, "ctxmix.", {{64, 3, 1, true}}, spec.emb_d() + 4, seed);
  create_conv_group(store, spec, "cnn5.", cnn5_layers(), 3, seed);
  const int flat_q = spec.emb_h() * spec.emb_w() * spec.ch(64);
  if (spec.map_kind == MapKind::kLatentVector) {
    const int flat_ctx = spec.emb_h() * spec.emb_w() * spec.emb_d();
    create_dense(store, "ctxfc.w", "ctxfc.b", flat_ctx + 4, lv_width, seed);
    create_dense(store, "qfc.w", "qfc.b", flat_q, lv_width, seed);
    create_dense(store, "fc1.0.w", "fc1.0.b", 2 * lv_width + 4, spec.ch(512), seed);
  } else {
    create_conv_group(store, spec, "cnn6.", cnn6_layers(), cnn6_input_channels(spec), seed);
    const int flat = spec.emb_h() * spec.emb_w() * spec.ch(64);
    create_dense(store, "fc1.0.w", "fc1.0.b", flat, spec.ch(512), seed);
  }
  create_dense(store, "fc1.1.w", "fc1.1.b", spec.ch(512), head_out, seed);
  return store;
}

}  // namespace

int latent_vector_width(const ModelSpec& spec) {
  ModelSpec reference = spec;
  reference.map_kind = MapKind::kViewEmbed;
  reference.egocentric = true;
  reference.attention = true;
  const std::size_t target = build_parameters_with_width(reference, 0, 0).parameter_count();
  ModelSpec lv = spec;
  lv.map_kind = MapKind::kLatentVector;
  int best = 8;
  std::size_t best_diff = static_cast<std::size_t>(-1);
  for (int width = 8; width <= 2048; width += 8) {
    const std::size_t count = build_parameters_with_width(lv, 0, width).parameter_count();
    const std::size_t diff = count > target ? count - target : target - count;
    if (diff < best_diff) {
      best_diff = diff;
      best = width;
    }
    if (count > target && diff > best_diff) break;
  }
  return best;
}

ParameterStore build_parameters(const ModelSpec& spec, std::uint64_t seed) {
  const int lv = spec.map_kind == MapKind::kLatentVector ? latent_vector_width(spec) : 0;
  return build_parameters_with_width(spec, seed, lv);
}

ContextObservation to_context(const Observation& obs, const EnvironmentExtent& extent) {
  return {obs.image, normalize(obs.pose, extent)};
}

NodeId image_node(Graph& g, const RenderedImage& img) {
  Tensor t;
  t.rank = 3;
  t.shape = {img.h, img.w, 3, 1};
  t.v.resize(img.rgb.size());
  for (std::size_t i = 0; i < img.rgb.size(); ++i) t.v[i] = static_cast<double>(img.rgb[i]);
  return g.constant(std::move(t));
}

NodeId conv_stack(Graph& g, ParameterStore& params, const ModelSpec& spec,
                  const std::string& prefix, const std::vector<LayerDef>& layers, NodeId in) {
  NodeId x = in;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerDef& l = layers[i];
    const NodeId w = g.param(params, prefix + std::to_string(i) + ".w");
    const NodeId b = g.param(params, prefix + std::to_string(i) + ".b");
    x = g.conv2d(x, w, b, l.stride, l.relu);
  }
  return x;
}

NodeId encode_context_node(Graph& g, ParameterStore& params, const ModelSpec& spec, NodeId image) {
  return conv_stack(g, params, spec, "cnn1.", cnn1_layers(), image);
}

NodeId processed_embedding_node(Graph& g, ParameterStore& params, const ModelSpec& spec,
                                NodeId embedding) {
  if (!spec.share_cnn45) return conv_stack(g, params, spec, "cnn4.", cnn4_layers(), embedding);
  NodeId x = embedding;
  for (int layer = 4; layer <= 5; ++layer) {
    const std::string idx = std::to_string(layer);
    x = g.conv2d(x, g.param(params, "cnn5." + idx + ".w"), g.param(params, "cnn5." + idx + ".b"), 1,
                 true);
  }
  return x;
}

namespace {

NodeId enc4_const(Graph& g, const PlanarPose& p) {
  Tensor t({4});
  const auto e = encode4(p);
  t.v = {e[0], e[1], e[2], e[3]};
  return g.constant(std::move(t));
}

}  // namespace

MapNodes build_map_nodes(Graph& g, ParameterStore& params, const ModelSpec& spec,
                         const std::vector<ContextObservation>& contexts) {
  if (contexts.empty()) throw std::invalid_argument("map needs at least one context");
  MapNodes map;
  map.count = static_cast<int>(contexts.size());
  const int h = spec.emb_h();
  const int w = spec.emb_w();
  switch (spec.map_kind) {
    case MapKind::kViewEmbed: {
      for (const auto& ctx : contexts) {
        const NodeId vi = encode_context_node(g, params, spec, image_node(g, ctx.image));
        map.embeddings.push_back(vi);
        map.processed.push_back(processed_embedding_node(g, params, spec, vi));
        map.viewpoints.push_back(ctx.pose);
      }
      break;
    }
    case MapKind::kLatentImage: {
      NodeId sum = -1;
      for (const auto& ctx : contexts) {
        const NodeId fi = encode_context_node(g, params, spec, image_node(g, ctx.image));
        const NodeId with_pose = g.concat({fi, g.tile4(enc4_const(g, ctx.pose), h, w)});
        const NodeId gi = conv_stack(g, params, spec, "ctxmix.", {{64, 3, 1, true}}, with_pose);
        sum = sum < 0 ? gi : g.add(sum, gi);
      }
      map.latent = g.scale_const(sum, 1.0 / map.count);
      break;
    }
    case MapKind::kLatentVector: {
      NodeId sum = -1;
      for (const auto& ctx : contexts) {
        const NodeId fi = encode_context_node(g, params, spec, image_node(g, ctx.image));
        const NodeId flat = g.reshape(fi, {h * w * spec.emb_d()});
        const NodeId with_pose = g.concat({flat, enc4_const(g, ctx.pose)});
        const NodeId vec = g.dense(with_pose, g.param(params, "ctxfc.w"), g.param(params, "ctxfc.b"),
                                   true);
        sum = sum < 0 ? vec : g.add(sum, vec);
      }
      map.latent = g.scale_const(sum, 1.0 / map.count);
      break;
    }
  }
  return map;
}

MapNodes map_nodes_from(Graph& g, ParameterStore& params, const ModelSpec& spec,
                        const ViewEmbeddingMap& map) {
  if (map.entries.empty()) throw std::invalid_argument("empty map");
  MapNodes nodes;
  nodes.count = static_cast<int>(map.entries.size());
  for (const auto& e : map.entries) {
    const NodeId vi = g.constant(e.embedding);
    nodes.embeddings.push_back(vi);
    nodes.viewpoints.push_back(e.viewpoint);
    nodes.processed.push_back(processed_embedding_node(g, params, spec, vi));
  }
  return nodes;
}

Tensor encode_context(const ContextObservation& ctx, ParameterStore& params, const ModelSpec& spec) {
  if (ctx.image.h != spec.img_h || ctx.image.w != spec.img_w)
    throw std::invalid_argument("context image extents do not match the model configuration");
  Graph g;
  const NodeId vi = encode_context_node(g, params, spec, image_node(g, ctx.image));
  return g.value(vi);
}

ViewEmbeddingMap build_map(const std::vector<ContextObservation>& contexts, ParameterStore& params,
                           const ModelSpec& spec) {
  ViewEmbeddingMap out;
  for (const auto& ctx : contexts)
    out.entries.push_back({encode_context(ctx, params, spec), ctx.pose});
  if (out.entries.empty()) throw std::invalid_argument("map needs at least one context");
  return out;
}

LatentImageMap build_latent_image_map(const std::vector<ContextObservation>& contexts,
                                      ParameterStore& params, const ModelSpec& spec) {
  Graph g;
  ModelSpec li = spec;
  li.map_kind = MapKind::kLatentImage;
  const MapNodes map = build_map_nodes(g, params, li, contexts);
  return {g.value(map.latent)};
}

LatentVectorMap build_latent_vector_map(const std::vector<ContextObservation>& contexts,
                                        ParameterStore& params, const ModelSpec& spec) {
  Graph g;
  ModelSpec lv = spec;
  lv.map_kind = MapKind::kLatentVector;
  const MapNodes map = build_map_nodes(g, params, lv, contexts);
  return {g.value(map.latent)};
}

}  // namespace dmnloc
