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

#include "dmnloc/attention.hpp"

#include <cmath>
#include <stdexcept>

namespace dmnloc {

namespace {

NodeId enc4_const(Graph& g, const PlanarPose& p) {
  Tensor t({4});
  const auto e = encode4(p);
  t.v = {e[0], e[1], e[2], e[3]};
  return g.constant(std::move(t));
}

}  // namespace

QueryNodes make_query_nodes(Graph& g, ParameterStore& params, const ModelSpec& spec,
                            const RenderedImage& query) {
  if (query.h != spec.img_h || query.w != spec.img_w)
    throw std::invalid_argument("query image extents do not match the model configuration");
  QueryNodes q;
  q.image = image_node(g, query);
  const NodeId q5 = conv_stack(g, params, spec, "cnn5.", cnn5_layers(), q.image);
  switch (spec.map_kind) {
    case MapKind::kViewEmbed:
      q.key = query_key_node(g, params, spec, q.image);
      q.features = q5;
      break;
    case MapKind::kLatentImage:
      q.features = q5;
      break;
    case MapKind::kLatentVector: {
      const NodeId flat = g.reshape(q5, {spec.emb_h() * spec.emb_w() * spec.ch(64)});
      q.features = g.dense(flat, g.param(params, "qfc.w"), g.param(params, "qfc.b"), true);
      break;
    }
  }
  return q;
}

NodeId view_key_node(Graph& g, ParameterStore& params, const ModelSpec& spec, NodeId embedding,
                     NodeId enc4_rel) {
  const NodeId tiled = g.tile4(enc4_rel, spec.emb_h(), spec.emb_w());
  return conv_stack(g, params, spec, "cnn2.", cnn2_layers(), g.concat({embedding, tiled}));
}

NodeId query_key_node(Graph& g, ParameterStore& params, const ModelSpec& spec, NodeId query_image) {
  return conv_stack(g, params, spec, "cnn3.", cnn3_layers(), query_image);
}

AttendOut attend_nodes(Graph& g, ParameterStore& params, const ModelSpec& spec, const MapNodes& map,
                       NodeId query_key, NodeId candidate_pose) {
  if (map.count < 1) throw std::invalid_argument("attend over an empty map");
  const int n = map.count;

  std::vector<NodeId> keys(n);
  for (int i = 0; i < n; ++i) {
    const NodeId enc = spec.egocentric ? g.ego_encode4(candidate_pose, map.viewpoints[i])
                                       : enc4_const(g, map.viewpoints[i]);
    keys[i] = view_key_node(g, params, spec, map.embeddings[i], enc);
  }

  AttendOut out;
  if (spec.attention) {
    const double scale =
        1.0 / std::sqrt(static_cast<double>(spec.emb_h() * spec.emb_w() * spec.key_channels()));
    std::vector<NodeId> logits(n);
    for (int i = 0; i < n; ++i) logits[i] = g.scale_const(g.dot(keys[i], query_key), scale);
    const NodeId packed = g.pack(logits);
    out.lambda = spec.attention_softmax ? g.softmax(packed) : packed;
    NodeId sum = -1;
    for (int i = 0; i < n; ++i) {
      const NodeId entry = g.scale_by(g.concat({map.processed[i], keys[i]}), g.index(out.lambda, i));
      sum = sum < 0 ? entry : g.add(sum, entry);
    }
    out.readout = sum;
  } else {
    Tensor uniform({n});
    for (double& x : uniform.v) x = 1.0 / n;
    out.lambda = g.constant(std::move(uniform));
    NodeId sum = -1;
    for (int i = 0; i < n; ++i) {
      const NodeId entry = g.scale_const(g.concat({map.processed[i], keys[i]}), 1.0 / n);
      sum = sum < 0 ? entry : g.add(sum, entry);
    }
    out.readout = sum;
  }
  return out;
}

Tensor view_key(const Tensor& embedding, const PlanarPose& rel_pose, ParameterStore& params,
                const ModelSpec& spec) {
  Graph g;
  const NodeId vi = g.constant(embedding);
  const NodeId key = view_key_node(g, params, spec, vi, enc4_const(g, rel_pose));
  return g.value(key);
}

Tensor query_key(const RenderedImage& query, ParameterStore& params, const ModelSpec& spec) {
  if (query.h != spec.img_h || query.w != spec.img_w)
    throw std::invalid_argument("query image extents do not match the model configuration");
  Graph g;
  return g.value(query_key_node(g, params, spec, image_node(g, query)));
}

std::pair<MapReadout, AttentionWeights> attend(const ViewEmbeddingMap& map,
                                               const RenderedImage& query,
                                               const PlanarPose& candidate, ParameterStore& params,
                                               const ModelSpec& spec) {
  if (map.entries.empty()) throw std::invalid_argument("attend over an empty map");
  Graph g;
  MapNodes nodes = map_nodes_from(g, params, spec, map);
  const NodeId qkey = query_key_node(g, params, spec, image_node(g, query));
  const NodeId cand = g.pose_input(candidate, false);
  const AttendOut out = attend_nodes(g, params, spec, nodes, qkey, cand);
  return {MapReadout{g.value(out.readout)}, g.value(out.lambda).v};
}

}  // namespace dmnloc
