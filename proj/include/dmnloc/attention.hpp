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

#ifndef DMNLOC_ATTENTION_HPP
#define DMNLOC_ATTENTION_HPP

#include <utility>
#include <vector>

#include "dmnloc/mapnet.hpp"

namespace dmnloc {

/// Per-query nodes that do not depend on the candidate pose, computed once
/// per filter step and shared across particles.
struct QueryNodes {
  NodeId image = -1;
  NodeId key = -1;       // CNN3 (view-embedding map only)
  NodeId features = -1;  // CNN5 features, or the query vector for latent-vector maps
};

QueryNodes make_query_nodes(Graph& g, ParameterStore& params, const ModelSpec& spec,
                            const RenderedImage& query);

// CNN2 over [V_i || tiled encode4(rel_pose)].
NodeId view_key_node(Graph& g, ParameterStore& params, const ModelSpec& spec, NodeId embedding,
                     NodeId enc4_rel);
NodeId query_key_node(Graph& g, ParameterStore& params, const ModelSpec& spec, NodeId query_image);

struct AttendOut {
  NodeId readout = -1;  // H x W x (64c + 32c)
  NodeId lambda = -1;   // attention weights over map entries
};

// Egocentric spatial attention: map viewpoints are re-expressed in the
// candidate's frame (unless the spec disables egocentric transforms), keys
// are matched against the query key with scaled dot products, and per-entry
// [CNN4(V_i) || key_i] blocks are weight-summed.
AttendOut attend_nodes(Graph& g, ParameterStore& params, const ModelSpec& spec, const MapNodes& map,
                       NodeId query_key, NodeId candidate_pose);

// -- Value-level operations --------------------------------------------------

Tensor view_key(const Tensor& embedding, const PlanarPose& rel_pose, ParameterStore& params,
                const ModelSpec& spec);
Tensor query_key(const RenderedImage& query, ParameterStore& params, const ModelSpec& spec);

struct MapReadout {
  Tensor features;
};

using AttentionWeights = std::vector<double>;

std::pair<MapReadout, AttentionWeights> attend(const ViewEmbeddingMap& map,
                                               const RenderedImage& query,
                                               const PlanarPose& candidate, ParameterStore& params,
                                               const ModelSpec& spec);

}  // namespace dmnloc

#endif  // DMNLOC_ATTENTION_HPP
