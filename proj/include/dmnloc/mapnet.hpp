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

#ifndef DMNLOC_MAPNET_HPP
#define DMNLOC_MAPNET_HPP

#include <string>
#include <vector>

#include "dmnloc/config.hpp"
#include "dmnloc/envgen.hpp"
#include "dmnloc/geometry.hpp"
#include "dmnloc/graph.hpp"

namespace dmnloc {

enum class MapKind { kViewEmbed, kLatentImage, kLatentVector };
enum class Algorithm { kParticleFilter, kRegression };

/// Model family and architecture knobs shared by every network stack.
/// Channel widths are the published widths scaled by channel_scale.
struct ModelSpec {
  std::string variant = "dmn-pf";
  MapKind map_kind = MapKind::kViewEmbed;
  Algorithm algorithm = Algorithm::kParticleFilter;
  bool egocentric = true;
  bool attention = true;
  int img_h = 8;
  int img_w = 32;
  double channel_scale = 0.25;
  bool attention_softmax = true;
  bool share_cnn45 = false;
  bool fc_final_relu = false;

  int ch(int base) const;
  int emb_h() const { return (img_h + 3) / 4; }
  int emb_w() const { return (img_w + 3) / 4; }
  int emb_d() const { return ch(64); }
  int key_channels() const { return ch(32); }

  static ModelSpec from_config(const Config& cfg);
  static ModelSpec from_variant(const std::string& variant);
};

const std::vector<std::string>& variant_names();

/// Shape of a view embedding: H and W are 1/4 of the image extents (two
/// stride-2 layers), D the scaled channel width.
struct EmbeddingSpec {
  int h = 0, w = 0, d = 0;
  double scale = 0.25;
  static EmbeddingSpec from(const ModelSpec& spec) {
    return {spec.emb_h(), spec.emb_w(), spec.emb_d(), spec.channel_scale};
  }
};

struct LayerDef {
  int filters;  // base width before channel scaling
  int kernel;
  int stride;
  bool relu;
};

const std::vector<LayerDef>& cnn1_layers();
const std::vector<LayerDef>& cnn2_layers();
const std::vector<LayerDef>& cnn3_layers();
const std::vector<LayerDef>& cnn4_layers();
const std::vector<LayerDef>& cnn5_layers();
const std::vector<LayerDef>& cnn6_layers();

// All trainable tensors of a variant, deterministically initialized from the
// seed. The set depends only on (spec, latent width), never on input counts.
ParameterStore build_parameters(const ModelSpec& spec, std::uint64_t seed);

// Hidden width of the latent-vector baseline, chosen so its total parameter
// count is as close as possible to the view-embedding pipeline's.
int latent_vector_width(const ModelSpec& spec);

// Parameter-name prefixes of the map encoder (frozen by classification
// transfer when the map representation is fixed).
const std::vector<std::string>& map_encoder_prefixes();

/// Context with its pose already in normalized model units.
struct ContextObservation {
  RenderedImage image;
  PlanarPose pose;
};

ContextObservation to_context(const Observation& obs, const EnvironmentExtent& extent);

/// The structured map: one (view embedding, viewpoint) entry per context.
struct ViewEmbeddingMap {
  struct Entry {
    Tensor embedding;    // H x W x D
    PlanarPose viewpoint;  // normalized units
  };
  std::vector<Entry> entries;
};

struct LatentImageMap {
  Tensor features;  // H x W x D, independent of context count
};

struct LatentVectorMap {
  Tensor features;  // fixed-length vector
};

// -- Graph builders --------------------------------------------------------

NodeId image_node(Graph& g, const RenderedImage& img);

// Applies a named conv stack; `prefix` selects the parameter group.
NodeId conv_stack(Graph& g, ParameterStore& params, const ModelSpec& spec,
                  const std::string& prefix, const std::vector<LayerDef>& layers, NodeId in);

NodeId encode_context_node(Graph& g, ParameterStore& params, const ModelSpec& spec, NodeId image);

// CNN4 over a view embedding; ties to CNN5's last two layers when the spec
// shares them.
NodeId processed_embedding_node(Graph& g, ParameterStore& params, const ModelSpec& spec,
                                NodeId embedding);

/// Per-episode map tensors on the tape, with candidate-independent stacks
/// (CNN4, latent aggregation) computed once.
struct MapNodes {
  std::vector<NodeId> embeddings;      // view-embed: V_i
  std::vector<NodeId> processed;       // view-embed: CNN4(V_i)
  std::vector<PlanarPose> viewpoints;  // normalized
  NodeId latent = -1;                  // latent-image / latent-vector feature node
  int count = 0;
};

MapNodes build_map_nodes(Graph& g, ParameterStore& params, const ModelSpec& spec,
                         const std::vector<ContextObservation>& contexts);

// Re-enter an already-built view-embedding map as graph constants.
MapNodes map_nodes_from(Graph& g, ParameterStore& params, const ModelSpec& spec,
                        const ViewEmbeddingMap& map);

// -- Value-level operations -------------------------------------------------

Tensor encode_context(const ContextObservation& ctx, ParameterStore& params, const ModelSpec& spec);
ViewEmbeddingMap build_map(const std::vector<ContextObservation>& contexts, ParameterStore& params,
                           const ModelSpec& spec);
LatentImageMap build_latent_image_map(const std::vector<ContextObservation>& contexts,
                                      ParameterStore& params, const ModelSpec& spec);
LatentVectorMap build_latent_vector_map(const std::vector<ContextObservation>& contexts,
                                        ParameterStore& params, const ModelSpec& spec);

}  // namespace dmnloc

#endif  // DMNLOC_MAPNET_HPP
