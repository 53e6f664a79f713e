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

#ifndef DMNLOC_FILTER_HPP
#define DMNLOC_FILTER_HPP

#include <cstdint>
#include <optional>
#include <vector>

#include "dmnloc/attention.hpp"
#include "dmnloc/mapnet.hpp"

namespace dmnloc {

/// Weighted particle set in normalized units. After every measurement update
/// the log-weights satisfy sum(exp(log w)) == 1 up to rounding.
struct ParticleBelief {
  std::vector<PlanarPose> particles;
  std::vector<double> log_weights;
  std::size_t size() const { return particles.size(); }
};

struct InitialBeliefSpec {
  enum class Kind { kUniformGlobal, kGaussianTracking };
  Kind kind = Kind::kUniformGlobal;
  double sigma_xy = 6.0;                 // meters
  double sigma_yaw = M_PI / 6.0;         // radians
};

/// Belief plus the sampled mean it was drawn around; the mean is what the
/// regression and uninformed baselines start from.
struct InitialBelief {
  ParticleBelief belief;
  PlanarPose mean;  // normalized units
};

struct TransitionNoise {
  double sigma_x = 0.2;                  // meters
  double sigma_y = 0.2;
  double sigma_yaw = 2.0 * M_PI / 180.0;
};

// For tracking, the Gaussian mean is first_query offset by a draw from the
// same distribution; for global localization first_query is ignored and the
// mean is the environment center. All log-weights start at -log K.
InitialBelief init_belief(const InitialBeliefSpec& spec, const PlanarPose& first_query_normalized,
                          std::uint64_t seed, int k, const EnvironmentExtent& extent);

// Applies the fixed transition geometry plus zero-mean Gaussian noise to
// every particle. Weights are unchanged. Motion is in meters.
ParticleBelief transition(const ParticleBelief& belief, const Egomotion& motion,
                          const TransitionNoise& noise, std::uint64_t seed,
                          const EnvironmentExtent& extent);

// Bayes update given per-particle unnormalized log-likelihoods.
ParticleBelief reweight(const ParticleBelief& belief, const std::vector<double>& loglik);

// Weighted-mean pose; yaw by the resultant of the weighted unit vectors,
// falling back to the heaviest particle when the resultant vanishes.
PlanarPose estimate(const ParticleBelief& belief);

// Multinomial resampling (evaluation only, never differentiated).
ParticleBelief resample(const ParticleBelief& belief, std::uint64_t seed);

// -- Observation model -------------------------------------------------------

// Scalar unnormalized log-likelihood node for one candidate pose.
NodeId observe_loglik_node(Graph& g, ParameterStore& params, const ModelSpec& spec,
                           const MapNodes& map, const QueryNodes& query, NodeId candidate_pose);

// Regression head: local (dx, dy, dyaw) offset node, shape {3}.
NodeId regress_offset_node(Graph& g, ParameterStore& params, const ModelSpec& spec,
                           const MapNodes& map, const QueryNodes& query, NodeId candidate_pose);

struct EstimateNodes {
  NodeId x = -1, y = -1, yaw = -1;
  PlanarPose value;
};

// Posterior log-weight node (pack + prior + normalization) and the weighted
// mean estimate, all on the tape. Used by training.
struct MeasurementNodes {
  NodeId log_weights = -1;
  std::vector<double> loglik;
  ParticleBelief posterior;
  EstimateNodes estimate;
};

MeasurementNodes measurement_update_nodes(Graph& g, ParameterStore& params, const ModelSpec& spec,
                                          const MapNodes& map, const QueryNodes& query,
                                          const ParticleBelief& prior, bool build_estimate);

// Estimate nodes from a regression offset applied in the candidate's frame.
EstimateNodes regress_apply_nodes(Graph& g, NodeId offset3, const PlanarPose& candidate);

// -- Value-level operations (evaluation path) --------------------------------

// Same arithmetic as the tape path; per-particle subgraphs are rewound so
// evaluation at large K stays cheap.
double observe_loglik(const RenderedImage& query, const PlanarPose& candidate,
                      const ViewEmbeddingMap& map, ParameterStore& params, const ModelSpec& spec);

std::vector<double> observe_loglik_all(Graph& g, ParameterStore& params, const ModelSpec& spec,
                                       const MapNodes& map, const QueryNodes& query,
                                       const std::vector<PlanarPose>& candidates);

ParticleBelief measurement_update(const ParticleBelief& belief, const RenderedImage& query,
                                  const ViewEmbeddingMap& map, ParameterStore& params,
                                  const ModelSpec& spec);

// One regression step: move the previous estimate by the egomotion (when
// present), then apply the predicted local offset.
PlanarPose regress_step(const PlanarPose& prev_estimate, const Egomotion* motion,
                        const RenderedImage& query, const ViewEmbeddingMap& map,
                        ParameterStore& params, const ModelSpec& spec,
                        const EnvironmentExtent& extent);

// Candidate for a regression step, normalized units.
PlanarPose regress_candidate(const PlanarPose& prev_estimate, const Egomotion* motion,
                             const EnvironmentExtent& extent);

}  // namespace dmnloc

#endif  // DMNLOC_FILTER_HPP
