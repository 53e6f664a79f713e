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

#include "dmnloc/filter.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dmnloc/rng.hpp"

namespace dmnloc {

namespace {

constexpr std::uint64_t kStreamInit = fnv1a("filter.init");
constexpr std::uint64_t kStreamTransition = fnv1a("filter.transition");
constexpr std::uint64_t kStreamResample = fnv1a("filter.resample");

NodeId obs_trunk(Graph& g, ParameterStore& params, const ModelSpec& spec, const MapNodes& map,
                 const QueryNodes& query, NodeId candidate) {
  if (spec.map_kind == MapKind::kLatentVector) {
    return g.concat({map.latent, query.features, g.encode4(candidate)});
  }
  NodeId x;
  if (spec.map_kind == MapKind::kViewEmbed) {
    const AttendOut att = attend_nodes(g, params, spec, map, query.key, candidate);
    std::vector<NodeId> parts = {att.readout, query.features};
    if (!spec.egocentric)
      parts.push_back(g.tile4(g.encode4(candidate), spec.emb_h(), spec.emb_w()));
    x = g.concat(parts);
  } else {
    const NodeId cand_block = g.tile4(g.encode4(candidate), spec.emb_h(), spec.emb_w());
    x = g.concat({map.latent, query.features, cand_block});
  }
  x = conv_stack(g, params, spec, "cnn6.", cnn6_layers(), x);
  return g.reshape(x, {spec.emb_h() * spec.emb_w() * spec.ch(64)});
}

NodeId obs_head(Graph& g, ParameterStore& params, const ModelSpec& spec, NodeId trunk) {
  const NodeId hidden =
      g.dense(trunk, g.param(params, "fc1.0.w"), g.param(params, "fc1.0.b"), true);
  return g.dense(hidden, g.param(params, "fc1.1.w"), g.param(params, "fc1.1.b"),
                 spec.fc_final_relu);
}

}  // namespace

InitialBelief init_belief(const InitialBeliefSpec& spec, const PlanarPose& first_query_normalized,
                          std::uint64_t seed, int k, const EnvironmentExtent& extent) {
  if (k < 1) throw std::invalid_argument("particle count must be at least 1");
  Rng rng(seed, kStreamInit);
  InitialBelief out;
  out.belief.particles.resize(static_cast<std::size_t>(k));
  out.belief.log_weights.assign(static_cast<std::size_t>(k), -std::log(static_cast<double>(k)));
  if (spec.kind == InitialBeliefSpec::Kind::kUniformGlobal) {
    out.mean = {0.0, 0.0, 0.0};
    for (auto& p : out.belief.particles) {
      p.x = rng.uniform(-1.0, 1.0);
      p.y = rng.uniform(-1.0, 1.0);
      p.yaw = wrap_angle(rng.uniform(-M_PI, M_PI));
    }
  } else {
    if (spec.sigma_xy <= 0.0 || spec.sigma_yaw <= 0.0)
      throw std::invalid_argument("tracking sigmas must be positive");
    const double sx = spec.sigma_xy / extent.half_width;
    out.mean.x = first_query_normalized.x + rng.gauss() * sx;
    out.mean.y = first_query_normalized.y + rng.gauss() * sx;
    out.mean.yaw = wrap_angle(first_query_normalized.yaw + rng.gauss() * spec.sigma_yaw);
    for (auto& p : out.belief.particles) {
      p.x = out.mean.x + rng.gauss() * sx;
      p.y = out.mean.y + rng.gauss() * sx;
      p.yaw = wrap_angle(out.mean.yaw + rng.gauss() * spec.sigma_yaw);
    }
  }
  return out;
}

ParticleBelief transition(const ParticleBelief& belief, const Egomotion& motion,
                          const TransitionNoise& noise, std::uint64_t seed,
                          const EnvironmentExtent& extent) {
  Rng rng(seed, kStreamTransition);
  const Egomotion scaled{motion.dx / extent.half_width, motion.dy / extent.half_width, motion.dyaw};
  ParticleBelief out;
  out.particles.reserve(belief.size());
  out.log_weights = belief.log_weights;
  const double sx = noise.sigma_x / extent.half_width;
  const double sy = noise.sigma_y / extent.half_width;
  for (const PlanarPose& p : belief.particles) {
    PlanarPose q = compose(p, scaled);
    if (noise.sigma_x > 0.0) q.x += rng.gauss() * sx;
    if (noise.sigma_y > 0.0) q.y += rng.gauss() * sy;
    if (noise.sigma_yaw > 0.0) q.yaw = wrap_angle(q.yaw + rng.gauss() * noise.sigma_yaw);
    out.particles.push_back(q);
  }
  return out;
}

ParticleBelief reweight(const ParticleBelief& belief, const std::vector<double>& loglik) {
  if (loglik.size() != belief.size())
    throw std::invalid_argument("log-likelihood count does not match particle count");
  ParticleBelief out;
  out.particles = belief.particles;
  out.log_weights.resize(belief.size());
  for (std::size_t i = 0; i < belief.size(); ++i)
    out.log_weights[i] = loglik[i] + belief.log_weights[i];
  const double lse = stable_logsumexp(out.log_weights.data(), out.log_weights.size());
  for (double& w : out.log_weights) w -= lse;
  return out;
}

PlanarPose estimate(const ParticleBelief& belief) {
  if (belief.size() == 0) throw std::invalid_argument("estimate of an empty belief");
  double sx = 0.0, sy = 0.0, ss = 0.0, sc = 0.0;
  for (std::size_t i = 0; i < belief.size(); ++i) {
    const double w = std::exp(belief.log_weights[i]);
    const PlanarPose& p = belief.particles[i];
    sx += w * p.x;
    sy += w * p.y;
    ss += w * std::sin(p.yaw);
    sc += w * std::cos(p.yaw);
  }
  double yaw;
  if (std::hypot(ss, sc) < 1e-12) {
    const std::size_t best = static_cast<std::size_t>(
        std::max_element(belief.log_weights.begin(), belief.log_weights.end()) -
        belief.log_weights.begin());
    yaw = belief.particles[best].yaw;
  } else {
    yaw = std::atan2(ss, sc);
  }
  return {sx, sy, yaw};
}

ParticleBelief resample(const ParticleBelief& belief, std::uint64_t seed) {
  Rng rng(seed, kStreamResample);
  const std::size_t k = belief.size();
  std::vector<double> cumulative(k);
  double acc = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    acc += std::exp(belief.log_weights[i]);
    cumulative[i] = acc;
  }
  ParticleBelief out;
  out.particles.resize(k);
  out.log_weights.assign(k, -std::log(static_cast<double>(k)));
  for (std::size_t i = 0; i < k; ++i) {
    const double u = rng.uniform() * acc;
    const std::size_t j = static_cast<std::size_t>(
        std::lower_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin());
    out.particles[i] = belief.particles[std::min(j, k - 1)];
  }
  return out;
}

NodeId observe_loglik_node(Graph& g, ParameterStore& params, const ModelSpec& spec,
                           const MapNodes& map, const QueryNodes& query, NodeId candidate_pose) {
  return obs_head(g, params, spec, obs_trunk(g, params, spec, map, query, candidate_pose));
}

NodeId regress_offset_node(Graph& g, ParameterStore& params, const ModelSpec& spec,
                           const MapNodes& map, const QueryNodes& query, NodeId candidate_pose) {
  return obs_head(g, params, spec, obs_trunk(g, params, spec, map, query, candidate_pose));
}

MeasurementNodes measurement_update_nodes(Graph& g, ParameterStore& params, const ModelSpec& spec,
                                          const MapNodes& map, const QueryNodes& query,
                                          const ParticleBelief& prior, bool build_estimate) {
  const std::size_t k = prior.size();
  MeasurementNodes out;
  std::vector<NodeId> lnodes(k);
  out.loglik.resize(k);
  for (std::size_t i = 0; i < k; ++i) {
    const NodeId cand = g.pose_input(prior.particles[i], false);
    lnodes[i] = observe_loglik_node(g, params, spec, map, query, cand);
    out.loglik[i] = g.scalar(lnodes[i]);
  }
  Tensor prior_logw({static_cast<int>(k)});
  prior_logw.v = prior.log_weights;
  const NodeId unnormalized = g.add(g.pack(lnodes), g.constant(std::move(prior_logw)));
  const NodeId lse = g.logsumexp(unnormalized);
  out.log_weights = g.sub_scalar(unnormalized, lse);

  out.posterior.particles = prior.particles;
  out.posterior.log_weights = g.value(out.log_weights).v;

  if (build_estimate) {
    Tensor xs({static_cast<int>(k)}), ys({static_cast<int>(k)});
    Tensor sins({static_cast<int>(k)}), coss({static_cast<int>(k)});
    for (std::size_t i = 0; i < k; ++i) {
      xs.v[i] = prior.particles[i].x;
      ys.v[i] = prior.particles[i].y;
      sins.v[i] = std::sin(prior.particles[i].yaw);
      coss.v[i] = std::cos(prior.particles[i].yaw);
    }
    const NodeId w = g.exp(out.log_weights);
    out.estimate.x = g.dot(w, g.constant(std::move(xs)));
    out.estimate.y = g.dot(w, g.constant(std::move(ys)));
    out.estimate.yaw = g.atan2(g.dot(w, g.constant(std::move(sins))),
                               g.dot(w, g.constant(std::move(coss))));
    out.estimate.value = {g.scalar(out.estimate.x), g.scalar(out.estimate.y),
                          g.scalar(out.estimate.yaw)};
  }
  return out;
}

EstimateNodes regress_apply_nodes(Graph& g, NodeId offset3, const PlanarPose& candidate) {
  const double c = std::cos(candidate.yaw);
  const double s = std::sin(candidate.yaw);
  const NodeId dx = g.index(offset3, 0);
  const NodeId dy = g.index(offset3, 1);
  const NodeId dyaw = g.index(offset3, 2);
  EstimateNodes est;
  est.x = g.add_const(g.add(g.scale_const(dx, c), g.scale_const(dy, -s)), candidate.x);
  est.y = g.add_const(g.add(g.scale_const(dx, s), g.scale_const(dy, c)), candidate.y);
  est.yaw = g.wrap(g.add_const(dyaw, candidate.yaw));
  est.value = {g.scalar(est.x), g.scalar(est.y), g.scalar(est.yaw)};
  return est;
}

double observe_loglik(const RenderedImage& query, const PlanarPose& candidate,
                      const ViewEmbeddingMap& map, ParameterStore& params, const ModelSpec& spec) {
  Graph g;
  MapNodes nodes = map_nodes_from(g, params, spec, map);
  const QueryNodes q = make_query_nodes(g, params, spec, query);
  const NodeId cand = g.pose_input(candidate, false);
  return g.scalar(observe_loglik_node(g, params, spec, nodes, q, cand));
}

std::vector<double> observe_loglik_all(Graph& g, ParameterStore& params, const ModelSpec& spec,
                                       const MapNodes& map, const QueryNodes& query,
                                       const std::vector<PlanarPose>& candidates) {
  std::vector<double> out(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const std::size_t watermark = g.mark();
    const NodeId cand = g.pose_input(candidates[i], false);
    out[i] = g.scalar(observe_loglik_node(g, params, spec, map, query, cand));
    g.rewind(watermark);
  }
  return out;
}

ParticleBelief measurement_update(const ParticleBelief& belief, const RenderedImage& query,
                                  const ViewEmbeddingMap& map, ParameterStore& params,
                                  const ModelSpec& spec) {
  Graph g;
  MapNodes nodes = map_nodes_from(g, params, spec, map);
  const QueryNodes q = make_query_nodes(g, params, spec, query);
  return reweight(belief, observe_loglik_all(g, params, spec, nodes, q, belief.particles));
}

PlanarPose regress_candidate(const PlanarPose& prev_estimate, const Egomotion* motion,
                             const EnvironmentExtent& extent) {
  if (!motion) return prev_estimate;
  const Egomotion scaled{motion->dx / extent.half_width, motion->dy / extent.half_width,
                         motion->dyaw};
  return compose(prev_estimate, scaled);
}

PlanarPose regress_step(const PlanarPose& prev_estimate, const Egomotion* motion,
                        const RenderedImage& query, const ViewEmbeddingMap& map,
                        ParameterStore& params, const ModelSpec& spec,
                        const EnvironmentExtent& extent) {
  const PlanarPose candidate = regress_candidate(prev_estimate, motion, extent);
  Graph g;
  MapNodes nodes = map_nodes_from(g, params, spec, map);
  const QueryNodes q = make_query_nodes(g, params, spec, query);
  const NodeId cand = g.pose_input(candidate, false);
  const NodeId offset = regress_offset_node(g, params, spec, nodes, q, cand);
  return regress_apply_nodes(g, offset, candidate).value;
}

}  // namespace dmnloc
