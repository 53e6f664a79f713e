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

#include "dmnloc/training.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dmnloc/parallel.hpp"
#include "dmnloc/rng.hpp"

namespace dmnloc {

namespace {

constexpr std::uint64_t kTagInit = fnv1a("train.init");
constexpr std::uint64_t kTagTrainEnv = fnv1a("train.episode");
constexpr std::uint64_t kTagValEnv = fnv1a("val.episode");
constexpr std::uint64_t kTagBelief = fnv1a("episode.belief0");
constexpr std::uint64_t kTagTransition = fnv1a("episode.transition");
constexpr std::uint64_t kTagDatasetPick = fnv1a("train.dataset-pick");
constexpr std::uint64_t kTagClassEnv = fnv1a("class.env");
constexpr std::uint64_t kTagClassEval = fnv1a("class.eval");

// Loss nodes on the tape: (x-x*)^2 + (y-y*)^2 + alpha * wrap(yaw-yaw*)^2.
NodeId loss_node(Graph& g, const EstimateNodes& est, const PlanarPose& truth, double alpha) {
  const NodeId dx = g.add_const(est.x, -truth.x);
  const NodeId dy = g.add_const(est.y, -truth.y);
  const NodeId dyaw = g.wrap(g.add_const(est.yaw, -truth.yaw));
  const NodeId pos = g.add(g.mul(dx, dx), g.mul(dy, dy));
  return g.add(pos, g.scale_const(g.mul(dyaw, dyaw), alpha));
}

Episode fresh_episode(const TrainConfig& cfg, std::uint64_t episode_seed) {
  WorldConfig world = cfg.world;
  world.n_contexts = cfg.n_contexts;
  world.n_queries = 1;
  const Environment env = generate(episode_seed, world);
  return sample_episode(env, episode_seed, world);
}

}  // namespace

double localization_loss(const PlanarPose& est, const PlanarPose& truth, const LossConfig& cfg) {
  const double dx = est.x - truth.x;
  const double dy = est.y - truth.y;
  const double dyaw = wrap_angle(est.yaw - truth.yaw);
  return dx * dx + dy * dy + cfg.alpha * dyaw * dyaw;
}

void AdamState::step(ParameterStore& params, const GradStore& grads, const AdamConfig& cfg) {
  ++t_;
  const double corr1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t_));
  const double corr2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t_));
  for (auto& entry : params.entries()) {
    if (!entry.trainable) continue;
    const Tensor* g = grads.find(entry.name);
    Tensor& m = m_.ensure(entry.name, entry.value);
    Tensor& v = v_.ensure(entry.name, entry.value);
    if (g && !g->same_shape(entry.value))
      throw std::invalid_argument("gradient shape mismatch for " + entry.name);
    double* theta = entry.value.data();
    for (std::size_t i = 0; i < entry.value.numel(); ++i) {
      const double gi = g ? g->v[i] : 0.0;
      if (cfg.weight_decay != 0.0) theta[i] -= cfg.lr * cfg.weight_decay * theta[i];
      m.v[i] = cfg.beta1 * m.v[i] + (1.0 - cfg.beta1) * gi;
      v.v[i] = cfg.beta2 * v.v[i] + (1.0 - cfg.beta2) * gi * gi;
      theta[i] -= cfg.lr * (m.v[i] / corr1) / (std::sqrt(v.v[i] / corr2) + cfg.eps);
    }
  }
}

std::uint64_t episode_belief_seed(std::uint64_t episode_seed) {
  return Rng::derive(episode_seed, kTagBelief);
}

std::uint64_t episode_transition_seed(std::uint64_t episode_seed, int t) {
  return Rng::derive(episode_seed, kTagTransition + static_cast<std::uint64_t>(t));
}

double training_forward(const TrainConfig& cfg, ParameterStore& params, const Episode& episode,
                        GradStore* grads, PlanarPose* estimate_out) {
  const EnvironmentExtent extent{episode.env.half_width};
  std::vector<ContextObservation> contexts;
  contexts.reserve(episode.contexts.size());
  for (const auto& c : episode.contexts) contexts.push_back(to_context(c, extent));

  Graph g;
  const MapNodes map = build_map_nodes(g, params, cfg.spec, contexts);
  const Observation& q1 = episode.queries.front();
  const PlanarPose truth = normalize(q1.pose, extent);
  const QueryNodes query = make_query_nodes(g, params, cfg.spec, q1.image);

  EstimateNodes est;
  if (cfg.spec.algorithm == Algorithm::kParticleFilter) {
    const InitialBelief b0 =
        init_belief(cfg.tracking, truth, episode_belief_seed(episode.seed), cfg.k_train, extent);
    const MeasurementNodes meas =
        measurement_update_nodes(g, params, cfg.spec, map, query, b0.belief, true);
    est = meas.estimate;
  } else {
    const InitialBelief b0 =
        init_belief(cfg.tracking, truth, episode_belief_seed(episode.seed), 1, extent);
    const NodeId cand = g.pose_input(b0.mean, false);
    const NodeId offset = regress_offset_node(g, params, cfg.spec, map, query, cand);
    est = regress_apply_nodes(g, offset, b0.mean);
  }
  const NodeId loss = loss_node(g, est, truth, cfg.loss.alpha);
  if (estimate_out) *estimate_out = est.value;
  if (grads) *grads = g.backward(loss);
  return g.scalar(loss);
}

namespace {

struct EpisodeSource {
  const TrainConfig& cfg;
  std::vector<Episode> dataset;

  explicit EpisodeSource(const TrainConfig& c) : cfg(c) {
    if (!c.dataset.empty()) {
      dataset = read_dataset(c.dataset, nullptr);
      if (dataset.empty()) throw std::runtime_error("training dataset is empty: " + c.dataset);
    }
  }

  Episode training_episode(long iter, int b) const {
    const std::uint64_t draw =
        Rng::derive(cfg.seed, kTagTrainEnv + static_cast<std::uint64_t>(iter) * 8192 + b);
    if (dataset.empty()) return fresh_episode(cfg, draw);
    Rng rng(draw, kTagDatasetPick);
    return dataset[rng.uniform_int(dataset.size())];
  }

  Episode validation_episode(int i) const {
    return fresh_episode(cfg, Rng::derive(cfg.seed, kTagValEnv + static_cast<std::uint64_t>(i)));
  }
};

double validation_loss(const TrainConfig& cfg, ParameterStore& params, const EpisodeSource& src) {
  std::vector<double> losses(static_cast<std::size_t>(cfg.val_episodes));
  parallel_for(cfg.val_episodes, cfg.threads, [&](int i) {
    const Episode ep = src.validation_episode(i);
    losses[static_cast<std::size_t>(i)] = training_forward(cfg, params, ep, nullptr, nullptr);
  });
  double sum = 0.0;
  for (double l : losses) sum += l;
  return sum / cfg.val_episodes;
}

}  // namespace

TrainResult train(const TrainConfig& cfg) {
  TrainResult result;
  ParameterStore params = build_parameters(cfg.spec, Rng::derive(cfg.seed, kTagInit));
  AdamState adam;
  EpisodeSource source(cfg);

  result.params = params;
  double running = 0.0;
  long running_count = 0;
  long last_improvement = 0;

  try {
    for (long iter = 0; iter < cfg.iters; ++iter) {
      const int batch = cfg.batch;
      std::vector<GradStore> grads(static_cast<std::size_t>(batch));
      std::vector<double> losses(static_cast<std::size_t>(batch));
      parallel_for(batch, cfg.threads, [&](int b) {
        const Episode ep = source.training_episode(iter, b);
        losses[static_cast<std::size_t>(b)] =
            training_forward(cfg, params, ep, &grads[static_cast<std::size_t>(b)], nullptr);
      });
      GradStore total;
      double loss = 0.0;
      for (int b = 0; b < batch; ++b) {
        total.accumulate(grads[static_cast<std::size_t>(b)]);
        loss += losses[static_cast<std::size_t>(b)];
      }
      loss /= batch;
      total.scale(1.0 / batch);
      if (!std::isfinite(loss)) throw std::runtime_error("training loss is not finite");
      adam.step(params, total, cfg.adam);
      running += loss;
      ++running_count;
      result.final_iter = iter + 1;

      if ((iter + 1) % cfg.val_period == 0 || iter + 1 == cfg.iters) {
        const double val = validation_loss(cfg, params, source);
        result.curves.push_back({iter + 1, running / running_count, val});
        running = 0.0;
        running_count = 0;
        if (val < result.best_val) {
          result.best_val = val;
          result.best_iter = iter + 1;
          result.params = params;
          last_improvement = iter + 1;
        } else if (cfg.patience >= 0 && iter + 1 - last_improvement >= cfg.patience) {
          break;
        }
      }
    }
  } catch (const std::exception& e) {
    result.diverged = true;
    result.diagnostic = e.what();
  }
  return result;
}

TrainResult lr_grid(const TrainConfig& cfg, const std::vector<double>& rates,
                    std::vector<LrGridRow>* report) {
  if (rates.empty()) throw std::invalid_argument("learning-rate grid needs at least one rate");
  TrainResult best;
  for (std::size_t i = 0; i < rates.size(); ++i) {
    TrainConfig run = cfg;
    run.adam.lr = rates[i];
    run.seed = Rng::derive(cfg.seed, fnv1a("lr-grid") + i);
    TrainResult r = train(run);
    if (report) report->push_back({rates[i], r.best_val});
    if (r.best_val < best.best_val) best = std::move(r);
  }
  return best;
}

ClassificationEpisode make_classification_episode(const TrainConfig& cfg, std::uint64_t seed) {
  const int n = cfg.n_contexts;
  if (n < 2) throw std::invalid_argument("classification needs at least two contexts");
  WorldConfig world = cfg.world;
  const EnvironmentExtent extent{world.half_width};
  // Environments tile along x, spaced three extents apart so every context is
  // far from the others; poses are expressed in the shared frame.
  const double spacing = 6.0 * world.half_width;
  ClassificationEpisode ep;
  Rng rng(seed, kTagClassEnv);
  std::vector<Environment> envs;
  for (int i = 0; i < n; ++i)
    envs.push_back(generate(Rng::derive(seed, kTagClassEnv + 1 + i), world));
  for (int i = 0; i < n; ++i) {
    PlanarPose local;
    for (int tries = 0;; ++tries) {
      local.x = rng.uniform(-world.half_width + 0.5, world.half_width - 0.5);
      local.y = rng.uniform(-world.half_width + 0.5, world.half_width - 0.5);
      if (envs[i].is_free(local.x, local.y)) break;
      if (tries > 4096) throw std::runtime_error("no free context pose");
    }
    local.yaw = wrap_angle(rng.uniform(-M_PI, M_PI));
    const double offset = (i - (n - 1) * 0.5) * spacing;
    ContextObservation ctx;
    ctx.image = render(envs[i], local, world.img_h, world.img_w);
    ctx.pose = normalize({local.x + offset, local.y, local.yaw}, extent);
    ep.contexts.push_back(std::move(ctx));
  }
  ep.label = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(n)));
  PlanarPose qlocal;
  for (int tries = 0;; ++tries) {
    qlocal.x = rng.uniform(-world.half_width + 0.5, world.half_width - 0.5);
    qlocal.y = rng.uniform(-world.half_width + 0.5, world.half_width - 0.5);
    if (envs[ep.label].is_free(qlocal.x, qlocal.y)) break;
    if (tries > 4096) throw std::runtime_error("no free query pose");
  }
  qlocal.yaw = wrap_angle(rng.uniform(-M_PI, M_PI));
  ep.query = render(envs[ep.label], qlocal, world.img_h, world.img_w);
  return ep;
}

namespace {

// Class logits: observation log-likelihoods with particles pinned to the
// context poses.
std::vector<double> classification_logits(Graph& g, ParameterStore& params, const ModelSpec& spec,
                                          const ClassificationEpisode& ep,
                                          std::vector<NodeId>* nodes_out) {
  const MapNodes map = build_map_nodes(g, params, spec, ep.contexts);
  const QueryNodes query = make_query_nodes(g, params, spec, ep.query);
  std::vector<double> logits;
  std::vector<NodeId> nodes;
  for (const auto& ctx : ep.contexts) {
    const NodeId cand = g.pose_input(ctx.pose, false);
    const NodeId l = observe_loglik_node(g, params, spec, map, query, cand);
    nodes.push_back(l);
    logits.push_back(g.scalar(l));
  }
  if (nodes_out) *nodes_out = nodes;
  return logits;
}

}  // namespace

double classification_accuracy(const TrainConfig& cfg, ParameterStore& params, int episodes,
                               std::uint64_t seed) {
  std::vector<int> hits(static_cast<std::size_t>(episodes));
  parallel_for(episodes, cfg.threads, [&](int i) {
    const ClassificationEpisode ep =
        make_classification_episode(cfg, Rng::derive(seed, kTagClassEval + i));
    Graph g;
    const std::vector<double> logits = classification_logits(g, params, cfg.spec, ep, nullptr);
    const int pred = static_cast<int>(std::max_element(logits.begin(), logits.end()) -
                                      logits.begin());
    hits[static_cast<std::size_t>(i)] = pred == ep.label ? 1 : 0;
  });
  double sum = 0.0;
  for (int h : hits) sum += h;
  return sum / episodes;
}

ClassificationResult train_classification(const TrainConfig& cfg, const ParameterStore& pretrained,
                                          bool freeze_map, int eval_episodes) {
  ClassificationResult result;
  ParameterStore params = pretrained;
  for (const auto& prefix : map_encoder_prefixes())
    params.set_trainable_by_prefix(prefix, !freeze_map);
  AdamState adam;

  double running = 0.0;
  long running_count = 0;
  for (long iter = 0; iter < cfg.class_iters; ++iter) {
    const int batch = cfg.batch;
    std::vector<GradStore> grads(static_cast<std::size_t>(batch));
    std::vector<double> losses(static_cast<std::size_t>(batch));
    parallel_for(batch, cfg.threads, [&](int b) {
      const ClassificationEpisode ep = make_classification_episode(
          cfg, Rng::derive(cfg.seed, kTagClassEnv + 4096 + iter * 8192 + b));
      Graph g;
      std::vector<NodeId> lnodes;
      classification_logits(g, params, cfg.spec, ep, &lnodes);
      const NodeId packed = g.pack(lnodes);
      const NodeId loss = g.sub(g.logsumexp(packed), g.index(packed, ep.label));
      losses[static_cast<std::size_t>(b)] = g.scalar(loss);
      grads[static_cast<std::size_t>(b)] = g.backward(loss);
    });
    GradStore total;
    double loss = 0.0;
    for (int b = 0; b < batch; ++b) {
      total.accumulate(grads[static_cast<std::size_t>(b)]);
      loss += losses[static_cast<std::size_t>(b)];
    }
    loss /= batch;
    total.scale(1.0 / batch);
    if (!std::isfinite(loss)) throw std::runtime_error("classification loss is not finite");
    adam.step(params, total, cfg.adam);
    running += loss;
    ++running_count;
    if ((iter + 1) % cfg.val_period == 0 || iter + 1 == cfg.class_iters) {
      result.curves.push_back({iter + 1, running / running_count, 0.0});
      running = 0.0;
      running_count = 0;
    }
  }
  result.params = std::move(params);
  result.accuracy = classification_accuracy(cfg, result.params, eval_episodes,
                                            Rng::derive(cfg.seed, fnv1a("class.eval-seed")));
  return result;
}

}  // namespace dmnloc
