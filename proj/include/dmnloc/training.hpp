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

#ifndef DMNLOC_TRAINING_HPP
#define DMNLOC_TRAINING_HPP

#include <limits>
#include <string>
#include <vector>

#include "dmnloc/filter.hpp"

namespace dmnloc {

struct LossConfig {
  double alpha = 0.5;  // yaw weight
};

// MSE in normalized units with the yaw difference wrapped to (-pi, pi].
double localization_loss(const PlanarPose& est, const PlanarPose& truth, const LossConfig& cfg);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled, applied before the Adam delta
};

/// Standard Adam with bias correction. Parameters without a gradient entry
/// are treated as having zero gradient; non-trainable entries are skipped.
class AdamState {
 public:
  void step(ParameterStore& params, const GradStore& grads, const AdamConfig& cfg);
  long steps() const { return t_; }

 private:
  long t_ = 0;
  GradStore m_;
  GradStore v_;
};

struct TrainConfig {
  ModelSpec spec;
  WorldConfig world;
  int n_contexts = 4;
  int k_train = 32;
  int batch = 8;
  long iters = 20000;
  long val_period = 500;
  int val_episodes = 100;
  long patience = 5000;  // iterations without validation improvement
  LossConfig loss;
  AdamConfig adam;
  InitialBeliefSpec tracking{InitialBeliefSpec::Kind::kGaussianTracking, 6.0, M_PI / 6.0};
  std::uint64_t seed = 1;
  int threads = 0;
  std::string dataset;  // train from a fixed file instead of fresh episodes
  long class_iters = 4000;
};

struct CurvePoint {
  long iter = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct TrainResult {
  ParameterStore params;  // best-validation snapshot
  std::vector<CurvePoint> curves;
  double best_val = std::numeric_limits<double>::infinity();
  long best_iter = 0;
  long final_iter = 0;
  bool diverged = false;
  std::string diagnostic;
};

// Canonical per-episode seeds shared by training and evaluation so the same
// episode replays with identical randomness in both paths.
std::uint64_t episode_belief_seed(std::uint64_t episode_seed);
std::uint64_t episode_transition_seed(std::uint64_t episode_seed, int t);

// One-step tracking forward pass for a single episode; fills grads when
// given. Returns the loss; the estimate lands in *estimate when non-null.
double training_forward(const TrainConfig& cfg, ParameterStore& params, const Episode& episode,
                        GradStore* grads, PlanarPose* estimate);

TrainResult train(const TrainConfig& cfg);

struct LrGridRow {
  double rate;
  double best_val;
};

TrainResult lr_grid(const TrainConfig& cfg, const std::vector<double>& rates,
                    std::vector<LrGridRow>* report);

// -- Global classification transfer ------------------------------------------

/// Episode of the classification task: one context per distant environment,
/// query drawn from the environment at the true class index.
struct ClassificationEpisode {
  std::vector<ContextObservation> contexts;  // poses offset into a shared frame
  RenderedImage query;
  int label = 0;
};

ClassificationEpisode make_classification_episode(const TrainConfig& cfg, std::uint64_t seed);

struct ClassificationResult {
  ParameterStore params;
  double accuracy = 0.0;
  std::vector<CurvePoint> curves;
};

// Starts from a pretrained localization checkpoint. freeze_map pins the map
// encoder parameters; only the observation model adapts.
ClassificationResult train_classification(const TrainConfig& cfg, const ParameterStore& pretrained,
                                          bool freeze_map, int eval_episodes);

double classification_accuracy(const TrainConfig& cfg, ParameterStore& params, int episodes,
                               std::uint64_t seed);

}  // namespace dmnloc

#endif  // DMNLOC_TRAINING_HPP
