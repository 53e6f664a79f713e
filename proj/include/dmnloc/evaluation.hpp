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

#ifndef DMNLOC_EVALUATION_HPP
#define DMNLOC_EVALUATION_HPP

#include <optional>
#include <string>
#include <vector>

#include "dmnloc/training.hpp"

namespace dmnloc {

constexpr double kSuccessThresholdMeters = 8.94;

enum class EvalMode { kOneStepGlobal, kSequentialGlobal, kTracking };

EvalMode eval_mode_from(const std::string& s);
std::string to_string(EvalMode mode);

struct EvalSetting {
  EvalMode mode = EvalMode::kSequentialGlobal;
  int k_eval = 0;     // 0 = mode default: 2048 global, 256 tracking
  int episodes = 500;
  int t_steps = 0;    // 0 = mode default: 1 one-step, 5 otherwise
  int n_contexts = 4;
  std::uint64_t seed = 1;
  WorldConfig world;
  TransitionNoise noise;
  InitialBeliefSpec tracking{InitialBeliefSpec::Kind::kGaussianTracking, 6.0, M_PI / 6.0};
  bool resample = false;
  int threads = 0;
  std::string particle_dump_dir;  // when set, one text table per episode
  std::string config_echo;        // header block for dump files

  int particles() const;
  int steps() const;
};

// Distance of the estimate from the truth in meters (single-estimate form).
double rmse_xy(const PlanarPose& est, const PlanarPose& truth, const EnvironmentExtent& extent);

// Fraction of episodes with error below the threshold; errors on empty input.
double success_rate(const std::vector<double>& rmse_m, double threshold = kSuccessThresholdMeters);

struct EpisodeRecord {
  std::uint64_t seed = 0;
  std::vector<double> rmse_m;  // one entry per time step
};

struct MetricsReport {
  std::string variant;
  std::string mode;
  int t_steps = 0;
  std::vector<EpisodeRecord> records;

  std::vector<double> errors_at(int t) const;           // 1-based time step
  double aggregate_rmse(int t) const;                   // sqrt(mean squared)
  double success_at(int t, double threshold = kSuccessThresholdMeters) const;
};

// Evaluation episodes come from a seed block disjoint from training seeds.
Episode eval_episode(const EvalSetting& setting, int index);
std::uint64_t eval_episode_seed(std::uint64_t seed, int index);

// Per-step estimates (normalized units) of a variant on one episode.
std::vector<PlanarPose> rollout_estimates(const ModelSpec& spec, ParameterStore& params,
                                          const Episode& episode, const EvalSetting& setting,
                                          std::string* particle_dump);

MetricsReport run_eval(const ModelSpec& spec, ParameterStore& params, const EvalSetting& setting);

// Reference baselines.
MetricsReport baseline_closest_context(const EvalSetting& setting);
MetricsReport baseline_uninformed(const EvalSetting& setting);

// Per-episode entries, exposed for oracle tests.
std::vector<PlanarPose> closest_context_estimates(const Episode& episode, const EvalSetting& s);
std::vector<PlanarPose> uninformed_estimates(const Episode& episode, const EvalSetting& s);

// -- Larger-environments protocol (distractor contexts) -----------------------

struct LargeEnvResult {
  double rmse_default = 0.0;  // original contexts
  double rmse_large = 0.0;    // with far distractor contexts added
  double delta() const { return rmse_large - rmse_default; }
};

// Adds `distractors` contexts rendered in a far region at least
// `min_offset` normalized units away from every original context; the
// initial belief and queries are unchanged.
LargeEnvResult large_environment_eval(const ModelSpec& spec, ParameterStore& params,
                                      const EvalSetting& setting, int distractors,
                                      double min_offset);

// -- Report files -------------------------------------------------------------

void write_report(const std::string& path, const std::vector<MetricsReport>& reports,
                  const std::string& config_echo);

struct CurveFile {
  std::string name;    // file name without directory
  std::string header;  // CSV header line
  std::vector<std::string> rows;
};

void write_curve_file(const std::string& path, const CurveFile& curve,
                      const std::string& config_echo);

// -- Experiment sweeps ---------------------------------------------------------

struct SweepConfig {
  TrainConfig train;
  EvalSetting eval;
  std::vector<int> sizes;      // data-efficiency dataset sizes
  std::vector<int> contexts;   // context-count sweep
  std::vector<int> particles;  // particle-count sweep
  int time_steps = 10;
  int distractors = 4;
  double distractor_offset = 4.0;
  std::string work_dir = ".";  // scratch space for generated datasets
  std::string config_echo;
};

std::vector<CurveFile> sweep_data_efficiency(const SweepConfig& cfg);
std::vector<CurveFile> sweep_context_count(const SweepConfig& cfg);
std::vector<CurveFile> sweep_time_curve(const SweepConfig& cfg);
std::vector<CurveFile> sweep_particle_count(const SweepConfig& cfg);
std::vector<CurveFile> sweep_classification(const SweepConfig& cfg);
std::vector<CurveFile> sweep_large_env(const SweepConfig& cfg);

}  // namespace dmnloc

#endif  // DMNLOC_EVALUATION_HPP
