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

#include "dmnloc/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "dmnloc/parallel.hpp"
#include "dmnloc/rng.hpp"

namespace dmnloc {

namespace {

constexpr std::uint64_t kTagEvalEpisode = fnv1a("eval.episode");
constexpr std::uint64_t kTagDistractorEnv = fnv1a("eval.distractor-env");
constexpr std::uint64_t kTagDistractorPose = fnv1a("eval.distractor-pose");
constexpr std::uint64_t kTagSweepData = fnv1a("sweep.dataset");

std::string format_double(double x) {
  std::ostringstream os;
  os.precision(6);
  os << std::fixed << x;
  return os.str();
}

}  // namespace

EvalMode eval_mode_from(const std::string& s) {
  if (s == "one-step-global") return EvalMode::kOneStepGlobal;
  if (s == "seq-global" || s == "sequential-global") return EvalMode::kSequentialGlobal;
  if (s == "tracking") return EvalMode::kTracking;
  throw std::invalid_argument("unknown evaluation mode: " + s);
}

std::string to_string(EvalMode mode) {
  switch (mode) {
    case EvalMode::kOneStepGlobal: return "one-step-global";
    case EvalMode::kSequentialGlobal: return "seq-global";
    case EvalMode::kTracking: return "tracking";
  }
  return "";
}

int EvalSetting::particles() const {
  if (k_eval > 0) return k_eval;
  return mode == EvalMode::kTracking ? 256 : 2048;
}

int EvalSetting::steps() const {
  if (t_steps > 0) return t_steps;
  return mode == EvalMode::kOneStepGlobal ? 1 : 5;
}

double rmse_xy(const PlanarPose& est, const PlanarPose& truth, const EnvironmentExtent& extent) {
  const PlanarPose e = denormalize(est, extent);
  const PlanarPose t = denormalize(truth, extent);
  return std::hypot(e.x - t.x, e.y - t.y);
}

double success_rate(const std::vector<double>& rmse_m, double threshold) {
  if (rmse_m.empty()) throw std::invalid_argument("success rate of an empty episode set");
  double hits = 0.0;
  for (double r : rmse_m)
    if (r < threshold) hits += 1.0;
  return hits / static_cast<double>(rmse_m.size());
}

std::vector<double> MetricsReport::errors_at(int t) const {
  std::vector<double> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    if (t < 1 || t > static_cast<int>(r.rmse_m.size()))
      throw std::out_of_range("no such time step in report");
    out.push_back(r.rmse_m[static_cast<std::size_t>(t - 1)]);
  }
  return out;
}

double MetricsReport::aggregate_rmse(int t) const {
  const std::vector<double> e = errors_at(t);
  if (e.empty()) throw std::invalid_argument("empty report");
  double sq = 0.0;
  for (double x : e) sq += x * x;
  return std::sqrt(sq / static_cast<double>(e.size()));
}

double MetricsReport::success_at(int t, double threshold) const {
  return success_rate(errors_at(t), threshold);
}

std::uint64_t eval_episode_seed(std::uint64_t seed, int index) {
  return Rng::derive(seed, kTagEvalEpisode + static_cast<std::uint64_t>(index));
}

Episode eval_episode(const EvalSetting& setting, int index) {
  WorldConfig world = setting.world;
  world.n_contexts = setting.n_contexts;
  world.n_queries = setting.steps();
  const std::uint64_t seed = eval_episode_seed(setting.seed, index);
  return sample_episode(generate(seed, world), seed, world);
}

namespace {

InitialBelief initial_belief_for(const EvalSetting& setting, const Episode& episode, int k,
                                 const EnvironmentExtent& extent) {
  InitialBeliefSpec spec;
  if (setting.mode == EvalMode::kTracking) {
    spec = setting.tracking;
    spec.kind = InitialBeliefSpec::Kind::kGaussianTracking;
  } else {
    spec.kind = InitialBeliefSpec::Kind::kUniformGlobal;
  }
  const PlanarPose q1 = normalize(episode.queries.front().pose, extent);
  return init_belief(spec, q1, episode_belief_seed(episode.seed), k, extent);
}

void dump_step(std::string* sink, int t, const ParticleBelief& belief) {
  if (!sink) return;
  *sink += "# step " + std::to_string(t) + "\n";
  for (std::size_t i = 0; i < belief.size(); ++i) {
    const PlanarPose& p = belief.particles[i];
    *sink += format_double(p.x) + "," + format_double(p.y) + "," + format_double(p.yaw) + "," +
             format_double(std::exp(belief.log_weights[i])) + "\n";
  }
}

}  // namespace

std::vector<PlanarPose> rollout_estimates(const ModelSpec& spec, ParameterStore& params,
                                          const Episode& episode, const EvalSetting& setting,
                                          std::string* particle_dump) {
  const EnvironmentExtent extent{episode.env.half_width};
  std::vector<ContextObservation> contexts;
  for (const auto& c : episode.contexts) contexts.push_back(to_context(c, extent));

  Graph g;
  const MapNodes map = build_map_nodes(g, params, spec, contexts);
  const std::size_t map_mark = g.mark();
  const int t_total = static_cast<int>(episode.queries.size());
  std::vector<PlanarPose> estimates;

  if (spec.algorithm == Algorithm::kParticleFilter) {
    ParticleBelief belief =
        initial_belief_for(setting, episode, setting.particles(), extent).belief;
    for (int t = 1; t <= t_total; ++t) {
      if (t > 1)
        belief = transition(belief, episode.egomotions[static_cast<std::size_t>(t - 2)],
                            setting.noise, episode_transition_seed(episode.seed, t), extent);
      const QueryNodes query =
          make_query_nodes(g, params, spec, episode.queries[static_cast<std::size_t>(t - 1)].image);
      const std::vector<double> loglik =
          observe_loglik_all(g, params, spec, map, query, belief.particles);
      belief = reweight(belief, loglik);
      estimates.push_back(estimate(belief));
      dump_step(particle_dump, t, belief);
      if (setting.resample && t < t_total)
        belief = resample(belief, Rng::derive(episode_transition_seed(episode.seed, t),
                                              fnv1a("resample")));
      g.rewind(map_mark);
    }
  } else {
    PlanarPose prev = initial_belief_for(setting, episode, 1, extent).mean;
    for (int t = 1; t <= t_total; ++t) {
      const Egomotion* motion =
          t > 1 ? &episode.egomotions[static_cast<std::size_t>(t - 2)] : nullptr;
      const PlanarPose candidate = regress_candidate(prev, motion, extent);
      const QueryNodes query =
          make_query_nodes(g, params, spec, episode.queries[static_cast<std::size_t>(t - 1)].image);
      const NodeId cand = g.pose_input(candidate, false);
      const NodeId offset = regress_offset_node(g, params, spec, map, query, cand);
      const PlanarPose est = regress_apply_nodes(g, offset, candidate).value;
      estimates.push_back(est);
      prev = est;
      g.rewind(map_mark);
    }
  }
  return estimates;
}

namespace {

MetricsReport evaluate_with(
    const EvalSetting& setting, const std::string& variant,
    const std::function<std::vector<PlanarPose>(const Episode&, std::string*)>& rollout) {
  MetricsReport report;
  report.variant = variant;
  report.mode = to_string(setting.mode);
  report.t_steps = setting.steps();
  report.records.resize(static_cast<std::size_t>(setting.episodes));
  const bool dumping = !setting.particle_dump_dir.empty();
  if (dumping) std::filesystem::create_directories(setting.particle_dump_dir);
  parallel_for(setting.episodes, setting.threads, [&](int i) {
    const Episode ep = eval_episode(setting, i);
    const EnvironmentExtent extent{ep.env.half_width};
    std::string dump;
    const std::vector<PlanarPose> est = rollout(ep, dumping ? &dump : nullptr);
    EpisodeRecord rec;
    rec.seed = ep.seed;
    for (std::size_t t = 0; t < est.size(); ++t)
      rec.rmse_m.push_back(rmse_xy(est[t], normalize(ep.queries[t].pose, extent), extent));
    report.records[static_cast<std::size_t>(i)] = std::move(rec);
    if (dumping) {
      const std::string path = setting.particle_dump_dir + "/particles_" +
                               std::to_string(ep.seed) + ".txt";
      std::ofstream os(path, std::ios::trunc);
      std::istringstream echo(setting.config_echo);
      std::string line;
      while (std::getline(echo, line)) os << "#" << line << "\n";
      os << "# columns: x,y,yaw,weight\n" << dump;
    }
  });
  return report;
}

}  // namespace

MetricsReport run_eval(const ModelSpec& spec, ParameterStore& params, const EvalSetting& setting) {
  return evaluate_with(setting, spec.variant, [&](const Episode& ep, std::string* dump) {
    return rollout_estimates(spec, params, ep, setting, dump);
  });
}

std::vector<PlanarPose> closest_context_estimates(const Episode& episode, const EvalSetting&) {
  const EnvironmentExtent extent{episode.env.half_width};
  std::vector<PlanarPose> out;
  for (const auto& q : episode.queries) {
    double best = std::numeric_limits<double>::infinity();
    PlanarPose pick = episode.contexts.front().pose;
    for (const auto& c : episode.contexts) {
      const double d = std::hypot(c.pose.x - q.pose.x, c.pose.y - q.pose.y);
      if (d < best) {
        best = d;
        pick = c.pose;
      }
    }
    out.push_back(normalize(pick, extent));
  }
  return out;
}

std::vector<PlanarPose> uninformed_estimates(const Episode& episode, const EvalSetting& setting) {
  const EnvironmentExtent extent{episode.env.half_width};
  PlanarPose est = initial_belief_for(setting, episode, 1, extent).mean;
  std::vector<PlanarPose> out;
  for (std::size_t t = 0; t < episode.queries.size(); ++t) {
    if (t > 0) {
      const Egomotion& m = episode.egomotions[t - 1];
      est = compose(est, {m.dx / extent.half_width, m.dy / extent.half_width, m.dyaw});
    }
    out.push_back(est);
  }
  return out;
}

MetricsReport baseline_closest_context(const EvalSetting& setting) {
  return evaluate_with(setting, "closest-context", [&](const Episode& ep, std::string*) {
    return closest_context_estimates(ep, setting);
  });
}

MetricsReport baseline_uninformed(const EvalSetting& setting) {
  return evaluate_with(setting, "uninformed", [&](const Episode& ep, std::string*) {
    return uninformed_estimates(ep, setting);
  });
}

LargeEnvResult large_environment_eval(const ModelSpec& spec, ParameterStore& params,
                                      const EvalSetting& setting, int distractors,
                                      double min_offset) {
  const double shift_units = min_offset + 2.0;
  std::vector<double> def_err(static_cast<std::size_t>(setting.episodes));
  std::vector<double> large_err(static_cast<std::size_t>(setting.episodes));
  parallel_for(setting.episodes, setting.threads, [&](int i) {
    Episode ep = eval_episode(setting, i);
    const EnvironmentExtent extent{ep.env.half_width};
    const int last = static_cast<int>(ep.queries.size()) - 1;
    const PlanarPose truth = normalize(ep.queries[static_cast<std::size_t>(last)].pose, extent);

    const std::vector<PlanarPose> base = rollout_estimates(spec, params, ep, setting, nullptr);
    def_err[static_cast<std::size_t>(i)] =
        rmse_xy(base[static_cast<std::size_t>(last)], truth, extent);

    WorldConfig world = setting.world;
    const Environment far_env = generate(Rng::derive(ep.seed, kTagDistractorEnv), world);
    Rng rng(ep.seed, kTagDistractorPose);
    Episode augmented = ep;
    for (int d = 0; d < distractors; ++d) {
      PlanarPose local;
      for (int tries = 0;; ++tries) {
        local.x = rng.uniform(-world.half_width + 0.5, world.half_width - 0.5);
        local.y = rng.uniform(-world.half_width + 0.5, world.half_width - 0.5);
        if (far_env.is_free(local.x, local.y)) break;
        if (tries > 4096) throw std::runtime_error("no free distractor pose");
      }
      local.yaw = wrap_angle(rng.uniform(-M_PI, M_PI));
      Observation obs;
      obs.image = render(far_env, local, world.img_h, world.img_w);
      obs.pose = {local.x + shift_units * world.half_width, local.y, local.yaw};
      augmented.contexts.push_back(std::move(obs));
    }
    const std::vector<PlanarPose> aug = rollout_estimates(spec, params, augmented, setting, nullptr);
    large_err[static_cast<std::size_t>(i)] =
        rmse_xy(aug[static_cast<std::size_t>(last)], truth, extent);
  });
  auto aggregate = [](const std::vector<double>& e) {
    double sq = 0.0;
    for (double x : e) sq += x * x;
    return std::sqrt(sq / static_cast<double>(e.size()));
  };
  return {aggregate(def_err), aggregate(large_err)};
}

void write_report(const std::string& path, const std::vector<MetricsReport>& reports,
                  const std::string& config_echo) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write report: " + path);
  os << "#DMNREPORT1\n";
  std::istringstream echo(config_echo);
  std::string line;
  while (std::getline(echo, line)) os << "#" << line << "\n";
  os << "episode_seed,variant,mode,t,rmse_m,success\n";
  for (const auto& rep : reports)
    for (const auto& rec : rep.records)
      for (std::size_t t = 0; t < rec.rmse_m.size(); ++t)
        os << rec.seed << "," << rep.variant << "," << rep.mode << "," << (t + 1) << ","
           << format_double(rec.rmse_m[t]) << ","
           << (rec.rmse_m[t] < kSuccessThresholdMeters ? 1 : 0) << "\n";
  os << "#aggregate\n";
  os << "variant,mode,t,rmse_m,success_rate,episodes\n";
  for (const auto& rep : reports)
    for (int t = 1; t <= rep.t_steps; ++t)
      os << rep.variant << "," << rep.mode << "," << t << ","
         << format_double(rep.aggregate_rmse(t)) << "," << format_double(rep.success_at(t)) << ","
         << rep.records.size() << "\n";
  if (!os) throw std::runtime_error("write failure: " + path);
}

void write_curve_file(const std::string& path, const CurveFile& curve,
                      const std::string& config_echo) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write curve file: " + path);
  std::istringstream echo(config_echo);
  std::string line;
  while (std::getline(echo, line)) os << "#" << line << "\n";
  os << curve.header << "\n";
  for (const auto& row : curve.rows) os << row << "\n";
  if (!os) throw std::runtime_error("write failure: " + path);
}

// -- Sweeps -------------------------------------------------------------------

std::vector<CurveFile> sweep_data_efficiency(const SweepConfig& cfg) {
  CurveFile curve;
  curve.name = "data_efficiency.csv";
  curve.header = "dataset_episodes,success,rmse_m";
  for (int size : cfg.sizes) {
    WorldConfig world = cfg.train.world;
    world.n_contexts = cfg.train.n_contexts;
    world.n_queries = 1;
    std::vector<Episode> episodes;
    for (int i = 0; i < size; ++i) {
      const std::uint64_t seed =
          Rng::derive(cfg.train.seed, kTagSweepData + static_cast<std::uint64_t>(size) * 65536 + i);
      episodes.push_back(sample_episode(generate(seed, world), seed, world));
    }
    const std::string path =
        cfg.work_dir + "/data_efficiency_" + std::to_string(size) + ".dmndata";
    write_dataset(path, episodes, cfg.config_echo);
    TrainConfig tc = cfg.train;
    tc.dataset = path;
    TrainResult r = train(tc);
    if (r.diverged) throw std::runtime_error("sweep training diverged: " + r.diagnostic);
    MetricsReport rep = run_eval(tc.spec, r.params, cfg.eval);
    const int t = rep.t_steps;
    curve.rows.push_back(std::to_string(size) + "," + format_double(rep.success_at(t)) + "," +
                         format_double(rep.aggregate_rmse(t)));
  }
  return {curve};
}

std::vector<CurveFile> sweep_context_count(const SweepConfig& cfg) {
  CurveFile same;
  same.name = "context_count_trained.csv";
  same.header = "n_contexts,success,rmse_m";
  for (int n : cfg.contexts) {
    TrainConfig tc = cfg.train;
    tc.n_contexts = n;
    TrainResult r = train(tc);
    if (r.diverged) throw std::runtime_error("sweep training diverged: " + r.diagnostic);
    EvalSetting es = cfg.eval;
    es.n_contexts = n;
    MetricsReport rep = run_eval(tc.spec, r.params, es);
    same.rows.push_back(std::to_string(n) + "," + format_double(rep.success_at(rep.t_steps)) +
                        "," + format_double(rep.aggregate_rmse(rep.t_steps)));
  }

  CurveFile cross;
  cross.name = "context_count_cross.csv";
  cross.header = "n_contexts,success,rmse_m";
  TrainResult base = train(cfg.train);
  if (base.diverged) throw std::runtime_error("sweep training diverged: " + base.diagnostic);
  for (int n : cfg.contexts) {
    EvalSetting es = cfg.eval;
    es.n_contexts = n;
    MetricsReport rep = run_eval(cfg.train.spec, base.params, es);
    cross.rows.push_back(std::to_string(n) + "," + format_double(rep.success_at(rep.t_steps)) +
                         "," + format_double(rep.aggregate_rmse(rep.t_steps)));
  }
  return {same, cross};
}

std::vector<CurveFile> sweep_time_curve(const SweepConfig& cfg) {
  TrainConfig pf_cfg = cfg.train;
  pf_cfg.spec = ModelSpec::from_variant("dmn-pf");
  pf_cfg.spec.img_h = cfg.train.spec.img_h;
  pf_cfg.spec.img_w = cfg.train.spec.img_w;
  pf_cfg.spec.channel_scale = cfg.train.spec.channel_scale;
  TrainConfig rg_cfg = pf_cfg;
  rg_cfg.spec = ModelSpec::from_variant("regression");
  rg_cfg.spec.img_h = pf_cfg.spec.img_h;
  rg_cfg.spec.img_w = pf_cfg.spec.img_w;
  rg_cfg.spec.channel_scale = pf_cfg.spec.channel_scale;

  TrainResult pf = train(pf_cfg);
  TrainResult rg = train(rg_cfg);
  if (pf.diverged || rg.diverged) throw std::runtime_error("sweep training diverged");

  EvalSetting es = cfg.eval;
  es.t_steps = cfg.time_steps;
  MetricsReport pf_rep = run_eval(pf_cfg.spec, pf.params, es);
  MetricsReport rg_rep = run_eval(rg_cfg.spec, rg.params, es);

  CurveFile curve;
  curve.name = "time_curve.csv";
  curve.header = "t,dmn_pf_success,regression_success";
  for (int t = 1; t <= cfg.time_steps; ++t)
    curve.rows.push_back(std::to_string(t) + "," + format_double(pf_rep.success_at(t)) + "," +
                         format_double(rg_rep.success_at(t)));
  return {curve};
}

std::vector<CurveFile> sweep_particle_count(const SweepConfig& cfg) {
  TrainConfig pf_cfg = cfg.train;
  TrainConfig rg_cfg = cfg.train;
  rg_cfg.spec = ModelSpec::from_variant("regression");
  rg_cfg.spec.img_h = pf_cfg.spec.img_h;
  rg_cfg.spec.img_w = pf_cfg.spec.img_w;
  rg_cfg.spec.channel_scale = pf_cfg.spec.channel_scale;

  TrainResult pf = train(pf_cfg);
  TrainResult rg = train(rg_cfg);
  if (pf.diverged || rg.diverged) throw std::runtime_error("sweep training diverged");

  EvalSetting rg_setting = cfg.eval;
  MetricsReport rg_rep = run_eval(rg_cfg.spec, rg.params, rg_setting);
  const double rg_success = rg_rep.success_at(rg_rep.t_steps);

  CurveFile curve;
  curve.name = "particle_count.csv";
  curve.header = "particles,dmn_pf_success,regression_success";
  for (int k : cfg.particles) {
    EvalSetting es = cfg.eval;
    es.k_eval = k;
    MetricsReport rep = run_eval(pf_cfg.spec, pf.params, es);
    curve.rows.push_back(std::to_string(k) + "," + format_double(rep.success_at(rep.t_steps)) +
                         "," + format_double(rg_success));
  }
  return {curve};
}

std::vector<CurveFile> sweep_classification(const SweepConfig& cfg) {
  TrainResult base = train(cfg.train);
  if (base.diverged) throw std::runtime_error("sweep training diverged: " + base.diagnostic);
  const int eval_eps = cfg.eval.episodes;
  ClassificationResult frozen = train_classification(cfg.train, base.params, true, eval_eps);
  ClassificationResult tuned = train_classification(cfg.train, base.params, false, eval_eps);
  CurveFile curve;
  curve.name = "classification.csv";
  curve.header = "map_objective,accuracy";
  curve.rows.push_back("localization," + format_double(frozen.accuracy));
  curve.rows.push_back("classification," + format_double(tuned.accuracy));
  return {curve};
}

std::vector<CurveFile> sweep_large_env(const SweepConfig& cfg) {
  TrainConfig ve_cfg = cfg.train;
  TrainConfig li_cfg = cfg.train;
  li_cfg.spec = ModelSpec::from_variant(ve_cfg.spec.algorithm == Algorithm::kRegression
                                            ? "latent-image-regression"
                                            : "latent-image-pf");
  li_cfg.spec.img_h = ve_cfg.spec.img_h;
  li_cfg.spec.img_w = ve_cfg.spec.img_w;
  li_cfg.spec.channel_scale = ve_cfg.spec.channel_scale;

  TrainResult ve = train(ve_cfg);
  TrainResult li = train(li_cfg);
  if (ve.diverged || li.diverged) throw std::runtime_error("sweep training diverged");

  EvalSetting es = cfg.eval;
  es.mode = EvalMode::kTracking;
  const LargeEnvResult ver =
      large_environment_eval(ve_cfg.spec, ve.params, es, cfg.distractors, cfg.distractor_offset);
  const LargeEnvResult lir =
      large_environment_eval(li_cfg.spec, li.params, es, cfg.distractors, cfg.distractor_offset);

  CurveFile curve;
  curve.name = "large_env.csv";
  curve.header = "variant,condition,rmse_m";
  curve.rows.push_back(ve_cfg.spec.variant + ",default," + format_double(ver.rmse_default));
  curve.rows.push_back(ve_cfg.spec.variant + ",large," + format_double(ver.rmse_large));
  curve.rows.push_back(li_cfg.spec.variant + ",default," + format_double(lir.rmse_default));
  curve.rows.push_back(li_cfg.spec.variant + ",large," + format_double(lir.rmse_large));
  return {curve};
}

}  // namespace dmnloc
