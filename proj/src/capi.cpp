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

#include "dmnloc.h"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "dmnloc/config.hpp"
#include "dmnloc/evaluation.hpp"
#include "dmnloc/gradcheck.hpp"
#include "dmnloc/graph.hpp"
#include "dmnloc/rng.hpp"

using namespace dmnloc;

struct dmnloc_config {
  Config impl;
  mutable std::string scratch;  // backs dmnloc_config_get
};

namespace {

thread_local std::string g_last_error;

dmnloc_status fail(dmnloc_status code, const std::string& message) {
  g_last_error = message;
  return code;
}

template <typename Fn>
dmnloc_status guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const std::invalid_argument& e) {
    return fail(DMNLOC_ERR_USAGE, e.what());
  } catch (const std::exception& e) {
    return fail(DMNLOC_ERR_RUNTIME, e.what());
  }
}

WorldConfig world_from(const Config& cfg) {
  WorldConfig w;
  w.grid_n = static_cast<int>(cfg.integer("grid_n"));
  w.half_width = cfg.real("extent");
  w.landmarks = static_cast<int>(cfg.integer("landmarks"));
  w.style = world_style_from(cfg.str("style"));
  w.img_h = static_cast<int>(cfg.integer("img_h"));
  w.img_w = static_cast<int>(cfg.integer("img_w"));
  w.n_contexts = static_cast<int>(cfg.integer("n_contexts"));
  w.n_queries = static_cast<int>(cfg.integer("n_queries"));
  w.max_step = cfg.real("max_step");
  const std::string sampler = cfg.str("sampler");
  if (sampler != "walk" && sampler != "reorder")
    throw std::invalid_argument("unknown sampler: " + sampler);
  w.reorder_sampler = sampler == "reorder";
  return w;
}

TrainConfig train_config_from(const Config& cfg) {
  TrainConfig tc;
  tc.spec = ModelSpec::from_config(cfg);
  tc.world = world_from(cfg);
  tc.n_contexts = static_cast<int>(cfg.integer("n_contexts"));
  tc.k_train = static_cast<int>(cfg.integer("k_train"));
  tc.batch = static_cast<int>(cfg.integer("batch"));
  tc.iters = cfg.integer("iters");
  tc.val_period = cfg.integer("val_period");
  tc.val_episodes = static_cast<int>(cfg.integer("val_episodes"));
  tc.patience = cfg.integer("patience");
  tc.loss.alpha = cfg.real("alpha");
  tc.adam.lr = cfg.real("lr");
  tc.adam.weight_decay = cfg.real("weight_decay");
  tc.tracking.kind = InitialBeliefSpec::Kind::kGaussianTracking;
  tc.tracking.sigma_xy = cfg.real("track_sigma_xy");
  tc.tracking.sigma_yaw = cfg.real("track_sigma_yaw_deg") * M_PI / 180.0;
  tc.seed = cfg.seed("seed");
  tc.threads = static_cast<int>(cfg.integer("threads"));
  tc.dataset = cfg.str("dataset");
  tc.class_iters = cfg.integer("class_iters");
  if (tc.n_contexts < 1 || tc.k_train < 1 || tc.batch < 1 || tc.iters < 1)
    throw std::invalid_argument("counts must be positive");
  return tc;
}

EvalSetting eval_setting_from(const Config& cfg) {
  EvalSetting es;
  es.mode = eval_mode_from(cfg.str("mode"));
  es.k_eval = static_cast<int>(cfg.integer("k_eval"));
  es.episodes = static_cast<int>(cfg.integer("episodes"));
  es.n_contexts = static_cast<int>(cfg.integer("n_contexts"));
  es.seed = cfg.seed("seed");
  es.world = world_from(cfg);
  es.noise.sigma_x = cfg.real("trans_noise_xy");
  es.noise.sigma_y = cfg.real("trans_noise_xy");
  es.noise.sigma_yaw = cfg.real("trans_noise_yaw_deg") * M_PI / 180.0;
  es.tracking.kind = InitialBeliefSpec::Kind::kGaussianTracking;
  es.tracking.sigma_xy = cfg.real("track_sigma_xy");
  es.tracking.sigma_yaw = cfg.real("track_sigma_yaw_deg") * M_PI / 180.0;
  es.resample = cfg.flag("resample");
  es.threads = static_cast<int>(cfg.integer("threads"));
  es.particle_dump_dir = cfg.str("particle_dump");
  es.config_echo = cfg.echo();
  if (es.episodes < 1) throw std::invalid_argument("episodes must be positive");
  return es;
}

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(std::stoi(item));
  return out;
}

void write_curves_csv(const std::string& path, const std::vector<CurvePoint>& curves,
                      const std::string& echo) {
  CurveFile file;
  file.header = "iter,train_loss,val_loss";
  for (const auto& p : curves) {
    std::ostringstream row;
    row.precision(8);
    row << p.iter << "," << p.train_loss << "," << p.val_loss;
    file.rows.push_back(row.str());
  }
  write_curve_file(path, file, echo);
}

}  // namespace

extern "C" {

dmnloc_config* dmnloc_config_create(void) { return new dmnloc_config(); }

void dmnloc_config_destroy(dmnloc_config* cfg) { delete cfg; }

dmnloc_status dmnloc_config_set(dmnloc_config* cfg, const char* key, const char* value) {
  if (!cfg || !key || !value) return fail(DMNLOC_ERR_USAGE, "null argument");
  return guarded([&] {
    cfg->impl.set(key, value);
    return DMNLOC_OK;
  });
}

dmnloc_status dmnloc_config_load(dmnloc_config* cfg, const char* path) {
  if (!cfg || !path) return fail(DMNLOC_ERR_USAGE, "null argument");
  return guarded([&] {
    cfg->impl.load_file(path);
    return DMNLOC_OK;
  });
}

const char* dmnloc_config_get(const dmnloc_config* cfg, const char* key) {
  if (!cfg || !key || !cfg->impl.has(key)) return nullptr;
  cfg->scratch = cfg->impl.str(key);
  return cfg->scratch.c_str();
}

dmnloc_status dmnloc_run_gen(const dmnloc_config* cfg, const char* out_path) {
  if (!cfg || !out_path) return fail(DMNLOC_ERR_USAGE, "null argument");
  return guarded([&] {
    const Config& c = cfg->impl;
    const WorldConfig world = world_from(c);
    const long count = c.integer("count");
    if (count < 1) throw std::invalid_argument("count must be positive");
    const std::uint64_t seed = c.seed("seed");
    std::vector<Episode> episodes;
    episodes.reserve(static_cast<std::size_t>(count));
    for (long i = 0; i < count; ++i) {
      const std::uint64_t ep_seed = Rng::derive(seed, fnv1a("gen.episode") + i);
      episodes.push_back(sample_episode(generate(ep_seed, world), ep_seed, world));
    }
    write_dataset(out_path, episodes, c.echo());
    return DMNLOC_OK;
  });
}

dmnloc_status dmnloc_run_train(const dmnloc_config* cfg, const char* ckpt_path,
                               const char* curves_path) {
  if (!cfg || !ckpt_path) return fail(DMNLOC_ERR_USAGE, "null argument");
  return guarded([&] {
    const TrainConfig tc = train_config_from(cfg->impl);
    const std::string grid = cfg->impl.str("lr_grid");
    TrainResult result;
    if (grid.empty()) {
      result = train(tc);
    } else {
      std::vector<double> rates;
      std::stringstream ss(grid);
      std::string item;
      while (std::getline(ss, item, ','))
        if (!item.empty()) rates.push_back(std::stod(item));
      result = lr_grid(tc, rates, nullptr);
    }
    if (result.diverged)
      throw std::runtime_error("training diverged: " + result.diagnostic);
    save_checkpoint(ckpt_path, result.params, cfg->impl.echo());
    if (curves_path && std::strlen(curves_path) > 0)
      write_curves_csv(curves_path, result.curves, cfg->impl.echo());
    return DMNLOC_OK;
  });
}

dmnloc_status dmnloc_run_eval(const dmnloc_config* cfg, const char* ckpt_path,
                              const char* report_path) {
  if (!cfg || !report_path) return fail(DMNLOC_ERR_USAGE, "null argument");
  return guarded([&] {
    const Config& c = cfg->impl;
    const EvalSetting setting = eval_setting_from(c);
    const std::string variant = c.str("variant");
    std::vector<MetricsReport> reports;
    if (variant == "closest-context") {
      reports.push_back(baseline_closest_context(setting));
    } else if (variant == "uninformed") {
      reports.push_back(baseline_uninformed(setting));
    } else {
      if (!ckpt_path || std::strlen(ckpt_path) == 0)
        throw std::invalid_argument("evaluation of a trained variant needs a checkpoint");
      std::string echo;
      ParameterStore params = load_checkpoint(ckpt_path, &echo);
      Config stored;
      stored.load_echo(echo);
      if (stored.str("variant") != variant)
        throw std::runtime_error("incompatible checkpoint: trained variant " +
                                 stored.str("variant") + ", requested " + variant);
      for (const char* key : {"img_h", "img_w", "channel_scale"})
        if (stored.str(key) != c.str(key))
          throw std::runtime_error(std::string("incompatible checkpoint: ") + key +
                                   " mismatch");
      const ModelSpec spec = ModelSpec::from_config(c);
      reports.push_back(run_eval(spec, params, setting));
    }
    write_report(report_path, reports, c.echo());
    return DMNLOC_OK;
  });
}

dmnloc_status dmnloc_run_gradcheck(const dmnloc_config* cfg, const char* report_path) {
  if (!cfg) return fail(DMNLOC_ERR_USAGE, "null argument");
  return guarded([&] {
    TrainConfig tc = train_config_from(cfg->impl);
    Graph::fault_injection = cfg->impl.flag("gradcheck_fault");
    const GradCheckReport report = gradcheck_pipeline(tc);
    Graph::fault_injection = false;
    const std::string text = format_gradcheck_report(report);
    if (report_path && std::strlen(report_path) > 0) {
      std::ofstream os(report_path, std::ios::trunc);
      std::istringstream echo(cfg->impl.echo());
      std::string line;
      while (std::getline(echo, line)) os << "#" << line << "\n";
      os << text;
    }
    if (!report.pass)
      throw std::runtime_error("gradient check failed: max rel err " +
                               std::to_string(report.max_rel_err));
    return DMNLOC_OK;
  });
}

dmnloc_status dmnloc_run_sweep(const dmnloc_config* cfg, const char* kind, const char* out_dir) {
  if (!cfg || !kind || !out_dir) return fail(DMNLOC_ERR_USAGE, "null argument");
  return guarded([&] {
    const Config& c = cfg->impl;
    SweepConfig sc;
    sc.train = train_config_from(c);
    sc.eval = eval_setting_from(c);
    sc.sizes = parse_int_list(c.str("sweep_sizes"));
    sc.contexts = parse_int_list(c.str("sweep_contexts"));
    sc.particles = parse_int_list(c.str("sweep_particles"));
    sc.time_steps = static_cast<int>(c.integer("sweep_times"));
    sc.distractors = static_cast<int>(c.integer("distractors"));
    sc.distractor_offset = c.real("distractor_offset");
    sc.work_dir = out_dir;
    sc.config_echo = c.echo();
    std::filesystem::create_directories(out_dir);

    const std::string k = kind;
    std::vector<CurveFile> curves;
    if (k == "data-efficiency") curves = sweep_data_efficiency(sc);
    else if (k == "context-count") curves = sweep_context_count(sc);
    else if (k == "time-curve") curves = sweep_time_curve(sc);
    else if (k == "particle-count") curves = sweep_particle_count(sc);
    else if (k == "classification") curves = sweep_classification(sc);
    else if (k == "large-env") curves = sweep_large_env(sc);
    else throw std::invalid_argument("unknown sweep kind: " + k);

    for (const auto& curve : curves)
      write_curve_file(std::string(out_dir) + "/" + curve.name, curve, sc.config_echo);
    return DMNLOC_OK;
  });
}

dmnloc_status dmnloc_check_file(const char* path) {
  if (!path) return fail(DMNLOC_ERR_USAGE, "null argument");
  return guarded([&]() -> dmnloc_status {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error(std::string("cannot open: ") + path);
    char head[10] = {};
    is.read(head, 10);
    const std::string start(head, static_cast<std::size_t>(is.gcount()));
    if (start.rfind("DMNCKPT1", 0) == 0) {
      std::string echo;
      load_checkpoint(path, &echo);
      Config cfg;
      cfg.load_echo(echo);  // header must echo a valid config
      return DMNLOC_OK;
    }
    if (start.rfind("DMNDATA1", 0) == 0) {
      std::string echo;
      read_dataset(path, &echo);
      Config cfg;
      cfg.load_echo(echo);
      return DMNLOC_OK;
    }
    if (start.rfind("#DMNREPORT1", 0) == 0 || start.rfind("#", 0) == 0) {
      std::ifstream text(path);
      std::string line;
      std::string echo;
      bool saw_header = false;
      while (std::getline(text, line)) {
        if (line.rfind("#aggregate", 0) == 0 || line == "#DMNREPORT1") continue;
        if (line.rfind("# ", 0) == 0) continue;
        if (!line.empty() && line[0] == '#') {
          echo += line.substr(1) + "\n";
          continue;
        }
        saw_header = true;
        break;
      }
      if (!saw_header) throw std::runtime_error("missing column header");
      Config cfg;
      cfg.load_echo(echo);
      return DMNLOC_OK;
    }
    throw std::runtime_error(std::string("unrecognized file format: ") + path);
  });
}

const char* dmnloc_last_error(void) { return g_last_error.c_str(); }

}  // extern "C"
