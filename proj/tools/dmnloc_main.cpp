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

#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dmnloc.h"

namespace {

struct ConfigDeleter {
  void operator()(dmnloc_config* cfg) const { dmnloc_config_destroy(cfg); }
};
using ConfigHandle = std::unique_ptr<dmnloc_config, ConfigDeleter>;

// Flag overrides collected as (key, value) pairs, applied after --config.
struct Overrides {
  std::vector<std::pair<std::string, std::string>> kv;
  std::string config_file;

  void bind_common(CLI::App* cmd) {
    cmd->add_option_function<std::string>(
        "--config", [this](const std::string& v) { config_file = v; },
        "key=value configuration file");
    cmd->add_option_function<std::string>(
        "--set", [this](const std::string& v) { parse_set(v); },
        "override a single key=value pair")
        ->take_all();
    cmd->add_option_function<std::string>(
        "--seed", [this](const std::string& v) { kv.emplace_back("seed", v); }, "run seed");
    cmd->add_option_function<std::string>(
        "--threads", [this](const std::string& v) { kv.emplace_back("threads", v); },
        "parallelism cap (1 reproduces any setting exactly)");
  }

  void parse_set(const std::string& pair) {
    const auto eq = pair.find('=');
    if (eq == std::string::npos) throw CLI::ValidationError("--set expects key=value");
    kv.emplace_back(pair.substr(0, eq), pair.substr(eq + 1));
  }

  int apply(dmnloc_config* cfg) const {
    if (!config_file.empty()) {
      if (dmnloc_config_load(cfg, config_file.c_str()) != DMNLOC_OK) return 1;
    }
    for (const auto& [k, v] : kv)
      if (dmnloc_config_set(cfg, k.c_str(), v.c_str()) != DMNLOC_OK) return 1;
    return 0;
  }
};

int report_error(dmnloc_status status) {
  std::fprintf(stderr, "error: %s\n", dmnloc_last_error());
  return status == DMNLOC_ERR_USAGE ? 2 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"view-embedding map localization toolkit"};
  app.require_subcommand(1);

  ConfigHandle cfg(dmnloc_config_create());

  // gen
  auto* gen = app.add_subcommand("gen", "generate a procedural episode dataset");
  Overrides gen_ov;
  gen_ov.bind_common(gen);
  std::string gen_out;
  gen->add_option_function<std::string>(
      "--count", [&](const std::string& v) { gen_ov.kv.emplace_back("count", v); },
      "number of episodes");
  gen->add_option_function<std::string>(
      "--style", [&](const std::string& v) { gen_ov.kv.emplace_back("style", v); },
      "rooms | mazes");
  gen->add_option("--out", gen_out, "output dataset path")->required();

  // train
  auto* train = app.add_subcommand("train", "train a model variant");
  Overrides train_ov;
  train_ov.bind_common(train);
  std::string out_ckpt, curves, dataset;
  train->add_option_function<std::string>(
      "--variant", [&](const std::string& v) { train_ov.kv.emplace_back("variant", v); },
      "model variant (dmn-pf, regression, latent-image-pf, latent-image-regression, "
      "latent-vector-pf, latent-vector-regression, no-attention, no-egocentric, no-both)");
  train->add_option_function<std::string>(
      "--iters", [&](const std::string& v) { train_ov.kv.emplace_back("iters", v); },
      "training iterations");
  train->add_option_function<std::string>(
      "--dataset", [&](const std::string& v) { train_ov.kv.emplace_back("dataset", v); },
      "train from a fixed dataset file instead of fresh episodes");
  train->add_option("--out-ckpt", out_ckpt, "checkpoint output path")->required();
  train->add_option("--curves", curves, "training-curve CSV output path");

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint or baseline");
  Overrides eval_ov;
  eval_ov.bind_common(eval);
  std::string ckpt, report;
  eval->add_option("--ckpt", ckpt, "checkpoint path (baselines run without one)");
  eval->add_option("--report", report, "metrics report output path")->required();
  eval->add_option_function<std::string>(
      "--mode", [&](const std::string& v) { eval_ov.kv.emplace_back("mode", v); },
      "one-step-global | seq-global | tracking");
  eval->add_option_function<std::string>(
      "--variant", [&](const std::string& v) { eval_ov.kv.emplace_back("variant", v); },
      "model variant or closest-context | uninformed");
  eval->add_option_function<std::string>(
      "--particles", [&](const std::string& v) { eval_ov.kv.emplace_back("k_eval", v); },
      "particle count override");
  eval->add_option_function<std::string>(
      "--episodes", [&](const std::string& v) { eval_ov.kv.emplace_back("episodes", v); },
      "evaluation episode count");
  eval->add_option_function<std::string>(
      "--contexts", [&](const std::string& v) { eval_ov.kv.emplace_back("n_contexts", v); },
      "contexts per episode");
  eval->add_option_function<std::string>(
      "--particle-dump",
      [&](const std::string& v) { eval_ov.kv.emplace_back("particle_dump", v); },
      "directory for per-step particle tables");

  // gradcheck
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient validation");
  Overrides gc_ov;
  gc_ov.bind_common(gradcheck);
  std::string gc_report;
  gradcheck->add_option("--report", gc_report, "per-parameter report output path");
  gradcheck->add_flag_function(
      "--inject-adjoint-fault",
      [&](std::int64_t) { gc_ov.kv.emplace_back("gradcheck_fault", "1"); },
      "negative control: corrupt one adjoint; the check must fail");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "experiment sweeps");
  Overrides sweep_ov;
  sweep_ov.bind_common(sweep);
  std::string kind, out_dir;
  sweep->add_option("--kind", kind,
                    "data-efficiency | context-count | time-curve | particle-count | "
                    "classification | large-env")
      ->required();
  sweep->add_option("--out-dir", out_dir, "output directory for curve files")->required();

  // check
  auto* check = app.add_subcommand("check", "validate output file headers");
  std::vector<std::string> check_paths;
  check->add_option("files", check_paths, "files to validate")->required();

  CLI11_PARSE(app, argc, argv);

  dmnloc_status status = DMNLOC_OK;
  if (gen->parsed()) {
    if (gen_ov.apply(cfg.get())) return report_error(DMNLOC_ERR_USAGE);
    status = dmnloc_run_gen(cfg.get(), gen_out.c_str());
  } else if (train->parsed()) {
    if (train_ov.apply(cfg.get())) return report_error(DMNLOC_ERR_USAGE);
    status = dmnloc_run_train(cfg.get(), out_ckpt.c_str(), curves.c_str());
  } else if (eval->parsed()) {
    if (eval_ov.apply(cfg.get())) return report_error(DMNLOC_ERR_USAGE);
    status = dmnloc_run_eval(cfg.get(), ckpt.c_str(), report.c_str());
  } else if (gradcheck->parsed()) {
    if (gc_ov.apply(cfg.get())) return report_error(DMNLOC_ERR_USAGE);
    status = dmnloc_run_gradcheck(cfg.get(), gc_report.c_str());
    if (status == DMNLOC_OK) std::printf("gradcheck: PASS\n");
  } else if (sweep->parsed()) {
    if (sweep_ov.apply(cfg.get())) return report_error(DMNLOC_ERR_USAGE);
    status = dmnloc_run_sweep(cfg.get(), kind.c_str(), out_dir.c_str());
  } else if (check->parsed()) {
    for (const auto& path : check_paths) {
      status = dmnloc_check_file(path.c_str());
      if (status != DMNLOC_OK) break;
      std::printf("%s: ok\n", path.c_str());
    }
  }
  if (status != DMNLOC_OK) return report_error(status);
  return 0;
}
