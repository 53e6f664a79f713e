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

#include "dmnloc/gradcheck.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

#include "dmnloc/parallel.hpp"
#include "dmnloc/rng.hpp"

namespace dmnloc {

GradCheckReport gradcheck_pipeline(const TrainConfig& cfg, double step, double tolerance) {
  const auto start = std::chrono::steady_clock::now();
  GradCheckReport report;
  report.tolerance = tolerance;

  ParameterStore params = build_parameters(cfg.spec, Rng::derive(cfg.seed, fnv1a("gradcheck.init")));
  WorldConfig world = cfg.world;
  world.n_contexts = cfg.n_contexts;
  world.n_queries = 1;
  const std::uint64_t ep_seed = Rng::derive(cfg.seed, fnv1a("gradcheck.episode"));
  const Episode episode = sample_episode(generate(ep_seed, world), ep_seed, world);

  GradStore analytic;
  training_forward(cfg, params, episode, &analytic, nullptr);

  const std::size_t n = params.size();
  report.entries.resize(n);
  parallel_for(static_cast<int>(n), cfg.threads, [&](int pi) {
    ParameterStore local = params;
    auto& entry = local.entry(static_cast<std::size_t>(pi));
    const Tensor* grad = analytic.find(entry.name);
    double worst = 0.0;
    for (std::size_t i = 0; i < entry.value.numel(); ++i) {
      const double saved = entry.value.v[i];
      entry.value.v[i] = saved + step;
      const double up = training_forward(cfg, local, episode, nullptr, nullptr);
      entry.value.v[i] = saved - step;
      const double down = training_forward(cfg, local, episode, nullptr, nullptr);
      entry.value.v[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double a = grad ? grad->v[i] : 0.0;
      const double denom = std::max({1.0, std::fabs(a), std::fabs(numeric)});
      worst = std::max(worst, std::fabs(a - numeric) / denom);
    }
    report.entries[static_cast<std::size_t>(pi)] = {entry.name, worst};
  });

  for (const auto& e : report.entries) report.max_rel_err = std::max(report.max_rel_err, e.max_rel_err);
  report.pass = report.max_rel_err < tolerance;
  report.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

std::string format_gradcheck_report(const GradCheckReport& report) {
  std::ostringstream os;
  os.precision(3);
  os << std::scientific;
  os << "parameter,max_rel_err\n";
  for (const auto& e : report.entries) os << e.name << "," << e.max_rel_err << "\n";
  os << "# overall max_rel_err " << report.max_rel_err << " tolerance " << report.tolerance
     << " runtime_s " << report.seconds << " -> " << (report.pass ? "PASS" : "FAIL") << "\n";
  return os.str();
}

}  // namespace dmnloc
