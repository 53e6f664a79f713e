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

// Independent oracles used by the test suites. Everything here recomputes
// expected values from first principles (finite differences, exhaustive
// enumeration, brute-force scans) without touching the implementation paths
// under test.

#ifndef DMNLOC_TESTS_ORACLES_HPP
#define DMNLOC_TESTS_ORACLES_HPP

#include <cmath>
#include <functional>
#include <vector>

#include "dmnloc/tensor.hpp"

namespace dmnloc::oracles {

// rel_err = |a - n| / max(1, |a|, |n|); the floor keeps near-zero gradients
// from amplifying finite-difference noise.
inline double rel_err(double analytic, double numeric) {
  const double denom = std::max({1.0, std::fabs(analytic), std::fabs(numeric)});
  return std::fabs(analytic - numeric) / denom;
}

// Central finite differences of `value` w.r.t. every element of `target`,
// compared against the analytic gradient. `value` must recompute the scalar
// output from scratch after each perturbation.
inline double max_fd_rel_err(Tensor& target, const Tensor& analytic,
                             const std::function<double()>& value, double h = 1e-5) {
  double worst = 0.0;
  for (std::size_t i = 0; i < target.numel(); ++i) {
    const double saved = target.v[i];
    target.v[i] = saved + h;
    const double up = value();
    target.v[i] = saved - h;
    const double down = value();
    target.v[i] = saved;
    const double numeric = (up - down) / (2.0 * h);
    worst = std::max(worst, rel_err(analytic.v[i], numeric));
  }
  return worst;
}

// Exhaustive discrete Bayes posterior: prior (log) times per-state likelihood
// (log), renormalized by direct summation at long-double precision.
inline std::vector<double> discrete_bayes(const std::vector<double>& log_prior,
                                          const std::vector<double>& log_lik) {
  std::vector<long double> post(log_prior.size());
  long double sum = 0.0L;
  for (std::size_t i = 0; i < log_prior.size(); ++i) {
    post[i] = std::exp(static_cast<long double>(log_prior[i]) + log_lik[i]);
    sum += post[i];
  }
  std::vector<double> out(log_prior.size());
  for (std::size_t i = 0; i < post.size(); ++i) out[i] = static_cast<double>(post[i] / sum);
  return out;
}

}  // namespace dmnloc::oracles

#endif  // DMNLOC_TESTS_ORACLES_HPP
