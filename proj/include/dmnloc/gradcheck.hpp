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

#ifndef DMNLOC_GRADCHECK_HPP
#define DMNLOC_GRADCHECK_HPP

#include <string>
#include <vector>

#include "dmnloc/training.hpp"

namespace dmnloc {

struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_err = 0.0;
  double tolerance = 1e-4;
  double seconds = 0.0;
  bool pass = false;
};

// Compares the analytic gradient of the end-to-end training loss (map
// encoder -> attention -> observation model -> measurement update -> weighted
// mean -> loss) against central finite differences for every parameter
// element. The finite-difference side uses forward passes only.
// rel_err = |a - n| / max(1, |a|, |n|).
GradCheckReport gradcheck_pipeline(const TrainConfig& cfg, double step = 1e-5,
                                   double tolerance = 1e-4);

std::string format_gradcheck_report(const GradCheckReport& report);

}  // namespace dmnloc

#endif  // DMNLOC_GRADCHECK_HPP
