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

#ifndef DMNLOC_ENVGEN_HPP
#define DMNLOC_ENVGEN_HPP

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "dmnloc/geometry.hpp"

namespace dmnloc {

enum class WorldStyle { kRooms, kMazes };

WorldStyle world_style_from(const std::string& s);
std::string to_string(WorldStyle s);

/// Colored-wall world on an n x n cell grid spanning the square extent, with
/// point landmarks rendered as colored beacons. Outer boundary is walled and
/// the free cells form one connected region.
struct Environment {
  std::uint64_t seed = 0;
  int n = 8;
  double half_width = 20.0;
  std::vector<std::uint8_t> occupied;             // n*n, row-major by (iy, ix)
  std::vector<std::array<float, 3>> cell_color;   // n*n
  struct Landmark {
    double x = 0.0, y = 0.0;
    std::array<float, 3> color{1.f, 0.f, 0.f};
  };
  std::vector<Landmark> landmarks;

  double cell_size() const { return 2.0 * half_width / n; }
  int cell_index(double x, double y) const;  // -1 outside the extent
  bool is_free(double x, double y) const;
  int free_cell_count() const;
};

/// Panoramic RGB observation; width spans exactly 2*pi of view. Stored as
/// 32-bit floats to match the on-disk payload bit for bit.
struct RenderedImage {
  int h = 0, w = 0;
  std::vector<float> rgb;  // h*w*3, row-major, values in [0,1]

  float& at(int r, int c, int ch) { return rgb[(static_cast<std::size_t>(r) * w + c) * 3 + ch]; }
  float at(int r, int c, int ch) const { return rgb[(static_cast<std::size_t>(r) * w + c) * 3 + ch]; }
};

struct Observation {
  RenderedImage image;
  PlanarPose pose;  // meters, world frame
};

/// One sampled task instance. Egomotions satisfy
/// queries[t+1].pose == compose(queries[t].pose, egomotions[t]).
struct Episode {
  Environment env;
  std::vector<Observation> contexts;
  std::vector<Observation> queries;
  std::vector<Egomotion> egomotions;
  std::uint64_t seed = 0;
};

struct WorldConfig {
  int grid_n = 8;
  double half_width = 20.0;
  int landmarks = 5;
  WorldStyle style = WorldStyle::kMazes;
  int img_h = 8;
  int img_w = 32;
  int n_contexts = 4;
  int n_queries = 5;
  double max_step = 3.0;
  bool reorder_sampler = false;  // paper-style randomly ordered queries
};

// Deterministic in (seed, cfg); retries internally on connectivity failure
// with derived sub-seeds, at most 64 attempts.
Environment generate(std::uint64_t seed, const WorldConfig& cfg);

// Ray-cast panorama. Column c looks along world bearing pose.yaw + 2*pi*c/w.
// Throws if the pose is inside a wall or outside the extent.
RenderedImage render(const Environment& env, const PlanarPose& pose, int img_h, int img_w);

Episode sample_episode(const Environment& env, std::uint64_t seed, const WorldConfig& cfg);

// Dataset file: magic "DMNDATA1", version, config echo, then per-episode
// environment, observations (f64 poses + f32 image payloads) and egomotions.
void write_dataset(const std::string& path, const std::vector<Episode>& episodes,
                   const std::string& config_echo);
std::vector<Episode> read_dataset(const std::string& path, std::string* config_echo);

}  // namespace dmnloc

#endif  // DMNLOC_ENVGEN_HPP
