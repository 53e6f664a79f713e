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

#include "dmnloc/envgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "dmnloc/rng.hpp"

namespace dmnloc {

namespace {

constexpr double kLandmarkRadius = 0.5;      // meters
constexpr double kWallReference = 4.0;       // distance at which a wall fills the column
constexpr double kLandmarkReference = 5.0;   // landmarks read slightly taller
constexpr double kShadeDistance = 20.0;
constexpr float kSky[3] = {0.35f, 0.45f, 0.60f};
constexpr float kFloor[3] = {0.25f, 0.22f, 0.20f};

constexpr std::uint64_t kStreamEnv = fnv1a("envgen.grid");
constexpr std::uint64_t kStreamEpisode = fnv1a("envgen.episode");

std::array<float, 3> hsv_to_rgb(double h, double s, double v) {
  h = h - std::floor(h);
  const double c = v * s;
  const double hp = h * 6.0;
  const double x = c * (1.0 - std::fabs(std::fmod(hp, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  switch (static_cast<int>(hp)) {
    case 0: r = c; g = x; break;
    case 1: r = x; g = c; break;
    case 2: g = c; b = x; break;
    case 3: g = x; b = c; break;
    case 4: r = x; b = c; break;
    default: r = c; b = x; break;
  }
  const double m = v - c;
  return {static_cast<float>(r + m), static_cast<float>(g + m), static_cast<float>(b + m)};
}

bool connected_and_roomy(const Environment& env) {
  const int n = env.n;
  const int total = n * n;
  int free_count = env.free_cell_count();
  if (free_count < (total * 3 + 9) / 10) return false;
  int start = -1;
  for (int i = 0; i < total; ++i)
    if (!env.occupied[i]) {
      start = i;
      break;
    }
  if (start < 0) return false;
  std::vector<std::uint8_t> seen(total, 0);
  std::vector<int> stack{start};
  seen[start] = 1;
  int reached = 0;
  while (!stack.empty()) {
    const int cur = stack.back();
    stack.pop_back();
    ++reached;
    const int iy = cur / n, ix = cur % n;
    const int nb[4][2] = {{ix + 1, iy}, {ix - 1, iy}, {ix, iy + 1}, {ix, iy - 1}};
    for (const auto& d : nb) {
      if (d[0] < 0 || d[0] >= n || d[1] < 0 || d[1] >= n) continue;
      const int j = d[1] * n + d[0];
      if (!env.occupied[j] && !seen[j]) {
        seen[j] = 1;
        stack.push_back(j);
      }
    }
  }
  return reached == free_count;
}

PlanarPose sample_free_pose(const Environment& env, Rng& rng) {
  const double margin = 0.25;
  for (int attempt = 0; attempt < 4096; ++attempt) {
    const double x = rng.uniform(-env.half_width + margin, env.half_width - margin);
    const double y = rng.uniform(-env.half_width + margin, env.half_width - margin);
    if (!env.is_free(x, y)) continue;
    const double yaw = wrap_angle(rng.uniform(-M_PI, M_PI));
    return {x, y, yaw};
  }
  throw std::runtime_error("could not sample a free pose");
}

// -- binary helpers --------------------------------------------------------

void put_u32(std::ostream& os, std::uint32_t x) {
  unsigned char b[4] = {static_cast<unsigned char>(x), static_cast<unsigned char>(x >> 8),
                        static_cast<unsigned char>(x >> 16), static_cast<unsigned char>(x >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, std::uint64_t x) {
  put_u32(os, static_cast<std::uint32_t>(x));
  put_u32(os, static_cast<std::uint32_t>(x >> 32));
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw std::runtime_error("dataset truncated");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::uint64_t get_u64(std::istream& is) {
  const std::uint64_t lo = get_u32(is);
  const std::uint64_t hi = get_u32(is);
  return lo | (hi << 32);
}

void put_pose(std::ostream& os, const PlanarPose& p) {
  const double d[3] = {p.x, p.y, p.yaw};
  os.write(reinterpret_cast<const char*>(d), sizeof(d));
}

PlanarPose get_pose(std::istream& is) {
  double d[3];
  is.read(reinterpret_cast<char*>(d), sizeof(d));
  if (!is) throw std::runtime_error("dataset truncated");
  return {d[0], d[1], d[2]};
}

constexpr char kMagic[8] = {'D', 'M', 'N', 'D', 'A', 'T', 'A', '1'};

}  // namespace

WorldStyle world_style_from(const std::string& s) {
  if (s == "rooms") return WorldStyle::kRooms;
  if (s == "mazes") return WorldStyle::kMazes;
  throw std::invalid_argument("unknown world style: " + s);
}

std::string to_string(WorldStyle s) { return s == WorldStyle::kRooms ? "rooms" : "mazes"; }

int Environment::cell_index(double x, double y) const {
  if (x < -half_width || x >= half_width || y < -half_width || y >= half_width) return -1;
  const int ix = static_cast<int>((x + half_width) / cell_size());
  const int iy = static_cast<int>((y + half_width) / cell_size());
  return std::min(iy, n - 1) * n + std::min(ix, n - 1);
}

bool Environment::is_free(double x, double y) const {
  const int idx = cell_index(x, y);
  return idx >= 0 && !occupied[idx];
}

int Environment::free_cell_count() const {
  int c = 0;
  for (auto o : occupied)
    if (!o) ++c;
  return c;
}

Environment generate(std::uint64_t seed, const WorldConfig& cfg) {
  for (int attempt = 0; attempt < 64; ++attempt) {
    Rng rng(Rng::derive(seed, attempt), kStreamEnv);
    Environment env;
    env.seed = seed;
    env.n = cfg.grid_n;
    env.half_width = cfg.half_width;
    const int n = env.n;
    env.occupied.assign(static_cast<std::size_t>(n) * n, 0);
    env.cell_color.resize(static_cast<std::size_t>(n) * n);
    for (int iy = 0; iy < n; ++iy)
      for (int ix = 0; ix < n; ++ix) {
        const int i = iy * n + ix;
        const bool border = ix == 0 || iy == 0 || ix == n - 1 || iy == n - 1;
        bool wall = border;
        if (!border && cfg.style == WorldStyle::kMazes) wall = rng.uniform() < 0.30;
        env.occupied[i] = wall ? 1 : 0;
        env.cell_color[i] = hsv_to_rgb(rng.uniform(), 0.45 + 0.5 * rng.uniform(),
                                       0.55 + 0.45 * rng.uniform());
      }
    if (!connected_and_roomy(env)) continue;

    const double hue0 = rng.uniform();
    bool placed_all = true;
    for (int l = 0; l < cfg.landmarks; ++l) {
      bool placed = false;
      for (int tries = 0; tries < 256 && !placed; ++tries) {
        const double x = rng.uniform(-env.half_width + 1.0, env.half_width - 1.0);
        const double y = rng.uniform(-env.half_width + 1.0, env.half_width - 1.0);
        if (!env.is_free(x, y)) continue;
        bool crowded = false;
        for (const auto& o : env.landmarks)
          crowded = crowded || std::hypot(x - o.x, y - o.y) < 3.0;
        if (crowded) continue;
        env.landmarks.push_back({x, y, hsv_to_rgb(hue0 + 0.618033988749895 * l, 1.0, 1.0)});
        placed = true;
      }
      placed_all = placed_all && placed;
    }
    if (!placed_all) continue;
    return env;
  }
  throw std::runtime_error("environment generation failed after 64 attempts");
}

RenderedImage render(const Environment& env, const PlanarPose& pose, int img_h, int img_w) {
  if (!env.is_free(pose.x, pose.y))
    throw std::invalid_argument("render pose is inside a wall or outside the extent");
  RenderedImage img;
  img.h = img_h;
  img.w = img_w;
  img.rgb.assign(static_cast<std::size_t>(img_h) * img_w * 3, 0.f);

  const int n = env.n;
  const double cell = env.cell_size();
  for (int c = 0; c < img_w; ++c) {
    const double bearing = pose.yaw + 2.0 * M_PI * c / img_w;
    const double dx = std::cos(bearing);
    const double dy = std::sin(bearing);

    // Voxel traversal to the first wall cell.
    int ix = static_cast<int>((pose.x + env.half_width) / cell);
    int iy = static_cast<int>((pose.y + env.half_width) / cell);
    ix = std::clamp(ix, 0, n - 1);
    iy = std::clamp(iy, 0, n - 1);
    const int step_x = dx > 0 ? 1 : -1;
    const int step_y = dy > 0 ? 1 : -1;
    const double inv_dx = dx != 0.0 ? 1.0 / dx : 1e30;
    const double inv_dy = dy != 0.0 ? 1.0 / dy : 1e30;
    const double next_gx = -env.half_width + (ix + (step_x > 0 ? 1 : 0)) * cell;
    const double next_gy = -env.half_width + (iy + (step_y > 0 ? 1 : 0)) * cell;
    double t_max_x = dx != 0.0 ? (next_gx - pose.x) * inv_dx : 1e30;
    double t_max_y = dy != 0.0 ? (next_gy - pose.y) * inv_dy : 1e30;
    const double t_delta_x = dx != 0.0 ? cell * std::fabs(inv_dx) : 1e30;
    const double t_delta_y = dy != 0.0 ? cell * std::fabs(inv_dy) : 1e30;

    double wall_dist = 1e30;
    int wall_cell = -1;
    for (int it = 0; it < 4 * n; ++it) {
      double t_entry;
      if (t_max_x < t_max_y) {
        t_entry = t_max_x;
        t_max_x += t_delta_x;
        ix += step_x;
      } else {
        t_entry = t_max_y;
        t_max_y += t_delta_y;
        iy += step_y;
      }
      if (ix < 0 || ix >= n || iy < 0 || iy >= n) break;
      if (env.occupied[iy * n + ix]) {
        wall_dist = t_entry;
        wall_cell = iy * n + ix;
        break;
      }
    }

    // Nearest landmark intersection along the ray.
    double lm_dist = 1e30;
    int lm_idx = -1;
    for (std::size_t l = 0; l < env.landmarks.size(); ++l) {
      const double ox = env.landmarks[l].x - pose.x;
      const double oy = env.landmarks[l].y - pose.y;
      const double proj = ox * dx + oy * dy;
      if (proj <= 0.0) continue;
      const double perp2 = ox * ox + oy * oy - proj * proj;
      const double r2 = kLandmarkRadius * kLandmarkRadius;
      if (perp2 > r2) continue;
      const double t_hit = proj - std::sqrt(r2 - perp2);
      if (t_hit > 0.0 && t_hit < lm_dist) {
        lm_dist = t_hit;
        lm_idx = static_cast<int>(l);
      }
    }

    const bool landmark_hit = lm_idx >= 0 && lm_dist < wall_dist;
    const double dist = landmark_hit ? lm_dist : wall_dist;
    const double reference = landmark_hit ? kLandmarkReference : kWallReference;
    const float* base = landmark_hit ? env.landmarks[lm_idx].color.data()
                                     : (wall_cell >= 0 ? env.cell_color[wall_cell].data() : kSky);

    int rows = static_cast<int>(std::lround(img_h * reference / std::max(dist, 1e-6)));
    rows = std::clamp(rows, 1, img_h);
    const int sky_rows = (img_h - rows) / 2;
    const double shade = 1.0 / (1.0 + dist / kShadeDistance);
    for (int r = 0; r < img_h; ++r) {
      const float* src;
      float scale = 1.f;
      if (r < sky_rows) {
        src = kSky;
      } else if (r < sky_rows + rows) {
        src = base;
        scale = static_cast<float>(shade);
      } else {
        src = kFloor;
      }
      for (int ch = 0; ch < 3; ++ch)
        img.at(r, c, ch) = std::clamp(src[ch] * scale, 0.f, 1.f);
    }
  }
  return img;
}

Episode sample_episode(const Environment& env, std::uint64_t seed, const WorldConfig& cfg) {
  if (cfg.n_contexts < 1 || cfg.n_queries < 1)
    throw std::invalid_argument("episode needs at least one context and one query");
  Rng rng(seed, kStreamEpisode);
  Episode ep;
  ep.env = env;
  ep.seed = seed;

  for (int i = 0; i < cfg.n_contexts; ++i) {
    const PlanarPose p = sample_free_pose(env, rng);
    ep.contexts.push_back({render(env, p, cfg.img_h, cfg.img_w), p});
  }

  std::vector<PlanarPose> qposes;
  if (cfg.reorder_sampler) {
    for (int t = 0; t < cfg.n_queries; ++t) qposes.push_back(sample_free_pose(env, rng));
  } else {
    qposes.push_back(sample_free_pose(env, rng));
    for (int t = 1; t < cfg.n_queries; ++t) {
      PlanarPose next = qposes.back();
      bool ok = false;
      for (int tries = 0; tries < 200 && !ok; ++tries) {
        Egomotion m;
        m.dx = rng.uniform(0.2, 1.0) * cfg.max_step;
        m.dy = rng.uniform(-0.3, 0.3) * cfg.max_step;
        const double norm = std::hypot(m.dx, m.dy);
        if (norm > cfg.max_step) {
          m.dx *= cfg.max_step / norm;
          m.dy *= cfg.max_step / norm;
        }
        m.dyaw = rng.uniform(-M_PI / 3.0, M_PI / 3.0);
        const PlanarPose cand = compose(qposes.back(), m);
        if (env.is_free(cand.x, cand.y)) {
          next = cand;
          ok = true;
        }
      }
      if (!ok) next = compose(qposes.back(), {0.0, 0.0, rng.uniform(-M_PI, M_PI)});
      qposes.push_back(next);
    }
  }
  for (const PlanarPose& p : qposes) ep.queries.push_back({render(env, p, cfg.img_h, cfg.img_w), p});
  for (std::size_t t = 0; t + 1 < qposes.size(); ++t)
    ep.egomotions.push_back(between(qposes[t], qposes[t + 1]));
  return ep;
}

void write_dataset(const std::string& path, const std::vector<Episode>& episodes,
                   const std::string& config_echo) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write dataset: " + path);
  os.write(kMagic, 8);
  put_u32(os, 1);
  put_u32(os, static_cast<std::uint32_t>(config_echo.size()));
  os.write(config_echo.data(), static_cast<std::streamsize>(config_echo.size()));
  put_u32(os, static_cast<std::uint32_t>(episodes.size()));
  for (const Episode& ep : episodes) {
    put_u64(os, ep.env.seed);
    put_u64(os, ep.seed);
    put_u32(os, static_cast<std::uint32_t>(ep.env.n));
    const double hw = ep.env.half_width;
    os.write(reinterpret_cast<const char*>(&hw), sizeof(double));
    os.write(reinterpret_cast<const char*>(ep.env.occupied.data()),
             static_cast<std::streamsize>(ep.env.occupied.size()));
    os.write(reinterpret_cast<const char*>(ep.env.cell_color.data()),
             static_cast<std::streamsize>(ep.env.cell_color.size() * 3 * sizeof(float)));
    put_u32(os, static_cast<std::uint32_t>(ep.env.landmarks.size()));
    for (const auto& lm : ep.env.landmarks) {
      os.write(reinterpret_cast<const char*>(&lm.x), sizeof(double));
      os.write(reinterpret_cast<const char*>(&lm.y), sizeof(double));
      os.write(reinterpret_cast<const char*>(lm.color.data()), 3 * sizeof(float));
    }
    auto put_obs = [&](const std::vector<Observation>& obs) {
      put_u32(os, static_cast<std::uint32_t>(obs.size()));
      for (const Observation& o : obs) {
        put_pose(os, o.pose);
        put_u32(os, static_cast<std::uint32_t>(o.image.h));
        put_u32(os, static_cast<std::uint32_t>(o.image.w));
        os.write(reinterpret_cast<const char*>(o.image.rgb.data()),
                 static_cast<std::streamsize>(o.image.rgb.size() * sizeof(float)));
      }
    };
    put_obs(ep.contexts);
    put_obs(ep.queries);
    put_u32(os, static_cast<std::uint32_t>(ep.egomotions.size()));
    for (const Egomotion& m : ep.egomotions) {
      const double d[3] = {m.dx, m.dy, m.dyaw};
      os.write(reinterpret_cast<const char*>(d), sizeof(d));
    }
  }
  if (!os) throw std::runtime_error("write failure: " + path);
}

std::vector<Episode> read_dataset(const std::string& path, std::string* config_echo) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open dataset: " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("not a dataset file: " + path);
  const std::uint32_t version = get_u32(is);
  if (version != 1) throw std::runtime_error("unsupported dataset version");
  const std::uint32_t cfg_len = get_u32(is);
  std::string cfg(cfg_len, '\0');
  is.read(cfg.data(), cfg_len);
  if (config_echo) *config_echo = cfg;
  const std::uint32_t count = get_u32(is);
  std::vector<Episode> episodes;
  episodes.reserve(count);
  for (std::uint32_t e = 0; e < count; ++e) {
    Episode ep;
    ep.env.seed = get_u64(is);
    ep.seed = get_u64(is);
    ep.env.n = static_cast<int>(get_u32(is));
    if (ep.env.n <= 0 || ep.env.n > 4096) throw std::runtime_error("corrupt dataset record");
    is.read(reinterpret_cast<char*>(&ep.env.half_width), sizeof(double));
    const std::size_t cells = static_cast<std::size_t>(ep.env.n) * ep.env.n;
    ep.env.occupied.resize(cells);
    is.read(reinterpret_cast<char*>(ep.env.occupied.data()), static_cast<std::streamsize>(cells));
    ep.env.cell_color.resize(cells);
    is.read(reinterpret_cast<char*>(ep.env.cell_color.data()),
            static_cast<std::streamsize>(cells * 3 * sizeof(float)));
    const std::uint32_t n_lm = get_u32(is);
    for (std::uint32_t l = 0; l < n_lm; ++l) {
      Environment::Landmark lm;
      is.read(reinterpret_cast<char*>(&lm.x), sizeof(double));
      is.read(reinterpret_cast<char*>(&lm.y), sizeof(double));
      is.read(reinterpret_cast<char*>(lm.color.data()), 3 * sizeof(float));
      ep.env.landmarks.push_back(lm);
    }
    auto get_obs = [&](std::vector<Observation>& obs) {
      const std::uint32_t n = get_u32(is);
      for (std::uint32_t i = 0; i < n; ++i) {
        Observation o;
        o.pose = get_pose(is);
        o.image.h = static_cast<int>(get_u32(is));
        o.image.w = static_cast<int>(get_u32(is));
        if (o.image.h <= 0 || o.image.w <= 0 || o.image.h * o.image.w > (1 << 24))
          throw std::runtime_error("corrupt dataset record");
        o.image.rgb.resize(static_cast<std::size_t>(o.image.h) * o.image.w * 3);
        is.read(reinterpret_cast<char*>(o.image.rgb.data()),
                static_cast<std::streamsize>(o.image.rgb.size() * sizeof(float)));
        obs.push_back(std::move(o));
      }
    };
    get_obs(ep.contexts);
    get_obs(ep.queries);
    const std::uint32_t n_m = get_u32(is);
    for (std::uint32_t m = 0; m < n_m; ++m) {
      double d[3];
      is.read(reinterpret_cast<char*>(d), sizeof(d));
      ep.egomotions.push_back({d[0], d[1], d[2]});
    }
    if (!is) throw std::runtime_error("dataset truncated");
    episodes.push_back(std::move(ep));
  }
  return episodes;
}

}  // namespace dmnloc
