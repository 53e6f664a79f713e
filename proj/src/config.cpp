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

#include "dmnloc/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace dmnloc {

Config::Config() {
  // World and observations.
  values_["seed"] = "1";
  values_["style"] = "mazes";          // rooms | mazes
  values_["extent"] = "20.0";          // half-width in meters
  values_["grid_n"] = "8";
  values_["landmarks"] = "5";
  values_["img_h"] = "8";
  values_["img_w"] = "32";
  // Episodes.
  values_["n_contexts"] = "4";
  values_["n_queries"] = "5";
  values_["max_step"] = "3.0";
  values_["sampler"] = "walk";         // walk | reorder
  values_["count"] = "100";            // episodes for `gen`
  // Model.
  values_["variant"] = "dmn-pf";
  values_["channel_scale"] = "0.25";
  values_["attention_softmax"] = "1";
  values_["share_cnn45"] = "0";
  values_["fc_final_relu"] = "0";
  // Filter.
  values_["k_train"] = "32";
  values_["k_eval"] = "0";             // 0 = mode default (2048 global, 256 tracking)
  values_["trans_noise_xy"] = "0.2";   // meters
  values_["trans_noise_yaw_deg"] = "2.0";
  values_["track_sigma_xy"] = "6.0";   // meters
  values_["track_sigma_yaw_deg"] = "30.0";
  values_["resample"] = "0";
  // Training.
  values_["alpha"] = "0.5";
  values_["lr"] = "0.001";
  values_["weight_decay"] = "0.0";
  values_["batch"] = "8";
  values_["iters"] = "20000";
  values_["val_period"] = "500";
  values_["val_episodes"] = "100";
  values_["patience"] = "5000";
  values_["dataset"] = "";             // empty = fresh episodes each iteration
  values_["class_iters"] = "4000";
  values_["lr_grid"] = "";             // comma list for the lr sweep
  // Evaluation.
  values_["mode"] = "seq-global";      // one-step-global | seq-global | tracking
  values_["episodes"] = "500";
  values_["distractors"] = "4";
  values_["distractor_offset"] = "4.0";  // normalized units
  values_["sweep_sizes"] = "64,256,1024";
  values_["sweep_contexts"] = "1,2,4,8";
  values_["sweep_particles"] = "16,64,256,2048";
  values_["sweep_times"] = "10";
  values_["particle_dump"] = "";
  // Execution.
  values_["threads"] = "0";            // 0 = hardware concurrency
  values_["gradcheck_fault"] = "0";
}

void Config::set(std::string_view key, std::string_view value) {
  auto it = values_.find(std::string(key));
  if (it == values_.end())
    throw std::invalid_argument("unknown config key: " + std::string(key));
  it->second = std::string(value);
}

void Config::load_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config file: " + path);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    while (!line.empty() && (line.back() == ' ' || line.back() == '\r' || line.back() == '\t'))
      line.pop_back();
    std::size_t start = line.find_first_not_of(" \t");
    if (start == std::string::npos) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected key=value");
    set(line.substr(start, eq - start), line.substr(eq + 1));
  }
}

void Config::load_echo(const std::string& echo) {
  std::istringstream is(echo);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::runtime_error("malformed config echo");
    set(line.substr(0, eq), line.substr(eq + 1));
  }
}

const std::string& Config::str(std::string_view key) const {
  auto it = values_.find(std::string(key));
  if (it == values_.end())
    throw std::invalid_argument("unknown config key: " + std::string(key));
  return it->second;
}

std::int64_t Config::integer(std::string_view key) const {
  const std::string& s = str(key);
  std::size_t pos = 0;
  const std::int64_t v = std::stoll(s, &pos);
  if (pos != s.size()) throw std::invalid_argument("config key " + std::string(key) + " is not an integer");
  return v;
}

double Config::real(std::string_view key) const {
  const std::string& s = str(key);
  std::size_t pos = 0;
  const double v = std::stod(s, &pos);
  if (pos != s.size()) throw std::invalid_argument("config key " + std::string(key) + " is not a number");
  return v;
}

bool Config::flag(std::string_view key) const { return integer(key) != 0; }

std::uint64_t Config::seed(std::string_view key) const {
  return static_cast<std::uint64_t>(std::stoull(str(key)));
}

bool Config::has(std::string_view key) const { return values_.count(std::string(key)) > 0; }

std::string Config::echo() const {
  std::string out;
  for (const auto& [k, v] : values_) {
    out += k;
    out += '=';
    out += v;
    out += '\n';
  }
  return out;
}

}  // namespace dmnloc
