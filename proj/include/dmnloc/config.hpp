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

#ifndef DMNLOC_CONFIG_HPP
#define DMNLOC_CONFIG_HPP

#include <cstdint>
#include <map>
#include <string>
#include <string_view>

namespace dmnloc {

/// Flat key=value run configuration. Every key has a registered default;
/// setting an unknown key is an error. The full table is echoed into
/// checkpoint, dataset and report headers.
class Config {
 public:
  Config();  // defaults

  void set(std::string_view key, std::string_view value);
  void load_file(const std::string& path);       // k=v lines, '#' comments
  void load_echo(const std::string& echo);       // parse an echo block

  const std::string& str(std::string_view key) const;
  std::int64_t integer(std::string_view key) const;
  double real(std::string_view key) const;
  bool flag(std::string_view key) const;
  std::uint64_t seed(std::string_view key) const;

  bool has(std::string_view key) const;
  std::string echo() const;  // sorted "key=value\n" block

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace dmnloc

#endif  // DMNLOC_CONFIG_HPP
