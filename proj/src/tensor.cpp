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

#include "dmnloc/tensor.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "dmnloc/rng.hpp"

namespace dmnloc {

std::string Tensor::shape_str() const {
  std::string s = "(";
  for (int i = 0; i < rank; ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

bool Tensor::all_finite() const {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

Tensor& ParameterStore::create(std::string_view name, Tensor init, bool trainable) {
  std::string key(name);
  if (index_.count(key)) throw std::invalid_argument("duplicate parameter name: " + key);
  index_[key] = entries_.size();
  entries_.push_back(Entry{key, std::move(init), trainable});
  return entries_.back().value;
}

Tensor& ParameterStore::get(std::string_view name) {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw std::out_of_range("no parameter named " + std::string(name));
  return entries_[it->second].value;
}

const Tensor& ParameterStore::get(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw std::out_of_range("no parameter named " + std::string(name));
  return entries_[it->second].value;
}

void ParameterStore::set_trainable_by_prefix(std::string_view prefix, bool trainable) {
  for (auto& e : entries_)
    if (e.name.rfind(prefix, 0) == 0) e.trainable = trainable;
}

std::size_t ParameterStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.value.numel();
  return n;
}

std::size_t ParameterStore::parameter_count(std::string_view prefix) const {
  std::size_t n = 0;
  for (const auto& e : entries_)
    if (e.name.rfind(prefix, 0) == 0) n += e.value.numel();
  return n;
}

Tensor& GradStore::ensure(std::string_view name, const Tensor& like) {
  std::string key(name);
  auto it = index_.find(key);
  if (it != index_.end()) return entries_[it->second].second;
  index_[key] = entries_.size();
  Tensor zero = like;
  std::fill(zero.v.begin(), zero.v.end(), 0.0);
  entries_.emplace_back(key, std::move(zero));
  return entries_.back().second;
}

Tensor* GradStore::find(std::string_view name) {
  auto it = index_.find(std::string(name));
  return it == index_.end() ? nullptr : &entries_[it->second].second;
}

const Tensor* GradStore::find(std::string_view name) const {
  auto it = index_.find(std::string(name));
  return it == index_.end() ? nullptr : &entries_[it->second].second;
}

void GradStore::accumulate(const GradStore& other) {
  for (const auto& [name, g] : other.entries()) {
    Tensor& mine = ensure(name, g);
    for (std::size_t i = 0; i < g.numel(); ++i) mine.v[i] += g.v[i];
  }
}

void GradStore::scale(double a) {
  for (auto& [name, g] : entries_)
    for (double& x : g.v) x *= a;
}

Tensor glorot_uniform(std::initializer_list<int> dims, int fan_in, int fan_out,
                      std::uint64_t seed, std::string_view name) {
  Tensor t(dims);
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  std::string key(name);
  Rng rng(Rng::derive(seed, fnv1a(key.c_str())));
  for (double& x : t.v) x = rng.uniform(-limit, limit);
  return t;
}

namespace {

void put_u32(std::ostream& os, std::uint32_t x) {
  unsigned char b[4] = {static_cast<unsigned char>(x), static_cast<unsigned char>(x >> 8),
                        static_cast<unsigned char>(x >> 16), static_cast<unsigned char>(x >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw std::runtime_error("checkpoint truncated");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

constexpr char kMagic[8] = {'D', 'M', 'N', 'C', 'K', 'P', 'T', '1'};

}  // namespace

void save_checkpoint(const std::string& path, const ParameterStore& params,
                     const std::string& config_echo) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write checkpoint: " + path);
  os.write(kMagic, 8);
  put_u32(os, 1);
  put_u32(os, static_cast<std::uint32_t>(config_echo.size()));
  os.write(config_echo.data(), static_cast<std::streamsize>(config_echo.size()));
  put_u32(os, static_cast<std::uint32_t>(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& e = params.entry(i);
    put_u32(os, static_cast<std::uint32_t>(e.name.size()));
    os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    put_u32(os, static_cast<std::uint32_t>(e.value.rank));
    for (int d = 0; d < e.value.rank; ++d) put_u32(os, static_cast<std::uint32_t>(e.value.shape[d]));
    os.write(reinterpret_cast<const char*>(e.value.v.data()),
             static_cast<std::streamsize>(e.value.numel() * sizeof(double)));
  }
  if (!os) throw std::runtime_error("write failure: " + path);
}

ParameterStore load_checkpoint(const std::string& path, std::string* config_echo) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("not a checkpoint file: " + path);
  const std::uint32_t version = get_u32(is);
  if (version != 1) throw std::runtime_error("unsupported checkpoint version");
  const std::uint32_t cfg_len = get_u32(is);
  std::string cfg(cfg_len, '\0');
  is.read(cfg.data(), cfg_len);
  if (config_echo) *config_echo = cfg;
  const std::uint32_t count = get_u32(is);
  ParameterStore store;
  for (std::uint32_t p = 0; p < count; ++p) {
    const std::uint32_t name_len = get_u32(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    const std::uint32_t rank = get_u32(is);
    if (rank < 1 || rank > 4) throw std::runtime_error("corrupt checkpoint record");
    Tensor t;
    t.rank = static_cast<int>(rank);
    t.shape = {1, 1, 1, 1};
    std::size_t n = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      t.shape[d] = static_cast<int>(get_u32(is));
      if (t.shape[d] <= 0) throw std::runtime_error("corrupt checkpoint record");
      n *= static_cast<std::size_t>(t.shape[d]);
    }
    t.v.resize(n);
    is.read(reinterpret_cast<char*>(t.v.data()), static_cast<std::streamsize>(n * sizeof(double)));
    if (!is) throw std::runtime_error("checkpoint truncated");
    store.create(name, std::move(t));
  }
  return store;
}

}  // namespace dmnloc
