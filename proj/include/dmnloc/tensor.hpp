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

#ifndef DMNLOC_TENSOR_HPP
#define DMNLOC_TENSOR_HPP

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace dmnloc {

/// Dense row-major array of doubles, rank 1-4.
struct Tensor {
  std::array<int, 4> shape{1, 1, 1, 1};
  int rank = 1;
  std::vector<double> v;

  Tensor() = default;
  explicit Tensor(std::initializer_list<int> dims) { reshape(dims); }

  void reshape(std::initializer_list<int> dims) {
    if (dims.size() < 1 || dims.size() > 4) throw std::invalid_argument("tensor rank must be 1-4");
    rank = static_cast<int>(dims.size());
    shape = {1, 1, 1, 1};
    std::size_t n = 1;
    int i = 0;
    for (int d : dims) {
      if (d <= 0) throw std::invalid_argument("tensor extent must be positive");
      shape[i++] = d;
      n *= static_cast<std::size_t>(d);
    }
    v.assign(n, 0.0);
  }

  std::size_t numel() const { return v.size(); }
  bool same_shape(const Tensor& o) const { return rank == o.rank && shape == o.shape; }
  std::string shape_str() const;

  double* data() { return v.data(); }
  const double* data() const { return v.data(); }

  // Rank-3 (H, W, C) accessors used by the image/feature-map paths.
  double& at(int r, int c, int ch) { return v[(static_cast<std::size_t>(r) * shape[1] + c) * shape[2] + ch]; }
  double at(int r, int c, int ch) const { return v[(static_cast<std::size_t>(r) * shape[1] + c) * shape[2] + ch]; }

  static Tensor scalar(double x) {
    Tensor t({1});
    t.v[0] = x;
    return t;
  }
  static Tensor from(std::initializer_list<int> dims, std::initializer_list<double> vals) {
    Tensor t(dims);
    if (vals.size() != t.numel()) throw std::invalid_argument("value count mismatch");
    std::size_t i = 0;
    for (double x : vals) t.v[i++] = x;
    return t;
  }

  bool all_finite() const;
};

/// Named collection of tensors. Parameter shapes are fixed once created;
/// the trainable flag controls which entries receive optimizer updates.
class ParameterStore {
 public:
  struct Entry {
    std::string name;
    Tensor value;
    bool trainable = true;
  };

  Tensor& create(std::string_view name, Tensor init, bool trainable = true);
  bool contains(std::string_view name) const { return index_.count(std::string(name)) > 0; }
  Tensor& get(std::string_view name);
  const Tensor& get(std::string_view name) const;
  Entry& entry(std::size_t i) { return entries_[i]; }
  const Entry& entry(std::size_t i) const { return entries_[i]; }
  std::size_t size() const { return entries_.size(); }

  void set_trainable_by_prefix(std::string_view prefix, bool trainable);

  std::size_t parameter_count() const;        // total scalar values
  std::size_t parameter_count(std::string_view prefix) const;

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Gradients keyed like a ParameterStore, in the same order.
class GradStore {
 public:
  Tensor& ensure(std::string_view name, const Tensor& like);
  Tensor* find(std::string_view name);
  const Tensor* find(std::string_view name) const;
  void accumulate(const GradStore& other);  // fixed order; other's entries added
  void scale(double a);
  std::size_t size() const { return entries_.size(); }
  std::vector<std::pair<std::string, Tensor>>& entries() { return entries_; }
  const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Fan-in scaled uniform init, limit sqrt(6/(fan_in+fan_out)). The stream is
// derived from the parameter name, so initialization does not depend on
// creation order.
Tensor glorot_uniform(std::initializer_list<int> dims, int fan_in, int fan_out,
                      std::uint64_t seed, std::string_view name);

// Checkpoint file: "DMNCKPT1", version, config echo, then per-parameter
// records (name, rank, extents as u32 LE, values as f64 LE).
void save_checkpoint(const std::string& path, const ParameterStore& params,
                     const std::string& config_echo);
ParameterStore load_checkpoint(const std::string& path, std::string* config_echo);

}  // namespace dmnloc

#endif  // DMNLOC_TENSOR_HPP
