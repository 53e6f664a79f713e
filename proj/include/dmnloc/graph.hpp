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

#ifndef DMNLOC_GRAPH_HPP
#define DMNLOC_GRAPH_HPP

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "dmnloc/geometry.hpp"
#include "dmnloc/tensor.hpp"

namespace dmnloc {

using NodeId = std::int32_t;

enum class Op : std::uint8_t {
  kLeaf,
  kConv2d,      // a=input HxWxCin, b=kernel kxkxCinxCout, c=bias; aux0=stride, aux1=fused relu
  kDense,       // a=input n, b=weights nxm, c=bias m; aux1=fused relu
  kRelu,
  kAdd,
  kSub,
  kMul,          // elementwise, same shape
  kScaleConst,   // cval * a
  kAddConst,     // a + cval
  kScaleByNode,  // tensor a scaled by scalar node b
  kConcat,       // along last axis; operands share leading extents
  kTile4,        // length-4 vector broadcast to HxWx4 (aux0=H, aux1=W)
  kReduceSum,    // scalar sum of all entries
  kDot,          // scalar product of flattened operands
  kSoftmax,      // vector
  kLogSumExp,    // vector -> scalar
  kExp,
  kPack,         // n scalar nodes -> length-n vector
  kIndex,        // vector -> scalar element aux0
  kSubScalar,    // vector a minus scalar node b, broadcast
  kAtan2,        // scalars: atan2(a, b)
  kWrapAngle,    // scalar wrapped to (-pi, pi]; derivative 1
  kEncode4,      // pose leaf {x,y,yaw} -> {x, y, sin yaw, cos yaw}
  kEgoEncode4,   // origin pose node -> encode4(egocentric(target_pose, origin))
  kReshape,
};

/// Append-only tape of executed primitives. Values are computed eagerly;
/// backward() replays the tape in reverse with exact adjoints.
class Graph {
 public:
  struct Node {
    Op op = Op::kLeaf;
    int aux0 = 0;
    int aux1 = 0;
    double cval = 0.0;
    PlanarPose target;  // kEgoEncode4 constant operand
    std::vector<NodeId> in;
    Tensor value;
    bool needs_grad = false;  // true if any path to this node starts at a grad leaf
  };

  // -- Leaves -------------------------------------------------------------
  NodeId constant(Tensor t);
  NodeId input(Tensor t, bool needs_grad = true);
  // Memoized per name: every use of a parameter shares one leaf, so adjoints
  // of shared weights accumulate across contexts and particles.
  NodeId param(ParameterStore& store, std::string_view name);
  NodeId pose_input(const PlanarPose& p, bool needs_grad = true);

  // -- Primitives ----------------------------------------------------------
  NodeId conv2d(NodeId in, NodeId kernel, NodeId bias, int stride, bool fuse_relu = false);
  NodeId dense(NodeId in, NodeId weights, NodeId bias, bool fuse_relu = false);
  NodeId relu(NodeId a);
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId scale_const(NodeId a, double c);
  NodeId add_const(NodeId a, double c);
  NodeId scale_by(NodeId a, NodeId scalar);
  NodeId concat(const std::vector<NodeId>& parts);
  NodeId tile4(NodeId vec4, int h, int w);
  NodeId reduce_sum(NodeId a);
  NodeId dot(NodeId a, NodeId b);
  NodeId softmax(NodeId a);
  NodeId logsumexp(NodeId a);
  NodeId exp(NodeId a);
  NodeId pack(const std::vector<NodeId>& scalars);
  NodeId index(NodeId vec, int i);
  NodeId sub_scalar(NodeId vec, NodeId scalar);
  NodeId atan2(NodeId y, NodeId x);
  NodeId wrap(NodeId a);
  NodeId encode4(NodeId pose);
  NodeId ego_encode4(NodeId origin_pose, const PlanarPose& target);
  NodeId reshape(NodeId a, std::initializer_list<int> dims);

  const Tensor& value(NodeId id) const { return nodes_[id].value; }
  double scalar(NodeId id) const;
  std::size_t size() const { return nodes_.size(); }

  // Transient subgraphs (per-particle evaluation) are dropped by rewinding
  // to a mark; parameter leaf memoization past the mark is invalidated.
  std::size_t mark() const { return nodes_.size(); }
  void rewind(std::size_t m);

  /// Reverse pass from a scalar output. Returns adjoints of parameter leaves
  /// keyed by name; adjoints of other grad-enabled leaves are readable via
  /// leaf_grad() until the next backward() call.
  GradStore backward(NodeId output);
  const Tensor* leaf_grad(NodeId leaf) const;

  // Test hook: corrupts the conv2d kernel adjoint so a gradient check that
  // cannot detect a wrong adjoint fails its negative control.
  static bool fault_injection;

 private:
  NodeId push(Node n);
  std::vector<Node> nodes_;
  std::unordered_map<std::string, NodeId> param_leaves_;
  std::unordered_map<NodeId, std::string> leaf_names_;
  std::vector<Tensor> adjoint_;
};

// Numerically stable log(sum(exp(x))): shared by the tape op and the
// value-path weight updates so both produce identical floats.
double stable_logsumexp(const double* x, std::size_t n);

}  // namespace dmnloc

#endif  // DMNLOC_GRAPH_HPP
