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

#include "dmnloc/graph.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dmnloc {

bool Graph::fault_injection = false;

double stable_logsumexp(const double* x, std::size_t n) {
  if (n == 0) throw std::invalid_argument("logsumexp of empty input");
  double m = x[0];
  for (std::size_t i = 1; i < n; ++i) m = std::max(m, x[i]);
  if (!std::isfinite(m)) return m;  // all -inf stays -inf
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::exp(x[i] - m);
  return m + std::log(s);
}

namespace {

void check_finite(const Tensor& t, const char* what) {
  if (!t.all_finite()) throw std::runtime_error(std::string("non-finite values after ") + what);
}

struct ConvDims {
  int h, w, cin, k, cout, oh, ow, pad;
};

ConvDims conv_dims(const Tensor& in, const Tensor& kernel, const Tensor& bias, int stride) {
  if (in.rank != 3) throw std::invalid_argument("conv2d input must be rank 3 (HxWxC)");
  if (kernel.rank != 4) throw std::invalid_argument("conv2d kernel must be rank 4 (kxkxCinxCout)");
  if (kernel.shape[0] != kernel.shape[1]) throw std::invalid_argument("conv2d kernel must be square");
  if (kernel.shape[2] != in.shape[2])
    throw std::invalid_argument("conv2d channel mismatch: input " + in.shape_str() + " vs kernel " +
                                kernel.shape_str());
  if (bias.rank != 1 || bias.shape[0] != kernel.shape[3])
    throw std::invalid_argument("conv2d bias extent must equal output channels");
  if (stride != 1 && stride != 2) throw std::invalid_argument("conv2d stride must be 1 or 2");
  ConvDims d;
  d.h = in.shape[0];
  d.w = in.shape[1];
  d.cin = in.shape[2];
  d.k = kernel.shape[0];
  d.cout = kernel.shape[3];
  if (stride == 1) {
    d.oh = d.h;
    d.ow = d.w;
    d.pad = (d.k - 1) / 2;
  } else {
    d.oh = (d.h + 1) / 2;
    d.ow = (d.w + 1) / 2;
    d.pad = 0;
  }
  return d;
}

}  // namespace

NodeId Graph::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Graph::constant(Tensor t) {
  Node n;
  n.op = Op::kLeaf;
  n.value = std::move(t);
  n.needs_grad = false;
  return push(std::move(n));
}

NodeId Graph::input(Tensor t, bool needs_grad) {
  Node n;
  n.op = Op::kLeaf;
  n.value = std::move(t);
  n.needs_grad = needs_grad;
  return push(std::move(n));
}

NodeId Graph::param(ParameterStore& store, std::string_view name) {
  std::string key(name);
  auto it = param_leaves_.find(key);
  if (it != param_leaves_.end()) return it->second;
  Node n;
  n.op = Op::kLeaf;
  n.value = store.get(name);
  n.needs_grad = true;
  NodeId id = push(std::move(n));
  param_leaves_[key] = id;
  leaf_names_[id] = key;
  return id;
}

NodeId Graph::pose_input(const PlanarPose& p, bool needs_grad) {
  Tensor t({3});
  t.v = {p.x, p.y, p.yaw};
  return input(std::move(t), needs_grad);
}

double Graph::scalar(NodeId id) const {
  const Tensor& t = nodes_[id].value;
  if (t.numel() != 1) throw std::invalid_argument("node is not scalar");
  return t.v[0];
}

void Graph::rewind(std::size_t m) {
  if (m > nodes_.size()) throw std::invalid_argument("rewind past end");
  for (auto it = param_leaves_.begin(); it != param_leaves_.end();) {
    if (static_cast<std::size_t>(it->second) >= m) {
      leaf_names_.erase(it->second);
      it = param_leaves_.erase(it);
    } else {
      ++it;
    }
  }
  nodes_.resize(m);
}

NodeId Graph::conv2d(NodeId in, NodeId kernel, NodeId bias, int stride, bool fuse_relu) {
  const Tensor& x = nodes_[in].value;
  const Tensor& k = nodes_[kernel].value;
  const Tensor& b = nodes_[bias].value;
  const ConvDims d = conv_dims(x, k, b, stride);

  Node n;
  n.op = Op::kConv2d;
  n.aux0 = stride;
  n.aux1 = fuse_relu ? 1 : 0;
  n.in = {in, kernel, bias};
  n.needs_grad = nodes_[in].needs_grad || nodes_[kernel].needs_grad || nodes_[bias].needs_grad;
  n.value.rank = 3;
  n.value.shape = {d.oh, d.ow, d.cout, 1};
  n.value.v.resize(static_cast<std::size_t>(d.oh) * d.ow * d.cout);

  const double* xp = x.data();
  const double* kp = k.data();
  const double* bp = b.data();
  double* op = n.value.data();
  for (int r = 0; r < d.oh; ++r) {
    for (int c = 0; c < d.ow; ++c) {
      double* out = op + (static_cast<std::size_t>(r) * d.ow + c) * d.cout;
      for (int co = 0; co < d.cout; ++co) out[co] = bp[co];
      for (int kr = 0; kr < d.k; ++kr) {
        const int ri = r * stride + kr - d.pad;
        if (ri < 0 || ri >= d.h) continue;
        for (int kc = 0; kc < d.k; ++kc) {
          const int ci = c * stride + kc - d.pad;
          if (ci < 0 || ci >= d.w) continue;
          const double* xr = xp + (static_cast<std::size_t>(ri) * d.w + ci) * d.cin;
          const double* kr_base = kp + (static_cast<std::size_t>(kr) * d.k + kc) * d.cin * d.cout;
          for (int ch = 0; ch < d.cin; ++ch) {
            const double a = xr[ch];
            const double* kv = kr_base + static_cast<std::size_t>(ch) * d.cout;
            for (int co = 0; co < d.cout; ++co) out[co] += a * kv[co];
          }
        }
      }
      if (fuse_relu)
        for (int co = 0; co < d.cout; ++co) out[co] = out[co] > 0.0 ? out[co] : 0.0;
    }
  }
  check_finite(n.value, "conv2d");
  return push(std::move(n));
}

NodeId Graph::dense(NodeId in, NodeId weights, NodeId bias, bool fuse_relu) {
  const Tensor& x = nodes_[in].value;
  const Tensor& w = nodes_[weights].value;
  const Tensor& b = nodes_[bias].value;
  if (x.rank != 1 || w.rank != 2 || b.rank != 1) throw std::invalid_argument("dense rank mismatch");
  const int nin = x.shape[0];
  const int m = w.shape[1];
  if (w.shape[0] != nin || b.shape[0] != m)
    throw std::invalid_argument("dense shape mismatch: input " + x.shape_str() + " weights " +
                                w.shape_str());
  Node n;
  n.op = Op::kDense;
  n.aux1 = fuse_relu ? 1 : 0;
  n.in = {in, weights, bias};
  n.needs_grad = nodes_[in].needs_grad || nodes_[weights].needs_grad || nodes_[bias].needs_grad;
  n.value.reshape({m});
  double* out = n.value.data();
  for (int j = 0; j < m; ++j) out[j] = b.v[j];
  const double* wp = w.data();
  for (int i = 0; i < nin; ++i) {
    const double a = x.v[i];
    const double* wr = wp + static_cast<std::size_t>(i) * m;
    for (int j = 0; j < m; ++j) out[j] += a * wr[j];
  }
  if (fuse_relu)
    for (int j = 0; j < m; ++j) out[j] = out[j] > 0.0 ? out[j] : 0.0;
  check_finite(n.value, "dense");
  return push(std::move(n));
}

NodeId Graph::relu(NodeId a) {
  Node n;
  n.op = Op::kRelu;
  n.in = {a};
  n.needs_grad = nodes_[a].needs_grad;
  n.value = nodes_[a].value;
  for (double& x : n.value.v) x = x > 0.0 ? x : 0.0;
  return push(std::move(n));
}

NodeId Graph::add(NodeId a, NodeId b) {
  const Tensor& ta = nodes_[a].value;
  const Tensor& tb = nodes_[b].value;
  if (!ta.same_shape(tb)) throw std::invalid_argument("add shape mismatch");
  Node n;
  n.op = Op::kAdd;
  n.in = {a, b};
  n.needs_grad = nodes_[a].needs_grad || nodes_[b].needs_grad;
  n.value = ta;
  for (std::size_t i = 0; i < tb.numel(); ++i) n.value.v[i] += tb.v[i];
  check_finite(n.value, "add");
  return push(std::move(n));
}

NodeId Graph::sub(NodeId a, NodeId b) {
  const Tensor& ta = nodes_[a].value;
  const Tensor& tb = nodes_[b].value;
  if (!ta.same_shape(tb)) throw std::invalid_argument("sub shape mismatch");
  Node n;
  n.op = Op::kSub;
  n.in = {a, b};
  n.needs_grad = nodes_[a].needs_grad || nodes_[b].needs_grad;
  n.value = ta;
  for (std::size_t i = 0; i < tb.numel(); ++i) n.value.v[i] -= tb.v[i];
  check_finite(n.value, "sub");
  return push(std::move(n));
}

NodeId Graph::mul(NodeId a, NodeId b) {
  const Tensor& ta = nodes_[a].value;
  const Tensor& tb = nodes_[b].value;
  if (!ta.same_shape(tb)) throw std::invalid_argument("mul shape mismatch");
  Node n;
  n.op = Op::kMul;
  n.in = {a, b};
  n.needs_grad = nodes_[a].needs_grad || nodes_[b].needs_grad;
  n.value = ta;
  for (std::size_t i = 0; i < tb.numel(); ++i) n.value.v[i] *= tb.v[i];
  check_finite(n.value, "mul");
  return push(std::move(n));
}

NodeId Graph::scale_const(NodeId a, double c) {
  Node n;
  n.op = Op::kScaleConst;
  n.cval = c;
  n.in = {a};
  n.needs_grad = nodes_[a].needs_grad;
  n.value = nodes_[a].value;
  for (double& x : n.value.v) x *= c;
  check_finite(n.value, "scale_const");
  return push(std::move(n));
}

NodeId Graph::add_const(NodeId a, double c) {
  Node n;
  n.op = Op::kAddConst;
  n.cval = c;
  n.in = {a};
  n.needs_grad = nodes_[a].needs_grad;
  n.value = nodes_[a].value;
  for (double& x : n.value.v) x += c;
  check_finite(n.value, "add_const");
  return push(std::move(n));
}

NodeId Graph::scale_by(NodeId a, NodeId scalar_node) {
  const Tensor& ts = nodes_[scalar_node].value;
  if (ts.numel() != 1) throw std::invalid_argument("scale_by expects a scalar node");
  Node n;
  n.op = Op::kScaleByNode;
  n.in = {a, scalar_node};
  n.needs_grad = nodes_[a].needs_grad || nodes_[scalar_node].needs_grad;
  n.value = nodes_[a].value;
  const double s = ts.v[0];
  for (double& x : n.value.v) x *= s;
  check_finite(n.value, "scale_by");
  return push(std::move(n));
}

NodeId Graph::concat(const std::vector<NodeId>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat of nothing");
  const Tensor& first = nodes_[parts[0]].value;
  const int rank = first.rank;
  int last = 0;
  for (NodeId p : parts) {
    const Tensor& t = nodes_[p].value;
    if (t.rank != rank) throw std::invalid_argument("concat rank mismatch");
    for (int d = 0; d + 1 < rank; ++d)
      if (t.shape[d] != first.shape[d]) throw std::invalid_argument("concat leading extent mismatch");
    last += t.shape[rank - 1];
  }
  Node n;
  n.op = Op::kConcat;
  n.in = parts;
  for (NodeId p : parts) n.needs_grad = n.needs_grad || nodes_[p].needs_grad;
  n.value.rank = rank;
  n.value.shape = first.shape;
  n.value.shape[rank - 1] = last;
  std::size_t rows = 1;
  for (int d = 0; d + 1 < rank; ++d) rows *= static_cast<std::size_t>(first.shape[d]);
  n.value.v.resize(rows * static_cast<std::size_t>(last));
  double* out = n.value.data();
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t off = 0;
    for (NodeId p : parts) {
      const Tensor& t = nodes_[p].value;
      const std::size_t c = static_cast<std::size_t>(t.shape[rank - 1]);
      const double* src = t.data() + r * c;
      std::copy(src, src + c, out + r * last + off);
      off += c;
    }
  }
  return push(std::move(n));
}

NodeId Graph::tile4(NodeId vec4, int h, int w) {
  const Tensor& t = nodes_[vec4].value;
  if (t.rank != 1 || t.shape[0] != 4) throw std::invalid_argument("tile4 expects a length-4 vector");
  Node n;
  n.op = Op::kTile4;
  n.aux0 = h;
  n.aux1 = w;
  n.in = {vec4};
  n.needs_grad = nodes_[vec4].needs_grad;
  n.value.rank = 3;
  n.value.shape = {h, w, 4, 1};
  n.value.v.resize(static_cast<std::size_t>(h) * w * 4);
  double* out = n.value.data();
  for (int p = 0; p < h * w; ++p)
    for (int j = 0; j < 4; ++j) out[p * 4 + j] = t.v[j];
  return push(std::move(n));
}

NodeId Graph::reduce_sum(NodeId a) {
  Node n;
  n.op = Op::kReduceSum;
  n.in = {a};
  n.needs_grad = nodes_[a].needs_grad;
  double s = 0.0;
  for (double x : nodes_[a].value.v) s += x;
  n.value = Tensor::scalar(s);
  check_finite(n.value, "reduce_sum");
  return push(std::move(n));
}

NodeId Graph::dot(NodeId a, NodeId b) {
  const Tensor& ta = nodes_[a].value;
  const Tensor& tb = nodes_[b].value;
  if (ta.numel() != tb.numel()) throw std::invalid_argument("dot numel mismatch");
  Node n;
  n.op = Op::kDot;
  n.in = {a, b};
  n.needs_grad = nodes_[a].needs_grad || nodes_[b].needs_grad;
  double s = 0.0;
  for (std::size_t i = 0; i < ta.numel(); ++i) s += ta.v[i] * tb.v[i];
  n.value = Tensor::scalar(s);
  check_finite(n.value, "dot");
  return push(std::move(n));
}

NodeId Graph::softmax(NodeId a) {
  const Tensor& t = nodes_[a].value;
  if (t.rank != 1 || t.numel() == 0) throw std::invalid_argument("softmax expects a vector");
  Node n;
  n.op = Op::kSoftmax;
  n.in = {a};
  n.needs_grad = nodes_[a].needs_grad;
  n.value = t;
  double m = t.v[0];
  for (double x : t.v) m = std::max(m, x);
  double s = 0.0;
  for (std::size_t i = 0; i < t.numel(); ++i) {
    n.value.v[i] = std::exp(t.v[i] - m);
    s += n.value.v[i];
  }
  for (double& x : n.value.v) x /= s;
  return push(std::move(n));
}

NodeId Graph::logsumexp(NodeId a) {
  const Tensor& t = nodes_[a].value;
  if (t.rank != 1 || t.numel() == 0) throw std::invalid_argument("logsumexp expects a vector");
  Node n;
  n.op = Op::kLogSumExp;
  n.in = {a};
  n.needs_grad = nodes_[a].needs_grad;
  n.value = Tensor::scalar(stable_logsumexp(t.data(), t.numel()));
  return push(std::move(n));
}

NodeId Graph::exp(NodeId a) {
  Node n;
  n.op = Op::kExp;
  n.in = {a};
  n.needs_grad = nodes_[a].needs_grad;
  n.value = nodes_[a].value;
  for (double& x : n.value.v) x = std::exp(x);
  check_finite(n.value, "exp");
  return push(std::move(n));
}

NodeId Graph::pack(const std::vector<NodeId>& scalars) {
  if (scalars.empty()) throw std::invalid_argument("pack of nothing");
  Node n;
  n.op = Op::kPack;
  n.in = scalars;
  n.value.reshape({static_cast<int>(scalars.size())});
  for (std::size_t i = 0; i < scalars.size(); ++i) {
    const Tensor& t = nodes_[scalars[i]].value;
    if (t.numel() != 1) throw std::invalid_argument("pack expects scalar nodes");
    n.value.v[i] = t.v[0];
    n.needs_grad = n.needs_grad || nodes_[scalars[i]].needs_grad;
  }
  return push(std::move(n));
}

NodeId Graph::index(NodeId vec, int i) {
  const Tensor& t = nodes_[vec].value;
  if (t.rank != 1 || i < 0 || i >= t.shape[0]) throw std::invalid_argument("index out of range");
  Node n;
  n.op = Op::kIndex;
  n.aux0 = i;
  n.in = {vec};
  n.needs_grad = nodes_[vec].needs_grad;
  n.value = Tensor::scalar(t.v[i]);
  return push(std::move(n));
}

NodeId Graph::sub_scalar(NodeId vec, NodeId scalar_node) {
  const Tensor& tv = nodes_[vec].value;
  const Tensor& ts = nodes_[scalar_node].value;
  if (ts.numel() != 1) throw std::invalid_argument("sub_scalar expects a scalar node");
  Node n;
  n.op = Op::kSubScalar;
  n.in = {vec, scalar_node};
  n.needs_grad = nodes_[vec].needs_grad || nodes_[scalar_node].needs_grad;
  n.value = tv;
  for (double& x : n.value.v) x -= ts.v[0];
  check_finite(n.value, "sub_scalar");
  return push(std::move(n));
}

NodeId Graph::atan2(NodeId y, NodeId x) {
  if (nodes_[y].value.numel() != 1 || nodes_[x].value.numel() != 1)
    throw std::invalid_argument("atan2 expects scalar nodes");
  Node n;
  n.op = Op::kAtan2;
  n.in = {y, x};
  n.needs_grad = nodes_[y].needs_grad || nodes_[x].needs_grad;
  n.value = Tensor::scalar(std::atan2(nodes_[y].value.v[0], nodes_[x].value.v[0]));
  return push(std::move(n));
}

NodeId Graph::wrap(NodeId a) {
  if (nodes_[a].value.numel() != 1) throw std::invalid_argument("wrap expects a scalar node");
  Node n;
  n.op = Op::kWrapAngle;
  n.in = {a};
  n.needs_grad = nodes_[a].needs_grad;
  n.value = Tensor::scalar(wrap_angle(nodes_[a].value.v[0]));
  return push(std::move(n));
}

NodeId Graph::encode4(NodeId pose) {
  const Tensor& p = nodes_[pose].value;
  if (p.rank != 1 || p.shape[0] != 3) throw std::invalid_argument("encode4 expects a pose node");
  Node n;
  n.op = Op::kEncode4;
  n.in = {pose};
  n.needs_grad = nodes_[pose].needs_grad;
  n.value.reshape({4});
  n.value.v = {p.v[0], p.v[1], std::sin(p.v[2]), std::cos(p.v[2])};
  return push(std::move(n));
}

NodeId Graph::ego_encode4(NodeId origin_pose, const PlanarPose& target) {
  const Tensor& p = nodes_[origin_pose].value;
  if (p.rank != 1 || p.shape[0] != 3) throw std::invalid_argument("ego_encode4 expects a pose node");
  Node n;
  n.op = Op::kEgoEncode4;
  n.target = target;
  n.in = {origin_pose};
  n.needs_grad = nodes_[origin_pose].needs_grad;
  const double c = std::cos(p.v[2]);
  const double s = std::sin(p.v[2]);
  const double ox = target.x - p.v[0];
  const double oy = target.y - p.v[1];
  const double dyaw = target.yaw - p.v[2];
  n.value.reshape({4});
  n.value.v = {c * ox + s * oy, -s * ox + c * oy, std::sin(dyaw), std::cos(dyaw)};
  return push(std::move(n));
}

NodeId Graph::reshape(NodeId a, std::initializer_list<int> dims) {
  Node n;
  n.op = Op::kReshape;
  n.in = {a};
  n.needs_grad = nodes_[a].needs_grad;
  n.value.reshape(dims);
  if (n.value.numel() != nodes_[a].value.numel()) throw std::invalid_argument("reshape numel mismatch");
  n.value.v = nodes_[a].value.v;
  return push(std::move(n));
}

const Tensor* Graph::leaf_grad(NodeId leaf) const {
  if (static_cast<std::size_t>(leaf) >= adjoint_.size()) return nullptr;
  if (adjoint_[leaf].v.empty()) return nullptr;
  return &adjoint_[leaf];
}

GradStore Graph::backward(NodeId output) {
  if (nodes_[output].value.numel() != 1) throw std::invalid_argument("backward output must be scalar");
  adjoint_.assign(nodes_.size(), Tensor{});
  adjoint_[output] = Tensor::scalar(1.0);

  auto grad_of = [&](NodeId id) -> Tensor& {
    Tensor& g = adjoint_[id];
    if (g.v.empty()) {
      const Tensor& v = nodes_[id].value;
      g.rank = v.rank;
      g.shape = v.shape;
      g.v.assign(v.numel(), 0.0);
    }
    return g;
  };

  for (NodeId id = output; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.needs_grad || adjoint_[id].v.empty()) continue;
    const Tensor& g = adjoint_[id];
    switch (n.op) {
      case Op::kLeaf:
        break;
      case Op::kConv2d: {
        const Tensor& x = nodes_[n.in[0]].value;
        const Tensor& k = nodes_[n.in[1]].value;
        const Tensor& b = nodes_[n.in[2]].value;
        const int stride = n.aux0;
        const ConvDims d = conv_dims(x, k, b, stride);
        const bool gx = nodes_[n.in[0]].needs_grad;
        const bool gk = nodes_[n.in[1]].needs_grad;
        const bool gb = nodes_[n.in[2]].needs_grad;
        double* dx = gx ? grad_of(n.in[0]).data() : nullptr;
        double* dk = gk ? grad_of(n.in[1]).data() : nullptr;
        double* db = gb ? grad_of(n.in[2]).data() : nullptr;
        const double* xp = x.data();
        const double* kp = k.data();
        const double* out = n.value.data();
        const double* gp = g.data();
        std::vector<double> gm;  // relu-masked output adjoint per pixel
        gm.resize(d.cout);
        for (int r = 0; r < d.oh; ++r) {
          for (int c = 0; c < d.ow; ++c) {
            const std::size_t po = (static_cast<std::size_t>(r) * d.ow + c) * d.cout;
            bool any = false;
            for (int co = 0; co < d.cout; ++co) {
              double v = gp[po + co];
              if (n.aux1 && out[po + co] <= 0.0) v = 0.0;
              gm[co] = v;
              any = any || v != 0.0;
            }
            if (!any) continue;
            if (gb)
              for (int co = 0; co < d.cout; ++co) db[co] += gm[co];
            for (int kr = 0; kr < d.k; ++kr) {
              const int ri = r * stride + kr - d.pad;
              if (ri < 0 || ri >= d.h) continue;
              for (int kc = 0; kc < d.k; ++kc) {
                const int ci = c * stride + kc - d.pad;
                if (ci < 0 || ci >= d.w) continue;
                const std::size_t px = (static_cast<std::size_t>(ri) * d.w + ci) * d.cin;
                const std::size_t pk = (static_cast<std::size_t>(kr) * d.k + kc) * d.cin * d.cout;
                for (int ch = 0; ch < d.cin; ++ch) {
                  const double a = xp[px + ch];
                  const double* kv = kp + pk + static_cast<std::size_t>(ch) * d.cout;
                  double acc = 0.0;
                  if (gk) {
                    double* dkv = dk + pk + static_cast<std::size_t>(ch) * d.cout;
                    for (int co = 0; co < d.cout; ++co) {
                      dkv[co] += a * gm[co];
                      acc += kv[co] * gm[co];
                    }
                  } else {
                    for (int co = 0; co < d.cout; ++co) acc += kv[co] * gm[co];
                  }
                  if (gx) dx[px + ch] += acc;
                }
              }
            }
          }
        }
        if (fault_injection && gk && k.numel() > 0) dk[0] += 0.5;
        break;
      }
      case Op::kDense: {
        const Tensor& x = nodes_[n.in[0]].value;
        const Tensor& w = nodes_[n.in[1]].value;
        const int nin = x.shape[0];
        const int m = w.shape[1];
        const bool gxq = nodes_[n.in[0]].needs_grad;
        const bool gwq = nodes_[n.in[1]].needs_grad;
        const bool gbq = nodes_[n.in[2]].needs_grad;
        std::vector<double> gm(m);
        const double* out = n.value.data();
        for (int j = 0; j < m; ++j) {
          double v = g.v[j];
          if (n.aux1 && out[j] <= 0.0) v = 0.0;
          gm[j] = v;
        }
        if (gbq) {
          double* db = grad_of(n.in[2]).data();
          for (int j = 0; j < m; ++j) db[j] += gm[j];
        }
        const double* wp = w.data();
        double* dx = gxq ? grad_of(n.in[0]).data() : nullptr;
        double* dw = gwq ? grad_of(n.in[1]).data() : nullptr;
        for (int i = 0; i < nin; ++i) {
          const double a = x.v[i];
          const double* wr = wp + static_cast<std::size_t>(i) * m;
          double acc = 0.0;
          if (gwq) {
            double* dwr = dw + static_cast<std::size_t>(i) * m;
            for (int j = 0; j < m; ++j) {
              dwr[j] += a * gm[j];
              acc += wr[j] * gm[j];
            }
          } else {
            for (int j = 0; j < m; ++j) acc += wr[j] * gm[j];
          }
          if (gxq) dx[i] += acc;
        }
        break;
      }
      case Op::kRelu: {
        if (!nodes_[n.in[0]].needs_grad) break;
        Tensor& d = grad_of(n.in[0]);
        for (std::size_t i = 0; i < g.numel(); ++i)
          if (n.value.v[i] > 0.0) d.v[i] += g.v[i];
        break;
      }
      case Op::kAdd: {
        for (int s = 0; s < 2; ++s)
          if (nodes_[n.in[s]].needs_grad) {
            Tensor& d = grad_of(n.in[s]);
            for (std::size_t i = 0; i < g.numel(); ++i) d.v[i] += g.v[i];
          }
        break;
      }
      case Op::kSub: {
        if (nodes_[n.in[0]].needs_grad) {
          Tensor& d = grad_of(n.in[0]);
          for (std::size_t i = 0; i < g.numel(); ++i) d.v[i] += g.v[i];
        }
        if (nodes_[n.in[1]].needs_grad) {
          Tensor& d = grad_of(n.in[1]);
          for (std::size_t i = 0; i < g.numel(); ++i) d.v[i] -= g.v[i];
        }
        break;
      }
      case Op::kMul: {
        const Tensor& a = nodes_[n.in[0]].value;
        const Tensor& b = nodes_[n.in[1]].value;
        if (nodes_[n.in[0]].needs_grad) {
          Tensor& d = grad_of(n.in[0]);
          for (std::size_t i = 0; i < g.numel(); ++i) d.v[i] += g.v[i] * b.v[i];
        }
        if (nodes_[n.in[1]].needs_grad) {
          Tensor& d = grad_of(n.in[1]);
          for (std::size_t i = 0; i < g.numel(); ++i) d.v[i] += g.v[i] * a.v[i];
        }
        break;
      }
      case Op::kScaleConst: {
        if (!nodes_[n.in[0]].needs_grad) break;
        Tensor& d = grad_of(n.in[0]);
        for (std::size_t i = 0; i < g.numel(); ++i) d.v[i] += g.v[i] * n.cval;
        break;
      }
      case Op::kAddConst: {
        if (!nodes_[n.in[0]].needs_grad) break;
        Tensor& d = grad_of(n.in[0]);
        for (std::size_t i = 0; i < g.numel(); ++i) d.v[i] += g.v[i];
        break;
      }
      case Op::kScaleByNode: {
        const Tensor& a = nodes_[n.in[0]].value;
        const double s = nodes_[n.in[1]].value.v[0];
        if (nodes_[n.in[0]].needs_grad) {
          Tensor& d = grad_of(n.in[0]);
          for (std::size_t i = 0; i < g.numel(); ++i) d.v[i] += g.v[i] * s;
        }
        if (nodes_[n.in[1]].needs_grad) {
          double acc = 0.0;
          for (std::size_t i = 0; i < g.numel(); ++i) acc += g.v[i] * a.v[i];
          grad_of(n.in[1]).v[0] += acc;
        }
        break;
      }
      case Op::kConcat: {
        const int rank = n.value.rank;
        const int last = n.value.shape[rank - 1];
        std::size_t rows = n.value.numel() / static_cast<std::size_t>(last);
        std::size_t off = 0;
        for (NodeId p : n.in) {
          const Tensor& t = nodes_[p].value;
          const std::size_t c = static_cast<std::size_t>(t.shape[rank - 1]);
          if (nodes_[p].needs_grad) {
            Tensor& d = grad_of(p);
            for (std::size_t r = 0; r < rows; ++r)
              for (std::size_t j = 0; j < c; ++j) d.v[r * c + j] += g.v[r * last + off + j];
          }
          off += c;
        }
        break;
      }
      case Op::kTile4: {
        if (!nodes_[n.in[0]].needs_grad) break;
        Tensor& d = grad_of(n.in[0]);
        const int pixels = n.aux0 * n.aux1;
        for (int p = 0; p < pixels; ++p)
          for (int j = 0; j < 4; ++j) d.v[j] += g.v[static_cast<std::size_t>(p) * 4 + j];
        break;
      }
      case Op::kReduceSum: {
        if (!nodes_[n.in[0]].needs_grad) break;
        Tensor& d = grad_of(n.in[0]);
        for (double& x : d.v) x += g.v[0];
        break;
      }
      case Op::kDot: {
        const Tensor& a = nodes_[n.in[0]].value;
        const Tensor& b = nodes_[n.in[1]].value;
        if (nodes_[n.in[0]].needs_grad) {
          Tensor& d = grad_of(n.in[0]);
          for (std::size_t i = 0; i < a.numel(); ++i) d.v[i] += g.v[0] * b.v[i];
        }
        if (nodes_[n.in[1]].needs_grad) {
          Tensor& d = grad_of(n.in[1]);
          for (std::size_t i = 0; i < b.numel(); ++i) d.v[i] += g.v[0] * a.v[i];
        }
        break;
      }
      case Op::kSoftmax: {
        if (!nodes_[n.in[0]].needs_grad) break;
        Tensor& d = grad_of(n.in[0]);
        double inner = 0.0;
        for (std::size_t i = 0; i < g.numel(); ++i) inner += g.v[i] * n.value.v[i];
        for (std::size_t i = 0; i < g.numel(); ++i) d.v[i] += n.value.v[i] * (g.v[i] - inner);
        break;
      }
      case Op::kLogSumExp: {
        if (!nodes_[n.in[0]].needs_grad) break;
        Tensor& d = grad_of(n.in[0]);
        const Tensor& x = nodes_[n.in[0]].value;
        const double lse = n.value.v[0];
        for (std::size_t i = 0; i < x.numel(); ++i) d.v[i] += g.v[0] * std::exp(x.v[i] - lse);
        break;
      }
      case Op::kExp: {
        if (!nodes_[n.in[0]].needs_grad) break;
        Tensor& d = grad_of(n.in[0]);
        for (std::size_t i = 0; i < g.numel(); ++i) d.v[i] += g.v[i] * n.value.v[i];
        break;
      }
      case Op::kPack: {
        for (std::size_t i = 0; i < n.in.size(); ++i)
          if (nodes_[n.in[i]].needs_grad) grad_of(n.in[i]).v[0] += g.v[i];
        break;
      }
      case Op::kIndex: {
        if (!nodes_[n.in[0]].needs_grad) break;
        grad_of(n.in[0]).v[n.aux0] += g.v[0];
        break;
      }
      case Op::kSubScalar: {
        if (nodes_[n.in[0]].needs_grad) {
          Tensor& d = grad_of(n.in[0]);
          for (std::size_t i = 0; i < g.numel(); ++i) d.v[i] += g.v[i];
        }
        if (nodes_[n.in[1]].needs_grad) {
          double acc = 0.0;
          for (std::size_t i = 0; i < g.numel(); ++i) acc += g.v[i];
          grad_of(n.in[1]).v[0] -= acc;
        }
        break;
      }
      case Op::kAtan2: {
        const double y = nodes_[n.in[0]].value.v[0];
        const double x = nodes_[n.in[1]].value.v[0];
        const double den = x * x + y * y;
        if (nodes_[n.in[0]].needs_grad) grad_of(n.in[0]).v[0] += g.v[0] * x / den;
        if (nodes_[n.in[1]].needs_grad) grad_of(n.in[1]).v[0] -= g.v[0] * y / den;
        break;
      }
      case Op::kWrapAngle: {
        if (nodes_[n.in[0]].needs_grad) grad_of(n.in[0]).v[0] += g.v[0];
        break;
      }
      case Op::kEncode4: {
        if (!nodes_[n.in[0]].needs_grad) break;
        Tensor& d = grad_of(n.in[0]);
        const double yaw = nodes_[n.in[0]].value.v[2];
        d.v[0] += g.v[0];
        d.v[1] += g.v[1];
        d.v[2] += g.v[2] * std::cos(yaw) - g.v[3] * std::sin(yaw);
        break;
      }
      case Op::kEgoEncode4: {
        if (!nodes_[n.in[0]].needs_grad) break;
        Tensor& d = grad_of(n.in[0]);
        const double oyaw = nodes_[n.in[0]].value.v[2];
        const double c = std::cos(oyaw);
        const double s = std::sin(oyaw);
        const double dx = n.value.v[0];
        const double dy = n.value.v[1];
        const double sd = n.value.v[2];
        const double cd = n.value.v[3];
        d.v[0] += -c * g.v[0] + s * g.v[1];
        d.v[1] += -s * g.v[0] - c * g.v[1];
        d.v[2] += g.v[0] * dy - g.v[1] * dx - g.v[2] * cd + g.v[3] * sd;
        break;
      }
      case Op::kReshape: {
        if (!nodes_[n.in[0]].needs_grad) break;
        Tensor& d = grad_of(n.in[0]);
        for (std::size_t i = 0; i < g.numel(); ++i) d.v[i] += g.v[i];
        break;
      }
    }
  }

  GradStore grads;
  for (const auto& [name, id] : param_leaves_) {
    Tensor& slot = grads.ensure(name, nodes_[id].value);
    if (!adjoint_[id].v.empty()) slot = adjoint_[id];
  }
  return grads;
}

}  // namespace dmnloc
