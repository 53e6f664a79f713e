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

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "doctest.h"
#include "dmnloc/graph.hpp"
#include "dmnloc/rng.hpp"
#include "dmnloc/tensor.hpp"
#include "oracles.hpp"

using namespace dmnloc;

namespace {

Tensor random_tensor(std::initializer_list<int> dims, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(dims);
  for (double& x : t.v) x = rng.uniform(lo, hi);
  return t;
}

// Keeps pre-activation magnitudes away from relu kinks for FD checks.
Tensor random_away_from_zero(std::initializer_list<int> dims, Rng& rng, double margin = 1e-3) {
  Tensor t(dims);
  for (double& x : t.v) {
    double v = rng.uniform(-1.0, 1.0);
    if (std::fabs(v) < margin) v = v < 0 ? v - margin : v + margin;
    x = v;
  }
  return t;
}

}  // namespace

TEST_SUITE_BEGIN("tensor");

TEST_CASE("conv2d identity kernel") {
  Graph g;
  Tensor in({1, 1, 1});
  in.v = {3.0};
  Tensor k({1, 1, 1, 1});
  k.v = {1.0};
  const NodeId out = g.conv2d(g.constant(in), g.constant(k), g.constant(Tensor({1})), 1);
  CHECK(g.value(out).v[0] == doctest::Approx(3.0));
}

TEST_CASE("conv2d summation kernel, stride 2") {
  Graph g;
  Tensor in({2, 2, 1});
  in.v = {1, 1, 1, 1};
  Tensor k({2, 2, 1, 1});
  k.v = {1, 1, 1, 1};
  const NodeId out = g.conv2d(g.constant(in), g.constant(k), g.constant(Tensor({1})), 2);
  CHECK(g.value(out).rank == 3);
  CHECK(g.value(out).shape[0] == 1);
  CHECK(g.value(out).shape[1] == 1);
  CHECK(g.value(out).v[0] == doctest::Approx(4.0));
}

TEST_CASE("conv2d shapes: stride-1 same, stride-2 ceil") {
  Rng rng(7);
  for (const auto [h, w] : {std::pair{5, 9}, std::pair{8, 32}, std::pair{7, 7}}) {
    Graph g;
    Tensor in = random_tensor({h, w, 3}, rng);
    Tensor k = random_tensor({3, 3, 3, 4}, rng);
    const NodeId s1 = g.conv2d(g.constant(in), g.constant(k), g.constant(Tensor({4})), 1);
    CHECK(g.value(s1).shape[0] == h);
    CHECK(g.value(s1).shape[1] == w);
    Tensor k2 = random_tensor({2, 2, 3, 4}, rng);
    const NodeId s2 = g.conv2d(g.constant(in), g.constant(k2), g.constant(Tensor({4})), 2);
    CHECK(g.value(s2).shape[0] == (h + 1) / 2);
    CHECK(g.value(s2).shape[1] == (w + 1) / 2);
  }
}

TEST_CASE("conv2d errors") {
  Graph g;
  Tensor in({2, 2, 3});
  Tensor k({3, 3, 4, 2});  // channel mismatch
  CHECK_THROWS(g.conv2d(g.constant(in), g.constant(k), g.constant(Tensor({2})), 1));
  Tensor k2({3, 3, 3, 2});
  CHECK_THROWS(g.conv2d(g.constant(in), g.constant(k2), g.constant(Tensor({2})), 3));
}

TEST_CASE("conv2d gradient matches finite differences") {
  Rng rng(11);
  ParameterStore store;
  store.create("in", random_tensor({4, 8, 3}, rng));
  store.create("k", random_tensor({3, 3, 3, 5}, rng));
  store.create("b", random_tensor({5}, rng));
  auto value = [&] {
    Graph g;
    return g.scalar(g.reduce_sum(
        g.conv2d(g.param(store, "in"), g.param(store, "k"), g.param(store, "b"), 1)));
  };
  Graph g;
  const NodeId out = g.reduce_sum(
      g.conv2d(g.param(store, "in"), g.param(store, "k"), g.param(store, "b"), 1));
  GradStore grads = g.backward(out);
  for (const char* name : {"in", "k", "b"})
    CHECK(oracles::max_fd_rel_err(store.get(name), *grads.find(name), value) < 1e-5);
}

TEST_CASE("conv2d stride-2 gradient matches finite differences") {
  Rng rng(12);
  ParameterStore store;
  store.create("in", random_tensor({5, 7, 2}, rng));
  store.create("k", random_tensor({2, 2, 2, 3}, rng));
  store.create("b", random_tensor({3}, rng));
  auto value = [&] {
    Graph g;
    return g.scalar(g.reduce_sum(
        g.conv2d(g.param(store, "in"), g.param(store, "k"), g.param(store, "b"), 2)));
  };
  Graph g;
  const NodeId out = g.reduce_sum(
      g.conv2d(g.param(store, "in"), g.param(store, "k"), g.param(store, "b"), 2));
  GradStore grads = g.backward(out);
  for (const char* name : {"in", "k", "b"})
    CHECK(oracles::max_fd_rel_err(store.get(name), *grads.find(name), value) < 1e-5);
}

TEST_CASE("conv2d and dense are linear in the input") {
  Rng rng(13);
  Tensor in = random_tensor({3, 5, 2}, rng);
  Tensor k = random_tensor({3, 3, 2, 4}, rng);
  Tensor zero_bias({4});
  Tensor scaled = in;
  for (double& x : scaled.v) x *= 2.5;
  Graph g;
  const Tensor& a =
      g.value(g.conv2d(g.constant(in), g.constant(k), g.constant(zero_bias), 1));
  const Tensor& b =
      g.value(g.conv2d(g.constant(scaled), g.constant(k), g.constant(zero_bias), 1));
  for (std::size_t i = 0; i < a.numel(); ++i) CHECK(b.v[i] == doctest::Approx(2.5 * a.v[i]));
}

TEST_CASE("dense identity and hand arithmetic") {
  Graph g;
  Tensor x({2});
  x.v = {1, 2};
  Tensor eye({2, 2});
  eye.v = {1, 0, 0, 1};
  const NodeId out = g.dense(g.constant(x), g.constant(eye), g.constant(Tensor({2})));
  CHECK(g.value(out).v[0] == doctest::Approx(1.0));
  CHECK(g.value(out).v[1] == doctest::Approx(2.0));

  Tensor x2({2});
  x2.v = {1, 1};
  Tensor w({2, 2});
  w.v = {1, 2, 3, 4};
  Tensor b({2});
  b.v = {1, 1};
  const NodeId out2 = g.dense(g.constant(x2), g.constant(w), g.constant(b));
  CHECK(g.value(out2).v[0] == doctest::Approx(5.0));
  CHECK(g.value(out2).v[1] == doctest::Approx(7.0));
}

TEST_CASE("dense gradient matches finite differences") {
  Rng rng(17);
  ParameterStore store;
  store.create("x", random_tensor({8}, rng));
  store.create("w", random_tensor({8, 4}, rng));
  store.create("b", random_tensor({4}, rng));
  auto value = [&] {
    Graph g;
    return g.scalar(
        g.reduce_sum(g.dense(g.param(store, "x"), g.param(store, "w"), g.param(store, "b"))));
  };
  Graph g;
  GradStore grads = g.backward(
      g.reduce_sum(g.dense(g.param(store, "x"), g.param(store, "w"), g.param(store, "b"))));
  for (const char* name : {"x", "w", "b"})
    CHECK(oracles::max_fd_rel_err(store.get(name), *grads.find(name), value) < 1e-5);
}

TEST_CASE("dense shape mismatch") {
  Graph g;
  Tensor x({3});
  Tensor w({2, 2});
  CHECK_THROWS(g.dense(g.constant(x), g.constant(w), g.constant(Tensor({2}))));
}

TEST_CASE("logsumexp examples and bounds") {
  Graph g;
  Tensor single({1});
  single.v = {-3.25};
  CHECK(g.scalar(g.logsumexp(g.constant(single))) == doctest::Approx(-3.25));

  Tensor equal({4});
  equal.v = {2.5, 2.5, 2.5, 2.5};
  CHECK(g.scalar(g.logsumexp(g.constant(equal))) == doctest::Approx(2.5 + std::log(4.0)));

  // Naive exponentiation of -1000 underflows; the stable form stays exact.
  Tensor extreme({2});
  extreme.v = {-1000.0, 0.0};
  CHECK(std::fabs(g.scalar(g.logsumexp(g.constant(extreme)))) < 1e-12);

  Tensor low({3});
  low.v = {-1e6, -1e6, -1e6};
  CHECK(g.scalar(g.logsumexp(g.constant(low))) == doctest::Approx(-1e6 + std::log(3.0)));

  Rng rng(23);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor x = random_tensor({7}, rng, -30.0, 30.0);
    double mx = x.v[0];
    for (double v : x.v) mx = std::max(mx, v);
    const double lse = g.scalar(g.logsumexp(g.constant(x)));
    CHECK(lse >= mx);
    CHECK(lse <= mx + std::log(7.0));
  }
  CHECK_THROWS(stable_logsumexp(nullptr, 0));
}

TEST_CASE("relu, softmax, scalar product examples") {
  Graph g;
  Tensor x({3});
  x.v = {-1, 0, 2};
  const Tensor& r = g.value(g.relu(g.constant(x)));
  CHECK(r.v[0] == 0.0);
  CHECK(r.v[1] == 0.0);
  CHECK(r.v[2] == 2.0);

  Tensor s({2});
  s.v = {0, 0};
  const Tensor& sm = g.value(g.softmax(g.constant(s)));
  CHECK(sm.v[0] == doctest::Approx(0.5));
  CHECK(sm.v[1] == doctest::Approx(0.5));
}

TEST_CASE("primitive adjoints match finite differences") {
  Rng rng(29);
  ParameterStore store;
  store.create("a", random_away_from_zero({64}, rng));
  store.create("b", random_away_from_zero({64}, rng));

  // Scalar product of two length-64 keys.
  {
    auto value = [&] {
      Graph g;
      return g.scalar(g.dot(g.param(store, "a"), g.param(store, "b")));
    };
    Graph g;
    GradStore grads = g.backward(g.dot(g.param(store, "a"), g.param(store, "b")));
    CHECK(oracles::max_fd_rel_err(store.get("a"), *grads.find("a"), value) < 1e-5);
    CHECK(oracles::max_fd_rel_err(store.get("b"), *grads.find("b"), value) < 1e-5);
  }

  // A composite touching relu, mul, softmax, exp, logsumexp, concat, tile4,
  // scale_by, sub_scalar, index, atan2 and encode4.
  ParameterStore comp;
  comp.create("v", random_away_from_zero({6}, rng));
  comp.create("pose", random_tensor({3}, rng));
  auto build = [&](Graph& g) {
    const NodeId v = g.param(comp, "v");
    const NodeId r = g.relu(v);
    const NodeId sm = g.softmax(g.mul(v, r));
    const NodeId e = g.exp(g.scale_const(v, 0.1));
    const NodeId lse = g.logsumexp(g.add(sm, e));
    const NodeId shifted = g.sub_scalar(sm, lse);
    const NodeId enc = g.encode4(g.param(comp, "pose"));
    const NodeId tiled = g.tile4(enc, 2, 3);
    const NodeId cat = g.concat({tiled, tiled});
    const NodeId scaled = g.scale_by(cat, g.index(shifted, 1));
    const NodeId total = g.reduce_sum(scaled);
    const NodeId angle = g.atan2(g.index(shifted, 0), g.add_const(total, 2.0));
    return g.add(g.wrap(angle), g.reduce_sum(g.sub(shifted, sm)));
  };
  auto value = [&] {
    Graph g;
    return g.scalar(build(g));
  };
  Graph g;
  GradStore grads = g.backward(build(g));
  CHECK(oracles::max_fd_rel_err(comp.get("v"), *grads.find("v"), value) < 1e-5);
  CHECK(oracles::max_fd_rel_err(comp.get("pose"), *grads.find("pose"), value) < 1e-5);
}

TEST_CASE("backward identity and polynomial examples") {
  ParameterStore store;
  Tensor p({1});
  p.v = {1.7};
  store.create("p", p);
  Tensor q({3});
  q.v = {1.0, -2.0, 0.5};
  store.create("q", q);

  Graph g;
  GradStore grads = g.backward(g.param(store, "p"));
  CHECK(grads.find("p")->v[0] == doctest::Approx(1.0));
  CHECK(grads.find("q") == nullptr);  // unreached parameters stay zero

  Graph g2;
  const NodeId v = g2.param(store, "q");
  GradStore grads2 = g2.backward(g2.reduce_sum(g2.mul(v, v)));
  for (int i = 0; i < 3; ++i)
    CHECK(grads2.find("q")->v[i] == doctest::Approx(2.0 * q.v[i]));
}

TEST_CASE("backward is linear over sums of graphs") {
  Rng rng(31);
  ParameterStore store;
  store.create("x", random_away_from_zero({10}, rng));
  auto f1 = [&](Graph& g) { return g.reduce_sum(g.relu(g.param(store, "x"))); };
  auto f2 = [&](Graph& g) {
    const NodeId x = g.param(store, "x");
    return g.dot(x, x);
  };
  Graph ga, gb, gc;
  GradStore g1 = ga.backward(f1(ga));
  GradStore g2 = gb.backward(f2(gb));
  GradStore gsum = gc.backward(gc.add(f1(gc), f2(gc)));
  for (std::size_t i = 0; i < 10; ++i)
    CHECK(gsum.find("x")->v[i] ==
          doctest::Approx(g1.find("x")->v[i] + g2.find("x")->v[i]).epsilon(1e-12));
}

TEST_CASE("backward rejects non-scalar outputs") {
  Graph g;
  Tensor x({3});
  const NodeId leaf = g.input(x);
  CHECK_THROWS(g.backward(leaf));
}

TEST_CASE("non-finite values are an error state") {
  Graph g;
  Tensor x({2});
  x.v = {1e308, 1e308};
  const NodeId a = g.constant(x);
  CHECK_THROWS(g.add(a, a));
}

TEST_CASE("graph rewind drops transient nodes and param memoization") {
  Rng rng(37);
  ParameterStore store;
  store.create("w", random_tensor({4}, rng));
  Graph g;
  const NodeId base = g.param(store, "w");
  const std::size_t mark = g.mark();
  const NodeId w2 = g.param(store, "w");
  CHECK(w2 == base);  // memoized
  g.relu(w2);
  g.rewind(mark);
  CHECK(g.size() == mark);
  const NodeId w3 = g.param(store, "w");
  CHECK(w3 == base);  // leaf below the mark survives
}

TEST_CASE("parameter store invariants") {
  ParameterStore store;
  store.create("a", Tensor({2, 2}));
  CHECK_THROWS(store.create("a", Tensor({2})));  // names unique
  CHECK_THROWS(store.get("missing"));
  CHECK(store.parameter_count() == 4);
}

TEST_CASE("checkpoint round trip preserves values, order and config echo") {
  Rng rng(41);
  ParameterStore store;
  store.create("cnn1.0.w", random_tensor({2, 2, 3, 4}, rng));
  store.create("cnn1.0.b", random_tensor({4}, rng));
  store.create("fc1.0.w", random_tensor({8, 2}, rng));
  const std::string path = std::filesystem::temp_directory_path() / "dmnloc_ckpt_test.bin";
  save_checkpoint(path, store, "variant=dmn-pf\nseed=7\n");
  std::string echo;
  ParameterStore loaded = load_checkpoint(path, &echo);
  CHECK(echo == "variant=dmn-pf\nseed=7\n");
  REQUIRE(loaded.size() == store.size());
  for (std::size_t i = 0; i < store.size(); ++i) {
    CHECK(loaded.entry(i).name == store.entry(i).name);
    REQUIRE(loaded.entry(i).value.numel() == store.entry(i).value.numel());
    for (std::size_t j = 0; j < store.entry(i).value.numel(); ++j)
      CHECK(loaded.entry(i).value.v[j] == store.entry(i).value.v[j]);
  }
  std::filesystem::remove(path);
}

TEST_CASE("checkpoint rejects corrupted magic") {
  const std::string path = std::filesystem::temp_directory_path() / "dmnloc_ckpt_bad.bin";
  {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    std::fputs("NOTACKPT harold", f);
    std::fclose(f);
  }
  CHECK_THROWS(load_checkpoint(path, nullptr));
  std::filesystem::remove(path);
}

TEST_SUITE_END();
