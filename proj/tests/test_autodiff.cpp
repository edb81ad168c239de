#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <functional>

#include "pix2surf/autodiff.hpp"
#include "pix2surf/netcore.hpp"

using namespace pix2surf;
using ad::Tape;
using ad::Var;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.data) v = rng.normal() * scale;
  return t;
}

// Scalarizes an output with a fixed random projection, then compares the
// tape gradient of every input against central finite differences.
void gradcheck(const std::vector<Tensor>& inputs,
               const std::function<Var(Tape&, const std::vector<Var>&)>& build, double tol = 1e-6,
               double h = 1e-6) {
  Tape tape;
  std::vector<Var> vars;
  for (const auto& t : inputs) vars.push_back(tape.leaf(t, true));
  Var out = build(tape, vars);
  const Tensor& out_val = tape.val(out);
  Rng proj_rng(99);
  Tensor proj(out_val.shape);
  for (double& v : proj.data) v = proj_rng.uniform(-1.0, 1.0);

  // scalar loss = <proj, out>
  Var loss = tape.make_node(
      Tensor({1}, 0.0), {out.i},
      [proj](Tape& t, int self) {
        auto& n = t.nodes[size_t(self)];
        int p = n.parents[0];
        Tensor& g = t.g(p);
        for (size_t k = 0; k < g.data.size(); ++k) g.data[k] += n.grad.data[0] * proj.data[k];
      });
  tape.nodes[size_t(loss.i)].val.data[0] = [&] {
    double acc = 0;
    for (size_t k = 0; k < out_val.data.size(); ++k) acc += proj.data[k] * out_val.data[k];
    return acc;
  }();
  tape.backward(loss);

  auto eval_scalar = [&](const std::vector<Tensor>& ins) {
    Tape t2;
    std::vector<Var> vs;
    for (const auto& t : ins) vs.push_back(t2.leaf(t, false));
    Var o = build(t2, vs);
    const Tensor& ov = t2.val(o);
    double acc = 0;
    for (size_t k = 0; k < ov.data.size(); ++k) acc += proj.data[k] * ov.data[k];
    return acc;
  };

  for (size_t vi = 0; vi < inputs.size(); ++vi) {
    const Tensor& analytic = tape.grad(vars[vi]);
    REQUIRE(!analytic.data.empty());
    for (size_t k = 0; k < inputs[vi].data.size(); ++k) {
      std::vector<Tensor> plus = inputs, minus = inputs;
      plus[vi].data[k] += h;
      minus[vi].data[k] -= h;
      double fd = (eval_scalar(plus) - eval_scalar(minus)) / (2 * h);
      double a = analytic.data[k];
      double rel = std::fabs(a - fd) / std::max({1.0, std::fabs(a), std::fabs(fd)});
      CHECK(rel < tol);
    }
  }
}

}  // namespace

TEST_CASE("conv2d gradients match finite differences") {
  Rng rng(1);
  gradcheck({random_tensor({2, 6, 6}, rng), random_tensor({3, 2, 3, 3}, rng, 0.5),
             random_tensor({3}, rng, 0.1)},
            [](Tape& t, const std::vector<Var>& v) { return t.conv2d(v[0], v[1], v[2]); });
}

TEST_CASE("pool/unpool pipeline gradients") {
  Rng rng(2);
  gradcheck({random_tensor({2, 8, 8}, rng)}, [](Tape& t, const std::vector<Var>& v) {
    Var p = t.maxpool2(v[0]);
    return t.unpool2(t.relu(p), p);
  });
}

TEST_CASE("instnorm gradients") {
  Rng rng(3);
  gradcheck({random_tensor({3, 4, 4}, rng), random_tensor({3}, rng, 0.5),
             random_tensor({3}, rng, 0.5)},
            [](Tape& t, const std::vector<Var>& v) { return t.instnorm(v[0], v[1], v[2]); },
            5e-6, 1e-5);
}

TEST_CASE("linear/concat/broadcast/gather/slice gradients") {
  Rng rng(4);
  gradcheck({random_tensor({5, 3}, rng), random_tensor({4, 3}, rng, 0.5),
             random_tensor({4}, rng, 0.2), random_tensor({1, 2}, rng)},
            [](Tape& t, const std::vector<Var>& v) {
              Var y = t.linear(v[0], v[1], v[2]);          // [5,4]
              Var b = t.broadcast_rows(v[3], 5);           // [5,2]
              return t.concat_cols(t.sigmoid(y), b);       // [5,6]
            });

  gradcheck({random_tensor({3, 4, 4}, rng)}, [](Tape& t, const std::vector<Var>& v) {
    Var s = t.slice_channels(v[0], 1, 3);
    return t.gather_pixels(s, {0, 5, 9, 15});
  });
}

TEST_CASE("activation gradients") {
  Rng rng(5);
  gradcheck({random_tensor({4, 3}, rng)}, [](Tape& t, const std::vector<Var>& v) {
    return t.sigmoid(t.elu(t.scale(v[0], 1.3)));
  });
  gradcheck({random_tensor({4, 3}, rng)},
            [](Tape& t, const std::vector<Var>& v) { return t.relu(v[0]); });
}

TEST_CASE("emax and wsum gradients") {
  Rng rng(6);
  gradcheck({random_tensor({6}, rng), random_tensor({6}, rng), random_tensor({6}, rng)},
            [](Tape& t, const std::vector<Var>& v) { return t.emax({v[0], v[1], v[2]}); });
  gradcheck({random_tensor({1}, rng), random_tensor({1}, rng)},
            [](Tape& t, const std::vector<Var>& v) {
              return t.wsum({{v[0], 0.3}, {v[1], -1.7}});
            });
}

TEST_CASE("concat_channels and add gradients") {
  Rng rng(7);
  gradcheck({random_tensor({2, 3, 3}, rng), random_tensor({2, 3, 3}, rng)},
            [](Tape& t, const std::vector<Var>& v) {
              return t.concat_channels(t.add(v[0], v[1]), v[1]);
            });
}

TEST_CASE("fusion algebra: commutative, associative, idempotent") {
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor a = random_tensor({16}, rng), b = random_tensor({16}, rng), c = random_tensor({16}, rng);
    Tensor ab = fuse_multiview({a, b});
    Tensor ba = fuse_multiview({b, a});
    CHECK(ab.data == ba.data);
    Tensor abc1 = fuse_multiview({fuse_multiview({a, b}), c});
    Tensor abc2 = fuse_multiview({a, fuse_multiview({b, c})});
    CHECK(abc1.data == abc2.data);
    Tensor aab = fuse_multiview({a, a, b});
    CHECK(aab.data == ab.data);
    Tensor single = fuse_multiview({a});
    CHECK(single.data == a.data);
  }
  CHECK_THROWS_AS(fuse_multiview({}), ConfigError);
}

TEST_CASE("maxpool keeps argmax indices consistent with unpool") {
  Tensor x({1, 4, 4});
  for (int i = 0; i < 16; ++i) x.data[size_t(i)] = i;
  Tape t;
  Var xv = t.leaf(x, true);
  Var p = t.maxpool2(xv);
  CHECK(t.val(p).at(0, 0, 0) == 5.0);
  CHECK(t.val(p).at(0, 1, 1) == 15.0);
  Var u = t.unpool2(p, p);
  CHECK(t.val(u).at(0, 1, 1) == 5.0);
  CHECK(t.val(u).at(0, 0, 0) == 0.0);
}

TEST_CASE("backward only touches reachable nodes") {
  Tape t;
  Var a = t.leaf(Tensor({1}, 1.0), true);
  Var b = t.leaf(Tensor({1}, 2.0), true);
  Var used = t.scale(a, 3.0);
  Var unused = t.scale(b, 5.0);
  (void)unused;
  Var loss = t.wsum({{used, 1.0}});
  t.backward(loss);
  CHECK(t.grad(a).data[0] == 3.0);
  CHECK(t.nodes[size_t(b.i)].grad.data.empty());
}
