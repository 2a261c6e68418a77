#include "doctest.h"

#include <array>

#include "advbench/graph.hpp"
#include "advbench/ops.hpp"
#include "support.hpp"

using namespace advbench;
using testing::compare_gradients;
using testing::random_graph;
using testing::random_tensor;

TEST_CASE("forward: identity, relu and identity matmul") {
  const Tensor x = Tensor::vector({1, 2, 3});
  CHECK(forward(ComputeGraph({3}), x).output() == x);

  ComputeGraph r({3});
  r.relu();
  CHECK(forward(r, Tensor::vector({-1, 0, 2})).output() == Tensor::vector({0, 0, 2}));

  ComputeGraph m({2});
  m.matmul("w", Tensor({2, 2}, {1, 0, 0, 1}));
  CHECK(forward(m, Tensor::vector({5, 7})).output() == Tensor::vector({5, 7}));
}

TEST_CASE("forward keeps every activation") {
  ComputeGraph g({2});
  g.matmul("w", Tensor({3, 2}, {1, 2, 3, 4, 5, 6})).relu().sigmoid();
  const Activations a = forward(g, Tensor::vector({1, -1}));
  REQUIRE(a.values.size() == 4);
  CHECK(a.values[1] == Tensor::vector({-1, -1, -1}));
  CHECK(a.values[2] == Tensor::vector({0, 0, 0}));
  CHECK(a.output()[0] == doctest::Approx(0.5));
  CHECK_FALSE(a.loss.has_value());
}

TEST_CASE("forward rejects a mismatched input and names the node") {
  ComputeGraph g({3});
  g.relu();
  CHECK_THROWS_AS(forward(g, Tensor::vector({1, 2})), ShapeError);

  // Builders catch mismatches between consecutive nodes.
  ComputeGraph bad({4});
  CHECK_THROWS_WITH_AS(bad.matmul("w", Tensor({2, 3})), doctest::Contains("node 0"), ShapeError);
}

TEST_CASE("backward: analytic examples") {
  ComputeGraph sq({1});
  sq.mean_squared_error();
  const Gradients g = backward(sq, Tensor::vector({3}), Tensor::vector({0}));
  CHECK(g.input[0] == doctest::Approx(6.0));
  CHECK(g.loss == doctest::Approx(9.0));

  ComputeGraph ce({2});
  ce.softmax_cross_entropy();
  const Gradients h = backward(ce, Tensor::vector({0, 0}), std::size_t{0});
  CHECK(h.input[0] == doctest::Approx(-0.5));
  CHECK(h.input[1] == doctest::Approx(0.5));
  CHECK(h.loss == doctest::Approx(std::log(2.0)));
}

TEST_CASE("backward needs a loss node and finite activations") {
  ComputeGraph g({2});
  g.relu();
  CHECK_THROWS_AS(backward(g, Tensor::vector({1, 2}), std::size_t{0}), ShapeError);

  ComputeGraph m({2});
  m.matmul("w", Tensor({2, 2}, {1e308, 1e308, 0, 1})).softmax_cross_entropy();
  CHECK_THROWS_WITH_AS(backward(m, Tensor::vector({10, 10}), std::size_t{0}),
                       doctest::Contains("node 0"), NumericError);

  ComputeGraph mse({2});
  mse.mean_squared_error();
  CHECK_THROWS_AS(backward(mse, Tensor::vector({1, 2}), std::size_t{0}), DataError);

  ComputeGraph ce({2});
  ce.softmax_cross_entropy();
  CHECK_THROWS_AS(backward(ce, Tensor::vector({0, 0}), std::size_t{5}), DataError);
}

TEST_CASE("finite differences: square and constant loss") {
  ComputeGraph sq({1});
  sq.mean_squared_error();
  CHECK(finite_diff_grad(sq, Tensor::vector({3}), Tensor::vector({0}), 1e-5)[0] ==
        doctest::Approx(6.0).epsilon(1e-6));

  ComputeGraph c({3});
  c.matmul("zero", Tensor({1, 3})).mean_squared_error();
  const Tensor fd = finite_diff_grad(c, Tensor::vector({1, 2, 3}), Tensor::vector({4}), 1e-5);
  CHECK(fd == Tensor({3}));
  CHECK_THROWS_AS(finite_diff_grad(sq, Tensor::vector({3}), Tensor::vector({0}), 0.0),
                  ConfigError);
}

TEST_CASE("random three-layer dense net matches finite differences") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto g = random_graph(4, seed);
    const Gradients b = backward(g.graph, g.input, g.target);
    const Tensor fd = finite_diff_grad(g.graph, g.input, g.target, 1e-5);
    const auto check = compare_gradients(b.input, fd);
    CHECK_MESSAGE(check.passed, "seed " << seed << " worst " << check.worst_relative);
  }
}

TEST_CASE("parameter gradients match finite differences") {
  for (std::size_t k = 0; k < 5; ++k) {
    auto g = random_graph(k, 100 + k);
    const Gradients b = backward(g.graph, g.input, g.target);
    for (const auto& [name, value] : g.graph.parameters()) {
      Tensor fd(value.shape());
      for (std::size_t i = 0; i < value.size(); ++i) {
        ComputeGraph plus = g.graph, minus = g.graph;
        Tensor vp = value, vm = value;
        vp[i] += 1e-5;
        vm[i] -= 1e-5;
        plus.set_parameter(name, vp);
        minus.set_parameter(name, vm);
        fd[i] = (*forward(plus, g.input, g.target).loss - *forward(minus, g.input, g.target).loss) /
                2e-5;
      }
      const auto check = compare_gradients(b.parameters.at(name), fd);
      CHECK_MESSAGE(check.passed, "variant " << k << " parameter " << name);
    }
  }
}

TEST_CASE("conv2d agrees with a naive loop") {
  Rng rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    const std::size_t c = 1 + rng.index(3);
    const Tensor x = random_tensor({6, 7, c}, rng);
    const Tensor k = random_tensor({4, 3, 2, c}, rng);
    const Tensor fast = ops::conv2d(x, k);
    const Tensor slow = testing::naive_conv2d(x, k);
    REQUIRE(fast.shape() == slow.shape());
    CHECK(max_abs_difference(fast, slow) < 1e-12);
  }
}

TEST_CASE("conv2d with a zero kernel outputs the bias") {
  Rng rng(2);
  ComputeGraph g({6, 6, 2});
  g.conv2d("k", Tensor({3, 3, 3, 2})).add_bias("b", Tensor::vector({0.5, -1, 2}));
  const Tensor y = forward(g, random_tensor({6, 6, 2}, rng)).output();
  const std::array<double, 3> bias{0.5, -1.0, 2.0};
  for (std::size_t i = 0; i < y.size(); ++i) CHECK(y[i] == bias[i % 3]);
}

TEST_CASE("max pool drops odd edges and routes ties to the first maximum") {
  Tensor x({3, 3, 1}, {1, 1, 9, 1, 1, 9, 9, 9, 9});
  const Tensor y = ops::max_pool2(x);
  CHECK(y.shape() == Shape{1, 1, 1});
  CHECK(y[0] == 1.0);
  const Tensor dx = ops::max_pool2_backward(x, Tensor({1, 1, 1}, {1.0}));
  CHECK(dx[0] == 1.0);
  CHECK(dx.values().sum() == 1.0);
}

TEST_CASE("activations are bounded") {
  Rng rng(5);
  // Strictly inside (0, 1) while 1 - sigmoid(x) is still representable.
  const Tensor x = random_tensor({200}, rng, -30, 30);
  const Tensor r = ops::relu(x);
  const Tensor s = ops::sigmoid(x);
  CHECK(r.values().minCoeff() >= 0.0);
  CHECK(s.values().minCoeff() > 0.0);
  CHECK(s.values().maxCoeff() < 1.0);
  const Tensor extreme = ops::sigmoid(Tensor::vector({-800, 800}));
  CHECK(extreme[0] >= 0.0);
  CHECK(extreme[1] <= 1.0);
}

TEST_CASE("softmax cross-entropy is stable for large logits") {
  Tensor d;
  const double loss = ops::softmax_cross_entropy(Tensor::vector({1000, 0}), 1, &d);
  CHECK(loss == doctest::Approx(1000.0));
  CHECK(d[0] == doctest::Approx(1.0));
  CHECK(d[1] == doctest::Approx(-1.0));
  const Tensor p = ops::softmax(Tensor::vector({3, 1, -2}));
  CHECK(p.values().sum() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("forward is deterministic") {
  auto g = random_graph(0, 9);
  CHECK(forward(g.graph, g.input).output() == forward(g.graph, g.input).output());
}

TEST_CASE("composition and parameter bookkeeping") {
  ComputeGraph a({2}), b({3});
  a.matmul("w", Tensor({3, 2}));
  b.matmul("v", Tensor({1, 3}));
  const ComputeGraph ab = a.then(b);
  CHECK(ab.output_shape() == Shape{1});
  CHECK(ab.parameter_count() == 9);

  ComputeGraph clash({3});
  clash.matmul("w", Tensor({1, 3}));
  CHECK_THROWS_AS(a.then(clash), Error);
  CHECK_THROWS_AS(a.set_parameter("w", Tensor({2, 2})), ShapeError);
  CHECK_THROWS_AS(a.parameter("missing"), ConfigError);

  ComputeGraph with_loss = a;
  with_loss.softmax_cross_entropy();
  CHECK(with_loss.has_loss());
  CHECK(with_loss.without_loss() == a);
  CHECK_THROWS_AS(with_loss.relu(), ShapeError);
}

TEST_CASE("digest follows parameter bits") {
  auto g = random_graph(2, 1);
  ComputeGraph h = g.graph;
  CHECK(graph_digest(g.graph) == graph_digest(h));
  Tensor w = h.parameter("w1");
  w[0] = std::nextafter(w[0], 10.0);
  h.set_parameter("w1", w);
  CHECK(graph_digest(g.graph) != graph_digest(h));
}
