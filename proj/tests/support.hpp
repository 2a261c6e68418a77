#pragma once

// Shared fixtures and independent oracles for the test binaries.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "advbench/dataset.hpp"
#include "advbench/graph.hpp"
#include "advbench/models.hpp"
#include "advbench/rng.hpp"

namespace testing {

using namespace advbench;

inline Tensor random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

inline Image random_image(const Shape& shape, Rng& rng) {
  return Image(random_tensor(shape, rng, 0.0, 1.0));
}

// Max over elements of |a - b| / max(|a|, |b|), except that elements whose
// analytic value is below 1e-3 are held to an absolute 1e-6 instead.
struct GradientCheck {
  double worst_relative = 0.0;
  bool passed = true;
};

inline GradientCheck compare_gradients(const Tensor& analytic, const Tensor& numeric,
                                       double rel_tol = 1e-4, double abs_tol = 1e-6) {
  GradientCheck out;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double a = analytic[i], n = numeric[i];
    const double diff = std::abs(a - n);
    if (std::abs(a) < 1e-3) {
      if (diff > abs_tol) out.passed = false;
      continue;
    }
    const double rel = diff / std::max(std::abs(a), std::abs(n));
    out.worst_relative = std::max(out.worst_relative, rel);
    if (rel > rel_tol) out.passed = false;
  }
  return out;
}

// Random small chain graph. Variant k cycles through every primitive so that
// any run of consecutive k values covers the whole primitive set.
struct RandomGraph {
  ComputeGraph graph;
  Tensor input;
  Target target;
};

inline RandomGraph random_graph(std::size_t k, std::uint64_t seed) {
  Rng rng(seed);
  auto param = [&](const Shape& s) { return random_tensor(s, rng, -0.8, 0.8); };
  const std::size_t variant = k % 5;
  RandomGraph g;
  if (variant == 0 || variant == 1) {
    // conv -> bias -> relu|sigmoid -> pool -> flatten -> matmul -> bias -> loss
    const std::size_t h = 5 + rng.index(3), w = 5 + rng.index(3), c = 1 + rng.index(2);
    const std::size_t oc = 2 + rng.index(2);
    ComputeGraph graph(Shape{h, w, c});
    graph.conv2d("k", param({oc, 2, 2, c})).add_bias("kb", param({oc}));
    if (variant == 0) graph.relu(); else graph.sigmoid();
    graph.max_pool2().flatten();
    const std::size_t flat = ((h - 1) / 2) * ((w - 1) / 2) * oc;
    graph.matmul("w", param({3, flat})).add_bias("b", param({3}));
    g.input = random_tensor({h, w, c}, rng, 0.0, 1.0);
    if (variant == 0) {
      graph.softmax_cross_entropy();
      g.target = rng.index(3);
    } else {
      graph.mean_squared_error();
      g.target = random_tensor({3}, rng);
    }
    g.graph = std::move(graph);
  } else if (variant == 2) {
    // dense stack: matmul -> bias -> relu -> matmul -> sigmoid -> reshape -> mse
    const std::size_t n = 3 + rng.index(4), hidden = 4 + rng.index(3);
    ComputeGraph graph(Shape{n});
    graph.matmul("w1", param({hidden, n})).add_bias("b1", param({hidden})).relu();
    graph.matmul("w2", param({4, hidden})).sigmoid().reshape({2, 2, 1});
    graph.mean_squared_error();
    g.input = random_tensor({n}, rng);
    g.target = random_tensor({2, 2, 1}, rng, 0.0, 1.0);
    g.graph = std::move(graph);
  } else if (variant == 3) {
    // reshape -> conv -> relu -> flatten -> matmul -> softmax-CE
    const std::size_t side = 4 + rng.index(2);
    ComputeGraph graph(Shape{side * side});
    graph.reshape({side, side, 1}).conv2d("k", param({2, 3, 3, 1})).relu().flatten();
    graph.matmul("w", param({2, (side - 2) * (side - 2) * 2})).softmax_cross_entropy();
    g.input = random_tensor({side * side}, rng);
    g.target = rng.index(2);
    g.graph = std::move(graph);
  } else {
    // three dense layers
    const std::size_t n = 4 + rng.index(4);
    ComputeGraph graph(Shape{n});
    graph.matmul("w1", param({6, n})).add_bias("b1", param({6})).sigmoid();
    graph.matmul("w2", param({5, 6})).add_bias("b2", param({5})).relu();
    graph.matmul("w3", param({3, 5})).add_bias("b3", param({3})).softmax_cross_entropy();
    g.input = random_tensor({n}, rng);
    g.target = rng.index(3);
    g.graph = std::move(graph);
  }
  return g;
}

// Direct, window-by-window SSIM with the (n - 1) divisor, written without
// summed-area tables.
inline double brute_force_ssim(const Tensor& a, const Tensor& b, std::size_t window,
                               double k1 = 0.01, double k2 = 0.03, double range = 1.0) {
  const double c1 = (k1 * range) * (k1 * range), c2 = (k2 * range) * (k2 * range);
  const std::size_t h = a.dim(0), w = a.dim(1), ch = a.rank() == 3 ? a.dim(2) : 1;
  auto px = [&](const Tensor& t, std::size_t i, std::size_t j, std::size_t c) {
    return t[(i * w + j) * ch + c];
  };
  double channel_sum = 0.0;
  for (std::size_t c = 0; c < ch; ++c) {
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t top = 0; top + window <= h; ++top) {
      for (std::size_t left = 0; left + window <= w; ++left) {
        const double n = static_cast<double>(window * window);
        double ma = 0, mb = 0;
        for (std::size_t i = top; i < top + window; ++i) {
          for (std::size_t j = left; j < left + window; ++j) {
            ma += px(a, i, j, c);
            mb += px(b, i, j, c);
          }
        }
        ma /= n;
        mb /= n;
        double va = 0, vb = 0, cov = 0;
        for (std::size_t i = top; i < top + window; ++i) {
          for (std::size_t j = left; j < left + window; ++j) {
            const double da = px(a, i, j, c) - ma, db = px(b, i, j, c) - mb;
            va += da * da;
            vb += db * db;
            cov += da * db;
          }
        }
        va /= n - 1;
        vb /= n - 1;
        cov /= n - 1;
        total += ((2 * ma * mb + c1) * (2 * cov + c2)) /
                 ((ma * ma + mb * mb + c1) * (va + vb + c2));
        ++count;
      }
    }
    channel_sum += total / static_cast<double>(count);
  }
  return channel_sum / static_cast<double>(ch);
}

// Naive valid convolution, HWC input, kernel [out, kh, kw, in].
inline Tensor naive_conv2d(const Tensor& x, const Tensor& k) {
  const std::size_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
  const std::size_t oc = k.dim(0), kh = k.dim(1), kw = k.dim(2);
  Tensor y(Shape{h - kh + 1, w - kw + 1, oc});
  for (std::size_t i = 0; i + kh <= h; ++i)
    for (std::size_t j = 0; j + kw <= w; ++j)
      for (std::size_t o = 0; o < oc; ++o) {
        double s = 0;
        for (std::size_t a = 0; a < kh; ++a)
          for (std::size_t b = 0; b < kw; ++b)
            for (std::size_t q = 0; q < c; ++q)
              s += x[((i + a) * w + j + b) * c + q] * k[((o * kh + a) * kw + b) * c + q];
        y[(i * (w - kw + 1) + j) * oc + o] = s;
      }
  return y;
}

// A small trained classifier on the synthetic set, shared by tests that need
// a realistic model but not the full-size one.
struct SmallWorld {
  Dataset dataset;
  TrainedClassifier trained;
};

inline const SmallWorld& small_world() {
  static const SmallWorld world = [] {
    SmallWorld w;
    w.dataset = generate_synthetic_dataset(3, 400, 16);
    TrainConfig cfg;
    cfg.seed = 3;
    cfg.epochs = 20;
    w.trained = train_classifier(build_classifier({16, 16, 1}, 2, 3), w.dataset.train(),
                                 w.dataset.test(), cfg);
    return w;
  }();
  return world;
}

inline std::filesystem::path temp_path(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "advbench-tests";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace testing
