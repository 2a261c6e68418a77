#include "advbench/ops.hpp"

#include <algorithm>
#include <cmath>

namespace advbench::ops {
namespace {

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(what) + " expects rank " +
                     std::to_string(rank) + ", got " + shape_string(t.shape()));
  }
}

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;
using MatrixMap = Eigen::Map<RowMatrix>;

}  // namespace

Tensor matmul(const Tensor& weight, const Tensor& x) {
  require_rank(weight, 2, "matmul weight");
  require_rank(x, 1, "matmul input");
  if (x.size() != weight.dim(1)) {
    throw ShapeError("matmul: weight " + shape_string(weight.shape()) +
                     " cannot multiply input " + shape_string(x.shape()));
  }
  ConstMatrixMap w(weight.data(), static_cast<Eigen::Index>(weight.dim(0)),
                   static_cast<Eigen::Index>(weight.dim(1)));
  Tensor y(Shape{weight.dim(0)});
  y.values().noalias() = w * x.values();
  return y;
}

Tensor matmul_backward(const Tensor& weight, const Tensor& x, const Tensor& dy,
                       Tensor& dweight) {
  const auto rows = static_cast<Eigen::Index>(weight.dim(0));
  const auto cols = static_cast<Eigen::Index>(weight.dim(1));
  ConstMatrixMap w(weight.data(), rows, cols);
  MatrixMap dw(dweight.data(), rows, cols);
  dw.noalias() += dy.values() * x.values().transpose();
  Tensor dx(x.shape());
  dx.values().noalias() = w.transpose() * dy.values();
  return dx;
}

Tensor conv2d(const Tensor& x, const Tensor& kernel) {
  require_rank(x, 3, "conv2d input");
  require_rank(kernel, 4, "conv2d kernel");
  const std::size_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
  const std::size_t oc = kernel.dim(0), kh = kernel.dim(1), kw = kernel.dim(2);
  if (kernel.dim(3) != c || kh > h || kw > w) {
    throw ShapeError("conv2d: kernel " + shape_string(kernel.shape()) +
                     " incompatible with input " + shape_string(x.shape()));
  }
  const std::size_t oh = h - kh + 1, ow = w - kw + 1;
  Tensor y(Shape{oh, ow, oc});
  const double* k = kernel.data();
  for (std::size_t i = 0; i < oh; ++i) {
    for (std::size_t j = 0; j < ow; ++j) {
      for (std::size_t o = 0; o < oc; ++o) {
        double acc = 0.0;
        const double* ko = k + o * kh * kw * c;
        for (std::size_t a = 0; a < kh; ++a) {
          const double* row = x.data() + ((i + a) * w + j) * c;
          const double* krow = ko + a * kw * c;
          for (std::size_t q = 0; q < kw * c; ++q) acc += krow[q] * row[q];
        }
        y.at(i, j, o) = acc;
      }
    }
  }
  return y;
}

Tensor conv2d_backward(const Tensor& x, const Tensor& kernel, const Tensor& dy,
                       Tensor& dkernel) {
  const std::size_t w = x.dim(1), c = x.dim(2);
  const std::size_t oc = kernel.dim(0), kh = kernel.dim(1), kw = kernel.dim(2);
  const std::size_t oh = dy.dim(0), ow = dy.dim(1);
  Tensor dx(x.shape());
  const double* k = kernel.data();
  double* dk = dkernel.data();
  for (std::size_t i = 0; i < oh; ++i) {
    for (std::size_t j = 0; j < ow; ++j) {
      for (std::size_t o = 0; o < oc; ++o) {
        const double g = dy.at(i, j, o);
        if (g == 0.0) continue;
        const double* ko = k + o * kh * kw * c;
        double* dko = dk + o * kh * kw * c;
        for (std::size_t a = 0; a < kh; ++a) {
          const std::size_t offset = ((i + a) * w + j) * c;
          const double* row = x.data() + offset;
          double* drow = dx.data() + offset;
          for (std::size_t q = 0; q < kw * c; ++q) {
            dko[a * kw * c + q] += g * row[q];
            drow[q] += g * ko[a * kw * c + q];
          }
        }
      }
    }
  }
  return dx;
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  require_rank(bias, 1, "bias");
  const std::size_t channels = x.shape().back();
  if (bias.size() != channels) {
    throw ShapeError("add_bias: bias " + shape_string(bias.shape()) +
                     " does not match last axis of " + shape_string(x.shape()));
  }
  Tensor y = x;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += bias[i % channels];
  return y;
}

Tensor add_bias_backward(const Tensor& dy, Tensor& dbias) {
  const std::size_t channels = dbias.size();
  for (std::size_t i = 0; i < dy.size(); ++i) dbias[i % channels] += dy[i];
  return dy;
}

Tensor relu(const Tensor& x) {
  Tensor y = x;
  y.values() = x.values().cwiseMax(0.0);
  return y;
}

Tensor relu_backward(const Tensor& x, const Tensor& dy) {
  Tensor dx = dy;
  dx.values() = (x.values().array() > 0.0).select(dy.values(), 0.0);
  return dx;
}

Tensor sigmoid(const Tensor& x) {
  Tensor y = x;
  // Split on sign so exp never overflows.
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = x[i];
    if (v >= 0) {
      y[i] = 1.0 / (1.0 + std::exp(-v));
    } else {
      const double e = std::exp(v);
      y[i] = e / (1.0 + e);
    }
  }
  return y;
}

Tensor sigmoid_backward(const Tensor& y, const Tensor& dy) {
  Tensor dx = dy;
  dx.values() = dy.values().array() * y.values().array() * (1.0 - y.values().array());
  return dx;
}

Tensor max_pool2(const Tensor& x) {
  require_rank(x, 3, "max_pool2 input");
  const std::size_t oh = x.dim(0) / 2, ow = x.dim(1) / 2, c = x.dim(2);
  if (oh == 0 || ow == 0) {
    throw ShapeError("max_pool2: input " + shape_string(x.shape()) +
                     " is smaller than the 2x2 window");
  }
  Tensor y(Shape{oh, ow, c});
  for (std::size_t i = 0; i < oh; ++i) {
    for (std::size_t j = 0; j < ow; ++j) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        y.at(i, j, ch) = std::max({x.at(2 * i, 2 * j, ch), x.at(2 * i, 2 * j + 1, ch),
                                   x.at(2 * i + 1, 2 * j, ch),
                                   x.at(2 * i + 1, 2 * j + 1, ch)});
      }
    }
  }
  return y;
}

Tensor max_pool2_backward(const Tensor& x, const Tensor& dy) {
  Tensor dx(x.shape());
  const std::size_t oh = dy.dim(0), ow = dy.dim(1), c = dy.dim(2);
  for (std::size_t i = 0; i < oh; ++i) {
    for (std::size_t j = 0; j < ow; ++j) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        std::size_t best_h = 2 * i, best_w = 2 * j;
        double best = x.at(best_h, best_w, ch);
        for (std::size_t a = 0; a < 2; ++a) {
          for (std::size_t b = 0; b < 2; ++b) {
            const double v = x.at(2 * i + a, 2 * j + b, ch);
            if (v > best) {
              best = v;
              best_h = 2 * i + a;
              best_w = 2 * j + b;
            }
          }
        }
        dx.at(best_h, best_w, ch) += dy.at(i, j, ch);
      }
    }
  }
  return dx;
}

Tensor softmax(const Tensor& logits) {
  Tensor p = logits;
  const double m = logits.values().maxCoeff();
  p.values() = (logits.values().array() - m).exp();
  p.values() /= p.values().sum();
  return p;
}

double softmax_cross_entropy(const Tensor& logits, std::size_t label,
                             Tensor* dlogits) {
  require_rank(logits, 1, "softmax_cross_entropy logits");
  if (label >= logits.size()) {
    throw DataError("label " + std::to_string(label) + " out of range for " +
                    std::to_string(logits.size()) + " classes");
  }
  const double m = logits.values().maxCoeff();
  const double lse = m + std::log((logits.values().array() - m).exp().sum());
  if (dlogits) {
    *dlogits = softmax(logits);
    (*dlogits)[label] -= 1.0;
  }
  return lse - logits[label];
}

double mean_squared_error(const Tensor& x, const Tensor& target, Tensor* dx) {
  if (x.shape() != target.shape()) {
    throw ShapeError("mean_squared_error: target " +
                     shape_string(target.shape()) + " vs input " +
                     shape_string(x.shape()));
  }
  const auto n = static_cast<double>(x.size());
  const Tensor::Vector diff = x.values() - target.values();
  if (dx) *dx = Tensor(x.shape(), (2.0 / n) * diff);
  return diff.squaredNorm() / n;
}

}  // namespace advbench::ops
