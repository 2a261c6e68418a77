#include "advbench/simmetrics.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace advbench {
namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* metric) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(metric) + ": shape " + shape_string(a.shape()) +
                     " vs " + shape_string(b.shape()));
  }
}

// Summed-area table over one channel of `f(a, b)`, with a zero border row and
// column so any window sum is four lookups.
class Integral {
 public:
  template <typename F>
  Integral(const Tensor& a, const Tensor& b, std::size_t channel, F f)
      : h_(a.dim(0)), w_(a.dim(1)), sums_((h_ + 1) * (w_ + 1), 0.0) {
    for (std::size_t i = 0; i < h_; ++i) {
      double row = 0.0;
      for (std::size_t j = 0; j < w_; ++j) {
        row += f(a.at(i, j, channel), b.at(i, j, channel));
        sums_[(i + 1) * (w_ + 1) + j + 1] = sums_[i * (w_ + 1) + j + 1] + row;
      }
    }
  }

  double window(std::size_t top, std::size_t left, std::size_t size) const {
    const std::size_t stride = w_ + 1;
    const std::size_t bottom = top + size, right = left + size;
    return sums_[bottom * stride + right] - sums_[top * stride + right] -
           sums_[bottom * stride + left] + sums_[top * stride + left];
  }

 private:
  std::size_t h_, w_;
  std::vector<double> sums_;
};

Tensor as_hwc(const Tensor& t) {
  if (t.rank() == 3) return t;
  if (t.rank() == 2) return t.reshaped({t.dim(0), t.dim(1), 1});
  throw ShapeError("ssim expects H x W or H x W x C input, got " + shape_string(t.shape()));
}

}  // namespace

void SsimConfig::validate() const {
  if (window < 2) throw ConfigError("ssim window must be at least 2 pixels");
  if (!(k1 > 0.0) || !(k2 > 0.0) || !(dynamic_range > 0.0)) {
    throw ConfigError("ssim constants K1, K2 and L must be positive");
  }
}

double mse(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mse");
  return (a.values() - b.values()).squaredNorm() / static_cast<double>(a.size());
}

PsnrValue psnr(const Tensor& a, const Tensor& b, double peak) {
  const double m = mse(a, b);
  if (m == 0.0) return Identical{};
  return 10.0 * std::log10(peak * peak / m);
}

double ssim(const Tensor& a_in, const Tensor& b_in, const SsimConfig& config) {
  require_same_shape(a_in, b_in, "ssim");
  config.validate();
  const Tensor a = as_hwc(a_in);
  const Tensor b = as_hwc(b_in);
  const std::size_t h = a.dim(0), w = a.dim(1), channels = a.dim(2);
  const std::size_t k = config.window;
  if (k > h || k > w) {
    throw ShapeError("ssim window " + std::to_string(k) + " does not fit image " +
                     shape_string(a.shape()));
  }
  const double n = static_cast<double>(k * k);
  const double c1 = config.c1(), c2 = config.c2();

  double total = 0.0;
  for (std::size_t c = 0; c < channels; ++c) {
    const Integral sa(a, b, c, [](double x, double) { return x; });
    const Integral sb(a, b, c, [](double, double y) { return y; });
    const Integral saa(a, b, c, [](double x, double) { return x * x; });
    const Integral sbb(a, b, c, [](double, double y) { return y * y; });
    const Integral sab(a, b, c, [](double x, double y) { return x * y; });
    double channel_sum = 0.0;
    for (std::size_t i = 0; i + k <= h; ++i) {
      for (std::size_t j = 0; j + k <= w; ++j) {
        const double mean_a = sa.window(i, j, k) / n;
        const double mean_b = sb.window(i, j, k) / n;
        const double var_a = (saa.window(i, j, k) - n * mean_a * mean_a) / (n - 1.0);
        const double var_b = (sbb.window(i, j, k) - n * mean_b * mean_b) / (n - 1.0);
        // Shared product keeps ssim(a, b) == ssim(b, a) bit for bit.
        const double mean_ab = mean_a * mean_b;
        const double cov = (sab.window(i, j, k) - n * mean_ab) / (n - 1.0);
        channel_sum += ((2.0 * mean_ab + c1) * (2.0 * cov + c2)) /
                       ((mean_a * mean_a + mean_b * mean_b + c1) * (var_a + var_b + c2));
      }
    }
    total += channel_sum / static_cast<double>((h - k + 1) * (w - k + 1));
  }
  return total / static_cast<double>(channels);
}

}  // namespace advbench
