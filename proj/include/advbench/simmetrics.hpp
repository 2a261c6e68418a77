#pragma once

#include <cstddef>
#include <variant>

#include "advbench/tensor.hpp"

namespace advbench {

// Windowed structural similarity parameters. Windows are uniform (unweighted)
// squares slid with stride 1; statistics use the unbiased (n - 1) divisor.
struct SsimConfig {
  std::size_t window = 8;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;

  double c1() const { return (k1 * dynamic_range) * (k1 * dynamic_range); }
  double c2() const { return (k2 * dynamic_range) * (k2 * dynamic_range); }
  void validate() const;
  bool operator==(const SsimConfig&) const = default;
};

// PSNR of two identical images.
struct Identical {
  bool operator==(const Identical&) const = default;
};
using PsnrValue = std::variant<double, Identical>;

double mse(const Tensor& a, const Tensor& b);
// 10 log10(L^2 / mse) with L = peak, or Identical when mse is zero.
PsnrValue psnr(const Tensor& a, const Tensor& b, double peak = 1.0);
// Mean SSIM over all windows of each channel, then averaged over channels.
// Inputs are H x W x C (rank-2 inputs are treated as one channel).
double ssim(const Tensor& a, const Tensor& b, const SsimConfig& config = {});

}  // namespace advbench
