#pragma once

// Primitive tensor kernels used by the graph engine. Forward kernels are free
// functions over tensors; each *_backward takes the upstream gradient and
// returns the gradient with respect to the primary input (and accumulates
// parameter gradients where the primitive has one).

#include <cstddef>

#include "advbench/tensor.hpp"

namespace advbench::ops {

// y = W x for W of shape [out, in] and x a rank-1 tensor of length in.
Tensor matmul(const Tensor& weight, const Tensor& x);
Tensor matmul_backward(const Tensor& weight, const Tensor& x, const Tensor& dy,
                       Tensor& dweight);

// Valid, stride-1 convolution over HWC input with kernel [out_c, kh, kw, in_c].
Tensor conv2d(const Tensor& x, const Tensor& kernel);
Tensor conv2d_backward(const Tensor& x, const Tensor& kernel, const Tensor& dy,
                       Tensor& dkernel);

// Adds bias[c] along the last axis.
Tensor add_bias(const Tensor& x, const Tensor& bias);
Tensor add_bias_backward(const Tensor& dy, Tensor& dbias);

Tensor relu(const Tensor& x);
Tensor relu_backward(const Tensor& x, const Tensor& dy);

Tensor sigmoid(const Tensor& x);
Tensor sigmoid_backward(const Tensor& y, const Tensor& dy);

// 2x2 max pooling with stride 2 over HWC input; odd trailing rows/columns are
// dropped. Ties route the gradient to the first maximum in scan order.
Tensor max_pool2(const Tensor& x);
Tensor max_pool2_backward(const Tensor& x, const Tensor& dy);

Tensor softmax(const Tensor& logits);
// log-sum-exp with max subtraction; returns the scalar loss and writes
// softmax(logits) - onehot(label) into dlogits.
double softmax_cross_entropy(const Tensor& logits, std::size_t label,
                             Tensor* dlogits = nullptr);

// mean((x - target)^2); gradient 2 (x - target) / n.
double mean_squared_error(const Tensor& x, const Tensor& target,
                          Tensor* dx = nullptr);

}  // namespace advbench::ops
