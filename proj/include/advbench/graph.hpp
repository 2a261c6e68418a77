#pragma once

// Chain-structured compute graphs with reverse-mode differentiation.
//
// A ComputeGraph is an ordered list of primitive nodes; node i consumes the
// output of node i-1 (node 0 consumes the graph input), so the storage order
// is already a topological order. Parameters live in the graph by name. An
// optional loss node may terminate the chain; it consumes a Target that is
// supplied at evaluation time.

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "advbench/tensor.hpp"

namespace advbench {

enum class OpKind {
  kMatMul,
  kConv2d,
  kAddBias,
  kRelu,
  kSigmoid,
  kMaxPool2,
  kFlatten,
  kReshape,
  kSoftmaxCrossEntropy,
  kMeanSquaredError,
};

std::string op_name(OpKind op);
std::optional<OpKind> op_from_name(const std::string& name);
bool is_loss(OpKind op);

struct Node {
  OpKind op;
  std::string param;  // empty for parameter-free primitives
  Shape in_shape;
  Shape out_shape;    // {1} for loss nodes
};

// Class label for softmax-cross-entropy, or a tensor for mean-squared-error.
using Target = std::variant<std::size_t, Tensor>;

class ComputeGraph {
 public:
  ComputeGraph() = default;
  explicit ComputeGraph(Shape input_shape);

  ComputeGraph& matmul(const std::string& name, Tensor weight);
  ComputeGraph& conv2d(const std::string& name, Tensor kernel);
  ComputeGraph& add_bias(const std::string& name, Tensor bias);
  ComputeGraph& relu();
  ComputeGraph& sigmoid();
  ComputeGraph& max_pool2();
  ComputeGraph& flatten();
  ComputeGraph& reshape(Shape shape);
  ComputeGraph& softmax_cross_entropy();
  ComputeGraph& mean_squared_error();

  const Shape& input_shape() const { return input_shape_; }
  // Shape produced by the last non-loss node (the graph input if none).
  const Shape& output_shape() const;
  const std::vector<Node>& nodes() const { return nodes_; }
  bool has_loss() const { return !nodes_.empty() && is_loss(nodes_.back().op); }

  const std::map<std::string, Tensor>& parameters() const { return params_; }
  const Tensor& parameter(const std::string& name) const;
  // Replaces a parameter value; the shape must not change.
  void set_parameter(const std::string& name, Tensor value);
  std::size_t parameter_count() const;

  // Copy without the terminal loss node.
  ComputeGraph without_loss() const;
  // Feeds this graph's output into `next`. Both must be loss-free except that
  // `next` may end in a loss; parameter names must be disjoint.
  ComputeGraph then(const ComputeGraph& next) const;

  bool operator==(const ComputeGraph& other) const;

 private:
  ComputeGraph& push(OpKind op, std::string param, Shape out_shape);
  void require_open() const;
  void add_parameter(const std::string& name, Tensor value);

  Shape input_shape_;
  std::vector<Node> nodes_;
  std::map<std::string, Tensor> params_;
};

// FNV-1a digest of the architecture and parameter bits. Graphs with equal
// digests are treated as the same model instance.
std::uint64_t graph_digest(const ComputeGraph& graph);

struct Activations {
  // values[0] is the input; values[i + 1] is the output of node i. Loss nodes
  // contribute to `loss` instead of `values`.
  std::vector<Tensor> values;
  std::optional<double> loss;

  const Tensor& output() const { return values.back(); }
};

// Evaluates every non-loss node.
Activations forward(const ComputeGraph& graph, const Tensor& input);
// Evaluates every node including the loss, when the graph has one.
Activations forward(const ComputeGraph& graph, const Tensor& input,
                    const Target& target);

struct Gradients {
  std::map<std::string, Tensor> parameters;
  Tensor input;
  Tensor output;  // value fed into the loss node (e.g. logits)
  double loss = 0.0;
};

Gradients backward(const ComputeGraph& graph, const Tensor& input,
                   const Target& target);

// Central-difference estimate of d loss / d input, one element at a time.
Tensor finite_diff_grad(const ComputeGraph& graph, const Tensor& input,
                        const Target& target, double step);

}  // namespace advbench
