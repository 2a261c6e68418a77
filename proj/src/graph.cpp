#include "advbench/graph.hpp"

#include <array>
#include <utility>

#include "advbench/ops.hpp"

namespace advbench {
namespace {

constexpr std::array<std::pair<OpKind, const char*>, 10> kOpNames{{
    {OpKind::kMatMul, "matmul"},
    {OpKind::kConv2d, "conv2d"},
    {OpKind::kAddBias, "add_bias"},
    {OpKind::kRelu, "relu"},
    {OpKind::kSigmoid, "sigmoid"},
    {OpKind::kMaxPool2, "max_pool2"},
    {OpKind::kFlatten, "flatten"},
    {OpKind::kReshape, "reshape"},
    {OpKind::kSoftmaxCrossEntropy, "softmax_cross_entropy"},
    {OpKind::kMeanSquaredError, "mean_squared_error"},
}};

std::string node_label(std::size_t index, OpKind op) {
  return "node " + std::to_string(index) + " (" + op_name(op) + ")";
}

void check_finite(const Tensor& t, std::size_t index, OpKind op) {
  if (!t.all_finite()) {
    throw NumericError("non-finite activation at " + node_label(index, op));
  }
}

double evaluate_loss(const Node& node, std::size_t index, const Tensor& x,
                     const Target& target, Tensor* dx) {
  if (node.op == OpKind::kSoftmaxCrossEntropy) {
    const auto* label = std::get_if<std::size_t>(&target);
    if (!label) {
      throw DataError(node_label(index, node.op) + " requires a class label target");
    }
    return ops::softmax_cross_entropy(x, *label, dx);
  }
  const auto* tensor = std::get_if<Tensor>(&target);
  if (!tensor) {
    throw DataError(node_label(index, node.op) + " requires a tensor target");
  }
  if (tensor->shape() != x.shape()) {
    throw ShapeError(node_label(index, node.op) + ": target " +
                     shape_string(tensor->shape()) + " vs input " +
                     shape_string(x.shape()));
  }
  return ops::mean_squared_error(x, *tensor, dx);
}

Activations run_forward(const ComputeGraph& graph, const Tensor& input,
                        const Target* target) {
  if (input.shape() != graph.input_shape()) {
    throw ShapeError("node 0: input shape " + shape_string(input.shape()) +
                     " does not match graph input " +
                     shape_string(graph.input_shape()));
  }
  check_finite(input, 0, graph.nodes().empty() ? OpKind::kFlatten
                                               : graph.nodes().front().op);
  Activations acts;
  acts.values.reserve(graph.nodes().size() + 1);
  acts.values.push_back(input);
  const auto& params = graph.parameters();
  for (std::size_t i = 0; i < graph.nodes().size(); ++i) {
    const Node& node = graph.nodes()[i];
    const Tensor& x = acts.values.back();
    if (is_loss(node.op)) {
      if (target) {
        const double loss = evaluate_loss(node, i, x, *target, nullptr);
        if (!std::isfinite(loss)) {
          throw NumericError("non-finite loss at " + node_label(i, node.op));
        }
        acts.loss = loss;
      }
      break;
    }
    Tensor y;
    switch (node.op) {
      case OpKind::kMatMul: y = ops::matmul(params.at(node.param), x); break;
      case OpKind::kConv2d: y = ops::conv2d(x, params.at(node.param)); break;
      case OpKind::kAddBias: y = ops::add_bias(x, params.at(node.param)); break;
      case OpKind::kRelu: y = ops::relu(x); break;
      case OpKind::kSigmoid: y = ops::sigmoid(x); break;
      case OpKind::kMaxPool2: y = ops::max_pool2(x); break;
      case OpKind::kFlatten:
      case OpKind::kReshape: y = x.reshaped(node.out_shape); break;
      default: break;
    }
    check_finite(y, i, node.op);
    acts.values.push_back(std::move(y));
  }
  return acts;
}

}  // namespace

std::string op_name(OpKind op) {
  for (const auto& [kind, name] : kOpNames) {
    if (kind == op) return name;
  }
  return "unknown";
}

std::optional<OpKind> op_from_name(const std::string& name) {
  for (const auto& [kind, label] : kOpNames) {
    if (name == label) return kind;
  }
  return std::nullopt;
}

bool is_loss(OpKind op) {
  return op == OpKind::kSoftmaxCrossEntropy || op == OpKind::kMeanSquaredError;
}

ComputeGraph::ComputeGraph(Shape input_shape) : input_shape_(std::move(input_shape)) {
  if (input_shape_.empty() || shape_size(input_shape_) == 0) {
    throw ShapeError("graph input shape must be non-empty with positive extents");
  }
  for (std::size_t d : input_shape_) {
    if (d == 0) throw ShapeError("graph input extents must be positive");
  }
}

const Shape& ComputeGraph::output_shape() const {
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (!is_loss(it->op)) return it->out_shape;
  }
  return input_shape_;
}

void ComputeGraph::require_open() const {
  if (has_loss()) throw ShapeError("cannot append after a loss node");
}

void ComputeGraph::add_parameter(const std::string& name, Tensor value) {
  if (name.empty()) throw ConfigError("parameter name must be non-empty");
  if (params_.count(name)) throw ConfigError("duplicate parameter name " + name);
  params_.emplace(name, std::move(value));
}

ComputeGraph& ComputeGraph::push(OpKind op, std::string param, Shape out_shape) {
  nodes_.push_back(Node{op, std::move(param), output_shape(), std::move(out_shape)});
  return *this;
}

ComputeGraph& ComputeGraph::matmul(const std::string& name, Tensor weight) {
  require_open();
  const Shape& in = output_shape();
  if (in.size() != 1 || weight.rank() != 2 || weight.dim(1) != in[0]) {
    throw ShapeError("node " + std::to_string(nodes_.size()) + " (matmul): weight " +
                     shape_string(weight.shape()) + " incompatible with " +
                     shape_string(in));
  }
  Shape out{weight.dim(0)};
  add_parameter(name, std::move(weight));
  return push(OpKind::kMatMul, name, std::move(out));
}

ComputeGraph& ComputeGraph::conv2d(const std::string& name, Tensor kernel) {
  require_open();
  const Shape& in = output_shape();
  if (in.size() != 3 || kernel.rank() != 4 || kernel.dim(3) != in[2] ||
      kernel.dim(1) > in[0] || kernel.dim(2) > in[1]) {
    throw ShapeError("node " + std::to_string(nodes_.size()) + " (conv2d): kernel " +
                     shape_string(kernel.shape()) + " incompatible with " +
                     shape_string(in));
  }
  Shape out{in[0] - kernel.dim(1) + 1, in[1] - kernel.dim(2) + 1, kernel.dim(0)};
  add_parameter(name, std::move(kernel));
  return push(OpKind::kConv2d, name, std::move(out));
}

ComputeGraph& ComputeGraph::add_bias(const std::string& name, Tensor bias) {
  require_open();
  const Shape in = output_shape();
  if (bias.rank() != 1 || bias.size() != in.back()) {
    throw ShapeError("node " + std::to_string(nodes_.size()) + " (add_bias): bias " +
                     shape_string(bias.shape()) + " incompatible with " +
                     shape_string(in));
  }
  add_parameter(name, std::move(bias));
  return push(OpKind::kAddBias, name, in);
}

ComputeGraph& ComputeGraph::relu() {
  require_open();
  return push(OpKind::kRelu, {}, output_shape());
}

ComputeGraph& ComputeGraph::sigmoid() {
  require_open();
  return push(OpKind::kSigmoid, {}, output_shape());
}

ComputeGraph& ComputeGraph::max_pool2() {
  require_open();
  const Shape& in = output_shape();
  if (in.size() != 3 || in[0] < 2 || in[1] < 2) {
    throw ShapeError("node " + std::to_string(nodes_.size()) +
                     " (max_pool2): input " + shape_string(in) +
                     " is not an HWC tensor of at least 2x2");
  }
  return push(OpKind::kMaxPool2, {}, Shape{in[0] / 2, in[1] / 2, in[2]});
}

ComputeGraph& ComputeGraph::flatten() {
  require_open();
  return push(OpKind::kFlatten, {}, Shape{shape_size(output_shape())});
}

ComputeGraph& ComputeGraph::reshape(Shape shape) {
  require_open();
  for (std::size_t d : shape) {
    if (d == 0) throw ShapeError("reshape extents must be positive");
  }
  if (shape.empty() || shape_size(shape) != shape_size(output_shape())) {
    throw ShapeError("node " + std::to_string(nodes_.size()) + " (reshape): " +
                     shape_string(output_shape()) + " -> " + shape_string(shape));
  }
  return push(OpKind::kReshape, {}, std::move(shape));
}

ComputeGraph& ComputeGraph::softmax_cross_entropy() {
  require_open();
  if (output_shape().size() != 1) {
    throw ShapeError("softmax_cross_entropy expects rank-1 logits, got " +
                     shape_string(output_shape()));
  }
  return push(OpKind::kSoftmaxCrossEntropy, {}, Shape{1});
}

ComputeGraph& ComputeGraph::mean_squared_error() {
  require_open();
  return push(OpKind::kMeanSquaredError, {}, Shape{1});
}

const Tensor& ComputeGraph::parameter(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ConfigError("unknown parameter " + name);
  return it->second;
}

void ComputeGraph::set_parameter(const std::string& name, Tensor value) {
  auto it = params_.find(name);
  if (it == params_.end()) throw ConfigError("unknown parameter " + name);
  if (it->second.shape() != value.shape()) {
    throw ShapeError("parameter " + name + " has shape " +
                     shape_string(it->second.shape()) + ", got " +
                     shape_string(value.shape()));
  }
  it->second = std::move(value);
}

std::size_t ComputeGraph::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, value] : params_) n += value.size();
  return n;
}

ComputeGraph ComputeGraph::without_loss() const {
  ComputeGraph copy = *this;
  if (copy.has_loss()) copy.nodes_.pop_back();
  return copy;
}

ComputeGraph ComputeGraph::then(const ComputeGraph& next) const {
  if (has_loss()) throw ShapeError("cannot compose after a loss node");
  if (next.input_shape_ != output_shape()) {
    throw ShapeError("composition mismatch: " + shape_string(output_shape()) +
                     " feeds " + shape_string(next.input_shape_));
  }
  ComputeGraph out = *this;
  for (const auto& [name, value] : next.params_) out.add_parameter(name, value);
  out.nodes_.insert(out.nodes_.end(), next.nodes_.begin(), next.nodes_.end());
  return out;
}

bool ComputeGraph::operator==(const ComputeGraph& other) const {
  if (input_shape_ != other.input_shape_ || nodes_.size() != other.nodes_.size() ||
      params_ != other.params_) {
    return false;
  }
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Node& a = nodes_[i];
    const Node& b = other.nodes_[i];
    if (a.op != b.op || a.param != b.param || a.out_shape != b.out_shape) return false;
  }
  return true;
}

std::uint64_t graph_digest(const ComputeGraph& graph) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const void* data, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  };
  auto mix_shape = [&](const Shape& shape) {
    for (std::size_t d : shape) mix(&d, sizeof d);
    mix("|", 1);
  };
  mix_shape(graph.input_shape());
  for (const Node& node : graph.nodes()) {
    const auto op = static_cast<int>(node.op);
    mix(&op, sizeof op);
    mix(node.param.data(), node.param.size());
    mix_shape(node.out_shape);
  }
  for (const auto& [name, value] : graph.parameters()) {
    mix(name.data(), name.size());
    mix(value.data(), value.size() * sizeof(double));
  }
  return h;
}

Activations forward(const ComputeGraph& graph, const Tensor& input) {
  return run_forward(graph, input, nullptr);
}

Activations forward(const ComputeGraph& graph, const Tensor& input,
                    const Target& target) {
  return run_forward(graph, input, &target);
}

Gradients backward(const ComputeGraph& graph, const Tensor& input,
                   const Target& target) {
  if (!graph.has_loss()) {
    throw ShapeError("backward requires a graph that ends in a loss node");
  }
  const Activations acts = run_forward(graph, input, &target);
  const auto& nodes = graph.nodes();
  const auto& params = graph.parameters();

  Gradients grads;
  grads.loss = *acts.loss;
  grads.output = acts.output();
  for (const auto& [name, value] : params) grads.parameters.emplace(name, Tensor(value.shape()));

  const std::size_t loss_index = nodes.size() - 1;
  Tensor upstream;
  evaluate_loss(nodes[loss_index], loss_index, acts.values[loss_index], target, &upstream);

  for (std::size_t k = loss_index; k-- > 0;) {
    const Node& node = nodes[k];
    const Tensor& x = acts.values[k];
    switch (node.op) {
      case OpKind::kMatMul:
        upstream = ops::matmul_backward(params.at(node.param), x, upstream,
                                        grads.parameters.at(node.param));
        break;
      case OpKind::kConv2d:
        upstream = ops::conv2d_backward(x, params.at(node.param), upstream,
                                        grads.parameters.at(node.param));
        break;
      case OpKind::kAddBias:
        upstream = ops::add_bias_backward(upstream, grads.parameters.at(node.param));
        break;
      case OpKind::kRelu: upstream = ops::relu_backward(x, upstream); break;
      case OpKind::kSigmoid:
        upstream = ops::sigmoid_backward(acts.values[k + 1], upstream);
        break;
      case OpKind::kMaxPool2: upstream = ops::max_pool2_backward(x, upstream); break;
      case OpKind::kFlatten:
      case OpKind::kReshape: upstream = upstream.reshaped(node.in_shape); break;
      default: break;
    }
    check_finite(upstream, k, node.op);
  }
  grads.input = std::move(upstream);
  return grads;
}

Tensor finite_diff_grad(const ComputeGraph& graph, const Tensor& input,
                        const Target& target, double step) {
  if (!(step > 0.0)) throw ConfigError("finite difference step must be positive");
  if (!graph.has_loss()) {
    throw ShapeError("finite_diff_grad requires a graph that ends in a loss node");
  }
  Tensor grad(input.shape());
  Tensor probe = input;
  for (std::size_t i = 0; i < input.size(); ++i) {
    const double original = probe[i];
    probe[i] = original + step;
    const double up = *run_forward(graph, probe, &target).loss;
    probe[i] = original - step;
    const double down = *run_forward(graph, probe, &target).loss;
    probe[i] = original;
    grad[i] = (up - down) / (2.0 * step);
  }
  return grad;
}

}  // namespace advbench
