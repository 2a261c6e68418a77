#include "advbench/models.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "advbench/ops.hpp"

namespace advbench {

Image::Image(Tensor pixels) : pixels_(std::move(pixels)) {
  if (pixels_.rank() != 3) {
    throw ShapeError("image must be H x W x C, got " + shape_string(pixels_.shape()));
  }
  const auto& v = pixels_.values();
  if (!v.allFinite() || (v.size() > 0 && (v.minCoeff() < 0.0 || v.maxCoeff() > 1.0))) {
    throw DataError("image pixels must lie in [0, 1]");
  }
}

PredictionValue prediction_from_logits(const Tensor& logits) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < logits.size(); ++i) {
    if (logits[i] > logits[best]) best = i;
  }
  const Tensor p = ops::softmax(logits);
  return {best, p[best]};
}

Network::Network(const ComputeGraph& logits_graph)
    : logits_(logits_graph.without_loss()), with_loss_(logits_) {
  if (logits_.output_shape().size() != 1 || logits_.output_shape().front() < 2) {
    throw ShapeError("network must produce a vector of at least 2 logits, got " +
                     shape_string(logits_.output_shape()));
  }
  with_loss_.softmax_cross_entropy();
  digest_ = graph_digest(logits_);
}

Tensor Network::logits(const Tensor& input) const {
  return forward(logits_, input).output();
}

PredictionValue Network::predict(const Image& image) const {
  return prediction_from_logits(logits(image.tensor()));
}

Gradients Network::loss_gradient(const Tensor& input, std::size_t label) const {
  return backward(with_loss_, input, Target{label});
}

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning rate must be finite and non-negative");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw ConfigError("momentum must lie in [0, 1)");
  }
  if (batch_size == 0) throw ConfigError("batch size must be positive");
}

Tensor glorot_uniform(const Shape& shape, std::size_t fan_in, std::size_t fan_out,
                      Rng& rng) {
  const double s = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-s, s);
  return t;
}

Classifier build_classifier(const Shape& input_shape, std::size_t class_count,
                            std::uint64_t seed) {
  if (input_shape.size() != 3 || input_shape[0] < 8 || input_shape[1] < 8 ||
      input_shape[2] == 0) {
    throw ShapeError("classifier input must be H x W x C with H, W >= 8, got " +
                     shape_string(input_shape));
  }
  if (class_count < 2) throw ConfigError("classifier needs at least 2 classes");
  Rng rng(seed);
  const std::size_t c = input_shape[2];
  constexpr std::size_t kFilters1 = 8, kFilters2 = 16, kHidden = 32;

  Classifier model;
  model.class_count = class_count;
  model.extractor = ComputeGraph(input_shape);
  model.extractor.conv2d("ext.conv1.w",
                         glorot_uniform({kFilters1, 3, 3, c}, 9 * c, 9 * kFilters1, rng))
      .add_bias("ext.conv1.b", Tensor(Shape{kFilters1}))
      .relu()
      .max_pool2()
      .conv2d("ext.conv2.w", glorot_uniform({kFilters2, 3, 3, kFilters1}, 9 * kFilters1,
                                            9 * kFilters2, rng))
      .add_bias("ext.conv2.b", Tensor(Shape{kFilters2}))
      .relu();
  // At 8x8 the second conv leaves 1x1, nothing left to pool.
  const Shape& mid = model.extractor.output_shape();
  if (mid[0] >= 2 && mid[1] >= 2) model.extractor.max_pool2();
  model.extractor.flatten();
  const std::size_t features = model.extractor.output_shape().front();
  model.head = build_dense_head(features, kHidden, class_count, "head", rng.engine()());
  return model;
}

ComputeGraph build_dense_head(std::size_t input_dim, std::size_t hidden,
                              std::size_t class_count, const std::string& prefix,
                              std::uint64_t seed) {
  Rng rng(seed);
  ComputeGraph head(Shape{input_dim});
  head.matmul(prefix + ".fc1.w", glorot_uniform({hidden, input_dim}, input_dim, hidden, rng))
      .add_bias(prefix + ".fc1.b", Tensor(Shape{hidden}))
      .relu()
      .matmul(prefix + ".fc2.w",
              glorot_uniform({class_count, hidden}, hidden, class_count, rng))
      .add_bias(prefix + ".fc2.b", Tensor(Shape{class_count}));
  return head;
}

void train_graph(ComputeGraph& graph, std::span<const Tensor> inputs,
                 std::span<const Target> targets, const TrainConfig& config) {
  config.validate();
  if (inputs.empty()) throw DataError("cannot train on an empty dataset");
  if (inputs.size() != targets.size()) {
    throw DataError("inputs and targets differ in length");
  }
  if (!graph.has_loss()) throw ShapeError("training graph must end in a loss node");

  std::map<std::string, Tensor> velocity;
  for (const auto& [name, value] : graph.parameters()) {
    velocity.emplace(name, Tensor(value.shape()));
  }
  std::vector<std::size_t> order(inputs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(config.seed);

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng.engine());
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::map<std::string, Tensor> sum;
      for (std::size_t k = start; k < end; ++k) {
        Gradients g = backward(graph, inputs[order[k]], targets[order[k]]);
        if (sum.empty()) {
          sum = std::move(g.parameters);
        } else {
          for (auto& [name, value] : g.parameters) sum.at(name).values() += value.values();
        }
      }
      const double scale = config.learning_rate / static_cast<double>(end - start);
      for (auto& [name, v] : velocity) {
        v.values() = config.momentum * v.values() - scale * sum.at(name).values();
        Tensor updated = graph.parameter(name);
        updated.values() += v.values();
        graph.set_parameter(name, std::move(updated));
      }
    }
  }
}

double accuracy(const Network& network, const LabeledSet& data) {
  if (data.size() == 0) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (network.predict(data.images[i]).class_id == data.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

TrainedClassifier train_classifier(Classifier model, const LabeledSet& train,
                                   const LabeledSet& test, const TrainConfig& config) {
  if (train.size() == 0) throw DataError("cannot train on an empty dataset");
  if (train.labels.size() != train.size()) throw DataError("labels misaligned with images");
  std::vector<Tensor> inputs;
  std::vector<Target> targets;
  inputs.reserve(train.size());
  targets.reserve(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) {
    if (train.labels[i] >= model.class_count) {
      throw DataError("label " + std::to_string(train.labels[i]) +
                      " out of range for " + std::to_string(model.class_count) +
                      " classes");
    }
    inputs.push_back(train.images[i].tensor());
    targets.emplace_back(train.labels[i]);
  }

  ComputeGraph full = model.extractor.then(model.head);
  full.softmax_cross_entropy();
  train_graph(full, inputs, targets, config);
  for (const auto& [name, value] : model.extractor.parameters()) {
    model.extractor.set_parameter(name, full.parameter(name));
  }
  for (const auto& [name, value] : model.head.parameters()) {
    model.head.set_parameter(name, full.parameter(name));
  }

  TrainedClassifier out{std::move(model)};
  const Network net = out.model.network();
  out.train_accuracy = accuracy(net, train);
  out.test_accuracy = accuracy(net, test);
  return out;
}

Autoencoder build_autoencoder(const Shape& input_shape, std::size_t latent_dim,
                              bool bounded_output, const std::string& prefix,
                              std::uint64_t seed) {
  const std::size_t n = shape_size(input_shape);
  if (latent_dim == 0 || latent_dim >= n) {
    throw ConfigError("latent dim " + std::to_string(latent_dim) +
                      " must be positive and below the input dimension " +
                      std::to_string(n));
  }
  const std::size_t hidden = (n + latent_dim) / 2;
  Rng rng(seed);

  Autoencoder ae;
  ae.latent_dim = latent_dim;
  ae.encoder = ComputeGraph(input_shape);
  if (input_shape.size() != 1) ae.encoder.flatten();
  ae.encoder.matmul(prefix + ".enc1.w", glorot_uniform({hidden, n}, n, hidden, rng))
      .add_bias(prefix + ".enc1.b", Tensor(Shape{hidden}))
      .relu()
      .matmul(prefix + ".enc2.w",
              glorot_uniform({latent_dim, hidden}, hidden, latent_dim, rng))
      .add_bias(prefix + ".enc2.b", Tensor(Shape{latent_dim}));

  ae.decoder = ComputeGraph(Shape{latent_dim});
  ae.decoder
      .matmul(prefix + ".dec1.w",
              glorot_uniform({hidden, latent_dim}, latent_dim, hidden, rng))
      .add_bias(prefix + ".dec1.b", Tensor(Shape{hidden}))
      .relu()
      .matmul(prefix + ".dec2.w", glorot_uniform({n, hidden}, hidden, n, rng))
      .add_bias(prefix + ".dec2.b", Tensor(Shape{n}));
  if (bounded_output) ae.decoder.sigmoid();
  if (input_shape.size() != 1) ae.decoder.reshape(input_shape);
  return ae;
}

Autoencoder train_autoencoder(std::span<const Tensor> inputs, std::size_t latent_dim,
                              const TrainConfig& config, const std::string& prefix) {
  if (inputs.empty()) throw DataError("cannot train an autoencoder on no inputs");
  const Shape& shape = inputs.front().shape();
  bool bounded = true;
  for (const Tensor& x : inputs) {
    if (x.shape() != shape) {
      throw ShapeError("autoencoder inputs differ in shape: " + shape_string(shape) +
                       " vs " + shape_string(x.shape()));
    }
    if (x.values().minCoeff() < 0.0 || x.values().maxCoeff() > 1.0) bounded = false;
  }
  Autoencoder ae = build_autoencoder(shape, latent_dim, bounded, prefix, config.seed);

  ComputeGraph full = ae.encoder.then(ae.decoder);
  full.mean_squared_error();
  std::vector<Target> targets(inputs.begin(), inputs.end());
  train_graph(full, inputs, targets, config);
  for (const auto& [name, value] : ae.encoder.parameters()) {
    ae.encoder.set_parameter(name, full.parameter(name));
  }
  for (const auto& [name, value] : ae.decoder.parameters()) {
    ae.decoder.set_parameter(name, full.parameter(name));
  }
  return ae;
}

Tensor encode(const Autoencoder& ae, const Tensor& x) {
  return forward(ae.encoder, x).output();
}

Tensor decode(const Autoencoder& ae, const Tensor& latent) {
  return forward(ae.decoder, latent).output();
}

Tensor reconstruct(const Autoencoder& ae, const Tensor& x) {
  return decode(ae, encode(ae, x));
}

double reconstruction_mse(const Autoencoder& ae, std::span<const Tensor> inputs) {
  if (inputs.empty()) throw DataError("no inputs to reconstruct");
  double total = 0.0;
  for (const Tensor& x : inputs) total += ops::mean_squared_error(reconstruct(ae, x), x);
  return total / static_cast<double>(inputs.size());
}

}  // namespace advbench
