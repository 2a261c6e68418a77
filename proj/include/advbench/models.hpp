#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "advbench/graph.hpp"
#include "advbench/rng.hpp"
#include "advbench/tensor.hpp"

namespace advbench {

// H x W x C pixels in [0, 1].
class Image {
 public:
  Image() = default;
  // Throws ShapeError unless rank 3, DataError if a pixel is outside [0, 1].
  explicit Image(Tensor pixels);

  std::size_t height() const { return pixels_.dim(0); }
  std::size_t width() const { return pixels_.dim(1); }
  std::size_t channels() const { return pixels_.dim(2); }
  const Shape& shape() const { return pixels_.shape(); }
  std::size_t size() const { return pixels_.size(); }
  const Tensor& tensor() const { return pixels_; }

  bool operator==(const Image& other) const { return pixels_ == other.pixels_; }

 private:
  Tensor pixels_;
};

struct PredictionValue {
  std::size_t class_id = 0;
  double probability = 0.0;

  bool operator==(const PredictionValue&) const = default;
};

// Argmax of softmax(logits), ties to the lowest index.
PredictionValue prediction_from_logits(const Tensor& logits);

// A differentiable end-to-end classifier: a loss-free graph producing logits
// plus the same graph terminated by softmax-cross-entropy.
class Network {
 public:
  explicit Network(const ComputeGraph& logits_graph);

  const Shape& input_shape() const { return logits_.input_shape(); }
  std::size_t class_count() const { return logits_.output_shape().front(); }
  const ComputeGraph& graph() const { return logits_; }
  std::uint64_t digest() const { return digest_; }

  Tensor logits(const Tensor& input) const;
  PredictionValue predict(const Image& image) const;
  // Loss value and input gradient of the cross-entropy against `label`.
  Gradients loss_gradient(const Tensor& input, std::size_t label) const;

 private:
  ComputeGraph logits_;
  ComputeGraph with_loss_;
  std::uint64_t digest_ = 0;
};

struct Classifier {
  ComputeGraph extractor;  // conv stack
  ComputeGraph head;       // dense stack producing logits
  std::size_t class_count = 0;

  Network network() const { return Network(extractor.then(head)); }
  bool operator==(const Classifier&) const = default;
};

struct Autoencoder {
  ComputeGraph encoder;
  ComputeGraph decoder;
  std::size_t latent_dim = 0;

  bool operator==(const Autoencoder&) const = default;
};

struct TrainConfig {
  double learning_rate = 0.01;
  double momentum = 0.9;
  std::size_t epochs = 30;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

struct LabeledSet {
  std::vector<Image> images;
  std::vector<std::size_t> labels;

  std::size_t size() const { return images.size(); }
};

struct TrainedClassifier {
  Classifier model;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
};

// Uniform in [-s, s] with s = sqrt(6 / (fan_in + fan_out)).
Tensor glorot_uniform(const Shape& shape, std::size_t fan_in, std::size_t fan_out,
                      Rng& rng);

// conv(8, 3x3) relu pool conv(16, 3x3) relu pool flatten | dense(32) relu dense(k)
// The second pool is skipped when its input is smaller than 2x2.
Classifier build_classifier(const Shape& input_shape, std::size_t class_count,
                            std::uint64_t seed);

// Dense head dense(hidden) relu dense(class_count) with parameter names under
// `prefix`.
ComputeGraph build_dense_head(std::size_t input_dim, std::size_t hidden,
                              std::size_t class_count, const std::string& prefix,
                              std::uint64_t seed);

// Minibatch SGD with momentum on a graph that ends in a loss node. Batches
// are drawn from a seeded shuffle; gradients are averaged over each batch.
void train_graph(ComputeGraph& graph, std::span<const Tensor> inputs,
                 std::span<const Target> targets, const TrainConfig& config);

double accuracy(const Network& network, const LabeledSet& data);

TrainedClassifier train_classifier(Classifier model, const LabeledSet& train,
                                   const LabeledSet& test, const TrainConfig& config);

// Dense autoencoder: flatten, dense(hidden) relu dense(latent) | dense(hidden)
// relu dense(n) [sigmoid when every input lies in [0, 1]] reshape. Hidden
// width is the midpoint of input and latent sizes. Parameters are named under
// `prefix`.
Autoencoder build_autoencoder(const Shape& input_shape, std::size_t latent_dim,
                              bool bounded_output, const std::string& prefix,
                              std::uint64_t seed);

Autoencoder train_autoencoder(std::span<const Tensor> inputs, std::size_t latent_dim,
                              const TrainConfig& config,
                              const std::string& prefix = "ae");

Tensor encode(const Autoencoder& ae, const Tensor& x);
Tensor decode(const Autoencoder& ae, const Tensor& latent);
Tensor reconstruct(const Autoencoder& ae, const Tensor& x);
double reconstruction_mse(const Autoencoder& ae, std::span<const Tensor> inputs);

}  // namespace advbench
