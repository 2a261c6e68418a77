#include "advbench/defenses.hpp"

#include <algorithm>

#include "advbench/binary_io.hpp"
#include "advbench/model_io.hpp"

namespace advbench {
namespace {

// One latent unit per eight input values (32 for a 16x16 grayscale image).
constexpr std::size_t kInitialLatentDivisor = 8;
constexpr std::size_t kEncoderHeadHidden = 32;

std::vector<Tensor> features_of(const ComputeGraph& extractor, const LabeledSet& data) {
  std::vector<Tensor> out;
  out.reserve(data.size());
  for (const Image& img : data.images) out.push_back(forward(extractor, img.tensor()).output());
  return out;
}

void require_trained_set(const LabeledSet& data) {
  if (data.size() == 0) throw DataError("defense needs a non-empty training set");
  if (data.labels.size() != data.size()) throw DataError("labels misaligned with images");
}

}  // namespace

std::string defense_name(DefenseVariant variant) {
  switch (variant) {
    case DefenseVariant::kAdversarialTraining: return "Adversarial training";
    case DefenseVariant::kMiddleAutoencoder: return "Middle autoencoder";
    case DefenseVariant::kEncoder: return "Encoder";
    case DefenseVariant::kInitialAutoencoder: return "Initial autoencoder";
  }
  return "unknown";
}

Network DefendedModel::network() const {
  if (pipeline.empty()) throw ShapeError("defended model has an empty pipeline");
  ComputeGraph full = pipeline.front();
  for (std::size_t i = 1; i < pipeline.size(); ++i) full = full.then(pipeline[i]);
  return Network(full);
}

LabeledSet adversarial_union(const LabeledSet& train,
                             std::span<const AdversarialExample> adversarials) {
  if (adversarials.empty()) {
    throw DataError("adversarial training needs at least one adversarial example");
  }
  LabeledSet augmented = train;
  for (const AdversarialExample& ex : adversarials) {
    augmented.images.push_back(ex.perturbed);
    augmented.labels.push_back(ex.label);
  }
  return augmented;
}

DefendedModel adversarial_training(const Classifier& model, const LabeledSet& train,
                                   std::span<const AdversarialExample> adversarials,
                                   const TrainConfig& config) {
  require_trained_set(train);
  TrainedClassifier retrained =
      train_classifier(model, adversarial_union(train, adversarials), LabeledSet{}, config);
  return DefendedModel{DefenseVariant::kAdversarialTraining,
                       {std::move(retrained.model.extractor), std::move(retrained.model.head)},
                       model.class_count,
                       model_digest(model)};
}

DefendedModel build_middle_autoencoder(const Classifier& model, const LabeledSet& train,
                                       const AutoencoderTraining& config) {
  require_trained_set(train);
  const std::vector<Tensor> features = features_of(model.extractor, train);
  const std::size_t latent =
      config.latent_dim ? config.latent_dim : shape_size(model.extractor.output_shape()) / 2;
  Autoencoder ae = train_autoencoder(features, latent, config.train, "mid_ae");
  return DefendedModel{DefenseVariant::kMiddleAutoencoder,
                       {model.extractor, std::move(ae.encoder), std::move(ae.decoder), model.head},
                       model.class_count,
                       model_digest(model)};
}

Autoencoder middle_autoencoder(const DefendedModel& defense) {
  if (defense.variant != DefenseVariant::kMiddleAutoencoder || defense.pipeline.size() != 4) {
    throw ConfigError("not a middle-autoencoder defense");
  }
  const ComputeGraph& encoder = defense.pipeline[1];
  return Autoencoder{encoder, defense.pipeline[2], encoder.output_shape().front()};
}

DefendedModel build_encoder_defense(const Classifier& model, const Autoencoder& middle,
                                    const LabeledSet& train, const TrainConfig& config) {
  require_trained_set(train);
  if (middle.encoder.input_shape() != model.extractor.output_shape()) {
    throw ShapeError("encoder input " + shape_string(middle.encoder.input_shape()) +
                     " does not match extractor output " +
                     shape_string(model.extractor.output_shape()));
  }
  const ComputeGraph trunk = model.extractor.then(middle.encoder);
  const std::vector<Tensor> latents = features_of(trunk, train);
  std::vector<Target> targets(train.labels.begin(), train.labels.end());

  ComputeGraph head = build_dense_head(middle.latent_dim, kEncoderHeadHidden,
                                       model.class_count, "enc_head", config.seed);
  ComputeGraph trainable = head;
  trainable.softmax_cross_entropy();
  train_graph(trainable, latents, targets, config);
  for (const auto& [name, value] : head.parameters()) {
    head.set_parameter(name, trainable.parameter(name));
  }
  return DefendedModel{DefenseVariant::kEncoder,
                       {model.extractor, middle.encoder, std::move(head)},
                       model.class_count,
                       model_digest(model)};
}

DefendedModel build_initial_autoencoder(const Classifier& model, const LabeledSet& train,
                                        const AutoencoderTraining& config) {
  require_trained_set(train);
  std::vector<Tensor> images;
  images.reserve(train.size());
  for (const Image& img : train.images) images.push_back(img.tensor());
  const std::size_t latent = config.latent_dim ? config.latent_dim
                        : std::max<std::size_t>(1, shape_size(model.extractor.input_shape()) /
                                                       kInitialLatentDivisor);
  Autoencoder ae = train_autoencoder(images, latent, config.train, "img_ae");
  return DefendedModel{DefenseVariant::kInitialAutoencoder,
                       {std::move(ae.encoder), std::move(ae.decoder), model.extractor, model.head},
                       model.class_count,
                       model_digest(model)};
}

DetectorVerdict compare_predictions(const PredictionValue& original,
                                    const PredictionValue& parallel) {
  return DetectorVerdict{original, parallel, original.class_id != parallel.class_id};
}

DetectorVerdict parallel_detect(const Classifier& original, const DefendedModel& encoder_defense,
                                const Image& image) {
  if (encoder_defense.variant != DefenseVariant::kEncoder) {
    throw ConfigError("parallel detection needs an encoder defense");
  }
  if (encoder_defense.provenance != model_digest(original)) {
    throw ConfigError("encoder defense was built from a different classifier");
  }
  return compare_predictions(original.network().predict(image),
                             encoder_defense.network().predict(image));
}

double evaluate_recovery(const Network& defense,
                         std::span<const AdversarialExample> adversarials) {
  if (adversarials.empty()) throw DataError("no adversarial examples to evaluate");
  std::size_t recovered = 0;
  for (const AdversarialExample& ex : adversarials) {
    if (defense.predict(ex.perturbed).class_id == ex.label) ++recovered;
  }
  return 100.0 * static_cast<double>(recovered) / static_cast<double>(adversarials.size());
}

double evaluate_recovery(const DefendedModel& defense,
                         std::span<const AdversarialExample> adversarials) {
  for (const AdversarialExample& ex : adversarials) {
    if (ex.model != defense.provenance) {
      throw DataError("adversarial example was generated against a different model than " +
                      defense_name(defense.variant) + " defends");
    }
  }
  return evaluate_recovery(defense.network(), adversarials);
}

bool parameters_identical(const ComputeGraph& a, const ComputeGraph& b) {
  for (const auto& [name, value] : a.parameters()) {
    auto it = b.parameters().find(name);
    if (it == b.parameters().end()) continue;
    if (!(it->second == value)) return false;
  }
  return true;
}

void save_defended_model(const std::filesystem::path& path, const DefendedModel& model) {
  ModelFile file{ModelKind::kDefended, static_cast<std::uint8_t>(model.variant),
                 static_cast<std::uint32_t>(model.class_count), model.provenance,
                 model.pipeline};
  io::write_file(path, encode_model_file(file));
}

DefendedModel load_defended_model(const std::filesystem::path& path) {
  ModelFile file = decode_model_file(io::read_file(path));
  if (file.kind != ModelKind::kDefended) {
    throw FormatError(path.string() + " is not a defended model");
  }
  if (file.variant < 1 || file.variant > 4) {
    throw FormatError(path.string() + ": unknown defense variant tag " +
                      std::to_string(file.variant));
  }
  DefendedModel model{static_cast<DefenseVariant>(file.variant), std::move(file.graphs),
                      file.aux, file.provenance};
  const Network net = model.network();
  if (net.class_count() != model.class_count) {
    throw FormatError(path.string() + ": pipeline does not produce the declared class count");
  }
  return model;
}

}  // namespace advbench
