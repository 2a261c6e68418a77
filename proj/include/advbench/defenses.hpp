#pragma once

// Adversarial training, the three autoencoder-based dimensionality-reduction
// assemblies, the parallel encoder detector and recovery scoring.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "advbench/attacks.hpp"
#include "advbench/models.hpp"

namespace advbench {

enum class DefenseVariant : std::uint8_t {
  kAdversarialTraining = 1,
  kMiddleAutoencoder = 2,
  kEncoder = 3,
  kInitialAutoencoder = 4,
};

std::string defense_name(DefenseVariant variant);
inline constexpr DefenseVariant kAllDefenses[] = {
    DefenseVariant::kAdversarialTraining, DefenseVariant::kMiddleAutoencoder,
    DefenseVariant::kEncoder, DefenseVariant::kInitialAutoencoder};

inline std::uint64_t model_digest(const Classifier& model) {
  return model.network().digest();
}

struct DefendedModel {
  DefenseVariant variant = DefenseVariant::kAdversarialTraining;
  // Stages applied in order; the last one emits logits.
  std::vector<ComputeGraph> pipeline;
  std::size_t class_count = 0;
  std::uint64_t provenance = 0;  // model_digest of the original classifier

  Network network() const;
};

struct AutoencoderTraining {
  std::size_t latent_dim = 0;  // 0 selects the variant's default
  TrainConfig train{0.2, 0.9, 30, 16, 0};

  bool operator==(const AutoencoderTraining&) const = default;
};

// train followed by each adversarial image under its attack label.
LabeledSet adversarial_union(const LabeledSet& train,
                             std::span<const AdversarialExample> adversarials);

// Retrains from the current weights on train + adversarial images labeled
// with their true classes.
DefendedModel adversarial_training(const Classifier& model, const LabeledSet& train,
                                   std::span<const AdversarialExample> adversarials,
                                   const TrainConfig& config);

// extractor -> autoencoder(trained on extractor outputs) -> head. Default
// latent dim is half the extractor output size.
DefendedModel build_middle_autoencoder(const Classifier& model, const LabeledSet& train,
                                       const AutoencoderTraining& config);
// Recovers the autoencoder stages of a middle-autoencoder defense.
Autoencoder middle_autoencoder(const DefendedModel& defense);

// extractor -> encoder half of `middle` -> new dense head trained on the
// encoder outputs.
DefendedModel build_encoder_defense(const Classifier& model, const Autoencoder& middle,
                                    const LabeledSet& train, const TrainConfig& config);

// image autoencoder -> extractor -> head. Default latent dim is one eighth of
// the pixel count (32 for 16x16 grayscale).
DefendedModel build_initial_autoencoder(const Classifier& model, const LabeledSet& train,
                                        const AutoencoderTraining& config);

struct DetectorVerdict {
  PredictionValue original;
  PredictionValue parallel;
  bool flagged = false;
};

// Flags the image when the original classifier and the encoder defense
// disagree on its class.
DetectorVerdict parallel_detect(const Classifier& original, const DefendedModel& encoder_defense,
                                const Image& image);
DetectorVerdict compare_predictions(const PredictionValue& original,
                                    const PredictionValue& parallel);

// Percentage of adversarial images the network classifies as their true
// label.
double evaluate_recovery(const Network& defense,
                         std::span<const AdversarialExample> adversarials);
// Same, after checking the adversarials were generated against the
// classifier the defense was built from.
double evaluate_recovery(const DefendedModel& defense,
                         std::span<const AdversarialExample> adversarials);

// Bit-exact comparison of every parameter the two graphs share by name.
bool parameters_identical(const ComputeGraph& a, const ComputeGraph& b);

void save_defended_model(const std::filesystem::path& path, const DefendedModel& model);
DefendedModel load_defended_model(const std::filesystem::path& path);

}  // namespace advbench
