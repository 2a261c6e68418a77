#pragma once

// L-infinity sign-gradient attacks (FGSM, BIM, PGD) and the
// predict -> perturb -> re-predict -> compare search loop around them.
//
// All attacks are untargeted: they ascend the cross-entropy of `label`.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>

#include "advbench/models.hpp"

namespace advbench {

enum class AttackKind { kFgsm, kBim, kPgd };

std::string attack_name(AttackKind kind);
AttackKind attack_from_name(const std::string& name);

struct AttackConfig {
  AttackKind kind = AttackKind::kPgd;
  double epsilon = 0.1;      // L-infinity budget in pixel units
  double step_size = 0.01;   // BIM/PGD step
  std::size_t iterations = 40;
  bool random_start = true;  // PGD only
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const AttackConfig&) const = default;
};

struct AdversarialExample {
  Image original;
  Image perturbed;
  PredictionValue original_prediction;
  PredictionValue adversarial_prediction;
  AttackConfig config;
  std::size_t queries = 0;
  std::size_t label = 0;  // label the attack ascended (true label when known)
  std::uint64_t model = 0;  // digest of the network that was attacked
};

// Projection onto the epsilon ball around `center` intersected with [0, 1].
Tensor project(const Tensor& x, const Tensor& center, double epsilon);

// clip(x + epsilon * sign(grad), 0, 1), with sign(0) = 0.
Image fgsm(const Network& model, const Image& image, std::size_t label, double epsilon);
Image bim(const Network& model, const Image& image, std::size_t label,
          const AttackConfig& config);
Image pgd(const Network& model, const Image& image, std::size_t label,
          const AttackConfig& config);

// Dispatches on config.kind.
Image run_attack(const Network& model, const Image& image, std::size_t label,
                 const AttackConfig& config);

// Called with every input the search submits to the model, in order.
using QueryObserver = std::function<void(const Tensor& query)>;

// Predict, perturb, re-predict, compare. The original image is predicted first; the attack's
// label is `true_label` when given and the predicted class otherwise. BIM and
// PGD stop at the first iterate whose predicted class differs from the
// original prediction; every gradient evaluation counts as one model query,
// and each attempt ends with a re-prediction of its final iterate. PGD with a
// random start retries with fresh starts up to kMaxRestarts times.
// Returns nullopt when the budget is exhausted without a class change.
inline constexpr std::size_t kMaxRestarts = 5;

std::optional<AdversarialExample> find_adversarial(
    const Network& model, const Image& image, const AttackConfig& config,
    std::optional<std::size_t> true_label = std::nullopt,
    const QueryObserver& observer = {});

// Checks the three AdversarialExample invariants; throws NumericError if one
// fails.
void verify_adversarial(const Network& model, const AdversarialExample& example);

}  // namespace advbench
