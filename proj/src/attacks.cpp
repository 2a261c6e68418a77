#include "advbench/attacks.hpp"

#include <algorithm>
#include <cmath>

#include "advbench/rng.hpp"

namespace advbench {
namespace {

Tensor signed_step(const Tensor& x, const Tensor& grad, double step) {
  Tensor out = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double g = grad[i];
    if (g > 0) {
      out[i] += step;
    } else if (g < 0) {
      out[i] -= step;
    }
  }
  return out;
}

void check_shape(const Network& model, const Image& image) {
  if (image.shape() != model.input_shape()) {
    throw ShapeError("attack input " + shape_string(image.shape()) +
                     " does not match model input " + shape_string(model.input_shape()));
  }
}

Tensor random_start(const Tensor& center, double epsilon, std::uint64_t seed) {
  Rng rng(seed);
  Tensor x = center;
  for (std::size_t i = 0; i < x.size(); ++i) x[i] += rng.uniform(-epsilon, epsilon);
  return project(x, center, epsilon);
}

std::uint64_t attempt_seed(std::uint64_t seed, std::size_t attempt) {
  return seed + 0x9E3779B97F4A7C15ULL * attempt;
}

Tensor iterate(const Network& model, const Tensor& center, Tensor x, std::size_t label,
               const AttackConfig& config) {
  for (std::size_t it = 0; it < config.iterations; ++it) {
    const Gradients g = model.loss_gradient(x, label);
    x = project(signed_step(x, g.input, config.step_size), center, config.epsilon);
  }
  return x;
}

}  // namespace

std::string attack_name(AttackKind kind) {
  switch (kind) {
    case AttackKind::kFgsm: return "fgsm";
    case AttackKind::kBim: return "bim";
    case AttackKind::kPgd: return "pgd";
  }
  return "unknown";
}

AttackKind attack_from_name(const std::string& name) {
  std::string lower = name;
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "fgsm") return AttackKind::kFgsm;
  if (lower == "bim") return AttackKind::kBim;
  if (lower == "pgd") return AttackKind::kPgd;
  throw ConfigError("unknown attack '" + name + "' (expected fgsm, bim or pgd)");
}

void AttackConfig::validate() const {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
    throw ConfigError("attack epsilon must be positive");
  }
  if (kind != AttackKind::kFgsm) {
    if (!(step_size > 0.0)) throw ConfigError("attack step size must be positive");
    if (step_size > epsilon) throw ConfigError("attack step size must not exceed epsilon");
    if (iterations == 0) throw ConfigError("iterative attacks need at least one iteration");
  }
}

Tensor project(const Tensor& x, const Tensor& center, double epsilon) {
  Tensor out = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double lo = std::max(0.0, center[i] - epsilon);
    const double hi = std::min(1.0, center[i] + epsilon);
    out[i] = std::clamp(x[i], lo, hi);
  }
  return out;
}

Image fgsm(const Network& model, const Image& image, std::size_t label, double epsilon) {
  check_shape(model, image);
  if (!(epsilon > 0.0)) throw ConfigError("attack epsilon must be positive");
  const Gradients g = model.loss_gradient(image.tensor(), label);
  return Image(project(signed_step(image.tensor(), g.input, epsilon), image.tensor(), epsilon));
}

Image bim(const Network& model, const Image& image, std::size_t label,
          const AttackConfig& config) {
  if (config.kind != AttackKind::kBim) throw ConfigError("bim called with a non-BIM config");
  config.validate();
  check_shape(model, image);
  return Image(iterate(model, image.tensor(), image.tensor(), label, config));
}

Image pgd(const Network& model, const Image& image, std::size_t label,
          const AttackConfig& config) {
  if (config.kind != AttackKind::kPgd) throw ConfigError("pgd called with a non-PGD config");
  config.validate();
  check_shape(model, image);
  Tensor start = config.random_start
                     ? random_start(image.tensor(), config.epsilon, config.seed)
                     : image.tensor();
  return Image(iterate(model, image.tensor(), std::move(start), label, config));
}

Image run_attack(const Network& model, const Image& image, std::size_t label,
                 const AttackConfig& config) {
  switch (config.kind) {
    case AttackKind::kFgsm: return fgsm(model, image, label, config.epsilon);
    case AttackKind::kBim: return bim(model, image, label, config);
    case AttackKind::kPgd: return pgd(model, image, label, config);
  }
  throw ConfigError("unknown attack kind");
}

std::optional<AdversarialExample> find_adversarial(const Network& model, const Image& image,
                                                   const AttackConfig& config,
                                                   std::optional<std::size_t> true_label,
                                                   const QueryObserver& observer) {
  config.validate();
  check_shape(model, image);
  auto query = [&](const Tensor& x) {
    if (observer) observer(x);
  };

  const Tensor& center = image.tensor();
  query(center);
  const PredictionValue original = model.predict(image);
  const std::size_t label = true_label.value_or(original.class_id);
  std::size_t queries = 1;

  const bool restarts = config.kind == AttackKind::kPgd && config.random_start;
  const std::size_t attempts = restarts ? 1 + kMaxRestarts : 1;
  for (std::size_t attempt = 0; attempt < attempts; ++attempt) {
    Tensor x = center;
    if (config.kind == AttackKind::kFgsm) {
      query(x);
      const Gradients g = model.loss_gradient(x, label);
      ++queries;
      x = project(signed_step(x, g.input, config.epsilon), center, config.epsilon);
    } else {
      if (restarts) x = random_start(center, config.epsilon, attempt_seed(config.seed, attempt));
      for (std::size_t it = 0; it < config.iterations; ++it) {
        query(x);
        const Gradients g = model.loss_gradient(x, label);
        ++queries;
        if (prediction_from_logits(g.output).class_id != original.class_id) break;
        x = project(signed_step(x, g.input, config.step_size), center, config.epsilon);
      }
    }
    query(x);
    Image candidate(std::move(x));
    const PredictionValue after = model.predict(candidate);
    ++queries;
    if (after.class_id != original.class_id) {
      AdversarialExample example{image, std::move(candidate), original, after,
                                 config, queries, label, model.digest()};
      verify_adversarial(model, example);
      return example;
    }
  }
  return std::nullopt;
}

void verify_adversarial(const Network& model, const AdversarialExample& example) {
  const Tensor& a = example.original.tensor();
  const Tensor& b = example.perturbed.tensor();
  if (max_abs_difference(a, b) > example.config.epsilon + 1e-12) {
    throw NumericError("adversarial example leaves the epsilon ball");
  }
  if (b.values().minCoeff() < 0.0 || b.values().maxCoeff() > 1.0) {
    throw NumericError("adversarial example leaves the pixel range");
  }
  if (model.predict(example.perturbed).class_id ==
      example.original_prediction.class_id) {
    throw NumericError("adversarial example does not change the predicted class");
  }
}

}  // namespace advbench
