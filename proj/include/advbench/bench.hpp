#pragma once

// End-to-end experiment: train, attack, defend, re-attack, guard, report.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "advbench/attacks.hpp"
#include "advbench/dataset.hpp"
#include "advbench/defenses.hpp"
#include "advbench/guard.hpp"

namespace advbench {

// Every tunable of the pipeline. The text form is INI-like:
//
//   [section]
//   key = value
//
// with sections dataset, model, attack, adversarial_training,
// middle_autoencoder, initial_autoencoder, encoder, new_attack, guard, report.
// Keys left out keep the defaults below; unknown sections or keys are errors.
struct ExperimentConfig {
  std::string dataset_path;  // empty: generate a synthetic dataset
  std::uint64_t dataset_seed = 1;
  std::size_t dataset_count = 1200;
  std::size_t image_size = 24;

  // model.seed is the base seed: it seeds the classifier and the initial
  // attack, and defense training runs use base, base + 1, ...
  TrainConfig classifier{0.01, 0.9, 30, 16, 1};

  AttackConfig attack;
  std::size_t adversarial_count = 200;

  TrainConfig adversarial_training{0.01, 0.9, 30, 16, 0};
  AutoencoderTraining middle_autoencoder{0, {0.2, 0.9, 30, 16, 0}};
  AutoencoderTraining initial_autoencoder{0, {0.2, 0.9, 45, 16, 0}};
  TrainConfig encoder{0.01, 0.9, 30, 16, 0};

  AttackConfig new_attack{AttackKind::kPgd, 0.3, 0.01, 40, false, 0};
  std::size_t new_adversarial_count = 50;

  GuardConfig guard;
  std::size_t guard_attack_episodes = 200;
  std::size_t guard_benign_episodes = 200;
  std::size_t guard_benign_length = 10;

  std::size_t seeds = 3;

  std::uint64_t base_seed() const { return classifier.seed; }
  void validate() const;
  bool operator==(const ExperimentConfig&) const = default;
};

ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::filesystem::path& path);
// Canonical text listing every key; parse_config(config_text(c)) == c.
std::string config_text(const ExperimentConfig& config);

struct AttackStats {
  std::size_t attempted = 0;
  std::size_t succeeded = 0;
  double success_rate = 0.0;  // percent
  double mean_linf = 0.0;     // over successes
  double mean_l2 = 0.0;

  bool operator==(const AttackStats&) const = default;
};

// Runs the attack search on each image and summarizes the successes. The
// attack seed for image i is config.seed + i.
AttackStats attack_statistics(const Network& model, const LabeledSet& images,
                              const AttackConfig& config,
                              std::vector<AdversarialExample>* successes = nullptr);

struct DefenseResult {
  DefenseVariant variant = DefenseVariant::kAdversarialTraining;
  std::vector<double> recovery;        // percent, one per seed
  std::vector<double> clean_accuracy;  // percent, one per seed
  std::vector<AttackStats> new_adversarials;
  double mean_recovery = 0.0;
  double mean_clean_accuracy = 0.0;
  AttackStats mean_new_adversarials;  // field-wise mean over seeds

  bool operator==(const DefenseResult&) const = default;
};

struct ExperimentReport {
  ExperimentConfig config;
  std::vector<std::uint64_t> seeds;
  std::string dataset;
  std::size_t train_size = 0;
  std::size_t test_size = 0;
  double clean_accuracy = 0.0;  // undefended, percent
  AttackStats initial_adversarials;
  AttackStats undefended_new_adversarials;
  std::vector<DefenseResult> defenses;
  DetectionSummary guard;

  bool operator==(const ExperimentReport&) const = default;
};

using ProgressLog = std::function<void(const std::string&)>;

// The first `count` test images the model classifies correctly.
LabeledSet correctly_classified(const Network& model, const LabeledSet& test,
                                std::size_t count);

// Attack episodes cycle through `targets`, episode i attacking with seed
// config.seed + i. Benign episodes are `length` distinct test images drawn
// without replacement from a shuffle seeded with `seed`.
std::vector<Episode> guard_episodes(const Network& model, const LabeledSet& targets,
                                    const LabeledSet& test, const AttackConfig& attack,
                                    std::size_t attack_count, std::size_t benign_count,
                                    std::size_t length, std::uint64_t seed);

ExperimentReport run_experiment(const ExperimentConfig& config, const ProgressLog& log = {});
ExperimentReport run_experiment(const std::filesystem::path& config_path,
                                const ProgressLog& log = {});

enum class ReportFormat { kJson, kCsv, kMarkdown };
ReportFormat format_from_name(const std::string& name);
std::string format_extension(ReportFormat format);

std::string emit_report(const ExperimentReport& report, ReportFormat format);
void emit_report(const ExperimentReport& report, ReportFormat format,
                 const std::filesystem::path& path);
ExperimentReport report_from_json(std::string_view text);

}  // namespace advbench
