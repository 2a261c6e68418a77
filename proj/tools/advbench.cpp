// advbench: dataset generation, training, attacks, defenses, guard simulation
// and the full experiment.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 data or file error,
// 3 numeric failure.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "advbench/bench.hpp"
#include "advbench/binary_io.hpp"
#include "advbench/model_io.hpp"

namespace fs = std::filesystem;
using namespace advbench;

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
  std::string format;
  bool quiet = false;

  // dataset
  std::size_t count = 0;
  std::size_t size = 0;
  std::string input;

  std::string model;
  std::string defense;
  std::string variant;
  std::string state;
};

ExperimentConfig load(const Options& o) {
  ExperimentConfig c = o.config.empty() ? ExperimentConfig{} : load_config(o.config);
  if (o.seed) c.classifier.seed = *o.seed;
  return c;
}

void progress(const Options& o, const std::string& msg) {
  if (!o.quiet) std::cerr << "[advbench] " << msg << "\n";
}

Dataset dataset_for(const ExperimentConfig& c) {
  return c.dataset_path.empty()
             ? generate_synthetic_dataset(c.dataset_seed, c.dataset_count, c.image_size)
             : load_dataset(c.dataset_path);
}

std::vector<AdversarialExample> initial_adversarials(const ExperimentConfig& c,
                                                     const Network& net,
                                                     const LabeledSet& test,
                                                     AttackStats* stats = nullptr) {
  AttackConfig attack = c.attack;
  attack.seed = c.base_seed();
  std::vector<AdversarialExample> out;
  AttackStats s =
      attack_statistics(net, correctly_classified(net, test, c.adversarial_count), attack, &out);
  if (stats) *stats = s;
  if (out.empty()) throw DataError("the attack produced no adversarial examples");
  return out;
}

DefenseVariant parse_variant(const std::string& name) {
  static const std::map<std::string, DefenseVariant> names = {
      {"adversarial-training", DefenseVariant::kAdversarialTraining},
      {"at", DefenseVariant::kAdversarialTraining},
      {"middle", DefenseVariant::kMiddleAutoencoder},
      {"middle-autoencoder", DefenseVariant::kMiddleAutoencoder},
      {"encoder", DefenseVariant::kEncoder},
      {"initial", DefenseVariant::kInitialAutoencoder},
      {"initial-autoencoder", DefenseVariant::kInitialAutoencoder},
  };
  auto it = names.find(name);
  if (it == names.end()) {
    throw ConfigError("unknown defense '" + name + "' (expected at, middle, encoder or initial)");
  }
  return it->second;
}

std::string variant_slug(DefenseVariant v) {
  switch (v) {
    case DefenseVariant::kAdversarialTraining: return "adversarial-training";
    case DefenseVariant::kMiddleAutoencoder: return "middle-autoencoder";
    case DefenseVariant::kEncoder: return "encoder";
    case DefenseVariant::kInitialAutoencoder: return "initial-autoencoder";
  }
  return "defense";
}

int cmd_dataset_gen(const Options& o) {
  ExperimentConfig c = o.config.empty() ? ExperimentConfig{} : load_config(o.config);
  const std::uint64_t seed = o.seed.value_or(c.dataset_seed);
  const std::size_t count = o.count ? o.count : c.dataset_count;
  const std::size_t size = o.size ? o.size : c.image_size;
  const Dataset ds = generate_synthetic_dataset(seed, count, size);
  const fs::path path = fs::path(o.out) / "dataset.advd";
  save_dataset(path, ds);
  std::cout << "wrote " << path.string() << " (" << ds.size() << " images)\n";
  return 0;
}

int cmd_dataset_info(const Options& o) {
  const Dataset ds = load_dataset(o.input);
  std::map<std::size_t, std::size_t> per_class;
  for (std::size_t l : ds.labels) ++per_class[l];
  std::cout << "name: " << ds.name << "\n"
            << "images: " << ds.size() << "\n"
            << "shape: " << shape_string(ds.image_shape()) << "\n"
            << "classes: " << ds.class_count << "\n"
            << "train: " << ds.train_indices.size() << "\n"
            << "test: " << ds.test_indices.size() << "\n";
  for (auto [label, n] : per_class) std::cout << "class " << label << ": " << n << "\n";
  return 0;
}

int cmd_train(const Options& o) {
  const ExperimentConfig c = load(o);
  const Dataset ds = dataset_for(c);
  progress(o, "training on " + std::to_string(ds.train_indices.size()) + " images");
  const TrainedClassifier t =
      train_classifier(build_classifier(ds.image_shape(), ds.class_count, c.base_seed()),
                       ds.train(), ds.test(), c.classifier);
  const fs::path path = fs::path(o.out) / "classifier.advb";
  save_model(path, t.model);
  std::printf("train accuracy %.4f\ntest accuracy %.4f\nwrote %s\n", t.train_accuracy,
              t.test_accuracy, path.string().c_str());
  return 0;
}

int cmd_attack(const Options& o) {
  const ExperimentConfig c = load(o);
  const Dataset ds = dataset_for(c);
  const Classifier model = load_classifier(o.model);
  AttackStats s;
  const auto advs = initial_adversarials(c, model.network(), ds.test(), &s);
  Dataset out;
  out.class_count = ds.class_count;
  out.name = ds.name + "-" + attack_name(c.attack.kind);
  for (const AdversarialExample& ex : advs) {
    out.images.push_back(ex.perturbed);
    out.labels.push_back(ex.label);
  }
  assign_stratified_split(out);
  const fs::path path = fs::path(o.out) / "adversarials.advd";
  save_dataset(path, out);
  std::printf("success %zu/%zu (%.2f%%)\nmean linf %.6f\nmean l2 %.6f\nwrote %s\n", s.succeeded,
              s.attempted, s.success_rate, s.mean_linf, s.mean_l2, path.string().c_str());
  return 0;
}

int cmd_defend(const Options& o) {
  const ExperimentConfig c = load(o);
  const Dataset ds = dataset_for(c);
  const Classifier model = load_classifier(o.model);
  const DefenseVariant variant = parse_variant(o.variant);
  const LabeledSet train = ds.train();
  const std::uint64_t seed = c.base_seed();
  progress(o, "building " + defense_name(variant));
  DefendedModel defended;
  switch (variant) {
    case DefenseVariant::kAdversarialTraining: {
      TrainConfig t = c.adversarial_training;
      t.seed = seed;
      defended = adversarial_training(model, train,
                                      initial_adversarials(c, model.network(), ds.test()), t);
      break;
    }
    case DefenseVariant::kMiddleAutoencoder:
    case DefenseVariant::kEncoder: {
      AutoencoderTraining t = c.middle_autoencoder;
      t.train.seed = seed;
      defended = build_middle_autoencoder(model, train, t);
      if (variant == DefenseVariant::kEncoder) {
        TrainConfig e = c.encoder;
        e.seed = seed;
        defended = build_encoder_defense(model, middle_autoencoder(defended), train, e);
      }
      break;
    }
    case DefenseVariant::kInitialAutoencoder: {
      AutoencoderTraining t = c.initial_autoencoder;
      t.train.seed = seed;
      defended = build_initial_autoencoder(model, train, t);
      break;
    }
  }
  const fs::path path = fs::path(o.out) / (variant_slug(variant) + ".advb");
  save_defended_model(path, defended);
  std::printf("clean accuracy %.4f\nwrote %s\n", accuracy(defended.network(), ds.test()),
              path.string().c_str());
  return 0;
}

int cmd_evaluate(const Options& o) {
  const ExperimentConfig c = load(o);
  const Dataset ds = dataset_for(c);
  const Classifier model = load_classifier(o.model);
  const DefendedModel defended = load_defended_model(o.defense);
  const auto advs = initial_adversarials(c, model.network(), ds.test());
  std::printf("defense %s\nadversarials %zu\nrecovery %.2f%%\nclean accuracy %.4f\n",
              defense_name(defended.variant).c_str(), advs.size(),
              evaluate_recovery(defended, advs), accuracy(defended.network(), ds.test()));
  return 0;
}

int cmd_guard_sim(const Options& o) {
  const ExperimentConfig c = load(o);
  const Dataset ds = dataset_for(c);
  const Classifier model = load_classifier(o.model);
  const Network net = model.network();
  const LabeledSet test = ds.test();
  AttackConfig attack = c.attack;
  attack.seed = c.base_seed();
  const auto episodes = guard_episodes(net, correctly_classified(net, test, c.adversarial_count),
                                       test, attack, c.guard_attack_episodes,
                                       c.guard_benign_episodes, c.guard_benign_length,
                                       c.base_seed());
  const DetectionSummary s = detection_rate(net, episodes, c.guard);
  std::printf("detection %.2f%% (%zu/%zu)\nfalse positives %.2f%% (%zu/%zu)\n",
              s.detection_rate, s.detected, s.attack_episodes, s.false_positive_rate,
              s.false_positives, s.benign_episodes);
  if (!o.state.empty()) {
    GuardState state;
    for (std::size_t i = 0; i < episodes.size(); ++i) {
      const std::string user = (episodes[i].attack ? "attack-" : "benign-") + std::to_string(i);
      for (const Tensor& q : episodes[i].queries) {
        guarded_predict(state, net, user, Image(q), c.guard);
      }
    }
    save_guard_state(o.state, state);
    std::printf("wrote %s\n", o.state.c_str());
  }
  return 0;
}

std::vector<ReportFormat> formats(const Options& o) {
  if (o.format.empty()) return {ReportFormat::kJson, ReportFormat::kCsv, ReportFormat::kMarkdown};
  return {format_from_name(o.format)};
}

int cmd_run(const Options& o) {
  const ExperimentConfig c = load(o);
  const auto fmts = formats(o);
  const ExperimentReport report =
      run_experiment(c, [&](const std::string& stage) { progress(o, stage); });
  for (ReportFormat f : fmts) {
    const fs::path path = fs::path(o.out) / ("report." + format_extension(f));
    emit_report(report, f, path);
    std::cout << "wrote " << path.string() << "\n";
  }
  return 0;
}

int cmd_report(const Options& o) {
  const ExperimentReport report = report_from_json(io::read_file(o.input));
  const auto fmts = formats(o);
  for (ReportFormat f : fmts) {
    const fs::path path = fs::path(o.out) / ("report." + format_extension(f));
    emit_report(report, f, path);
    std::cout << "wrote " << path.string() << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adversarial attack and defense benchmark"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* cmd) {
    cmd->add_option("--config", o.config, "Experiment config file")->check(CLI::ExistingFile);
    cmd->add_option("--seed", o.seed, "Base seed");
    cmd->add_option("--out", o.out, "Output directory");
    cmd->add_flag("--quiet,-q", o.quiet, "No progress messages");
  };

  auto* dataset = app.add_subcommand("dataset", "Generate or inspect datasets");
  dataset->require_subcommand(1);
  auto* gen = dataset->add_subcommand("gen", "Generate the synthetic dataset");
  common(gen);
  gen->add_option("--count", o.count, "Number of images");
  gen->add_option("--size", o.size, "Image side in pixels");
  auto* info = dataset->add_subcommand("info", "Describe a dataset file or directory");
  info->add_option("path", o.input, "Dataset file or directory")->required();

  auto* train = app.add_subcommand("train", "Train the classifier");
  common(train);

  auto* attack = app.add_subcommand("attack", "Generate adversarial examples");
  common(attack);
  attack->add_option("--model", o.model, "Classifier file")->required();

  auto* defend = app.add_subcommand("defend", "Build one defense");
  common(defend);
  defend->add_option("--model", o.model, "Classifier file")->required();
  defend->add_option("--variant", o.variant, "at, middle, encoder or initial")->required();

  auto* evaluate = app.add_subcommand("evaluate", "Recovery of a defense on fresh adversarials");
  common(evaluate);
  evaluate->add_option("--model", o.model, "Classifier file")->required();
  evaluate->add_option("--defense", o.defense, "Defended model file")->required();

  auto* guard = app.add_subcommand("guard-sim", "Simulate attack and benign query streams");
  common(guard);
  guard->add_option("--model", o.model, "Classifier file")->required();
  guard->add_option("--state", o.state, "Write the final guard state here");

  auto* run = app.add_subcommand("run", "Run the full experiment");
  common(run);
  run->add_option("--format", o.format, "json, csv or md (default: all three)");

  auto* report = app.add_subcommand("report", "Convert a JSON report");
  report->add_option("input", o.input, "JSON report")->required();
  report->add_option("--format", o.format, "json, csv or md (default: all three)");
  report->add_option("--out", o.out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) return cmd_dataset_gen(o);
    if (info->parsed()) return cmd_dataset_info(o);
    if (train->parsed()) return cmd_train(o);
    if (attack->parsed()) return cmd_attack(o);
    if (defend->parsed()) return cmd_defend(o);
    if (evaluate->parsed()) return cmd_evaluate(o);
    if (guard->parsed()) return cmd_guard_sim(o);
    if (run->parsed()) return cmd_run(o);
    if (report->parsed()) return cmd_report(o);
  } catch (const ConfigError& e) {
    std::cerr << "advbench: " << e.what() << "\n";
    return 1;
  } catch (const NumericError& e) {
    std::cerr << "advbench: numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const Error& e) {
    std::cerr << "advbench: " << e.what() << "\n";
    return 2;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "advbench: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
