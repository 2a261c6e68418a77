#include "advbench/bench.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "advbench/binary_io.hpp"
#include "json.hpp"

namespace advbench {
namespace {

using Json = nlohmann::ordered_json;

// ---- config fields ----

std::string format_value(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}
std::string format_value(std::size_t v) { return std::to_string(v); }
std::string format_value(bool v) { return v ? "true" : "false"; }
std::string format_value(const std::string& v) { return v; }
std::string format_value(AttackKind v) { return attack_name(v); }
std::string format_value(DistanceMetric v) { return metric_name(v); }
std::string format_value(GuardAction v) { return action_name(v); }

template <typename T>
void parse_number(const std::string& text, T& out, const std::string& key) {
  const char* first = text.data();
  const char* last = first + text.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc{} || ptr != last) {
    throw ConfigError(key + ": cannot parse '" + text + "' as a number");
  }
}

void parse_value(const std::string& text, double& out, const std::string& key) {
  parse_number(text, out, key);
  if (!std::isfinite(out)) throw ConfigError(key + " must be finite");
}
void parse_value(const std::string& text, std::size_t& out, const std::string& key) {
  parse_number(text, out, key);
}
void parse_value(const std::string& text, bool& out, const std::string& key) {
  if (text == "true" || text == "1" || text == "yes") {
    out = true;
  } else if (text == "false" || text == "0" || text == "no") {
    out = false;
  } else {
    throw ConfigError(key + ": expected true or false, got '" + text + "'");
  }
}
void parse_value(const std::string& text, std::string& out, const std::string&) { out = text; }
void parse_value(const std::string& text, AttackKind& out, const std::string&) {
  out = attack_from_name(text);
}
void parse_value(const std::string& text, DistanceMetric& out, const std::string&) {
  out = metric_from_name(text);
}
void parse_value(const std::string& text, GuardAction& out, const std::string&) {
  out = action_from_name(text);
}

struct Field {
  std::string section;
  std::string key;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&)> set;
};

template <typename Ref>
Field field(std::string section, std::string key, Ref ref) {
  const std::string name = section + "." + key;
  return Field{std::move(section), std::move(key),
               [ref](const ExperimentConfig& c) {
                 return format_value(ref(const_cast<ExperimentConfig&>(c)));
               },
               [ref, name](ExperimentConfig& c, const std::string& text) {
                 parse_value(text, ref(c), name);
               }};
}

#define ADVB_FIELD(section, key, expr) \
  field(section, key, [](ExperimentConfig& c) -> auto& { return expr; })

void train_fields(std::vector<Field>& out, const std::string& section,
                  TrainConfig& (*ref)(ExperimentConfig&)) {
  out.push_back(field(section, "learning_rate",
                      [ref](ExperimentConfig& c) -> auto& { return ref(c).learning_rate; }));
  out.push_back(field(section, "momentum",
                      [ref](ExperimentConfig& c) -> auto& { return ref(c).momentum; }));
  out.push_back(field(section, "epochs",
                      [ref](ExperimentConfig& c) -> auto& { return ref(c).epochs; }));
  out.push_back(field(section, "batch_size",
                      [ref](ExperimentConfig& c) -> auto& { return ref(c).batch_size; }));
}

void attack_fields(std::vector<Field>& out, const std::string& section,
                   AttackConfig& (*ref)(ExperimentConfig&)) {
  out.push_back(field(section, "kind", [ref](ExperimentConfig& c) -> auto& { return ref(c).kind; }));
  out.push_back(
      field(section, "epsilon", [ref](ExperimentConfig& c) -> auto& { return ref(c).epsilon; }));
  out.push_back(field(section, "step_size",
                      [ref](ExperimentConfig& c) -> auto& { return ref(c).step_size; }));
  out.push_back(field(section, "iterations",
                      [ref](ExperimentConfig& c) -> auto& { return ref(c).iterations; }));
  out.push_back(field(section, "random_start",
                      [ref](ExperimentConfig& c) -> auto& { return ref(c).random_start; }));
}

const std::vector<Field>& fields() {
  static const std::vector<Field> all = [] {
    std::vector<Field> f;
    f.push_back(ADVB_FIELD("dataset", "path", c.dataset_path));
    f.push_back(ADVB_FIELD("dataset", "seed", c.dataset_seed));
    f.push_back(ADVB_FIELD("dataset", "count", c.dataset_count));
    f.push_back(ADVB_FIELD("dataset", "image_size", c.image_size));
    f.push_back(ADVB_FIELD("model", "seed", c.classifier.seed));
    train_fields(f, "model", [](ExperimentConfig& c) -> TrainConfig& { return c.classifier; });
    attack_fields(f, "attack", [](ExperimentConfig& c) -> AttackConfig& { return c.attack; });
    f.push_back(ADVB_FIELD("attack", "count", c.adversarial_count));
    train_fields(f, "adversarial_training",
                 [](ExperimentConfig& c) -> TrainConfig& { return c.adversarial_training; });
    f.push_back(ADVB_FIELD("middle_autoencoder", "latent_dim", c.middle_autoencoder.latent_dim));
    train_fields(f, "middle_autoencoder",
                 [](ExperimentConfig& c) -> TrainConfig& { return c.middle_autoencoder.train; });
    f.push_back(ADVB_FIELD("initial_autoencoder", "latent_dim", c.initial_autoencoder.latent_dim));
    train_fields(f, "initial_autoencoder",
                 [](ExperimentConfig& c) -> TrainConfig& { return c.initial_autoencoder.train; });
    train_fields(f, "encoder", [](ExperimentConfig& c) -> TrainConfig& { return c.encoder; });
    attack_fields(f, "new_attack", [](ExperimentConfig& c) -> AttackConfig& { return c.new_attack; });
    f.push_back(ADVB_FIELD("new_attack", "count", c.new_adversarial_count));
    f.push_back(ADVB_FIELD("guard", "metric", c.guard.metric));
    f.push_back(ADVB_FIELD("guard", "distance_threshold", c.guard.distance_threshold));
    f.push_back(ADVB_FIELD("guard", "alarm_threshold", c.guard.alarm_threshold));
    f.push_back(ADVB_FIELD("guard", "distance_weight", c.guard.distance_weight));
    f.push_back(ADVB_FIELD("guard", "prediction_weight", c.guard.prediction_weight));
    f.push_back(ADVB_FIELD("guard", "action", c.guard.action));
    f.push_back(ADVB_FIELD("guard", "history_capacity", c.guard.history_capacity));
    f.push_back(ADVB_FIELD("guard", "ssim_window", c.guard.ssim.window));
    f.push_back(ADVB_FIELD("guard", "attack_episodes", c.guard_attack_episodes));
    f.push_back(ADVB_FIELD("guard", "benign_episodes", c.guard_benign_episodes));
    f.push_back(ADVB_FIELD("guard", "benign_length", c.guard_benign_length));
    f.push_back(ADVB_FIELD("report", "seeds", c.seeds));
    return f;
  }();
  return all;
}

#undef ADVB_FIELD

const Field* find_field(const std::string& section, const std::string& key) {
  for (const Field& f : fields()) {
    if (f.section == section && f.key == key) return &f;
  }
  return nullptr;
}

// Rethrows with the stage name prepended, keeping the error category.
template <typename F>
auto stage(const std::string& name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const ConfigError& e) {
    throw ConfigError(name + ": " + e.what());
  } catch (const FormatError& e) {
    throw FormatError(name + ": " + e.what());
  } catch (const DataError& e) {
    throw DataError(name + ": " + e.what());
  } catch (const NumericError& e) {
    throw NumericError(name + ": " + e.what());
  } catch (const ShapeError& e) {
    throw ShapeError(name + ": " + e.what());
  }
}

AttackStats mean_stats(const std::vector<AttackStats>& runs) {
  AttackStats m;
  if (runs.empty()) return m;
  const auto n = static_cast<double>(runs.size());
  for (const AttackStats& s : runs) {
    m.attempted += s.attempted;
    m.succeeded += s.succeeded;
    m.success_rate += s.success_rate / n;
    m.mean_linf += s.mean_linf / n;
    m.mean_l2 += s.mean_l2 / n;
  }
  return m;
}

double mean(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// ---- report serialization ----

Json config_json(const ExperimentConfig& c) {
  Json out = Json::object();
  for (const Field& f : fields()) out[f.section][f.key] = f.get(c);
  return out;
}

ExperimentConfig config_from_json(const Json& j) {
  ExperimentConfig c;
  for (const auto& [section, keys] : j.items()) {
    for (const auto& [key, value] : keys.items()) {
      const Field* f = find_field(section, key);
      if (!f) throw FormatError("report config has unknown key " + section + "." + key);
      f->set(c, value.get<std::string>());
    }
  }
  return c;
}

Json stats_json(const AttackStats& s) {
  return Json{{"attempted", s.attempted},
              {"succeeded", s.succeeded},
              {"success_rate", s.success_rate},
              {"mean_linf", s.mean_linf},
              {"mean_l2", s.mean_l2}};
}

AttackStats stats_from_json(const Json& j) {
  return AttackStats{j.at("attempted").get<std::size_t>(), j.at("succeeded").get<std::size_t>(),
                     j.at("success_rate").get<double>(), j.at("mean_linf").get<double>(),
                     j.at("mean_l2").get<double>()};
}

DefenseVariant variant_from_name(const std::string& name) {
  for (DefenseVariant v : kAllDefenses) {
    if (defense_name(v) == name) return v;
  }
  throw FormatError("unknown defense '" + name + "' in report");
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string emit_json(const ExperimentReport& r) {
  Json j;
  j["config"] = config_json(r.config);
  j["seeds"] = r.seeds;
  j["dataset"] = {{"name", r.dataset}, {"train_size", r.train_size}, {"test_size", r.test_size}};
  j["clean_accuracy"] = r.clean_accuracy;
  j["initial_adversarials"] = stats_json(r.initial_adversarials);
  j["undefended_new_adversarials"] = stats_json(r.undefended_new_adversarials);
  Json defenses = Json::array();
  for (const DefenseResult& d : r.defenses) {
    Json nj = Json::array();
    for (const AttackStats& s : d.new_adversarials) nj.push_back(stats_json(s));
    defenses.push_back(Json{{"defense", defense_name(d.variant)},
                            {"recovery", d.recovery},
                            {"clean_accuracy", d.clean_accuracy},
                            {"new_adversarials", nj},
                            {"mean_recovery", d.mean_recovery},
                            {"mean_clean_accuracy", d.mean_clean_accuracy},
                            {"mean_new_adversarials", stats_json(d.mean_new_adversarials)}});
  }
  j["defenses"] = defenses;
  j["guard"] = {{"attack_episodes", r.guard.attack_episodes},
                {"benign_episodes", r.guard.benign_episodes},
                {"detected", r.guard.detected},
                {"false_positives", r.guard.false_positives},
                {"detection_rate", r.guard.detection_rate},
                {"false_positive_rate", r.guard.false_positive_rate}};
  return j.dump(2) + "\n";
}

std::string emit_csv(const ExperimentReport& r) {
  std::string out =
      "defense,recovery_pct,clean_accuracy_pct,new_adversarial_success_pct,"
      "new_adversarial_mean_linf,new_adversarial_mean_l2\n";
  for (const DefenseResult& d : r.defenses) {
    out += defense_name(d.variant) + "," + format_value(d.mean_recovery) + "," +
           format_value(d.mean_clean_accuracy) + "," +
           format_value(d.mean_new_adversarials.success_rate) + "," +
           format_value(d.mean_new_adversarials.mean_linf) + "," +
           format_value(d.mean_new_adversarials.mean_l2) + "\n";
  }
  return out;
}

std::string emit_markdown(const ExperimentReport& r) {
  std::string seeds;
  for (std::size_t i = 0; i < r.seeds.size(); ++i) {
    seeds += (i ? ", " : "") + std::to_string(r.seeds[i]);
  }
  std::string out = "# Adversarial defense benchmark\n\n";
  out += "Dataset `" + r.dataset + "` (" + std::to_string(r.train_size) + " train, " +
         std::to_string(r.test_size) + " test). Defense seeds: " + seeds +
         ". Recovery is averaged over the seeds.\n\n";
  out += "| Defense | Recovery (%) |\n|---|---|\n";
  for (const DefenseResult& d : r.defenses) {
    out += "| " + defense_name(d.variant) + " | " + fixed(d.mean_recovery, 2) + " |\n";
  }
  out += "\nInitial adversarials: " + std::to_string(r.initial_adversarials.succeeded) + " of " +
         std::to_string(r.initial_adversarials.attempted) + " correctly classified test images (" +
         fixed(r.initial_adversarials.success_rate, 2) + "%).\n\n";
  out += "| Model | Clean accuracy (%) | New adversarial success (%) | Mean Linf | Mean L2 |\n";
  out += "|---|---|---|---|---|\n";
  auto row = [&](const std::string& name, double acc, const AttackStats& s) {
    out += "| " + name + " | " + fixed(acc, 2) + " | " + fixed(s.success_rate, 2) + " | " +
           fixed(s.mean_linf, 4) + " | " + fixed(s.mean_l2, 4) + " |\n";
  };
  row("Undefended", r.clean_accuracy, r.undefended_new_adversarials);
  for (const DefenseResult& d : r.defenses) {
    row(defense_name(d.variant), d.mean_clean_accuracy, d.mean_new_adversarials);
  }
  out += "\nGuard: " + fixed(r.guard.detection_rate, 2) + "% of " +
         std::to_string(r.guard.attack_episodes) + " attack episodes detected, " +
         fixed(r.guard.false_positive_rate, 2) + "% of " +
         std::to_string(r.guard.benign_episodes) + " benign episodes flagged.\n";
  return out;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (dataset_path.empty()) {
    if (dataset_count < 100) throw ConfigError("dataset.count must be at least 100");
    if (image_size < 8) throw ConfigError("dataset.image_size must be at least 8");
  }
  classifier.validate();
  attack.validate();
  adversarial_training.validate();
  middle_autoencoder.train.validate();
  initial_autoencoder.train.validate();
  encoder.validate();
  new_attack.validate();
  guard.validate();
  if (adversarial_count == 0) throw ConfigError("attack.count must be positive");
  if (new_adversarial_count == 0) throw ConfigError("new_attack.count must be positive");
  if (guard_attack_episodes + guard_benign_episodes == 0) {
    throw ConfigError("guard needs at least one episode");
  }
  if (guard_benign_episodes > 0 && guard_benign_length == 0) {
    throw ConfigError("guard.benign_length must be positive");
  }
  if (seeds == 0) throw ConfigError("report.seeds must be positive");
}

ExperimentConfig parse_config(std::string_view text) {
  // '#' comments are accepted alongside the parser's native ';'.
  std::string cleaned;
  std::istringstream lines{std::string(text)};
  for (std::string line; std::getline(lines, line);) {
    const auto first = line.find_first_not_of(" \t");
    if (first != std::string::npos && line[first] == '#') line[first] = ';';
    cleaned += line + "\n";
  }
  boost::property_tree::ptree tree;
  try {
    std::istringstream in(cleaned);
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError("config line " + std::to_string(e.line()) + ": " + e.message());
  }
  ExperimentConfig config;
  for (const auto& [section, keys] : tree) {
    if (!keys.data().empty()) {
      throw ConfigError("config key '" + section + "' is outside any section");
    }
    for (const auto& [key, value] : keys) {
      const Field* f = find_field(section, key);
      if (!f) throw ConfigError("unknown config key " + section + "." + key);
      f->set(config, value.data());
    }
  }
  config.validate();
  return config;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = io::read_file(path);
  } catch (const DataError&) {
    throw ConfigError("cannot read config " + path.string());
  }
  try {
    return parse_config(text);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string config_text(const ExperimentConfig& config) {
  std::string out;
  std::string section;
  for (const Field& f : fields()) {
    if (f.section != section) {
      if (!section.empty()) out += "\n";
      section = f.section;
      out += "[" + section + "]\n";
    }
    out += f.key + " = " + f.get(config) + "\n";
  }
  return out;
}

AttackStats attack_statistics(const Network& model, const LabeledSet& images,
                              const AttackConfig& config,
                              std::vector<AdversarialExample>* successes) {
  AttackStats s;
  double linf = 0.0, l2 = 0.0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    AttackConfig c = config;
    c.seed = config.seed + i;
    auto ex = find_adversarial(model, images.images[i], c, images.labels[i]);
    ++s.attempted;
    if (!ex) continue;
    ++s.succeeded;
    const auto diff = ex->perturbed.tensor().values() - ex->original.tensor().values();
    linf += diff.cwiseAbs().maxCoeff();
    l2 += diff.norm();
    if (successes) successes->push_back(std::move(*ex));
  }
  if (s.attempted) s.success_rate = 100.0 * s.succeeded / static_cast<double>(s.attempted);
  if (s.succeeded) {
    s.mean_linf = linf / static_cast<double>(s.succeeded);
    s.mean_l2 = l2 / static_cast<double>(s.succeeded);
  }
  return s;
}

LabeledSet correctly_classified(const Network& model, const LabeledSet& test, std::size_t count) {
  LabeledSet out;
  for (std::size_t i = 0; i < test.size() && out.size() < count; ++i) {
    if (model.predict(test.images[i]).class_id == test.labels[i]) {
      out.images.push_back(test.images[i]);
      out.labels.push_back(test.labels[i]);
    }
  }
  return out;
}

std::vector<Episode> guard_episodes(const Network& model, const LabeledSet& targets,
                                    const LabeledSet& test, const AttackConfig& attack,
                                    std::size_t attack_count, std::size_t benign_count,
                                    std::size_t length, std::uint64_t seed) {
  std::vector<Episode> episodes;
  if (attack_count > 0 && targets.size() == 0) {
    throw DataError("no correctly classified images to attack");
  }
  for (std::size_t i = 0; i < attack_count; ++i) {
    AttackConfig c = attack;
    c.seed = attack.seed + i;
    const std::size_t t = i % targets.size();
    episodes.push_back(attack_episode(model, targets.images[t], c, targets.labels[t]));
  }
  if (benign_count > 0 && length > test.size()) {
    throw DataError("benign episodes of " + std::to_string(length) + " distinct images need " +
                    "a larger test split");
  }
  Rng rng(seed);
  std::vector<std::size_t> order(test.size());
  for (std::size_t e = 0; e < benign_count; ++e) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng.engine());
    Episode b{false, {}};
    for (std::size_t k = 0; k < length; ++k) b.queries.push_back(test.images[order[k]].tensor());
    episodes.push_back(std::move(b));
  }
  return episodes;
}

ExperimentReport run_experiment(const ExperimentConfig& config, const ProgressLog& log) {
  config.validate();
  auto note = [&](const std::string& m) {
    if (log) log(m);
  };
  const std::uint64_t base = config.base_seed();
  ExperimentReport report;
  report.config = config;

  note("dataset");
  const Dataset ds = stage("dataset", [&] {
    Dataset d = config.dataset_path.empty()
                    ? generate_synthetic_dataset(config.dataset_seed, config.dataset_count,
                                                 config.image_size)
                    : load_dataset(config.dataset_path);
    if (d.train_indices.empty() || d.test_indices.empty()) {
      throw DataError("dataset needs both train and test images");
    }
    return d;
  });
  const LabeledSet train = ds.train();
  const LabeledSet test = ds.test();
  report.dataset = ds.name;
  report.train_size = train.size();
  report.test_size = test.size();

  note("classifier");
  const TrainedClassifier trained = stage("classifier", [&] {
    return train_classifier(build_classifier(ds.image_shape(), ds.class_count, base), train,
                            test, config.classifier);
  });
  const Classifier& model = trained.model;
  const Network net = model.network();
  report.clean_accuracy = 100.0 * trained.test_accuracy;

  note("initial adversarials");
  std::vector<AdversarialExample> adversarials;
  AttackConfig attack = config.attack;
  attack.seed = base;
  const LabeledSet targets = correctly_classified(net, test, config.adversarial_count);
  report.initial_adversarials = stage("initial adversarials", [&] {
    AttackStats s = attack_statistics(net, targets, attack, &adversarials);
    if (adversarials.empty()) throw DataError("the attack produced no adversarial examples");
    return s;
  });

  AttackConfig new_attack = config.new_attack;
  new_attack.seed = base;
  report.undefended_new_adversarials = stage("new adversarials", [&] {
    return attack_statistics(net, correctly_classified(net, test, config.new_adversarial_count),
                             new_attack);
  });

  std::map<DefenseVariant, DefenseResult> results;
  for (DefenseVariant v : kAllDefenses) results[v].variant = v;
  for (std::size_t r = 0; r < config.seeds; ++r) {
    const std::uint64_t seed = base + r;
    report.seeds.push_back(seed);
    auto evaluate = [&](const DefendedModel& defended) {
      const std::string name = defense_name(defended.variant);
      DefenseResult& res = results[defended.variant];
      stage(name + " evaluation (seed " + std::to_string(seed) + ")", [&] {
        const Network dnet = defended.network();
        res.recovery.push_back(evaluate_recovery(defended, adversarials));
        res.clean_accuracy.push_back(100.0 * accuracy(dnet, test));
        AttackConfig na = new_attack;
        na.seed = seed;
        res.new_adversarials.push_back(attack_statistics(
            dnet, correctly_classified(dnet, test, config.new_adversarial_count), na));
        return 0;
      });
    };
    const std::string suffix = " (seed " + std::to_string(seed) + ")";

    note("adversarial training" + suffix);
    evaluate(stage("adversarial training" + suffix, [&] {
      TrainConfig t = config.adversarial_training;
      t.seed = seed;
      return adversarial_training(model, train, adversarials, t);
    }));

    note("middle autoencoder" + suffix);
    const DefendedModel middle = stage("middle autoencoder" + suffix, [&] {
      AutoencoderTraining t = config.middle_autoencoder;
      t.train.seed = seed;
      return build_middle_autoencoder(model, train, t);
    });
    evaluate(middle);

    note("encoder" + suffix);
    evaluate(stage("encoder" + suffix, [&] {
      TrainConfig t = config.encoder;
      t.seed = seed;
      return build_encoder_defense(model, middle_autoencoder(middle), train, t);
    }));

    note("initial autoencoder" + suffix);
    evaluate(stage("initial autoencoder" + suffix, [&] {
      AutoencoderTraining t = config.initial_autoencoder;
      t.train.seed = seed;
      return build_initial_autoencoder(model, train, t);
    }));
  }
  for (DefenseVariant v : kAllDefenses) {
    DefenseResult& res = results[v];
    res.mean_recovery = mean(res.recovery);
    res.mean_clean_accuracy = mean(res.clean_accuracy);
    res.mean_new_adversarials = mean_stats(res.new_adversarials);
    report.defenses.push_back(res);
  }

  note("guard");
  report.guard = stage("guard", [&] {
    const std::vector<Episode> episodes =
        guard_episodes(net, targets, test, attack, config.guard_attack_episodes,
                       config.guard_benign_episodes, config.guard_benign_length, base);
    return detection_rate(net, episodes, config.guard);
  });
  return report;
}

ExperimentReport run_experiment(const std::filesystem::path& config_path, const ProgressLog& log) {
  return run_experiment(load_config(config_path), log);
}

ReportFormat format_from_name(const std::string& name) {
  if (name == "json") return ReportFormat::kJson;
  if (name == "csv") return ReportFormat::kCsv;
  if (name == "md" || name == "markdown") return ReportFormat::kMarkdown;
  throw ConfigError("unknown report format '" + name + "' (expected json, csv or md)");
}

std::string format_extension(ReportFormat format) {
  switch (format) {
    case ReportFormat::kJson: return "json";
    case ReportFormat::kCsv: return "csv";
    case ReportFormat::kMarkdown: return "md";
  }
  return "txt";
}

std::string emit_report(const ExperimentReport& report, ReportFormat format) {
  switch (format) {
    case ReportFormat::kJson: return emit_json(report);
    case ReportFormat::kCsv: return emit_csv(report);
    case ReportFormat::kMarkdown: return emit_markdown(report);
  }
  throw ConfigError("unknown report format");
}

void emit_report(const ExperimentReport& report, ReportFormat format,
                 const std::filesystem::path& path) {
  io::write_file(path, emit_report(report, format));
}

ExperimentReport report_from_json(std::string_view text) {
  try {
    const Json j = Json::parse(text);
    ExperimentReport r;
    r.config = config_from_json(j.at("config"));
    r.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    r.dataset = j.at("dataset").at("name").get<std::string>();
    r.train_size = j.at("dataset").at("train_size").get<std::size_t>();
    r.test_size = j.at("dataset").at("test_size").get<std::size_t>();
    r.clean_accuracy = j.at("clean_accuracy").get<double>();
    r.initial_adversarials = stats_from_json(j.at("initial_adversarials"));
    r.undefended_new_adversarials = stats_from_json(j.at("undefended_new_adversarials"));
    for (const Json& d : j.at("defenses")) {
      DefenseResult res;
      res.variant = variant_from_name(d.at("defense").get<std::string>());
      res.recovery = d.at("recovery").get<std::vector<double>>();
      res.clean_accuracy = d.at("clean_accuracy").get<std::vector<double>>();
      for (const Json& s : d.at("new_adversarials")) res.new_adversarials.push_back(stats_from_json(s));
      res.mean_recovery = d.at("mean_recovery").get<double>();
      res.mean_clean_accuracy = d.at("mean_clean_accuracy").get<double>();
      res.mean_new_adversarials = stats_from_json(d.at("mean_new_adversarials"));
      r.defenses.push_back(std::move(res));
    }
    const Json& g = j.at("guard");
    r.guard.attack_episodes = g.at("attack_episodes").get<std::size_t>();
    r.guard.benign_episodes = g.at("benign_episodes").get<std::size_t>();
    r.guard.detected = g.at("detected").get<std::size_t>();
    r.guard.false_positives = g.at("false_positives").get<std::size_t>();
    r.guard.detection_rate = g.at("detection_rate").get<double>();
    r.guard.false_positive_rate = g.at("false_positive_rate").get<double>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed report: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("malformed report config: ") + e.what());
  }
}

}  // namespace advbench
