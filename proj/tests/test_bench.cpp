#include "doctest.h"

#include <fstream>

#include "advbench/bench.hpp"
#include "advbench/binary_io.hpp"
#include "support.hpp"

using namespace advbench;
namespace fs = std::filesystem;

namespace {

// Small enough to run end to end in a couple of seconds.
ExperimentConfig tiny_config() {
  return parse_config(R"(
[dataset]
count = 200
image_size = 16
[model]
epochs = 8
[attack]
count = 12
[adversarial_training]
epochs = 3
[middle_autoencoder]
epochs = 5
[initial_autoencoder]
epochs = 5
[encoder]
epochs = 3
[new_attack]
count = 4
iterations = 10
[guard]
attack_episodes = 4
benign_episodes = 4
[report]
seeds = 2
)");
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = testing::temp_path(name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream(path, std::ios::binary) << text;
}

}  // namespace

TEST_CASE("config defaults, overrides and canonical text") {
  const ExperimentConfig defaults = parse_config("");
  CHECK(defaults == ExperimentConfig{});
  CHECK(parse_config(config_text(defaults)) == defaults);

  const ExperimentConfig c = parse_config(R"(
# comment
[attack]
kind = bim
epsilon = 0.2
random_start = false
[guard]
metric = mse
action = second-best
[report]
seeds = 1
)");
  CHECK(c.attack.kind == AttackKind::kBim);
  CHECK(c.attack.epsilon == 0.2);
  CHECK_FALSE(c.attack.random_start);
  CHECK(c.guard.metric == DistanceMetric::kMse);
  CHECK(c.guard.action == GuardAction::kSecondBest);
  CHECK(c.seeds == 1);
  CHECK(parse_config(config_text(c)) == c);
}

TEST_CASE("config errors") {
  CHECK_THROWS_AS(parse_config("[attack]\nwobble = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[nowhere]\nseed = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[attack]\nepsilon = lots\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[attack]\nepsilon = -1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[guard]\nmetric = psnr\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[report]\nseeds = 0\n"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_config("[attack\nkind = pgd\n"), doctest::Contains("line"),
                       ConfigError);
  CHECK_THROWS_AS(load_config(testing::temp_path("no-such.ini")), ConfigError);
}

TEST_CASE("synthetic dataset is deterministic, balanced and split per class") {
  const Dataset a = generate_synthetic_dataset(5, 200, 16);
  const Dataset b = generate_synthetic_dataset(5, 200, 16);
  CHECK(a.images == b.images);
  CHECK(a.labels == b.labels);
  CHECK_FALSE(generate_synthetic_dataset(6, 200, 16).images == a.images);
  CHECK(a.class_count == 2);
  CHECK(a.image_shape() == Shape{16, 16, 1});
  CHECK(std::count(a.labels.begin(), a.labels.end(), 0u) == 100);
  CHECK(a.test_indices.size() == 40);
  CHECK(a.train_indices.size() == 160);
  const LabeledSet test = a.test();
  CHECK(std::count(test.labels.begin(), test.labels.end(), 1u) == 20);
  CHECK_THROWS_AS(generate_synthetic_dataset(5, 50, 16), ConfigError);
  CHECK_THROWS_AS(generate_synthetic_dataset(5, 200, 4), ConfigError);
}

TEST_CASE("dataset files round-trip exactly") {
  const Dataset a = generate_synthetic_dataset(7, 120, 12);
  const fs::path path = testing::temp_path("data.advd");
  save_dataset(path, a);
  const Dataset b = load_dataset(path);
  CHECK(b.images == a.images);
  CHECK(b.labels == a.labels);
  CHECK(b.train_indices == a.train_indices);
  CHECK(b.test_indices == a.test_indices);

  const std::string bytes = encode_dataset(a);
  std::string magic = bytes;
  magic[0] = 'Q';
  CHECK_THROWS_AS(decode_dataset(magic), FormatError);
  std::string version = bytes;
  version[4] = 9;
  CHECK_THROWS_AS(decode_dataset(version), FormatError);
  CHECK_THROWS_AS(decode_dataset(bytes.substr(0, bytes.size() - 1)), FormatError);
  CHECK_THROWS_AS(load_dataset(testing::temp_path("absent.advd")), DataError);
}

TEST_CASE("netpbm decoding") {
  const Image gray = decode_netpbm("P2\n# c\n2 1\n255\n0 255\n", "g.pgm");
  CHECK(gray.shape() == Shape{1, 2, 1});
  CHECK(gray.tensor()[0] == 0.0);
  CHECK(gray.tensor()[1] == 1.0);
  const Image rgb = decode_netpbm(std::string("P6\n1 1\n255\n") + '\x00' + '\x80' + '\xff', "c.ppm");
  CHECK(rgb.shape() == Shape{1, 1, 3});
  CHECK(rgb.tensor()[1] == doctest::Approx(128.0 / 255.0));
  const Image bin = decode_netpbm(std::string("P5 2 1 15\n") + '\x0f' + '\x05', "b.pgm");
  CHECK(bin.tensor()[1] == doctest::Approx(5.0 / 15.0));
  CHECK_THROWS_AS(decode_netpbm("P4\n1 1\n\x01", "x.pbm"), DataError);
  CHECK_THROWS_AS(decode_netpbm("P2\n2 2\n255\n1 2 3\n", "short.pgm"), DataError);
}

TEST_CASE("image directories load one class per subdirectory") {
  const fs::path dir = fresh_dir("images");
  for (int i = 0; i < 5; ++i) {
    write_text(dir / "cats" / ("c" + std::to_string(i) + ".pgm"), "P2 2 2 255 0 0 0 0\n");
    write_text(dir / "dogs" / ("d" + std::to_string(i) + ".pgm"), "P2 2 2 255 255 0 0 255\n");
  }
  const Dataset d = load_dataset(dir);
  CHECK(d.size() == 10);
  CHECK(d.class_count == 2);
  CHECK(d.labels[0] == 0);
  CHECK(d.labels[9] == 1);
  CHECK(d.images[9].tensor()[0] == 1.0);
  CHECK(d.test_indices.size() == 2);

  write_text(dir / "dogs" / "z.pgm", "P2 3 2 255 0 0 0 0 0 0\n");
  CHECK_THROWS_AS(load_dataset(dir), DataError);

  CHECK_THROWS_AS(load_dataset(fresh_dir("empty")), DataError);
  const fs::path one = fresh_dir("one-class");
  write_text(one / "only" / "a.pgm", "P2 1 1 1 1\n");
  CHECK_THROWS_AS(load_dataset(one), DataError);
}

TEST_CASE("report formats") {
  CHECK(format_from_name("json") == ReportFormat::kJson);
  CHECK(format_from_name("csv") == ReportFormat::kCsv);
  CHECK(format_from_name("md") == ReportFormat::kMarkdown);
  CHECK(format_from_name("markdown") == ReportFormat::kMarkdown);
  CHECK(format_extension(ReportFormat::kMarkdown) == "md");
  CHECK_THROWS_AS(format_from_name("xml"), ConfigError);
  CHECK_THROWS_AS(report_from_json("{"), FormatError);
}

TEST_CASE("attack statistics") {
  const auto& world = testing::small_world();
  const Network net = world.trained.model.network();
  const LabeledSet targets = correctly_classified(net, world.dataset.test(), 10);
  REQUIRE(targets.size() == 10);
  AttackConfig cfg;
  std::vector<AdversarialExample> found;
  const AttackStats s = attack_statistics(net, targets, cfg, &found);
  CHECK(s.attempted == 10);
  CHECK(s.succeeded == found.size());
  CHECK(s.success_rate == doctest::Approx(10.0 * static_cast<double>(found.size())));
  if (!found.empty()) {
    CHECK(s.mean_linf <= cfg.epsilon + 1e-12);
    CHECK(s.mean_l2 >= s.mean_linf);
  }
  CHECK(attack_statistics(net, targets, cfg) == s);
}

TEST_CASE("guard episodes") {
  const auto& world = testing::small_world();
  const Network net = world.trained.model.network();
  const LabeledSet test = world.dataset.test();
  const LabeledSet targets = correctly_classified(net, test, 3);
  const auto episodes = guard_episodes(net, targets, test, AttackConfig{}, 5, 4, 10, 1);
  REQUIRE(episodes.size() == 9);
  CHECK(std::count_if(episodes.begin(), episodes.end(), [](const Episode& e) { return e.attack; }) ==
        5);
  for (const Episode& e : episodes) {
    if (e.attack) continue;
    CHECK(e.queries.size() == 10);
    for (std::size_t i = 0; i < e.queries.size(); ++i) {
      for (std::size_t j = 0; j < i; ++j) CHECK_FALSE(e.queries[i] == e.queries[j]);
    }
  }
  CHECK_THROWS_AS(guard_episodes(net, targets, test, AttackConfig{}, 1, 1, test.size() + 1, 1),
                  DataError);
}

TEST_CASE("small experiment runs end to end and reports deterministically") {
  const ExperimentConfig cfg = tiny_config();
  std::vector<std::string> stages;
  const ExperimentReport r = run_experiment(cfg, [&](const std::string& s) { stages.push_back(s); });
  CHECK_FALSE(stages.empty());
  CHECK(r.config == cfg);
  CHECK(r.seeds == std::vector<std::uint64_t>{1, 2});
  CHECK(r.train_size == 160);
  CHECK(r.test_size == 40);
  REQUIRE(r.defenses.size() == 4);
  for (const DefenseResult& d : r.defenses) {
    CHECK(d.recovery.size() == 2);
    CHECK(d.clean_accuracy.size() == 2);
    CHECK(d.new_adversarials.size() == 2);
    CHECK(d.mean_recovery == doctest::Approx((d.recovery[0] + d.recovery[1]) / 2));
  }
  CHECK(r.guard.attack_episodes == 4);
  CHECK(r.guard.benign_episodes == 4);

  const std::string json = emit_report(r, ReportFormat::kJson);
  CHECK(report_from_json(json) == r);
  CHECK(emit_report(report_from_json(json), ReportFormat::kJson) == json);

  const std::string csv = emit_report(r, ReportFormat::kCsv);
  CHECK(csv.rfind("defense,recovery_pct,", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
  const std::string md = emit_report(r, ReportFormat::kMarkdown);
  CHECK(md.find("| Defense | Recovery (%) |") != std::string::npos);

  CHECK(run_experiment(cfg) == r);

  const fs::path dir = fresh_dir("report");
  emit_report(r, ReportFormat::kCsv, dir / "report.csv");
  CHECK(io::read_file(dir / "report.csv") == csv);
}

TEST_CASE("pipeline errors name their stage") {
  ExperimentConfig cfg = tiny_config();
  cfg.dataset_path = testing::temp_path("nowhere").string();
  CHECK_THROWS_WITH_AS(run_experiment(cfg), doctest::Contains("dataset"), DataError);
}
