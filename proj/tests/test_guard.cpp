#include "doctest.h"

#include <thread>

#include "advbench/binary_io.hpp"
#include "advbench/guard.hpp"
#include "support.hpp"

using namespace advbench;
using testing::random_image;

namespace {

const Network& trained() {
  static const Network net = testing::small_world().trained.model.network();
  return net;
}

// Random stream over a small pool so that repeats and near-repeats happen.
std::vector<std::pair<std::string, Image>> random_stream(std::uint64_t seed, std::size_t n) {
  Rng rng(seed);
  std::vector<Image> pool;
  for (int i = 0; i < 4; ++i) pool.push_back(random_image({16, 16, 1}, rng));
  std::vector<std::pair<std::string, Image>> out;
  for (std::size_t i = 0; i < n; ++i) {
    const std::string user = "u" + std::to_string(rng.index(3));
    Tensor t = pool[rng.index(pool.size())].tensor();
    if (rng.index(2)) {
      for (std::size_t p = 0; p < t.size(); ++p) {
        t[p] = std::clamp(t[p] + rng.uniform(-0.01, 0.01), 0.0, 1.0);
      }
    }
    out.emplace_back(user, Image(std::move(t)));
  }
  return out;
}

Tensor jitter(const Tensor& x, Rng& rng, double amount) {
  Tensor t = x;
  for (std::size_t i = 0; i < t.size(); ++i) {
    t[i] = std::clamp(t[i] + rng.uniform(-amount, amount), 0.0, 1.0);
  }
  return t;
}

}  // namespace

TEST_CASE("names and config validation") {
  for (auto m : {DistanceMetric::kMse, DistanceMetric::kPsnr, DistanceMetric::kSsim}) {
    CHECK(metric_from_name(metric_name(m)) == m);
  }
  for (auto a : {GuardAction::kPassThrough, GuardAction::kFlipClass, GuardAction::kSecondBest}) {
    CHECK(action_from_name(action_name(a)) == a);
  }
  CHECK_THROWS_AS(metric_from_name("fsim"), ConfigError);
  GuardConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.metric = DistanceMetric::kPsnr;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = GuardConfig{};
  cfg.distance_weight = 0.9;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = GuardConfig{};
  cfg.alarm_threshold = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("retained pixels are exact up to 16 per side and block-averaged beyond") {
  Rng rng(1);
  const Tensor small = testing::random_tensor({16, 12, 1}, rng, 0, 1);
  CHECK(retained_pixels(small) == small);
  const Tensor big = testing::random_tensor({24, 24, 2}, rng, 0, 1);
  const Tensor r = retained_pixels(big);
  CHECK(r.shape() == Shape{12, 12, 2});
  const double mean = (big.at(0, 0, 1) + big.at(0, 1, 1) + big.at(1, 0, 1) + big.at(1, 1, 1)) / 4;
  CHECK(r.at(0, 0, 1) == doctest::Approx(mean));
  CHECK(image_digest(big) != image_digest(retained_pixels(big)));
}

TEST_CASE("first and repeated queries") {
  GuardState state;
  GuardConfig cfg;
  Rng rng(2);
  const Image x = random_image({16, 16, 1}, rng);
  const PredictionValue p{0, 0.9};
  const QueryRecord first = record_query(state, "alice", x, p, cfg);
  CHECK(std::holds_alternative<NoHistory>(first.min_distance));
  CHECK(first.timestamp == 1);
  CHECK(state.user("alice").distance_alarm == 0);
  CHECK(state.user("alice").prediction_alarm == 0);
  CHECK(adversarial_probability(state, "alice", cfg) == 0.0);

  const QueryRecord second = record_query(state, "alice", x, p, cfg);
  CHECK(std::get<double>(second.min_distance) == 0.0);
  CHECK(second.timestamp == 2);
  CHECK(state.user("alice").distance_alarm == 1);
  CHECK(state.user("alice").prediction_alarm == 0);

  CHECK_THROWS_AS(state.user("bob"), DataError);
  CHECK_THROWS_AS(adversarial_probability(state, "bob", cfg), DataError);
  CHECK_THROWS_AS(record_query(state, "alice", random_image({8, 8, 1}, rng), p, cfg), ShapeError);
}

TEST_CASE("prediction alarm compares against the nearest prior") {
  GuardState state;
  GuardConfig cfg;
  Rng rng(3);
  const Image a = random_image({16, 16, 1}, rng), b = random_image({16, 16, 1}, rng);
  record_query(state, "u", a, {0, 0.9}, cfg);
  // Only prior is a (0.9): lower -> alarm.
  record_query(state, "u", b, {0, 0.6}, cfg);
  CHECK(state.user("u").prediction_alarm == 1);
  // Nearest to a is a (0.9): lower -> alarm.
  record_query(state, "u", a, {0, 0.8}, cfg);
  CHECK(state.user("u").prediction_alarm == 2);
  // Nearest to b is b (0.6): higher -> no alarm.
  record_query(state, "u", b, {1, 0.7}, cfg);
  CHECK(state.user("u").prediction_alarm == 2);
  // Ties go to the most recent copy of a (0.8), not the first (0.9).
  record_query(state, "u", a, {0, 0.85}, cfg);
  CHECK(state.user("u").prediction_alarm == 2);
}

TEST_CASE("forty PGD iterates raise the distance alarm 39 times") {
  const Network& net = trained();
  const LabeledSet test = testing::small_world().dataset.test();
  const Image& start = test.images[0];
  const std::size_t label = test.labels[0];
  GuardState state;
  GuardConfig cfg;
  Tensor x = start.tensor();
  double worst = 1.0;
  Tensor previous;
  for (int it = 0; it < 40; ++it) {
    const Image img(x);
    if (it > 0) worst = std::min(worst, ssim(previous, x, cfg.ssim));
    record_query(state, "attacker", img, net.predict(img), cfg);
    previous = x;
    const Tensor g = net.loss_gradient(x, label).input;
    Tensor stepped = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
      stepped[i] += 0.01 * (g[i] > 0 ? 1.0 : (g[i] < 0 ? -1.0 : 0.0));
    }
    x = project(stepped, start.tensor(), 0.1);
  }
  MESSAGE("lowest consecutive ssim " << worst);
  CHECK(worst > 0.95);
  CHECK(state.user("attacker").distance_alarm == 39);
}

TEST_CASE("re-submitting one image never increases its min distance") {
  GuardState state;
  GuardConfig cfg;
  Rng rng(4);
  const Image target = random_image({16, 16, 1}, rng);
  double last = INFINITY;
  for (int i = 0; i < 10; ++i) {
    record_query(state, "u", random_image({16, 16, 1}, rng), {0, 0.5}, cfg);
    const double d = std::get<double>(record_query(state, "u", target, {0, 0.5}, cfg).min_distance);
    CHECK(d <= last);
    last = d;
  }
}

TEST_CASE("adversarial probability arithmetic") {
  GuardConfig cfg;
  UserHistory h;
  h.last_timestamp = 1;
  CHECK(adversarial_probability(h, cfg) == 0.0);
  h.distance_alarm = 5;
  h.prediction_alarm = 7;
  CHECK(adversarial_probability(h, cfg) == doctest::Approx(1.0));
  cfg.distance_weight = cfg.prediction_weight = 0.5;
  cfg.alarm_threshold = 4;
  h.distance_alarm = 2;
  h.prediction_alarm = 0;
  CHECK(adversarial_probability(h, cfg) == doctest::Approx(0.25));
  CHECK_THROWS_AS(adversarial_probability(UserHistory{}, cfg), DataError);
}

TEST_CASE("actions") {
  const PredictionValue genuine{1, 0.8};
  const Tensor two = Tensor::vector({-0.5, 0.9});
  CHECK(apply_action(GuardAction::kFlipClass, two, genuine) == PredictionValue{0, 0.8});
  CHECK(apply_action(GuardAction::kPassThrough, two, genuine) == genuine);
  const Tensor three = Tensor::vector({0.1, 3.0, 2.0});
  CHECK(apply_action(GuardAction::kSecondBest, three, genuine).class_id == 2);
  CHECK(apply_action(GuardAction::kFlipClass, three, PredictionValue{2, 0.5}).class_id == 0);
}

TEST_CASE("benign distinct images get the genuine prediction") {
  const Network& net = trained();
  const LabeledSet test = testing::small_world().dataset.test();
  GuardState state;
  GuardConfig cfg;
  for (std::size_t i = 0; i < 10; ++i) {
    CHECK(guarded_predict(state, net, "benign", test.images[i], cfg) == net.predict(test.images[i]));
  }
  CHECK(adversarial_probability(state, "benign", cfg) < kActionThreshold);
}

TEST_CASE("pass-through is observationally identical to predict") {
  const Network& net = trained();
  GuardConfig cfg;
  cfg.action = GuardAction::kPassThrough;
  GuardState state;
  bool marked = false;
  for (const auto& [user, img] : random_stream(5, 200)) {
    CHECK(guarded_predict(state, net, user, img, cfg) == net.predict(img));
    marked = marked || state.user(user).records.back().action_taken;
  }
  CHECK(marked);
}

TEST_CASE("flip-class deceives once the alarm is high") {
  const Network& net = trained();
  GuardConfig cfg;
  GuardState state;
  const Image x = testing::small_world().dataset.test().images[1];
  const PredictionValue genuine = net.predict(x);
  for (int i = 0; i < 4; ++i) CHECK(guarded_predict(state, net, "a", x, cfg) == genuine);
  // Fifth copy: four distance alarms, probability 0.7 * 4 / 5 = 0.56.
  const PredictionValue lie = guarded_predict(state, net, "a", x, cfg);
  CHECK(lie.class_id != genuine.class_id);
  CHECK(lie.probability == genuine.probability);
  CHECK(state.user("a").records.back().action_taken);
  CHECK(state.user("a").records.back().prediction == genuine);
}

TEST_CASE("users are independent and replays are deterministic") {
  const Network& net = trained();
  GuardConfig cfg;
  const auto stream = random_stream(6, 120);
  GuardState mixed;
  std::vector<PredictionValue> responses;
  for (const auto& [user, img] : stream) responses.push_back(guarded_predict(mixed, net, user, img, cfg));

  GuardState replay;
  std::vector<PredictionValue> again;
  for (const auto& [user, img] : stream) again.push_back(guarded_predict(replay, net, user, img, cfg));
  CHECK(responses == again);
  CHECK(mixed == replay);

  for (const auto& [name, history] : mixed.users) {
    GuardState alone;
    for (const auto& [user, img] : stream) {
      if (user == name) guarded_predict(alone, net, user, img, cfg);
    }
    CHECK(alone.user(name) == history);
  }
}

TEST_CASE("counters are monotone and survive eviction") {
  GuardConfig cfg;
  cfg.history_capacity = 3;
  GuardState state;
  Rng rng(7);
  const Image x = random_image({16, 16, 1}, rng);
  std::size_t last_d = 0, last_p = 0;
  for (int i = 0; i < 8; ++i) {
    record_query(state, "u", x, {0, 0.9 - 0.05 * i}, cfg);
    const UserHistory& h = state.user("u");
    CHECK(h.distance_alarm >= last_d);
    CHECK(h.prediction_alarm >= last_p);
    last_d = h.distance_alarm;
    last_p = h.prediction_alarm;
  }
  const UserHistory& h = state.user("u");
  CHECK(h.records.size() == 3);
  CHECK(h.records.front().timestamp == 6);
  CHECK(h.records.back().timestamp == 8);
  CHECK(h.distance_alarm == 7);
  CHECK(h.prediction_alarm == 7);
}

TEST_CASE("guard state files round-trip and reject corruption") {
  const Network& net = trained();
  GuardConfig cfg;
  GuardState state;
  for (const auto& [user, img] : random_stream(8, 30)) guarded_predict(state, net, user, img, cfg);
  const std::string bytes = encode_guard_state(state);
  CHECK(decode_guard_state(bytes) == state);

  const auto path = testing::temp_path("guard.advg");
  save_guard_state(path, state);
  CHECK(load_guard_state(path) == state);

  CHECK_THROWS_AS(decode_guard_state(bytes.substr(0, bytes.size() - 3)), FormatError);
  CHECK_THROWS_AS(decode_guard_state(bytes + "!"), FormatError);
  std::string magic = bytes;
  magic[1] = 'Z';
  CHECK_THROWS_AS(decode_guard_state(magic), FormatError);
  std::string version = bytes;
  version[4] = 7;
  CHECK_THROWS_AS(decode_guard_state(version), FormatError);

  // A user whose last timestamp precedes its records.
  GuardState bad = state;
  bad.users.begin()->second.last_timestamp = 0;
  CHECK_THROWS_WITH_AS(decode_guard_state(encode_guard_state(bad)),
                       doctest::Contains("out of order"), FormatError);
}

TEST_CASE("concurrent guard matches the sequential one per user") {
  const Network& net = trained();
  GuardConfig cfg;
  ConcurrentGuard guard(net, cfg);
  Rng rng(9);
  std::vector<std::vector<Image>> streams(4);
  for (auto& s : streams) {
    const Image base = random_image({16, 16, 1}, rng);
    for (int i = 0; i < 25; ++i) s.emplace_back(jitter(base.tensor(), rng, 0.01));
  }
  std::vector<std::thread> threads;
  for (std::size_t u = 0; u < streams.size(); ++u) {
    threads.emplace_back([&, u] {
      for (const Image& img : streams[u]) guard.predict("user" + std::to_string(u), img);
    });
  }
  for (auto& t : threads) t.join();

  for (std::size_t u = 0; u < streams.size(); ++u) {
    const std::string name = "user" + std::to_string(u);
    GuardState sequential;
    for (const Image& img : streams[u]) guarded_predict(sequential, net, name, img, cfg);
    CHECK(guard.history(name) == sequential.user(name));
  }
  CHECK(guard.snapshot().users.size() == 4);
  CHECK_THROWS_AS(guard.history("nobody"), DataError);
}

TEST_CASE("episode detection") {
  const Network& net = trained();
  GuardConfig cfg;
  Rng rng(10);
  std::vector<Episode> near;
  for (int e = 0; e < 5; ++e) {
    Episode ep{true, {}};
    const Image base = random_image({16, 16, 1}, rng);
    for (int i = 0; i < 40; ++i) ep.queries.push_back(jitter(base.tensor(), rng, 0.005));
    near.push_back(std::move(ep));
  }
  const DetectionSummary all = detection_rate(net, near, cfg);
  CHECK(all.detected == 5);
  CHECK(all.detection_rate == 100.0);

  std::vector<Episode> benign;
  for (int e = 0; e < 5; ++e) {
    Episode ep{false, {}};
    for (int i = 0; i < 10; ++i) ep.queries.push_back(random_image({16, 16, 1}, rng).tensor());
    benign.push_back(std::move(ep));
  }
  const DetectionSummary none = detection_rate(net, benign, cfg);
  CHECK(none.detection_rate == 0.0);
  CHECK(none.false_positives == 0);
  CHECK(none.false_positive_rate == 0.0);

  CHECK_THROWS_AS(detection_rate(net, {}, cfg), DataError);
  CHECK_THROWS_AS(episode_flagged(net, Episode{true, {}}, cfg), DataError);
  GuardConfig psnr = cfg;
  psnr.metric = DistanceMetric::kPsnr;
  CHECK_THROWS_AS(detection_rate(net, near, psnr), ConfigError);
}

TEST_CASE("attack episodes stop at the first misclassified query") {
  const Network& net = trained();
  const LabeledSet test = testing::small_world().dataset.test();
  AttackConfig cfg;
  cfg.random_start = false;
  std::size_t checked = 0;
  for (std::size_t i = 0; i < test.size() && checked < 5; ++i) {
    const Episode ep = attack_episode(net, test.images[i], cfg, test.labels[i]);
    REQUIRE_FALSE(ep.queries.empty());
    const std::size_t original = net.predict(test.images[i]).class_id;
    CHECK(ep.queries.front() == test.images[i].tensor());
    for (std::size_t q = 0; q + 1 < ep.queries.size(); ++q) {
      CHECK(prediction_from_logits(net.logits(ep.queries[q])).class_id == original);
    }
    if (find_adversarial(net, test.images[i], cfg, test.labels[i])) {
      CHECK(prediction_from_logits(net.logits(ep.queries.back())).class_id != original);
      ++checked;
    }
  }
  CHECK(checked > 0);
}
