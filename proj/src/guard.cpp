#include "advbench/guard.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "advbench/binary_io.hpp"

namespace advbench {
namespace {

constexpr std::string_view kMagic = "ADVG";
constexpr std::uint32_t kGuardFormatVersion = 1;

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

UserHistory& history_for(GuardState& state, std::string_view user) {
  auto it = state.users.find(std::string(user));
  if (it == state.users.end()) it = state.users.emplace(std::string(user), UserHistory{}).first;
  return it->second;
}

void write_tensor(io::Writer& w, const Tensor& t) {
  w.put<std::uint32_t>(static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d : t.shape()) w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
  for (std::size_t i = 0; i < t.size(); ++i) w.put<double>(t[i]);
}

Shape read_shape(io::Reader& r) {
  const auto rank = r.get<std::uint32_t>();
  if (rank == 0 || rank > 3) r.fail("bad image rank " + std::to_string(rank));
  Shape shape;
  for (std::uint32_t i = 0; i < rank; ++i) {
    const auto d = r.get<std::uint32_t>();
    if (d == 0 || d > 65536) r.fail("bad image extent");
    shape.push_back(d);
  }
  return shape;
}

Tensor read_tensor(io::Reader& r) {
  Shape shape = read_shape(r);
  Tensor t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = r.get<double>();
  return t;
}

}  // namespace

std::string metric_name(DistanceMetric metric) {
  switch (metric) {
    case DistanceMetric::kMse: return "mse";
    case DistanceMetric::kPsnr: return "psnr";
    case DistanceMetric::kSsim: return "ssim";
  }
  return "unknown";
}

DistanceMetric metric_from_name(const std::string& name) {
  const std::string s = lower(name);
  if (s == "mse") return DistanceMetric::kMse;
  if (s == "psnr") return DistanceMetric::kPsnr;
  if (s == "ssim") return DistanceMetric::kSsim;
  throw ConfigError("unknown metric '" + name + "' (expected mse, psnr or ssim)");
}

std::string action_name(GuardAction action) {
  switch (action) {
    case GuardAction::kPassThrough: return "pass-through";
    case GuardAction::kFlipClass: return "flip-class";
    case GuardAction::kSecondBest: return "second-best";
  }
  return "unknown";
}

GuardAction action_from_name(const std::string& name) {
  std::string s = lower(name);
  std::erase_if(s, [](char c) { return c == '-' || c == '_'; });
  if (s == "passthrough") return GuardAction::kPassThrough;
  if (s == "flipclass") return GuardAction::kFlipClass;
  if (s == "secondbest") return GuardAction::kSecondBest;
  throw ConfigError("unknown guard action '" + name +
                    "' (expected pass-through, flip-class or second-best)");
}

void GuardConfig::validate() const {
  if (metric == DistanceMetric::kPsnr) {
    throw ConfigError("psnr is unbounded and cannot serve as a guard distance");
  }
  if (!(distance_threshold > 0.0) || !std::isfinite(distance_threshold)) {
    throw ConfigError("guard distance threshold must be positive");
  }
  if (alarm_threshold == 0) throw ConfigError("guard alarm threshold must be positive");
  if (!(distance_weight >= 0.0) || !(prediction_weight >= 0.0) ||
      std::abs(distance_weight + prediction_weight - 1.0) > 1e-9) {
    throw ConfigError("guard probability weights must be non-negative and sum to 1");
  }
  if (history_capacity == 0) throw ConfigError("guard history capacity must be positive");
  ssim.validate();
}

const UserHistory& GuardState::user(std::string_view id) const {
  auto it = users.find(std::string(id));
  if (it == users.end()) throw DataError("unknown guard user '" + std::string(id) + "'");
  return it->second;
}

std::uint64_t image_digest(const Tensor& pixels) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (std::size_t d : pixels.shape()) {
    const auto d64 = static_cast<std::uint64_t>(d);
    mix(&d64, sizeof d64);
  }
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    const double v = pixels[i];
    mix(&v, sizeof v);
  }
  return h;
}

Tensor retained_pixels(const Tensor& pixels) {
  if (pixels.rank() != 3) throw ShapeError("guard expects H x W x C images");
  const std::size_t h = pixels.dim(0), w = pixels.dim(1), c = pixels.dim(2);
  const std::size_t factor = (std::max(h, w) + kRetainedSide - 1) / kRetainedSide;
  if (factor <= 1) return pixels;
  const std::size_t oh = (h + factor - 1) / factor, ow = (w + factor - 1) / factor;
  Tensor out(Shape{oh, ow, c});
  for (std::size_t i = 0; i < oh; ++i) {
    for (std::size_t j = 0; j < ow; ++j) {
      const std::size_t i1 = std::min(h, (i + 1) * factor), j1 = std::min(w, (j + 1) * factor);
      for (std::size_t k = 0; k < c; ++k) {
        double sum = 0.0;
        for (std::size_t y = i * factor; y < i1; ++y) {
          for (std::size_t x = j * factor; x < j1; ++x) sum += pixels.at(y, x, k);
        }
        out.at(i, j, k) = sum / static_cast<double>((i1 - i * factor) * (j1 - j * factor));
      }
    }
  }
  return out;
}

double query_distance(const Tensor& a, const Tensor& b, const GuardConfig& config) {
  if (a.shape() != b.shape()) {
    throw ShapeError("guard cannot compare " + shape_string(a.shape()) + " with " +
                     shape_string(b.shape()));
  }
  switch (config.metric) {
    case DistanceMetric::kMse: return mse(a, b);
    case DistanceMetric::kSsim: {
      if (a == b) return 0.0;
      SsimConfig s = config.ssim;
      s.window = std::max<std::size_t>(2, std::min({s.window, a.dim(0), a.dim(1)}));
      return 1.0 - ssim(a, b, s);
    }
    case DistanceMetric::kPsnr: break;
  }
  throw ConfigError("psnr is unbounded and cannot serve as a guard distance");
}

void record_query(UserHistory& history, QueryRecord record, const GuardConfig& config) {
  const QueryRecord* nearest = nullptr;
  double best = 0.0;
  for (const QueryRecord& prior : history.records) {
    if (prior.shape != record.shape) {
      throw ShapeError("guard user '" + record.user + "' switched image shape from " +
                       shape_string(prior.shape) + " to " + shape_string(record.shape));
    }
    const double d = prior.digest == record.digest && prior.retained == record.retained
                         ? 0.0
                         : query_distance(record.retained, prior.retained, config);
    // Ties go to the most recent query.
    if (!nearest || d <= best) {
      nearest = &prior;
      best = d;
    }
  }
  if (nearest) {
    record.min_distance = best;
    if (best < config.distance_threshold) ++history.distance_alarm;
    if (record.prediction.probability < nearest->prediction.probability) {
      ++history.prediction_alarm;
    }
  } else {
    record.min_distance = NoHistory{};
  }
  record.timestamp = ++history.last_timestamp;
  history.records.push_back(std::move(record));
  while (history.records.size() > config.history_capacity) history.records.pop_front();
}

const QueryRecord& record_query(GuardState& state, std::string_view user, const Image& image,
                                const PredictionValue& prediction, const GuardConfig& config) {
  config.validate();
  QueryRecord record;
  record.user = std::string(user);
  record.digest = image_digest(image.tensor());
  record.shape = image.shape();
  record.retained = retained_pixels(image.tensor());
  record.prediction = prediction;
  UserHistory& history = history_for(state, user);
  record_query(history, std::move(record), config);
  return history.records.back();
}

double adversarial_probability(const UserHistory& history, const GuardConfig& config) {
  if (history.records.empty() && history.last_timestamp == 0) {
    throw DataError("adversarial probability needs at least one query");
  }
  const auto t = static_cast<double>(config.alarm_threshold);
  return config.distance_weight * std::min(1.0, static_cast<double>(history.distance_alarm) / t) +
         config.prediction_weight *
             std::min(1.0, static_cast<double>(history.prediction_alarm) / t);
}

double adversarial_probability(const GuardState& state, std::string_view user,
                               const GuardConfig& config) {
  return adversarial_probability(state.user(user), config);
}

PredictionValue apply_action(GuardAction action, const Tensor& logits,
                             const PredictionValue& genuine) {
  const std::size_t k = logits.size();
  switch (action) {
    case GuardAction::kPassThrough: return genuine;
    case GuardAction::kFlipClass:
      return PredictionValue{(genuine.class_id + 1) % k, genuine.probability};
    case GuardAction::kSecondBest: {
      std::size_t runner = genuine.class_id == 0 ? 1 : 0;
      for (std::size_t i = 0; i < k; ++i) {
        if (i != genuine.class_id && logits[i] > logits[runner]) runner = i;
      }
      return PredictionValue{runner, genuine.probability};
    }
  }
  return genuine;
}

namespace {

PredictionValue respond(UserHistory& history, const Network& model, std::string_view user,
                        const Image& image, const GuardConfig& config) {
  const Tensor logits = model.logits(image.tensor());
  const PredictionValue genuine = prediction_from_logits(logits);
  QueryRecord record;
  record.user = std::string(user);
  record.digest = image_digest(image.tensor());
  record.shape = image.shape();
  record.retained = retained_pixels(image.tensor());
  record.prediction = genuine;
  record_query(history, std::move(record), config);
  if (adversarial_probability(history, config) < kActionThreshold) return genuine;
  history.records.back().action_taken = true;
  return apply_action(config.action, logits, genuine);
}

}  // namespace

PredictionValue guarded_predict(GuardState& state, const Network& model, std::string_view user,
                                const Image& image, const GuardConfig& config) {
  config.validate();
  return respond(history_for(state, user), model, user, image, config);
}

PredictionValue guarded_predict(GuardState& state, const Classifier& model,
                                std::string_view user, const Image& image,
                                const GuardConfig& config) {
  return guarded_predict(state, model.network(), user, image, config);
}

ConcurrentGuard::ConcurrentGuard(Network model, GuardConfig config)
    : model_(std::move(model)), config_(std::move(config)) {
  config_.validate();
}

ConcurrentGuard::Slot& ConcurrentGuard::slot(std::string_view user) {
  {
    std::shared_lock lock(users_mutex_);
    auto it = users_.find(user);
    if (it != users_.end()) return *it->second;
  }
  std::unique_lock lock(users_mutex_);
  auto [it, inserted] = users_.try_emplace(std::string(user), nullptr);
  if (inserted) it->second = std::make_unique<Slot>();
  return *it->second;
}

PredictionValue ConcurrentGuard::predict(std::string_view user, const Image& image) {
  Slot& s = slot(user);
  std::lock_guard lock(s.mutex);
  return respond(s.history, model_, user, image, config_);
}

UserHistory ConcurrentGuard::history(std::string_view user) const {
  std::shared_lock lock(users_mutex_);
  auto it = users_.find(user);
  if (it == users_.end()) throw DataError("unknown guard user '" + std::string(user) + "'");
  std::lock_guard slot_lock(it->second->mutex);
  return it->second->history;
}

GuardState ConcurrentGuard::snapshot() const {
  std::shared_lock lock(users_mutex_);
  GuardState state;
  for (const auto& [user, s] : users_) {
    std::lock_guard slot_lock(s->mutex);
    state.users.emplace(user, s->history);
  }
  return state;
}

std::string encode_guard_state(const GuardState& state) {
  io::Writer w;
  w.raw(kMagic);
  w.put<std::uint32_t>(kGuardFormatVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(state.users.size()));
  for (const auto& [user, h] : state.users) {
    w.str(user);
    w.put<std::uint64_t>(h.prediction_alarm);
    w.put<std::uint64_t>(h.distance_alarm);
    w.put<std::uint64_t>(h.last_timestamp);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(h.records.size()));
    for (const QueryRecord& r : h.records) {
      w.put<std::uint64_t>(r.digest);
      w.put<std::uint32_t>(static_cast<std::uint32_t>(r.shape.size()));
      for (std::size_t d : r.shape) w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
      write_tensor(w, r.retained);
      w.put<std::uint32_t>(static_cast<std::uint32_t>(r.prediction.class_id));
      w.put<double>(r.prediction.probability);
      const auto* d = std::get_if<double>(&r.min_distance);
      w.put<std::uint8_t>(d ? 1 : 0);
      w.put<double>(d ? *d : 0.0);
      w.put<std::uint64_t>(r.timestamp);
      w.put<std::uint8_t>(r.action_taken ? 1 : 0);
    }
  }
  return w.bytes();
}

GuardState decode_guard_state(std::string_view bytes) {
  io::Reader r(bytes);
  if (r.raw(std::min<std::size_t>(bytes.size(), 4)) != kMagic) {
    throw FormatError("not a guard state file (bad magic bytes)");
  }
  const auto version = r.get<std::uint32_t>();
  if (version != kGuardFormatVersion) {
    throw FormatError("unsupported guard state version " + std::to_string(version));
  }
  GuardState state;
  const auto users = r.get<std::uint32_t>();
  for (std::uint32_t u = 0; u < users; ++u) {
    const std::string user = r.str();
    UserHistory h;
    h.prediction_alarm = r.get<std::uint64_t>();
    h.distance_alarm = r.get<std::uint64_t>();
    h.last_timestamp = r.get<std::uint64_t>();
    const auto count = r.get<std::uint32_t>();
    std::uint64_t previous = 0;
    for (std::uint32_t i = 0; i < count; ++i) {
      QueryRecord rec;
      rec.user = user;
      rec.digest = r.get<std::uint64_t>();
      rec.shape = read_shape(r);
      rec.retained = read_tensor(r);
      rec.prediction.class_id = r.get<std::uint32_t>();
      rec.prediction.probability = r.get<double>();
      const auto has_distance = r.get<std::uint8_t>();
      const double distance = r.get<double>();
      if (has_distance > 1) r.fail("bad distance flag");
      if (has_distance) {
        rec.min_distance = distance;
      }
      rec.timestamp = r.get<std::uint64_t>();
      if (rec.timestamp <= previous || rec.timestamp > h.last_timestamp) {
        r.fail("guard timestamps out of order");
      }
      previous = rec.timestamp;
      const auto flag = r.get<std::uint8_t>();
      if (flag > 1) r.fail("bad action flag");
      rec.action_taken = flag == 1;
      h.records.push_back(std::move(rec));
    }
    if (!state.users.emplace(user, std::move(h)).second) r.fail("duplicate guard user");
  }
  if (!r.at_end()) r.fail("trailing bytes after guard state");
  return state;
}

void save_guard_state(const std::filesystem::path& path, const GuardState& state) {
  io::write_file(path, encode_guard_state(state));
}

GuardState load_guard_state(const std::filesystem::path& path) {
  return decode_guard_state(io::read_file(path));
}

Episode attack_episode(const Network& model, const Image& image, const AttackConfig& config,
                       std::optional<std::size_t> true_label) {
  Episode episode{true, {}};
  const std::size_t original = model.predict(image).class_id;
  bool done = false;
  find_adversarial(model, image, config, true_label, [&](const Tensor& query) {
    if (done) return;
    episode.queries.push_back(query);
    if (prediction_from_logits(model.logits(query)).class_id != original) done = true;
  });
  return episode;
}

bool episode_flagged(const Network& model, const Episode& episode, const GuardConfig& config) {
  config.validate();
  if (episode.queries.empty()) throw DataError("episode has no queries");
  UserHistory history;
  const std::size_t considered =
      episode.attack ? episode.queries.size() - 1 : episode.queries.size();
  for (std::size_t i = 0; i < considered; ++i) {
    respond(history, model, "episode", Image(episode.queries[i]), config);
    if (history.records.back().action_taken) return true;
  }
  return false;
}

DetectionSummary detection_rate(const Network& model, std::span<const Episode> episodes,
                                const GuardConfig& config) {
  if (episodes.empty()) throw DataError("detection rate needs at least one episode");
  DetectionSummary s;
  for (const Episode& e : episodes) {
    const bool flagged = episode_flagged(model, e, config);
    if (e.attack) {
      ++s.attack_episodes;
      if (flagged) ++s.detected;
    } else {
      ++s.benign_episodes;
      if (flagged) ++s.false_positives;
    }
  }
  auto pct = [](std::size_t a, std::size_t b) {
    return b ? 100.0 * static_cast<double>(a) / static_cast<double>(b) : 0.0;
  };
  s.detection_rate = pct(s.detected, s.attack_episodes);
  s.false_positive_rate = pct(s.false_positives, s.benign_episodes);
  return s;
}

}  // namespace advbench
