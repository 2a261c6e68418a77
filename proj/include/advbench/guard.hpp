#pragma once

// Stateful prediction-similarity guard. Every query a user submits is kept in
// a bounded per-user history together with its distance to the most similar
// earlier query. Two counters grow with suspicious behaviour:
//
//   distance alarm    queries closer than the distance threshold to some
//                     earlier query of the same user
//   prediction alarm  queries whose predicted-class probability is strictly
//                     lower than that of their nearest earlier query
//
// adversarial probability = w_d * min(1, distance / T) + w_p * min(1, prediction / T)
//
// and once it reaches 0.5 the configured action replaces the response.

#include <cstddef>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "advbench/attacks.hpp"
#include "advbench/models.hpp"
#include "advbench/simmetrics.hpp"

namespace advbench {

enum class DistanceMetric { kMse, kPsnr, kSsim };
enum class GuardAction { kPassThrough, kFlipClass, kSecondBest };

std::string metric_name(DistanceMetric metric);
DistanceMetric metric_from_name(const std::string& name);
std::string action_name(GuardAction action);
GuardAction action_from_name(const std::string& name);

inline constexpr double kActionThreshold = 0.5;
// Images larger than this per side are block-averaged before being retained.
inline constexpr std::size_t kRetainedSide = 16;

struct GuardConfig {
  DistanceMetric metric = DistanceMetric::kSsim;
  double distance_threshold = 0.05;
  std::size_t alarm_threshold = 5;
  double distance_weight = 0.7;
  double prediction_weight = 0.3;
  GuardAction action = GuardAction::kFlipClass;
  std::size_t history_capacity = 512;
  SsimConfig ssim;

  // PSNR is unbounded and so cannot be thresholded as a distance.
  void validate() const;
  bool operator==(const GuardConfig&) const = default;
};

// Distance of a user's first query.
struct NoHistory {
  bool operator==(const NoHistory&) const = default;
};
using MinDistance = std::variant<NoHistory, double>;

struct QueryRecord {
  std::string user;
  std::uint64_t digest = 0;  // of the full-resolution pixels
  Shape shape;               // full-resolution shape
  Tensor retained;           // exact when both sides <= kRetainedSide
  PredictionValue prediction;
  MinDistance min_distance = NoHistory{};
  std::uint64_t timestamp = 0;  // per-user sequence number, starting at 1
  bool action_taken = false;

  bool operator==(const QueryRecord&) const = default;
};

struct UserHistory {
  std::deque<QueryRecord> records;
  std::size_t prediction_alarm = 0;
  std::size_t distance_alarm = 0;
  std::uint64_t last_timestamp = 0;

  bool operator==(const UserHistory&) const = default;
};

struct GuardState {
  std::map<std::string, UserHistory> users;

  const UserHistory& user(std::string_view id) const;
  bool operator==(const GuardState&) const = default;
};

std::uint64_t image_digest(const Tensor& pixels);
// Block-averages so that neither side exceeds kRetainedSide.
Tensor retained_pixels(const Tensor& pixels);
// Metric-dependent distance between two retained images.
double query_distance(const Tensor& a, const Tensor& b, const GuardConfig& config);

// Appends a record to `user`'s history, evicting the oldest beyond capacity,
// and updates both counters. Returns the new record.
const QueryRecord& record_query(GuardState& state, std::string_view user, const Image& image,
                                const PredictionValue& prediction, const GuardConfig& config);
void record_query(UserHistory& history, QueryRecord record, const GuardConfig& config);

double adversarial_probability(const UserHistory& history, const GuardConfig& config);
double adversarial_probability(const GuardState& state, std::string_view user,
                               const GuardConfig& config);

// The deceptive response for a genuine prediction under `action`.
PredictionValue apply_action(GuardAction action, const Tensor& logits,
                             const PredictionValue& genuine);

PredictionValue guarded_predict(GuardState& state, const Network& model, std::string_view user,
                                const Image& image, const GuardConfig& config);
PredictionValue guarded_predict(GuardState& state, const Classifier& model,
                                std::string_view user, const Image& image,
                                const GuardConfig& config);

// Per-user serialized guard: different users proceed concurrently.
class ConcurrentGuard {
 public:
  ConcurrentGuard(Network model, GuardConfig config);

  PredictionValue predict(std::string_view user, const Image& image);
  // Copy of one user's history; throws DataError for an unknown user.
  UserHistory history(std::string_view user) const;
  GuardState snapshot() const;

 private:
  struct Slot {
    std::mutex mutex;
    UserHistory history;
  };
  Slot& slot(std::string_view user);

  Network model_;
  GuardConfig config_;
  mutable std::shared_mutex users_mutex_;
  std::map<std::string, std::unique_ptr<Slot>, std::less<>> users_;
};

// Versioned state checkpoint: "ADVG" | u32 version | u32 user count | users...
std::string encode_guard_state(const GuardState& state);
GuardState decode_guard_state(std::string_view bytes);
void save_guard_state(const std::filesystem::path& path, const GuardState& state);
GuardState load_guard_state(const std::filesystem::path& path);

// A query stream replayed against a fresh guard user.
struct Episode {
  bool attack = false;
  std::vector<Tensor> queries;
};

// The query stream of one attack search, cut at the first query the model
// classifies differently from the original image.
Episode attack_episode(const Network& model, const Image& image, const AttackConfig& config,
                       std::optional<std::size_t> true_label = std::nullopt);

struct DetectionSummary {
  std::size_t attack_episodes = 0;
  std::size_t benign_episodes = 0;
  std::size_t detected = 0;
  std::size_t false_positives = 0;
  double detection_rate = 0.0;       // percent of attack episodes
  double false_positive_rate = 0.0;  // percent of benign episodes

  bool operator==(const DetectionSummary&) const = default;
};

// An attack episode is detected when the adversarial probability reaches the
// action threshold on any query before its last. A benign episode is a false
// positive when it reaches the threshold on any query.
bool episode_flagged(const Network& model, const Episode& episode, const GuardConfig& config);
DetectionSummary detection_rate(const Network& model, std::span<const Episode> episodes,
                                const GuardConfig& config);

}  // namespace advbench
