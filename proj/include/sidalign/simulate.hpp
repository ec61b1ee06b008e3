#pragma once

#include "sidalign/core.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace sidalign {

/// Latent-factor interaction generator with controllable collaborative drift.
///
/// Item base factors are hierarchical: a sum over `cluster_depth` levels of a
/// per-level cluster vector scaled by cluster_decay^level, plus small noise.
/// Users combine one level-0 cluster (their topic), a weighted fixed partner
/// topic and a weighted level-1 sub-cluster. A `migration_rate`
/// fraction of items drifts toward another topic:
///   factor_i(tau) = base_i + drift * tau * direction_i,
/// direction_i = speed_i * (topic_target - topic_own), speed_i ~ U(1 - speed_spread/2, 1 + speed_spread/2);
/// other items are static. Each event draws an item from
///   (1 - popularity_blend) * softmax(sharpness * <user, factor(tau)>)
///   + popularity_blend * zipf(tau)
/// where the Zipf ranking is cyclically shifted by drift * popularity_shift * tau
/// of the catalog. A fraction of items only appears after a random birth time.
/// Item factors are evaluated on `time_slices` equal slices of the timeline.
struct SimulationParams {
  std::uint64_t seed = 1;
  std::size_t n_users = 2000;
  std::size_t n_items = 3000;
  std::size_t n_events = 200000;
  std::size_t dim = 16;
  double drift = 0.6;
  double popularity_skew = 1.0;
  double popularity_blend = 0.2;
  double popularity_shift = 0.2;
  double sharpness = 8.0;
  double new_item_fraction = 0.0;
  std::size_t time_slices = 20;
  std::size_t clusters = 32;
  std::size_t cluster_depth = 2;
  /// Codes per level below the first; 0 reuses `clusters`.
  std::size_t subclusters = 8;
  double cluster_decay = 0.4;
  double item_noise = 0.05;
  double user_noise = 0.3;
  /// Weight of the user's partner topic and of their level-1 sub-cluster.
  double partner_weight = 0.8;
  double sub_weight = 0.5;
  double migration_rate = 0.3;
  double speed_spread = 0.4;
  /// Embeddings are averages of factor_i over the item's window, weighted by
  /// exp(recency * (tau - tau_end)); 0 gives the plain time average.
  double embedding_recency = 10.0;
  /// Std-dev of Gaussian noise added per embedding component, scaled by
  /// 1/sqrt(window interactions of the item). 0 disables it.
  double embedding_noise = 0.0;
};

/// Named parameter sets. Known: "benchmark-default", "benchmark-small".
SimulationParams simulation_preset(const std::string& name);

class SimulatedWorld {
 public:
  explicit SimulatedWorld(const SimulationParams& params);

  const SimulationParams& params() const { return params_; }
  /// Events ordered by timestamp; timestamps are 0..n_events-1.
  const std::vector<InteractionEvent>& events() const { return events_; }

  /// Embeddings of every item that has an event with timestamp <= last_timestamp,
  /// averaged over [birth, tau(last_timestamp)].
  ItemEmbeddingTable window_embeddings(std::int64_t last_timestamp) const;
  /// Window ending after the given fraction of the raw timeline.
  ItemEmbeddingTable window_embeddings_fraction(double fraction) const;

  const Eigen::MatrixXd& user_factors() const { return users_; }
  const Eigen::MatrixXd& item_base() const { return item_base_; }
  /// Zero rows for items that do not migrate.
  const Eigen::MatrixXd& item_direction() const { return item_direction_; }

 private:
  void generate_events();
  double tau_of(std::int64_t timestamp) const;

  SimulationParams params_;
  Eigen::MatrixXd users_;
  Eigen::MatrixXd item_base_;
  Eigen::MatrixXd item_direction_;
  std::vector<double> item_birth_;
  std::vector<std::size_t> popularity_rank_;
  std::vector<ItemId> user_ids_;
  std::vector<ItemId> item_ids_;
  std::vector<InteractionEvent> events_;
  std::vector<std::uint32_t> event_item_;  // item index per event
};

struct Benchmark {
  std::vector<InteractionEvent> events;
  ItemEmbeddingTable embeddings_old_window;   // first 80% of the timeline
  ItemEmbeddingTable embeddings_full_window;  // first 90% of the timeline
};

Benchmark gen_benchmark(const SimulationParams& params);

struct DriftReport {
  std::size_t shared_items = 0;
  /// Fraction of shared items whose token at position l changed.
  std::vector<double> position_churn;
  /// Fraction of shared items whose SID changed at any position.
  double item_change_rate = 0.0;
  /// Fraction of changed items whose old SID is restored by the best per-position
  /// relabeling (Hungarian alignment); 1 when nothing changed.
  double recoverable_fraction = 1.0;
  /// Per position, fraction of shared items whose token agrees after that relabeling.
  std::vector<double> aligned_agreement;
};

DriftReport drift_report(const SidAssignment& old_a, const SidAssignment& new_a);

}  // namespace sidalign
