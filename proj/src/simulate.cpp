#include "sidalign/simulate.hpp"

#include "sidalign/alignment.hpp"
#include "sidalign/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

namespace sidalign {

namespace {

// RNG stream ids; one independent stream per purpose.
enum Stream : std::uint64_t {
  kUserFactors = 1,
  kItemBase = 2,
  kItemDirection = 3,
  kItemBirth = 4,
  kPopularity = 5,
  kActivity = 6,
  kSlotUsers = 7,
  kEmbeddingNoise = 8,
  kClusterCodes = 9,
  kItemNoise = 10,
  kUserNoise = 11,
  kEventDraws = 1ULL << 32,
};

std::string padded(char prefix, std::size_t value, std::size_t count) {
  const int width = static_cast<int>(std::to_string(std::max<std::size_t>(count, 1) - 1).size());
  char buf[32];
  std::snprintf(buf, sizeof buf, "%c%0*zu", prefix, width, value);
  return buf;
}

Eigen::MatrixXd gaussian_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed, std::uint64_t stream) {
  CounterRng rng(seed, stream);
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  const double scale = 1.0 / std::sqrt(static_cast<double>(cols));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = rng.normal() * scale;
  }
  return m;
}

/// Mean of tau on [a, b] under weight exp(lambda * tau).
double weighted_mean_time(double a, double b, double lambda) {
  const double span = b - a;
  if (span <= 0.0) return b;
  const double x = lambda * span;
  if (std::abs(x) < 1e-8) return 0.5 * (a + b);
  return b - 1.0 / lambda + span / std::expm1(x);
}

}  // namespace

SimulationParams simulation_preset(const std::string& name) {
  SimulationParams p;
  if (name == "benchmark-default") return p;
  if (name == "benchmark-small") {
    p.n_users = 300;
    p.n_items = 400;
    p.n_events = 20000;
    p.dim = 8;
    p.clusters = 8;
    p.subclusters = 4;
    return p;
  }
  throw ValidationError("unknown simulation preset '" + name + "'");
}

SimulatedWorld::SimulatedWorld(const SimulationParams& params) : params_(params) {
  if (params_.n_users == 0 || params_.n_items == 0 || params_.n_events == 0 || params_.dim == 0)
    throw ValidationError("simulation sizes must be positive");
  if (params_.drift < 0.0 || !std::isfinite(params_.drift)) throw ValidationError("drift strength must be >= 0");
  if (params_.time_slices == 0) throw ValidationError("time_slices must be >= 1");
  if (params_.popularity_blend < 0.0 || params_.popularity_blend > 1.0)
    throw ValidationError("popularity_blend must lie in [0, 1]");
  if (params_.new_item_fraction < 0.0 || params_.new_item_fraction > 1.0)
    throw ValidationError("new_item_fraction must lie in [0, 1]");

  if (params_.clusters < 2 || params_.cluster_depth == 0) throw ValidationError("need >= 2 clusters and depth >= 1");
  if (params_.subclusters == 1) throw ValidationError("subclusters must be 0 or >= 2");
  if (params_.migration_rate < 0.0 || params_.migration_rate > 1.0)
    throw ValidationError("migration_rate must lie in [0, 1]");
  if (params_.speed_spread < 0.0 || params_.speed_spread >= 2.0) throw ValidationError("speed_spread must lie in [0, 2)");

  const std::uint64_t seed = params_.seed;
  const std::size_t n_items = params_.n_items;
  const std::size_t clusters = params_.clusters;
  std::vector<Eigen::MatrixXd> codes;
  const std::size_t subclusters = params_.subclusters == 0 ? clusters : params_.subclusters;
  for (std::size_t l = 0; l < params_.cluster_depth; ++l)
    codes.push_back(gaussian_matrix(l == 0 ? clusters : subclusters, params_.dim, seed, kClusterCodes + 16 * l));

  CounterRng code_rng(seed, kItemBase);
  item_base_ = params_.item_noise * gaussian_matrix(n_items, params_.dim, seed, kItemNoise);
  item_direction_ = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n_items), static_cast<Eigen::Index>(params_.dim));
  CounterRng move_rng(seed, kItemDirection);
  for (std::size_t i = 0; i < n_items; ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    std::size_t topic = 0;
    double scale = 1.0;
    for (std::size_t l = 0; l < params_.cluster_depth; ++l) {
      const auto c = static_cast<Eigen::Index>(code_rng.below(static_cast<std::uint64_t>(codes[l].rows())));
      if (l == 0) topic = static_cast<std::size_t>(c);
      item_base_.row(row) += scale * codes[l].row(c);
      scale *= params_.cluster_decay;
    }
    const double migrates = move_rng.uniform();
    const double speed = 1.0 + params_.speed_spread * (move_rng.uniform() - 0.5);
    const std::size_t target = (topic + 1 + move_rng.below(clusters - 1)) % clusters;
    if (migrates < params_.migration_rate)
      item_direction_.row(row) = speed * (codes[0].row(static_cast<Eigen::Index>(target)) -
                                           codes[0].row(static_cast<Eigen::Index>(topic)));
  }

  // Every topic has a fixed partner topic that its users also like.
  CounterRng topic_rng(seed, kUserFactors);
  std::vector<std::size_t> partner(clusters);
  std::iota(partner.begin(), partner.end(), 0);
  for (std::size_t i = clusters; i > 1; --i) std::swap(partner[i - 1], partner[topic_rng.below(i)]);
  for (std::size_t t = 0; t < clusters; ++t)
    if (partner[t] == t) partner[t] = (t + 1) % clusters;
  users_ = params_.user_noise * gaussian_matrix(params_.n_users, params_.dim, seed, kUserNoise);
  for (std::size_t u = 0; u < params_.n_users; ++u) {
    const auto row = static_cast<Eigen::Index>(u);
    const std::size_t topic = topic_rng.below(clusters);
    users_.row(row) += codes[0].row(static_cast<Eigen::Index>(topic)) +
                       params_.partner_weight * codes[0].row(static_cast<Eigen::Index>(partner[topic]));
    if (codes.size() > 1)
      users_.row(row) += params_.sub_weight * codes[1].row(static_cast<Eigen::Index>(topic_rng.below(subclusters)));
  }

  CounterRng birth_rng(seed, kItemBirth);
  item_birth_.assign(params_.n_items, 0.0);
  for (auto& birth : item_birth_) {
    const double is_new = birth_rng.uniform();
    const double when = birth_rng.uniform();
    if (is_new < params_.new_item_fraction) birth = 0.1 + 0.75 * when;
  }

  popularity_rank_.resize(params_.n_items);
  std::iota(popularity_rank_.begin(), popularity_rank_.end(), 0);
  CounterRng perm_rng(seed, kPopularity);
  for (std::size_t i = params_.n_items; i > 1; --i) std::swap(popularity_rank_[i - 1], popularity_rank_[perm_rng.below(i)]);

  for (std::size_t u = 0; u < params_.n_users; ++u) user_ids_.push_back(padded('u', u, params_.n_users));
  for (std::size_t i = 0; i < params_.n_items; ++i) item_ids_.push_back(padded('i', i, params_.n_items));
  generate_events();
}

double SimulatedWorld::tau_of(std::int64_t timestamp) const {
  return static_cast<double>(timestamp) / static_cast<double>(params_.n_events);
}

void SimulatedWorld::generate_events() {
  const std::size_t n_users = params_.n_users;
  const std::size_t n_items = params_.n_items;
  const std::size_t n_events = params_.n_events;
  const std::uint64_t seed = params_.seed;

  CounterRng activity_rng(seed, kActivity);
  std::vector<double> activity_cdf(n_users);
  double acc = 0.0;
  for (std::size_t u = 0; u < n_users; ++u) {
    acc += std::exp(0.5 * activity_rng.normal());
    activity_cdf[u] = acc;
  }
  CounterRng slot_rng(seed, kSlotUsers);
  std::vector<std::uint32_t> slot_user(n_events);
  for (auto& user : slot_user) {
    const double x = slot_rng.uniform() * acc;
    user = static_cast<std::uint32_t>(
        std::min<std::size_t>(std::upper_bound(activity_cdf.begin(), activity_cdf.end(), x) - activity_cdf.begin(),
                              n_users - 1));
  }

  event_item_.assign(n_events, 0);
  const std::size_t slices = params_.time_slices;
  std::vector<double> zipf(n_items), cdf(n_items);
  std::vector<std::vector<std::size_t>> slots_of_user(n_users);
  for (std::size_t s = 0; s < slices; ++s) {
    const std::size_t lo = n_events * s / slices;
    const std::size_t hi = n_events * (s + 1) / slices;
    if (lo == hi) continue;
    const double tau = (static_cast<double>(s) + 0.5) / static_cast<double>(slices);

    const Eigen::MatrixXd factors = item_base_ + (params_.drift * tau) * item_direction_;
    const auto shift = static_cast<std::size_t>(
        std::floor(params_.drift * params_.popularity_shift * tau * static_cast<double>(n_items)));
    std::vector<char> born(n_items);
    double zipf_total = 0.0;
    for (std::size_t i = 0; i < n_items; ++i) {
      born[i] = item_birth_[i] <= tau;
      const std::size_t rank = (popularity_rank_[i] + shift) % n_items;
      zipf[i] = born[i] ? std::pow(static_cast<double>(rank + 1), -params_.popularity_skew) : 0.0;
      zipf_total += zipf[i];
    }
    for (auto& z : zipf) z *= params_.popularity_blend / zipf_total;

    for (auto& v : slots_of_user) v.clear();
    std::vector<std::uint32_t> active;
    for (std::size_t k = lo; k < hi; ++k) {
      auto& v = slots_of_user[slot_user[k]];
      if (v.empty()) active.push_back(slot_user[k]);
      v.push_back(k);
    }
    std::sort(active.begin(), active.end());

    Eigen::MatrixXd active_users(static_cast<Eigen::Index>(active.size()), users_.cols());
    for (std::size_t a = 0; a < active.size(); ++a)
      active_users.row(static_cast<Eigen::Index>(a)) = users_.row(active[a]);
    const Eigen::MatrixXd logits = params_.sharpness * (active_users * factors.transpose());

    Eigen::ArrayXd weights(static_cast<Eigen::Index>(n_items));
    for (std::size_t a = 0; a < active.size(); ++a) {
      weights = logits.row(static_cast<Eigen::Index>(a)).transpose().array();
      for (std::size_t i = 0; i < n_items; ++i) {
        if (!born[i]) weights[static_cast<Eigen::Index>(i)] = -std::numeric_limits<double>::infinity();
      }
      weights = (weights - weights.maxCoeff()).exp();
      const double soft_scale = (1.0 - params_.popularity_blend) / weights.sum();
      double running = 0.0;
      for (std::size_t i = 0; i < n_items; ++i) {
        running += soft_scale * weights[static_cast<Eigen::Index>(i)] + zipf[i];
        cdf[i] = running;
      }
      for (std::size_t k : slots_of_user[active[a]]) {
        CounterRng draw(seed, kEventDraws + k);
        const double x = draw.uniform() * running;
        auto pick = static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), x) - cdf.begin());
        pick = std::min(pick, n_items - 1);
        while (!born[pick] && pick > 0) --pick;
        event_item_[k] = static_cast<std::uint32_t>(pick);
      }
    }
  }

  events_.reserve(n_events);
  for (std::size_t k = 0; k < n_events; ++k)
    events_.push_back({user_ids_[slot_user[k]], item_ids_[event_item_[k]], static_cast<std::int64_t>(k)});
}

ItemEmbeddingTable SimulatedWorld::window_embeddings(std::int64_t last_timestamp) const {
  const std::size_t n_items = params_.n_items;
  std::vector<std::size_t> seen(n_items, 0);
  const auto limit = std::min<std::int64_t>(last_timestamp, static_cast<std::int64_t>(events_.size()) - 1);
  for (std::int64_t k = 0; k <= limit; ++k) ++seen[event_item_[static_cast<std::size_t>(k)]];

  const double tau_end = tau_of(limit);
  std::vector<ItemId> ids;
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < n_items; ++i) {
    if (seen[i] > 0) {
      ids.push_back(item_ids_[i]);
      rows.push_back(i);
    }
  }
  ItemEmbeddingTable::Matrix vectors(static_cast<Eigen::Index>(rows.size()), item_base_.cols());
  CounterRng noise(params_.seed, kEmbeddingNoise + static_cast<std::uint64_t>(limit + 1) * 16);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const std::size_t i = rows[r];
    const double start = std::min(item_birth_[i], tau_end);
    const double mean_tau = weighted_mean_time(start, tau_end, params_.embedding_recency);
    auto out = vectors.row(static_cast<Eigen::Index>(r));
    out = item_base_.row(static_cast<Eigen::Index>(i)) +
          (params_.drift * mean_tau) * item_direction_.row(static_cast<Eigen::Index>(i));
    if (params_.embedding_noise > 0.0) {
      const double scale = params_.embedding_noise / std::sqrt(static_cast<double>(seen[i]));
      for (Eigen::Index c = 0; c < out.size(); ++c) out(c) += scale * noise.normal();
    }
  }
  return ItemEmbeddingTable(std::move(ids), std::move(vectors));
}

ItemEmbeddingTable SimulatedWorld::window_embeddings_fraction(double fraction) const {
  const auto last = static_cast<std::int64_t>(std::ceil(fraction * static_cast<double>(params_.n_events))) - 1;
  return window_embeddings(last);
}

Benchmark gen_benchmark(const SimulationParams& params) {
  SimulatedWorld world(params);
  return {world.events(), world.window_embeddings_fraction(0.8), world.window_embeddings_fraction(0.9)};
}

DriftReport drift_report(const SidAssignment& old_a, const SidAssignment& new_a) {
  const TokenMapping mapping = align(old_a, new_a, Solver::Hungarian);  // validates specs and overlap
  const SidAssignment aligned = rewrite(new_a, mapping);
  const std::size_t num_positions = old_a.spec.num_positions();

  DriftReport report;
  report.position_churn.assign(num_positions, 0.0);
  report.aligned_agreement.assign(num_positions, 0.0);
  std::size_t changed = 0, recovered = 0;
  for (const auto& [item, z_old] : old_a.entries) {
    const SemanticId* z_new = new_a.find(item);
    if (!z_new) continue;
    ++report.shared_items;
    const SemanticId& z_aligned = aligned.at(item);
    for (std::size_t l = 0; l < num_positions; ++l) {
      if ((*z_new)[l] != z_old[l]) report.position_churn[l] += 1.0;
      if (z_aligned[l] == z_old[l]) report.aligned_agreement[l] += 1.0;
    }
    if (*z_new != z_old) {
      ++changed;
      if (z_aligned == z_old) ++recovered;
    }
  }
  const auto shared = static_cast<double>(report.shared_items);
  for (std::size_t l = 0; l < num_positions; ++l) {
    report.position_churn[l] /= shared;
    report.aligned_agreement[l] /= shared;
  }
  report.item_change_rate = static_cast<double>(changed) / shared;
  report.recoverable_fraction = changed == 0 ? 1.0 : static_cast<double>(recovered) / static_cast<double>(changed);
  return report;
}

}  // namespace sidalign
