#include "sidalign/quantizer.hpp"

#include "sidalign/parallel.hpp"
#include "sidalign/rng.hpp"

#include <cmath>
#include <limits>

namespace sidalign {

namespace {

using Matrix = RqCodebooks::Matrix;

// RNG stream of restart r at level l is l + r * kRestartStride.
constexpr std::uint64_t kRestartStride = 1ULL << 20;

struct Nearest {
  Eigen::Index index;
  double squared_distance;
};

template <typename Row>
Nearest nearest_centroid(const Matrix& centroids, const Row& x) {
  Nearest best{0, (centroids.row(0) - x).squaredNorm()};
  for (Eigen::Index k = 1; k < centroids.rows(); ++k) {
    const double d = (centroids.row(k) - x).squaredNorm();
    if (d < best.squared_distance) best = {k, d};
  }
  return best;
}

/// D^2 draw: index i with probability d2[i] / total, skipping zero-mass points.
Eigen::Index sample_d2(const Eigen::VectorXd& d2, double total, CounterRng& rng) {
  const Eigen::Index n = d2.size();
  const double target = rng.uniform() * total;
  double cumulative = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    cumulative += d2[i];
    if (d2[i] > 0.0 && cumulative > target) return i;
  }
  // Rounding can leave target >= cumulative; fall back to the last point with mass.
  for (Eigen::Index i = n - 1; i >= 0; --i) {
    if (d2[i] > 0.0) return i;
  }
  return n - 1;
}

/// Greedy k-means++: each new centroid is the best of several D^2 draws, judged
/// by the resulting potential. Plain k-means++ rarely covers every cluster when
/// k matches the number of well-separated groups.
Matrix seed_plus_plus(const Matrix& points, Eigen::Index k, CounterRng& rng) {
  const Eigen::Index n = points.rows();
  const auto un = static_cast<std::size_t>(n);
  const int trials = 2 + static_cast<int>(std::log(static_cast<double>(k)));
  Matrix centroids(k, points.cols());
  centroids.row(0) = points.row(static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n))));

  Eigen::VectorXd d2(n);
  parallel_for(0, un, [&](std::size_t i) {
    const auto r = static_cast<Eigen::Index>(i);
    d2[r] = (points.row(r) - centroids.row(0)).squaredNorm();
  });

  Eigen::VectorXd trial_d2(n), best_d2(n);
  for (Eigen::Index j = 1; j < k; ++j) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) total += d2[i];
    if (total <= 0.0) {
      centroids.row(j) = points.row(static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n))));
      continue;
    }
    double best_potential = std::numeric_limits<double>::infinity();
    Eigen::Index best = 0;
    for (int t = 0; t < trials; ++t) {
      const Eigen::Index candidate = sample_d2(d2, total, rng);
      parallel_for(0, un, [&](std::size_t i) {
        const auto r = static_cast<Eigen::Index>(i);
        trial_d2[r] = std::min(d2[r], (points.row(r) - points.row(candidate)).squaredNorm());
      });
      double potential = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) potential += trial_d2[i];
      if (potential < best_potential) {
        best_potential = potential;
        best = candidate;
        best_d2.swap(trial_d2);
      }
    }
    centroids.row(j) = points.row(best);
    d2.swap(best_d2);
  }
  return centroids;
}

struct Assignment {
  std::vector<Eigen::Index> labels;
  std::vector<double> distances;
  double objective = 0.0;
};

Assignment assign_points(const Matrix& points, const Matrix& centroids) {
  const auto n = static_cast<std::size_t>(points.rows());
  Assignment a;
  a.labels.resize(n);
  a.distances.resize(n);
  parallel_for(0, n, [&](std::size_t i) {
    const auto hit = nearest_centroid(centroids, points.row(static_cast<Eigen::Index>(i)));
    a.labels[i] = hit.index;
    a.distances[i] = hit.squared_distance;
  });
  for (double d : a.distances) a.objective += d;
  return a;
}

void update_centroids(const Matrix& points, const Assignment& a, Matrix& centroids) {
  const Eigen::Index k = centroids.rows();
  Matrix sums = Matrix::Zero(k, points.cols());
  std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    const Eigen::Index c = a.labels[static_cast<std::size_t>(i)];
    sums.row(c) += points.row(i);
    ++counts[static_cast<std::size_t>(c)];
  }
  std::vector<Eigen::Index> empty;
  for (Eigen::Index c = 0; c < k; ++c) {
    if (counts[static_cast<std::size_t>(c)] == 0) {
      empty.push_back(c);
    } else {
      centroids.row(c) = sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
    }
  }
  if (empty.empty()) return;

  // Distance of each point to its nearest populated centroid; reseeding an empty
  // centroid to the farthest point leaves the objective of the current
  // assignment untouched, so Lloyd monotonicity survives the repair.
  std::vector<bool> live(static_cast<std::size_t>(k), true);
  for (Eigen::Index c : empty) live[static_cast<std::size_t>(c)] = false;
  const auto n = static_cast<std::size_t>(points.rows());
  std::vector<double> gap(n, std::numeric_limits<double>::infinity());
  auto refresh_gap = [&](Eigen::Index c) {
    parallel_for(0, n, [&](std::size_t i) {
      gap[i] = std::min(gap[i], (points.row(static_cast<Eigen::Index>(i)) - centroids.row(c)).squaredNorm());
    });
  };
  for (Eigen::Index c = 0; c < k; ++c) {
    if (live[static_cast<std::size_t>(c)]) refresh_gap(c);
  }
  for (Eigen::Index c : empty) {
    std::size_t far = 0;
    for (std::size_t i = 1; i < n; ++i) {
      if (gap[i] > gap[far]) far = i;
    }
    centroids.row(c) = points.row(static_cast<Eigen::Index>(far));
    live[static_cast<std::size_t>(c)] = true;
    refresh_gap(c);
  }
}

}  // namespace

bool RqCodebooks::operator==(const RqCodebooks& o) const {
  if (spec != o.spec || dim != o.dim || centroids.size() != o.centroids.size()) return false;
  for (std::size_t l = 0; l < centroids.size(); ++l) {
    if (centroids[l].rows() != o.centroids[l].rows() || centroids[l].cols() != o.centroids[l].cols())
      return false;
    if (centroids[l] != o.centroids[l]) return false;
  }
  return true;
}

RqCodebooks fit(const ItemEmbeddingTable& embeddings, const CodebookSpec& spec, int iters,
                std::uint64_t seed, FitTrace* trace, int restarts) {
  if (embeddings.empty()) throw ValidationError("quantizer fit: embedding table is empty");
  if (iters < 1) throw ValidationError("quantizer fit: iters must be >= 1");
  if (restarts < 1) throw ValidationError("quantizer fit: restarts must be >= 1");
  if (spec.num_positions() == 0) throw ValidationError("quantizer fit: spec has no positions");

  RqCodebooks books;
  books.spec = spec;
  books.dim = embeddings.dim();
  if (trace) *trace = FitTrace{};

  Matrix residuals = embeddings.vectors();
  const auto n = static_cast<double>(residuals.rows());
  for (std::size_t level = 0; level < spec.num_positions(); ++level) {
    const auto k = static_cast<Eigen::Index>(spec.size(level));
    Matrix centroids;
    std::vector<double> objective;
    Assignment final_assignment;
    for (int attempt = 0; attempt < restarts; ++attempt) {
      CounterRng rng(seed, level + kRestartStride * static_cast<std::uint64_t>(attempt));
      Matrix candidate = seed_plus_plus(residuals, k, rng);
      std::vector<double> trail;
      for (int t = 0; t < iters; ++t) {
        const Assignment a = assign_points(residuals, candidate);
        trail.push_back(a.objective);
        update_centroids(residuals, a, candidate);
      }
      Assignment settled = assign_points(residuals, candidate);
      trail.push_back(settled.objective);
      // Strictly better only, so the earliest attempt wins ties.
      if (attempt == 0 || settled.objective < final_assignment.objective) {
        centroids = std::move(candidate);
        objective = std::move(trail);
        final_assignment = std::move(settled);
      }
    }

    for (Eigen::Index i = 0; i < residuals.rows(); ++i)
      residuals.row(i) -= centroids.row(final_assignment.labels[static_cast<std::size_t>(i)]);

    if (trace) {
      trace->objective.push_back(std::move(objective));
      trace->level_error.push_back(final_assignment.objective / n);
    }
    books.centroids.push_back(std::move(centroids));
  }
  return books;
}

namespace {

void check_dims(const ItemEmbeddingTable& embeddings, const RqCodebooks& codebooks) {
  if (!embeddings.empty() && embeddings.dim() != codebooks.dim)
    throw ValidationError("embedding dim " + std::to_string(embeddings.dim()) +
                          " does not match codebook dim " + std::to_string(codebooks.dim));
}

}  // namespace

SidAssignment encode(const ItemEmbeddingTable& embeddings, const RqCodebooks& codebooks) {
  check_dims(embeddings, codebooks);
  const std::size_t n = embeddings.size();
  const std::size_t num_positions = codebooks.spec.num_positions();
  std::vector<SemanticId> sids(n);
  parallel_for(0, n, [&](std::size_t i) {
    Eigen::RowVectorXd residual = embeddings.vectors().row(static_cast<Eigen::Index>(i));
    sids[i].tokens.resize(num_positions);
    for (std::size_t l = 0; l < num_positions; ++l) {
      const auto hit = nearest_centroid(codebooks.centroids[l], residual);
      sids[i].tokens[l] = static_cast<Token>(hit.index);
      residual -= codebooks.centroids[l].row(hit.index);
    }
  });
  SidAssignment out;
  out.spec = codebooks.spec;
  for (std::size_t i = 0; i < n; ++i) out.entries.emplace_hint(out.entries.end(), embeddings.ids()[i], std::move(sids[i]));
  return out;
}

double quantization_error(const ItemEmbeddingTable& embeddings, const RqCodebooks& codebooks) {
  check_dims(embeddings, codebooks);
  if (embeddings.empty()) return 0.0;
  const std::size_t n = embeddings.size();
  std::vector<double> err(n);
  parallel_for(0, n, [&](std::size_t i) {
    Eigen::RowVectorXd residual = embeddings.vectors().row(static_cast<Eigen::Index>(i));
    for (const auto& centroids : codebooks.centroids)
      residual -= centroids.row(nearest_centroid(centroids, residual).index);
    err[i] = residual.squaredNorm();
  });
  double total = 0.0;
  for (double e : err) total += e;
  return total / static_cast<double>(n);
}

SidAssignment tokenize(const ItemEmbeddingTable& embeddings, const CodebookSpec& spec, int iters,
                       std::uint64_t seed, int restarts) {
  return encode(embeddings, fit(embeddings, spec, iters, seed, nullptr, restarts));
}

}  // namespace sidalign
