#pragma once

#include "sidalign/core.hpp"

#include <cstdint>
#include <vector>

namespace sidalign {

/// Residual k-means codebooks: centroids[l] is a V_l x dim matrix.
struct RqCodebooks {
  using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  CodebookSpec spec;
  Eigen::Index dim = 0;
  std::vector<Matrix> centroids;

  bool operator==(const RqCodebooks& o) const;
};

/// Optional instrumentation of a fit. objective[l][t] is the k-means objective
/// (sum of squared distances to assigned centroid) after the assignment step of
/// Lloyd iteration t at level l, plus a final entry for the assignment after the
/// last centroid update; level_error[l] is the mean squared residual
/// norm after quantizing levels 0..l.
struct FitTrace {
  std::vector<std::vector<double>> objective;
  std::vector<double> level_error;
};

/// Level-by-level Lloyd k-means on running residuals with k-means++ seeding.
/// Empty clusters are reseeded to the point farthest from its nearest centroid.
/// Each level keeps the lowest-objective run out of `restarts` seedings; the
/// trace records that run.
RqCodebooks fit(const ItemEmbeddingTable& embeddings, const CodebookSpec& spec, int iters,
                std::uint64_t seed, FitTrace* trace = nullptr, int restarts = 1);

/// Nearest centroid per level on the running residual; ties go to the lowest index.
SidAssignment encode(const ItemEmbeddingTable& embeddings, const RqCodebooks& codebooks);

/// Mean squared norm of the final residuals.
double quantization_error(const ItemEmbeddingTable& embeddings, const RqCodebooks& codebooks);

/// fit followed by encode.
SidAssignment tokenize(const ItemEmbeddingTable& embeddings, const CodebookSpec& spec, int iters,
                       std::uint64_t seed, int restarts = 1);

}  // namespace sidalign
