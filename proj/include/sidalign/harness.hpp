#pragma once

#include "sidalign/alignment.hpp"
#include "sidalign/core.hpp"
#include "sidalign/retriever.hpp"
#include "sidalign/temporal.hpp"

#include <nlohmann/json.hpp>

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace sidalign {

enum class Policy { Base, FtOld, FtNew, FtOursGreedy, FtOursHungarian, Full };

Policy parse_policy(const std::string& name);
std::string to_string(Policy policy);
const std::vector<Policy>& all_policies();

/// Surrogate-stack hyper-parameters shared by every policy of an experiment.
struct StackConfig {
  CodebookSpec spec{{32, 8}};
  int kmeans_iters = 15;
  int kmeans_restarts = 32;
  std::size_t order = 4;
  double alpha = 0.1;
  double backoff_ratio = 0.6;
  /// Finetune budget: each new-block event is counted this many times, for every FT policy.
  double passes = 1.0;
};

struct PolicyConfig {
  Policy policy = Policy::Base;
  std::size_t base_last_block = 8;  // base trains on blocks 1..base_last_block
  std::size_t finetune_block = 9;
  std::size_t eval_block = 10;
  std::size_t context_len = 20;
  std::size_t beam = 50;
  std::vector<std::size_t> ks{10, 50};
  double decay = 0.5;
  std::uint64_t seed = 1;
  StackConfig stack;

  /// Throws ValidationError unless blocks strictly increase and ks are positive ascending.
  void validate() const;
};

/// Embeddings for the window covering blocks 1..last_block (1-based).
using EmbeddingProvider = std::function<ItemEmbeddingTable(std::size_t last_block)>;

struct ExperimentData {
  TemporalBlocks blocks;
  EmbeddingProvider embeddings;
};

struct PolicyRow {
  Policy policy = Policy::Base;
  std::uint64_t seed = 0;
  std::size_t step = 0;  // evaluated-after-adapting-on block (rolling); finetune block otherwise
  std::vector<std::size_t> ks;
  std::vector<double> recall;
  std::vector<double> ndcg;
  std::size_t users_evaluated = 0;
  std::size_t users_skipped = 0;
  std::size_t targets_kept = 0;
  std::size_t targets_dropped = 0;

  double recall_at(std::size_t k) const;
  double ndcg_at(std::size_t k) const;
};

/// Evaluation population fixed by the old vocabulary: contexts and targets keep
/// only items that have an old SID; users left with an empty context or target
/// set are skipped.
struct EvalSet {
  std::vector<UserId> users;
  std::vector<std::vector<ItemId>> contexts;
  std::vector<std::set<ItemId>> targets;
  std::size_t users_skipped = 0;
  std::size_t targets_kept = 0;
  std::size_t targets_dropped = 0;
};

EvalSet build_eval_set(const TemporalBlocks& blocks, std::size_t context_last_block, std::size_t eval_block,
                       std::size_t context_len, const SidAssignment& old_vocabulary);

/// Decodes every user of `eval` with (model, assignment) and averages the metrics.
PolicyRow evaluate(const NGramSidModel& model, const SidAssignment& assignment, const EvalSet& eval,
                   std::size_t beam, std::span<const std::size_t> ks);

/// Runs one policy (tokenize, train/adapt, evaluate on the eval block).
PolicyRow run_policy(const PolicyConfig& config, const ExperimentData& data);

/// Runs several policies for one seed, sharing the old/new tokenizations, the
/// base model and the evaluation population. config.policy is ignored.
std::vector<PolicyRow> run_policies(const std::vector<Policy>& policies, const PolicyConfig& config,
                                    const ExperimentData& data);

/// Pilot finetune-budget selection: every block index moves back by one (train
/// on 1..7, finetune on 8, score on 9 by default) and ft-old is run once per
/// candidate pass count. Returns the candidate with the best Recall at the
/// largest K; ties keep the earlier candidate.
double select_passes(const PolicyConfig& config, const ExperimentData& data, std::span<const double> candidates);

struct RollingOptions {
  std::size_t t_start = 5;
  std::vector<std::size_t> steps{6, 7, 8};
};

/// Multi-step adaptation: initialize on blocks 1..t_start, then for each step t
/// adapt on block t and evaluate on block t+1. FT-ours realigns each rebuilt
/// tokenization to the previous aligned one. Rows carry step = t.
std::vector<PolicyRow> run_rolling(const std::vector<Policy>& policies, const PolicyConfig& config,
                                   const ExperimentData& data, const RollingOptions& options = {});

/// Aggregated report across seeds.
struct EvalReport {
  std::vector<PolicyRow> rows;          // one-step rows
  std::vector<PolicyRow> rolling_rows;  // multi-step rows

  /// Mean of recall@k over seeds for a policy (one-step rows, or rolling rows at `step`).
  double mean_recall(Policy policy, std::size_t k, std::optional<std::size_t> step = std::nullopt) const;
  std::vector<double> recall_series(Policy policy, std::size_t k, std::optional<std::size_t> step = std::nullopt) const;
  nlohmann::json to_json() const;
  /// step,policy,seed,k,recall,ndcg rows of the rolling series.
  std::string rolling_csv() const;
};

}  // namespace sidalign
