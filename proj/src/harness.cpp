#include "sidalign/harness.hpp"

#include "sidalign/metrics.hpp"
#include "sidalign/parallel.hpp"
#include "sidalign/quantizer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace sidalign {

Policy parse_policy(const std::string& name) {
  if (name == "base") return Policy::Base;
  if (name == "ft-old") return Policy::FtOld;
  if (name == "ft-new") return Policy::FtNew;
  if (name == "ft-ours-greedy") return Policy::FtOursGreedy;
  if (name == "ft-ours-hungarian") return Policy::FtOursHungarian;
  if (name == "full") return Policy::Full;
  throw ValidationError("unknown policy '" + name + "'");
}

std::string to_string(Policy policy) {
  switch (policy) {
    case Policy::Base: return "base";
    case Policy::FtOld: return "ft-old";
    case Policy::FtNew: return "ft-new";
    case Policy::FtOursGreedy: return "ft-ours-greedy";
    case Policy::FtOursHungarian: return "ft-ours-hungarian";
    case Policy::Full: return "full";
  }
  return "?";
}

const std::vector<Policy>& all_policies() {
  static const std::vector<Policy> policies{Policy::Base,         Policy::FtOld,           Policy::FtNew,
                                            Policy::FtOursGreedy, Policy::FtOursHungarian, Policy::Full};
  return policies;
}

void PolicyConfig::validate() const {
  if (!(base_last_block >= 1 && base_last_block < finetune_block && finetune_block < eval_block))
    throw ValidationError("block indices must satisfy 1 <= base < finetune < eval");
  if (ks.empty()) throw ValidationError("need at least one K");
  for (std::size_t i = 0; i < ks.size(); ++i) {
    if (ks[i] == 0 || (i > 0 && ks[i] <= ks[i - 1])) throw ValidationError("K values must be positive and ascending");
  }
  if (beam == 0) throw ValidationError("beam width must be >= 1");
  if (!(decay > 0.0 && decay <= 1.0)) throw ValidationError("decay must lie in (0, 1]");
  if (stack.kmeans_iters < 1) throw ValidationError("kmeans_iters must be >= 1");
  if (stack.kmeans_restarts < 1) throw ValidationError("kmeans_restarts must be >= 1");
  if (!(stack.passes > 0.0)) throw ValidationError("passes must be > 0");
  if (!(stack.backoff_ratio > 0.0)) throw ValidationError("backoff_ratio must be > 0");
}

double PolicyRow::recall_at(std::size_t k) const {
  for (std::size_t i = 0; i < ks.size(); ++i) {
    if (ks[i] == k) return recall[i];
  }
  throw ValidationError("K=" + std::to_string(k) + " was not evaluated");
}

double PolicyRow::ndcg_at(std::size_t k) const {
  for (std::size_t i = 0; i < ks.size(); ++i) {
    if (ks[i] == k) return ndcg[i];
  }
  throw ValidationError("K=" + std::to_string(k) + " was not evaluated");
}

namespace {

/// Every item of blocks first..last per user, chronological, restricted to `a`.
UserHistories block_sequences(const TemporalBlocks& blocks, std::size_t first, std::size_t last,
                              const SidAssignment& a) {
  UserHistories out;
  for (std::size_t k = first; k <= last; ++k) {
    for (const auto& e : blocks.block(k)) {
      if (a.contains(e.item)) out[e.user].push_back(e.item);
    }
  }
  return out;
}

void check_blocks(const ExperimentData& data, std::size_t needed) {
  if (data.blocks.size() < needed)
    throw ValidationError("experiment needs " + std::to_string(needed) + " blocks, data has " +
                          std::to_string(data.blocks.size()));
  if (!data.embeddings) throw ValidationError("experiment has no embedding provider");
}

SidAssignment tokenize_window(const ExperimentData& data, std::size_t last_block, const PolicyConfig& config) {
  const ItemEmbeddingTable table = data.embeddings(last_block);
  if (table.empty())
    throw ValidationError("no embeddings for the window ending at block " + std::to_string(last_block));
  return tokenize(table, config.stack.spec, config.stack.kmeans_iters, config.seed,
                  config.stack.kmeans_restarts);
}

/// Aligns `fresh` into the token space of `previous` and checks the result.
SidAssignment align_into(const SidAssignment& previous, const SidAssignment& fresh, Solver solver) {
  const TokenMapping mapping = align(previous, fresh, solver);
  mapping.check();
  SidAssignment aligned = rewrite(fresh, mapping);
  if (!validate_assignment(aligned).empty()) throw InternalError("aligned assignment failed validation");
  return aligned;
}

std::vector<double> model_weights(const StackConfig& stack) {
  return NGramSidModel::geometric_weights(stack.order, stack.backoff_ratio);
}

}  // namespace

EvalSet build_eval_set(const TemporalBlocks& blocks, std::size_t context_last_block, std::size_t eval_block,
                       std::size_t context_len, const SidAssignment& old_vocabulary) {
  const auto keep = [&](const ItemId& item) { return old_vocabulary.contains(item); };
  const UserHistories contexts = user_histories(blocks, context_last_block, context_len, keep);
  const UserHistories future = block_items(blocks, eval_block);
  EvalSet out;
  for (const auto& [user, items] : future) {
    std::set<ItemId> targets;
    for (const auto& item : items) {
      if (keep(item)) {
        targets.insert(item);
      } else {
        ++out.targets_dropped;
      }
    }
    auto ctx = contexts.find(user);
    if (targets.empty() || ctx == contexts.end()) {
      ++out.users_skipped;
      continue;
    }
    out.targets_kept += targets.size();
    out.users.push_back(user);
    out.contexts.push_back(ctx->second);
    out.targets.push_back(std::move(targets));
  }
  return out;
}

PolicyRow evaluate(const NGramSidModel& model, const SidAssignment& assignment, const EvalSet& eval,
                   std::size_t beam, std::span<const std::size_t> ks) {
  const SidTrie trie = build_trie(assignment);
  const std::size_t max_k = *std::max_element(ks.begin(), ks.end());
  const std::size_t n = eval.users.size();
  std::vector<std::vector<double>> recall(n), ndcg(n);
  parallel_for(0, n, [&](std::size_t u) {
    const auto ranked = beam_decode(model, eval.contexts[u], assignment, trie, beam, max_k);
    std::vector<ItemId> items;
    items.reserve(ranked.size());
    for (const auto& r : ranked) items.push_back(r.item);
    for (std::size_t k : ks) {
      recall[u].push_back(recall_at_k(items, eval.targets[u], k));
      ndcg[u].push_back(ndcg_at_k(items, eval.targets[u], k));
    }
  });
  PolicyRow row;
  row.ks.assign(ks.begin(), ks.end());
  row.recall.assign(ks.size(), 0.0);
  row.ndcg.assign(ks.size(), 0.0);
  for (std::size_t u = 0; u < n; ++u) {
    for (std::size_t i = 0; i < ks.size(); ++i) {
      row.recall[i] += recall[u][i];
      row.ndcg[i] += ndcg[u][i];
    }
  }
  if (n > 0) {
    for (std::size_t i = 0; i < ks.size(); ++i) {
      row.recall[i] /= static_cast<double>(n);
      row.ndcg[i] /= static_cast<double>(n);
    }
  }
  row.users_evaluated = n;
  row.users_skipped = eval.users_skipped;
  row.targets_kept = eval.targets_kept;
  row.targets_dropped = eval.targets_dropped;
  return row;
}

std::vector<PolicyRow> run_policies(const std::vector<Policy>& policies, const PolicyConfig& config,
                                    const ExperimentData& data) {
  config.validate();
  check_blocks(data, config.eval_block);
  const StackConfig& stack = config.stack;
  const auto weights = model_weights(stack);

  const SidAssignment old_a = tokenize_window(data, config.base_last_block, config);
  const EvalSet eval = build_eval_set(data.blocks, config.finetune_block, config.eval_block, config.context_len, old_a);

  const bool needs_new = std::any_of(policies.begin(), policies.end(), [](Policy p) {
    return p == Policy::FtNew || p == Policy::FtOursGreedy || p == Policy::FtOursHungarian || p == Policy::Full;
  });
  const bool needs_base = std::any_of(policies.begin(), policies.end(), [](Policy p) { return p != Policy::Full; });

  NGramSidModel base;
  if (needs_base)
    base = train(block_sequences(data.blocks, 1, config.base_last_block, old_a), old_a, stack.order, stack.alpha,
                 weights);
  SidAssignment new_a;
  if (needs_new) new_a = tokenize_window(data, config.finetune_block, config);

  const auto finetune = [&](const SidAssignment& a) {
    return warm_update(base, block_sequences(data.blocks, config.finetune_block, config.finetune_block, a), a,
                       config.decay, stack.passes);
  };

  std::vector<PolicyRow> rows;
  for (Policy policy : policies) {
    PolicyRow row;
    switch (policy) {
      case Policy::Base:
        row = evaluate(base, old_a, eval, config.beam, config.ks);
        break;
      case Policy::FtOld:
        row = evaluate(finetune(old_a), old_a, eval, config.beam, config.ks);
        break;
      case Policy::FtNew:
        row = evaluate(finetune(new_a), new_a, eval, config.beam, config.ks);
        break;
      case Policy::FtOursGreedy:
      case Policy::FtOursHungarian: {
        const SidAssignment aligned =
            align_into(old_a, new_a, policy == Policy::FtOursGreedy ? Solver::Greedy : Solver::Hungarian);
        row = evaluate(finetune(aligned), aligned, eval, config.beam, config.ks);
        break;
      }
      case Policy::Full: {
        const NGramSidModel full = train(block_sequences(data.blocks, 1, config.finetune_block, new_a), new_a,
                                         stack.order, stack.alpha, weights);
        row = evaluate(full, new_a, eval, config.beam, config.ks);
        break;
      }
    }
    row.policy = policy;
    row.seed = config.seed;
    row.step = config.finetune_block;
    rows.push_back(std::move(row));
  }
  return rows;
}

PolicyRow run_policy(const PolicyConfig& config, const ExperimentData& data) {
  return run_policies({config.policy}, config, data).front();
}

double select_passes(const PolicyConfig& config, const ExperimentData& data, std::span<const double> candidates) {
  if (candidates.empty()) throw ValidationError("pilot needs at least one candidate pass count");
  if (config.base_last_block < 2) throw ValidationError("pilot needs base_last_block >= 2");
  PolicyConfig pilot = config;
  pilot.base_last_block -= 1;
  pilot.finetune_block -= 1;
  pilot.eval_block -= 1;
  double best = candidates.front();
  double best_recall = -1.0;
  for (double passes : candidates) {
    if (!(passes > 0.0)) throw ValidationError("pilot pass counts must be positive");
    pilot.stack.passes = passes;
    const double recall = run_policies({Policy::FtOld}, pilot, data).front().recall.back();
    if (recall > best_recall) {
      best_recall = recall;
      best = passes;
    }
  }
  return best;
}

std::vector<PolicyRow> run_rolling(const std::vector<Policy>& policies, const PolicyConfig& config,
                                   const ExperimentData& data, const RollingOptions& options) {
  if (options.steps.empty()) throw ValidationError("rolling run needs at least one step");
  for (std::size_t i = 0; i < options.steps.size(); ++i) {
    if (options.steps[i] <= options.t_start || (i > 0 && options.steps[i] <= options.steps[i - 1]))
      throw ValidationError("rolling steps must be ascending and after t_start");
  }
  if (options.t_start < 1) throw ValidationError("t_start must be >= 1");
  check_blocks(data, options.steps.back() + 1);
  PolicyConfig checked = config;
  checked.base_last_block = options.t_start;
  checked.finetune_block = options.steps.front();
  checked.eval_block = options.steps.front() + 1;
  checked.validate();

  const StackConfig& stack = config.stack;
  const auto weights = model_weights(stack);

  const SidAssignment initial = tokenize_window(data, options.t_start, config);
  const NGramSidModel base =
      train(block_sequences(data.blocks, 1, options.t_start, initial), initial, stack.order, stack.alpha, weights);

  struct Track {
    Policy policy;
    SidAssignment assignment;
    NGramSidModel model;
  };
  std::vector<Track> tracks;
  for (Policy p : policies) tracks.push_back({p, initial, base});

  std::vector<PolicyRow> rows;
  for (std::size_t t : options.steps) {
    const EvalSet eval = build_eval_set(data.blocks, t, t + 1, config.context_len, initial);
    const bool needs_new = std::any_of(policies.begin(), policies.end(),
                                       [](Policy p) { return p != Policy::Base && p != Policy::FtOld; });
    SidAssignment fresh;
    if (needs_new) fresh = tokenize_window(data, t, config);

    for (auto& track : tracks) {
      const auto adapt = [&](const SidAssignment& a) {
        track.model = warm_update(std::move(track.model), block_sequences(data.blocks, t, t, a), a, config.decay,
                                  stack.passes);
        track.assignment = a;
      };
      switch (track.policy) {
        case Policy::Base:
          break;
        case Policy::FtOld:
          adapt(initial);
          break;
        case Policy::FtNew:
          adapt(fresh);
          break;
        case Policy::FtOursGreedy:
          adapt(align_into(track.assignment, fresh, Solver::Greedy));
          break;
        case Policy::FtOursHungarian:
          adapt(align_into(track.assignment, fresh, Solver::Hungarian));
          break;
        case Policy::Full:
          track.assignment = fresh;
          track.model = train(block_sequences(data.blocks, 1, t, fresh), fresh, stack.order, stack.alpha, weights);
          break;
      }
      PolicyRow row = evaluate(track.model, track.assignment, eval, config.beam, config.ks);
      row.policy = track.policy;
      row.seed = config.seed;
      row.step = t;
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

namespace {

const std::vector<PolicyRow>& pick_rows(const EvalReport& r, std::optional<std::size_t> step) {
  return step ? r.rolling_rows : r.rows;
}

nlohmann::json row_to_json(const PolicyRow& row) {
  nlohmann::json recall, ndcg;
  for (std::size_t i = 0; i < row.ks.size(); ++i) {
    recall[std::to_string(row.ks[i])] = row.recall[i];
    ndcg[std::to_string(row.ks[i])] = row.ndcg[i];
  }
  return {{"policy", to_string(row.policy)},
          {"seed", row.seed},
          {"step", row.step},
          {"recall", recall},
          {"ndcg", ndcg},
          {"users_evaluated", row.users_evaluated},
          {"users_skipped", row.users_skipped},
          {"targets_kept", row.targets_kept},
          {"targets_dropped", row.targets_dropped}};
}

nlohmann::json summarize(const std::vector<PolicyRow>& rows) {
  // policy -> K -> mean over seeds, in first-seen policy order.
  std::vector<Policy> order;
  for (const auto& r : rows) {
    if (std::find(order.begin(), order.end(), r.policy) == order.end()) order.push_back(r.policy);
  }
  nlohmann::json out = nlohmann::json::object();
  for (Policy p : order) {
    std::map<std::size_t, std::pair<double, double>> sums;
    std::size_t count = 0;
    for (const auto& r : rows) {
      if (r.policy != p) continue;
      ++count;
      for (std::size_t i = 0; i < r.ks.size(); ++i) {
        sums[r.ks[i]].first += r.recall[i];
        sums[r.ks[i]].second += r.ndcg[i];
      }
    }
    nlohmann::json recall, ndcg;
    for (const auto& [k, s] : sums) {
      recall[std::to_string(k)] = s.first / static_cast<double>(count);
      ndcg[std::to_string(k)] = s.second / static_cast<double>(count);
    }
    out[to_string(p)] = {{"recall", recall}, {"ndcg", ndcg}, {"runs", count}};
  }
  return out;
}

}  // namespace

std::vector<double> EvalReport::recall_series(Policy policy, std::size_t k, std::optional<std::size_t> step) const {
  std::vector<double> out;
  for (const auto& r : pick_rows(*this, step)) {
    if (r.policy == policy && (!step || r.step == *step)) out.push_back(r.recall_at(k));
  }
  return out;
}

double EvalReport::mean_recall(Policy policy, std::size_t k, std::optional<std::size_t> step) const {
  const auto values = recall_series(policy, k, step);
  if (values.empty()) throw ValidationError("no rows for policy " + to_string(policy));
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json out;
  out["summary"] = summarize(rows);
  out["runs"] = nlohmann::json::array();
  for (const auto& r : rows) out["runs"].push_back(row_to_json(r));
  if (!rolling_rows.empty()) {
    std::map<std::size_t, std::vector<PolicyRow>> by_step;
    for (const auto& r : rolling_rows) by_step[r.step].push_back(r);
    nlohmann::json steps = nlohmann::json::object();
    for (const auto& [step, step_rows] : by_step) steps[std::to_string(step)] = summarize(step_rows);
    out["rolling_summary"] = steps;
    out["rolling_runs"] = nlohmann::json::array();
    for (const auto& r : rolling_rows) out["rolling_runs"].push_back(row_to_json(r));
  }
  return out;
}

std::string EvalReport::rolling_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "step,policy,seed,k,recall,ndcg\n";
  for (const auto& r : rolling_rows) {
    for (std::size_t i = 0; i < r.ks.size(); ++i)
      out << r.step << ',' << to_string(r.policy) << ',' << r.seed << ',' << r.ks[i] << ',' << r.recall[i] << ','
          << r.ndcg[i] << '\n';
  }
  return out.str();
}

}  // namespace sidalign
