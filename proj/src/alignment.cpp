#include "sidalign/alignment.hpp"

#include "sidalign/hungarian.hpp"
#include "sidalign/parallel.hpp"

#include <algorithm>
#include <set>
#include <unordered_set>

namespace sidalign {

Solver parse_solver(const std::string& name) {
  if (name == "greedy") return Solver::Greedy;
  if (name == "hungarian") return Solver::Hungarian;
  throw ValidationError("unknown solver '" + name + "' (expected greedy|hungarian)");
}

std::string to_string(Solver solver) { return solver == Solver::Greedy ? "greedy" : "hungarian"; }

std::vector<CooccurrenceMatrix> compute_cooccurrence(const SidAssignment& old_a, const SidAssignment& new_a) {
  if (old_a.spec != new_a.spec) throw ValidationError("incompatible codebook specs");
  const std::size_t num_positions = old_a.spec.num_positions();

  std::vector<std::pair<const SemanticId*, const SemanticId*>> shared;  // (new, old)
  auto it_old = old_a.entries.begin();
  auto it_new = new_a.entries.begin();
  while (it_old != old_a.entries.end() && it_new != new_a.entries.end()) {
    if (it_old->first < it_new->first) {
      ++it_old;
    } else if (it_new->first < it_old->first) {
      ++it_new;
    } else {
      shared.emplace_back(&it_new->second, &it_old->second);
      ++it_old;
      ++it_new;
    }
  }
  if (shared.empty()) throw ValidationError("no shared items");

  std::vector<CooccurrenceMatrix> out(num_positions);
  parallel_for(0, num_positions, [&](std::size_t l) {
    std::vector<std::pair<Token, Token>> pairs;
    pairs.reserve(shared.size());
    for (const auto& [z_new, z_old] : shared) pairs.emplace_back((*z_new)[l], (*z_old)[l]);
    std::sort(pairs.begin(), pairs.end());
    auto& w = out[l];
    w.position = l;
    for (std::size_t i = 0; i < pairs.size();) {
      std::size_t j = i;
      while (j < pairs.size() && pairs[j] == pairs[i]) ++j;
      w.entries.push_back({pairs[i].first, pairs[i].second, static_cast<std::int64_t>(j - i)});
      i = j;
    }
  });
  return out;
}

PartialMap solve_greedy(const CooccurrenceMatrix& w) {
  std::vector<CooccurrenceMatrix::Entry> order = w.entries;
  std::sort(order.begin(), order.end(), [](const auto& x, const auto& y) {
    if (x.count != y.count) return x.count > y.count;
    if (x.new_token != y.new_token) return x.new_token < y.new_token;
    return x.old_token < y.old_token;
  });
  PartialMap out;
  std::unordered_set<Token> taken_old;
  for (const auto& e : order) {
    if (out.count(e.new_token) || taken_old.count(e.old_token)) continue;
    out.emplace(e.new_token, e.old_token);
    taken_old.insert(e.old_token);
  }
  return out;
}

PartialMap solve_hungarian(const CooccurrenceMatrix& w) {
  std::vector<Token> rows, cols;
  for (const auto& e : w.entries) {
    rows.push_back(e.new_token);
    cols.push_back(e.old_token);
  }
  std::sort(rows.begin(), rows.end());
  rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
  std::sort(cols.begin(), cols.end());
  cols.erase(std::unique(cols.begin(), cols.end()), cols.end());
  const auto n = static_cast<Eigen::Index>(std::max(rows.size(), cols.size()));
  if (n == 0) return {};

  // Negated weights, zero-padded to square; dummy rows/columns sort last.
  Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic> cost =
      Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>::Zero(n, n);
  auto index_in = [](const std::vector<Token>& v, Token t) {
    return static_cast<Eigen::Index>(std::lower_bound(v.begin(), v.end(), t) - v.begin());
  };
  for (const auto& e : w.entries) cost(index_in(rows, e.new_token), index_in(cols, e.old_token)) = -e.count;

  auto solution = solve_min_cost_assignment<std::int64_t>(cost);
  canonicalize_assignment(cost, solution);

  PartialMap out;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const Eigen::Index c = solution.row_to_col[r];
    if (static_cast<std::size_t>(c) >= cols.size()) continue;
    if (cost(static_cast<Eigen::Index>(r), c) == 0) continue;
    out.emplace(rows[r], cols[static_cast<std::size_t>(c)]);
  }
  return out;
}

std::int64_t matched_weight(const CooccurrenceMatrix& w, const PartialMap& map) {
  std::int64_t total = 0;
  for (const auto& [a, b] : map) total += w.at(a, b);
  return total;
}

TokenMapping complete_mapping(const std::vector<PartialMap>& partial, const SidAssignment& new_a) {
  const CodebookSpec& spec = new_a.spec;
  if (partial.size() != spec.num_positions())
    throw ValidationError("partial mapping has " + std::to_string(partial.size()) + " positions, spec has " +
                          std::to_string(spec.num_positions()));
  TokenMapping mapping;
  mapping.spec = spec;
  mapping.maps.resize(spec.num_positions());
  for (std::size_t l = 0; l < spec.num_positions(); ++l) {
    std::set<Token> used;
    for (const auto& [item, sid] : new_a.entries) used.insert(sid[l]);

    PartialMap phi = partial[l];
    std::vector<bool> old_taken(spec.size(l), false);
    for (const auto& [a, b] : phi) {
      if (a >= spec.size(l) || b >= spec.size(l))
        throw ValidationError("partial mapping pair out of range at position " + std::to_string(l));
      if (old_taken[b]) throw ValidationError("partial mapping not injective at position " + std::to_string(l));
      old_taken[b] = true;
    }
    Token next_old = 0;
    for (Token a : used) {
      if (phi.count(a)) continue;
      while (next_old < spec.size(l) && old_taken[next_old]) ++next_old;
      if (next_old >= spec.size(l))
        throw InternalError("mapping completion ran out of old tokens at position " + std::to_string(l));
      phi.emplace(a, next_old);
      old_taken[next_old] = true;
    }
    mapping.maps[l] = std::move(phi);
  }
  return mapping;
}

TokenMapping align(const SidAssignment& old_a, const SidAssignment& new_a, Solver solver) {
  const auto cooccurrence = compute_cooccurrence(old_a, new_a);
  std::vector<PartialMap> partial(cooccurrence.size());
  parallel_for(0, cooccurrence.size(), [&](std::size_t l) {
    partial[l] = solver == Solver::Greedy ? solve_greedy(cooccurrence[l]) : solve_hungarian(cooccurrence[l]);
  });
  return complete_mapping(partial, new_a);
}

SidAssignment rewrite(const SidAssignment& new_a, const TokenMapping& mapping) {
  if (mapping.spec != new_a.spec) throw ValidationError("incompatible codebook specs");
  if (mapping.maps.size() != new_a.spec.num_positions())
    throw ValidationError("token mapping has wrong number of positions");
  SidAssignment out;
  out.spec = new_a.spec;
  for (const auto& [item, sid] : new_a.entries) {
    SemanticId aligned;
    aligned.tokens.resize(sid.size());
    for (std::size_t l = 0; l < sid.size(); ++l) {
      auto hit = mapping.maps[l].find(sid[l]);
      if (hit == mapping.maps[l].end())
        throw ValidationError("item '" + item + "' position " + std::to_string(l) + ": token " +
                              std::to_string(sid[l]) + " not in mapping domain");
      aligned.tokens[l] = hit->second;
    }
    out.entries.emplace_hint(out.entries.end(), item, std::move(aligned));
  }
  return out;
}

}  // namespace sidalign
