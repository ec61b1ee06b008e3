#pragma once

// Hand-rolled random instance generators shared by the property tests.

#include "sidalign/core.hpp"
#include "sidalign/rng.hpp"

#include <algorithm>
#include <numeric>
#include <string>
#include <vector>

namespace gen {

using namespace sidalign;

inline std::string item_name(std::size_t i) {
  std::string s = std::to_string(i);
  return "i" + std::string(s.size() < 5 ? 5 - s.size() : 0, '0') + s;
}

inline std::size_t between(CounterRng& rng, std::size_t lo, std::size_t hi) {
  return lo + static_cast<std::size_t>(rng.below(hi - lo + 1));
}

inline CodebookSpec spec(CounterRng& rng, std::size_t max_l, std::size_t max_v) {
  std::vector<std::size_t> sizes(between(rng, 1, max_l));
  for (auto& v : sizes) v = between(rng, 1, max_v);
  return CodebookSpec(sizes);
}

inline SemanticId sid(CounterRng& rng, const CodebookSpec& s) {
  SemanticId out;
  for (std::size_t l = 0; l < s.num_positions(); ++l) out.tokens.push_back(static_cast<Token>(rng.below(s.size(l))));
  return out;
}

inline SidAssignment assignment(CounterRng& rng, const CodebookSpec& s, std::size_t n_items) {
  SidAssignment a;
  a.spec = s;
  for (std::size_t i = 0; i < n_items; ++i) a.entries[item_name(i)] = sid(rng, s);
  return a;
}

/// Items i in [first, first + n) drawn independently.
inline SidAssignment assignment_range(CounterRng& rng, const CodebookSpec& s, std::size_t first, std::size_t n) {
  SidAssignment a;
  a.spec = s;
  for (std::size_t i = first; i < first + n; ++i) a.entries[item_name(i)] = sid(rng, s);
  return a;
}

inline std::vector<Token> permutation(CounterRng& rng, std::size_t n) {
  std::vector<Token> p(n);
  std::iota(p.begin(), p.end(), Token{0});
  for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[rng.below(i)]);
  return p;
}

/// Applies an independent token permutation per position; perms[l][old] = new.
inline SidAssignment permuted(const SidAssignment& a, const std::vector<std::vector<Token>>& perms) {
  SidAssignment out = a;
  for (auto& [item, s] : out.entries)
    for (std::size_t l = 0; l < s.tokens.size(); ++l) s.tokens[l] = perms[l][s.tokens[l]];
  return out;
}

/// Random sparse co-occurrence matrix over `rows` new and `cols` old tokens
/// drawn from a wider index range, counts in [0, max_count].
inline CooccurrenceMatrix matrix(CounterRng& rng, std::size_t rows, std::size_t cols, std::int64_t max_count,
                                 Token index_range = 32) {
  const auto pick = [&](std::size_t k) {
    auto all = permutation(rng, index_range);
    all.resize(k);
    std::sort(all.begin(), all.end());
    return all;
  };
  const auto r = pick(rows), c = pick(cols);
  CooccurrenceMatrix w;
  for (Token a : r) {
    for (Token b : c) {
      const auto count = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(max_count) + 1));
      if (count > 0) w.entries.push_back({a, b, count});
    }
  }
  return w;
}

inline std::vector<InteractionEvent> events(CounterRng& rng, std::size_t n, std::size_t users, std::size_t items,
                                            std::int64_t max_ts) {
  std::vector<InteractionEvent> out;
  for (std::size_t e = 0; e < n; ++e) {
    out.push_back({"u" + std::to_string(rng.below(users)), item_name(rng.below(items)),
                   static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(max_ts) + 1))});
  }
  return out;
}

}  // namespace gen
