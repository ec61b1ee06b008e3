#include "sidalign/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

namespace sidalign {

namespace {

void check_args(const std::set<ItemId>& targets, std::size_t k) {
  if (targets.empty()) throw ValidationError("metric needs a non-empty target set");
  if (k == 0) throw ValidationError("metric cutoff K must be >= 1");
}

}  // namespace

double recall_at_k(std::span<const ItemId> ranked, const std::set<ItemId>& targets, std::size_t k) {
  check_args(targets, k);
  std::unordered_set<std::string_view> hits;
  const std::size_t depth = std::min(k, ranked.size());
  for (std::size_t p = 0; p < depth; ++p) {
    if (targets.count(ranked[p])) hits.insert(ranked[p]);
  }
  return static_cast<double>(hits.size()) / static_cast<double>(targets.size());
}

double ndcg_at_k(std::span<const ItemId> ranked, const std::set<ItemId>& targets, std::size_t k) {
  check_args(targets, k);
  std::unordered_set<std::string_view> seen;
  double dcg = 0.0;
  const std::size_t depth = std::min(k, ranked.size());
  for (std::size_t p = 0; p < depth; ++p) {
    if (targets.count(ranked[p]) && seen.insert(ranked[p]).second)
      dcg += 1.0 / std::log2(static_cast<double>(p) + 2.0);
  }
  double ideal = 0.0;
  const std::size_t hits = std::min(targets.size(), k);
  for (std::size_t p = 0; p < hits; ++p) ideal += 1.0 / std::log2(static_cast<double>(p) + 2.0);
  return dcg / ideal;
}

double wilcoxon_paired(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw ValidationError("wilcoxon: samples differ in length");
  if (xs.size() < 5) throw ValidationError("wilcoxon: need at least 5 pairs");

  std::vector<double> diffs;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double d = xs[i] - ys[i];
    if (!std::isfinite(d)) throw ValidationError("wilcoxon: non-finite difference");
    if (d != 0.0) diffs.push_back(d);
  }
  if (diffs.empty()) throw ValidationError("wilcoxon: all differences are zero");
  const std::size_t n = diffs.size();

  // Doubled mid-ranks keep the statistic integral under ties.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return std::abs(diffs[a]) < std::abs(diffs[b]); });
  std::vector<long long> rank2(n);
  double tie_term = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && std::abs(diffs[order[j]]) == std::abs(diffs[order[i]])) ++j;
    const auto shared = static_cast<long long>(i + 1 + j);  // 2 * mean of ranks i+1..j
    for (std::size_t t = i; t < j; ++t) rank2[order[t]] = shared;
    const auto t = static_cast<double>(j - i);
    tie_term += t * t * t - t;
    i = j;
  }
  long long w_plus2 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (diffs[i] > 0) w_plus2 += rank2[i];
  }

  if (n <= 25) {
    const long long max_sum = std::accumulate(rank2.begin(), rank2.end(), 0LL);
    std::vector<double> ways(static_cast<std::size_t>(max_sum + 1), 0.0);
    ways[0] = 1.0;
    long long reach = 0;
    for (long long r : rank2) {
      for (long long s = reach; s >= 0; --s) {
        if (ways[static_cast<std::size_t>(s)] != 0.0) ways[static_cast<std::size_t>(s + r)] += ways[static_cast<std::size_t>(s)];
      }
      reach += r;
    }
    const double total = std::ldexp(1.0, static_cast<int>(n));
    double lower = 0.0, upper = 0.0;
    for (long long s = 0; s <= max_sum; ++s) {
      if (s <= w_plus2) lower += ways[static_cast<std::size_t>(s)];
      if (s >= w_plus2) upper += ways[static_cast<std::size_t>(s)];
    }
    return std::min(1.0, 2.0 * std::min(lower, upper) / total);
  }

  const auto nd = static_cast<double>(n);
  const double mean = nd * (nd + 1.0) / 4.0;
  const double var = nd * (nd + 1.0) * (2.0 * nd + 1.0) / 24.0 - tie_term / 48.0;
  const double w_plus = static_cast<double>(w_plus2) / 2.0;
  const double deviation = std::max(0.0, std::abs(w_plus - mean) - 0.5);
  const double z = deviation / std::sqrt(var);
  return std::min(1.0, std::erfc(z / std::sqrt(2.0)));
}

}  // namespace sidalign
