#pragma once

#include "sidalign/core.hpp"

#include <set>
#include <span>
#include <vector>

namespace sidalign {

/// |top-K ∩ targets| / |targets|. Throws ValidationError on empty targets or K = 0.
double recall_at_k(std::span<const ItemId> ranked, const std::set<ItemId>& targets, std::size_t k);

/// Binary-gain nDCG@K with the ideal ranking placing min(|targets|, K) hits first.
double ndcg_at_k(std::span<const ItemId> ranked, const std::set<ItemId>& targets, std::size_t k);

/// Paired two-sided Wilcoxon signed-rank p-value. Zero differences are dropped;
/// ties in |difference| get mid-ranks. Exact null distribution when at most 25
/// non-zero differences remain, normal approximation with tie and continuity
/// correction beyond. Throws ValidationError when lengths differ, fewer than 5
/// pairs are given, or every difference is zero.
double wilcoxon_paired(std::span<const double> xs, std::span<const double> ys);

}  // namespace sidalign
