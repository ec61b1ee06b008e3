#pragma once

#include "sidalign/core.hpp"

#include <map>
#include <string>
#include <vector>

namespace sidalign {

enum class Solver { Greedy, Hungarian };

Solver parse_solver(const std::string& name);
std::string to_string(Solver solver);

/// Injective partial map new token -> old token at one position.
using PartialMap = std::map<Token, Token>;

/// W_l(a, b) = number of shared items whose new token at l is a and old token is b.
/// Throws ValidationError("incompatible codebook specs") or ("no shared items").
std::vector<CooccurrenceMatrix> compute_cooccurrence(const SidAssignment& old_a, const SidAssignment& new_a);

/// Scan observed pairs by (count desc, new asc, old asc) and keep a pair when
/// both of its tokens are still free.
PartialMap solve_greedy(const CooccurrenceMatrix& w);

/// Maximum-weight one-to-one matching between active new and active old tokens;
/// lexicographically smallest among co-optimal matchings. Zero-weight pairs are dropped.
PartialMap solve_hungarian(const CooccurrenceMatrix& w);

/// Sum of W over the pairs of `map`.
std::int64_t matched_weight(const CooccurrenceMatrix& w, const PartialMap& map);

/// Extends each partial map so every token used by `new_a` has an image, pairing
/// leftover new tokens with unused old tokens in ascending order on both sides.
TokenMapping complete_mapping(const std::vector<PartialMap>& partial, const SidAssignment& new_a);

/// compute_cooccurrence -> per-position solve -> complete_mapping.
TokenMapping align(const SidAssignment& old_a, const SidAssignment& new_a, Solver solver);

/// Applies the mapping token by token. Throws ValidationError naming item,
/// position and token when a token has no image.
SidAssignment rewrite(const SidAssignment& new_a, const TokenMapping& mapping);

}  // namespace sidalign
