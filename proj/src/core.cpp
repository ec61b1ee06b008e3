#include "sidalign/core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

namespace sidalign {

CodebookSpec::CodebookSpec(std::vector<std::size_t> s) : sizes(std::move(s)) {
  if (sizes.empty()) throw ValidationError("codebook spec needs at least one position");
  for (std::size_t v : sizes) {
    if (v == 0) throw ValidationError("codebook sizes must be >= 1");
    if (v > (std::size_t{1} << 31)) throw ValidationError("codebook size too large");
  }
}

CodebookSpec CodebookSpec::uniform(std::size_t num_positions, std::size_t size) {
  return CodebookSpec(std::vector<std::size_t>(num_positions, size));
}

CodebookSpec CodebookSpec::parse(const std::string& text) {
  std::vector<long long> values;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    try {
      std::size_t used = 0;
      long long v = std::stoll(part, &used);
      if (used != part.size() && part.find_first_not_of(" \t", used) != std::string::npos)
        throw ValidationError("bad spec component '" + part + "'");
      values.push_back(v);
    } catch (const std::logic_error&) {
      throw ValidationError("bad spec component '" + part + "'");
    }
  }
  if (values.empty() || values[0] < 1)
    throw ValidationError("spec must start with L >= 1: '" + text + "'");
  const auto num_positions = static_cast<std::size_t>(values[0]);
  if (values.size() != num_positions + 1)
    throw ValidationError("spec '" + text + "' must list exactly L codebook sizes");
  std::vector<std::size_t> sizes;
  for (std::size_t l = 1; l < values.size(); ++l) {
    if (values[l] < 1) throw ValidationError("codebook sizes must be >= 1");
    sizes.push_back(static_cast<std::size_t>(values[l]));
  }
  return CodebookSpec(std::move(sizes));
}

std::string CodebookSpec::to_string() const {
  std::string out = std::to_string(sizes.size());
  for (std::size_t v : sizes) out += "," + std::to_string(v);
  return out;
}

const SemanticId* SidAssignment::find(const ItemId& item) const {
  auto it = entries.find(item);
  return it == entries.end() ? nullptr : &it->second;
}

const SemanticId& SidAssignment::at(const ItemId& item) const {
  auto it = entries.find(item);
  if (it == entries.end()) throw ValidationError("unknown item '" + item + "'");
  return it->second;
}

std::vector<Violation> validate_assignment(const SidAssignment& a) {
  std::vector<Violation> out;
  if (a.spec.sizes.empty()) {
    out.push_back({"", std::nullopt, "spec has no positions"});
    return out;
  }
  for (std::size_t l = 0; l < a.spec.sizes.size(); ++l) {
    if (a.spec.sizes[l] == 0) out.push_back({"", l, "codebook size must be >= 1"});
  }
  const std::size_t num_positions = a.spec.num_positions();
  for (const auto& [item, sid] : a.entries) {
    if (sid.size() != num_positions) {
      out.push_back({item, std::nullopt,
                     "length " + std::to_string(sid.size()) + " != L=" + std::to_string(num_positions)});
      continue;
    }
    for (std::size_t l = 0; l < num_positions; ++l) {
      if (sid[l] >= a.spec.sizes[l]) {
        out.push_back({item, l,
                       "token " + std::to_string(sid[l]) + " outside [0," +
                           std::to_string(a.spec.sizes[l]) + ")"});
      }
    }
  }
  return out;
}

void TokenMapping::check() const {
  if (maps.size() != spec.num_positions())
    throw ValidationError("token mapping has " + std::to_string(maps.size()) +
                          " positions, spec has " + std::to_string(spec.num_positions()));
  for (std::size_t l = 0; l < maps.size(); ++l) {
    std::set<Token> images;
    for (const auto& [from, to] : maps[l]) {
      if (from >= spec.sizes[l] || to >= spec.sizes[l])
        throw ValidationError("mapping pair (" + std::to_string(from) + "," + std::to_string(to) +
                              ") out of range at position " + std::to_string(l));
      if (!images.insert(to).second)
        throw ValidationError("mapping not injective at position " + std::to_string(l) +
                              ": old token " + std::to_string(to) + " hit twice");
    }
  }
}

std::int64_t CooccurrenceMatrix::total() const {
  std::int64_t sum = 0;
  for (const auto& e : entries) sum += e.count;
  return sum;
}

std::int64_t CooccurrenceMatrix::at(Token new_token, Token old_token) const {
  auto it = std::lower_bound(entries.begin(), entries.end(), std::pair{new_token, old_token},
                             [](const Entry& e, const std::pair<Token, Token>& key) {
                               return std::pair{e.new_token, e.old_token} < key;
                             });
  if (it != entries.end() && it->new_token == new_token && it->old_token == old_token)
    return it->count;
  return 0;
}

const std::vector<InteractionEvent>& TemporalBlocks::block(std::size_t one_based) const {
  if (one_based < 1 || one_based > blocks.size())
    throw ValidationError("block index " + std::to_string(one_based) + " outside 1.." +
                          std::to_string(blocks.size()));
  return blocks[one_based - 1];
}

ItemEmbeddingTable::ItemEmbeddingTable(std::vector<ItemId> ids, Matrix vectors) {
  if (static_cast<Eigen::Index>(ids.size()) != vectors.rows())
    throw ValidationError("embedding table: id count does not match row count");
  if (vectors.cols() < 1) throw ValidationError("embedding dimension must be >= 1");
  if (!vectors.allFinite()) throw ValidationError("embedding table contains non-finite values");

  std::vector<std::size_t> order(ids.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return ids[x] < ids[y]; });
  for (std::size_t r = 1; r < order.size(); ++r) {
    if (ids[order[r]] == ids[order[r - 1]])
      throw ValidationError("duplicate embedding id '" + ids[order[r]] + "'");
  }
  ids_.reserve(ids.size());
  vectors_.resize(vectors.rows(), vectors.cols());
  for (std::size_t r = 0; r < order.size(); ++r) {
    ids_.push_back(std::move(ids[order[r]]));
    vectors_.row(static_cast<Eigen::Index>(r)) = vectors.row(static_cast<Eigen::Index>(order[r]));
  }
}

std::optional<std::size_t> ItemEmbeddingTable::index_of(const ItemId& id) const {
  auto it = std::lower_bound(ids_.begin(), ids_.end(), id);
  if (it == ids_.end() || *it != id) return std::nullopt;
  return static_cast<std::size_t>(it - ids_.begin());
}

}  // namespace sidalign
