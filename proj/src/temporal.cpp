#include "sidalign/temporal.hpp"

#include <algorithm>
#include <unordered_map>

namespace sidalign {

std::vector<InteractionEvent> five_core_filter(const std::vector<InteractionEvent>& events,
                                               std::size_t min_count) {
  std::vector<char> alive(events.size(), 1);
  bool changed = true;
  while (changed) {
    changed = false;
    std::unordered_map<std::string_view, std::size_t> user_count, item_count;
    for (std::size_t i = 0; i < events.size(); ++i) {
      if (!alive[i]) continue;
      ++user_count[events[i].user];
      ++item_count[events[i].item];
    }
    for (std::size_t i = 0; i < events.size(); ++i) {
      if (!alive[i]) continue;
      if (user_count[events[i].user] < min_count || item_count[events[i].item] < min_count) {
        alive[i] = 0;
        changed = true;
      }
    }
  }
  std::vector<InteractionEvent> out;
  for (std::size_t i = 0; i < events.size(); ++i) {
    if (alive[i]) out.push_back(events[i]);
  }
  return out;
}

TemporalBlocks chronological_blocks(std::vector<InteractionEvent> events, std::size_t n) {
  if (n < 1) throw ValidationError("number of blocks must be >= 1");
  if (events.size() < n)
    throw ValidationError("cannot split " + std::to_string(events.size()) + " events into " + std::to_string(n) +
                          " blocks");
  std::stable_sort(events.begin(), events.end(),
                   [](const InteractionEvent& a, const InteractionEvent& b) { return a.timestamp < b.timestamp; });
  TemporalBlocks out;
  out.blocks.resize(n);
  const std::size_t base = events.size() / n;
  const std::size_t extra = events.size() % n;
  std::size_t cursor = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t len = base + (k < extra ? 1 : 0);
    out.blocks[k].assign(std::make_move_iterator(events.begin() + static_cast<std::ptrdiff_t>(cursor)),
                         std::make_move_iterator(events.begin() + static_cast<std::ptrdiff_t>(cursor + len)));
    cursor += len;
  }
  return out;
}

UserHistories user_histories(const TemporalBlocks& blocks, std::size_t upto_block, std::size_t max_len,
                             const std::function<bool(const ItemId&)>& keep) {
  if (upto_block < 1 || upto_block > blocks.size())
    throw ValidationError("upto_block " + std::to_string(upto_block) + " outside 1.." + std::to_string(blocks.size()));
  UserHistories out;
  for (std::size_t k = 1; k <= upto_block; ++k) {
    for (const auto& e : blocks.block(k)) {
      if (keep && !keep(e.item)) continue;
      out[e.user].push_back(e.item);
    }
  }
  for (auto& [user, items] : out) {
    if (items.size() > max_len)
      items.erase(items.begin(), items.end() - static_cast<std::ptrdiff_t>(max_len));
  }
  std::erase_if(out, [](const auto& kv) { return kv.second.empty(); });
  return out;
}

UserHistories block_items(const TemporalBlocks& blocks, std::size_t block) {
  UserHistories out;
  for (const auto& e : blocks.block(block)) out[e.user].push_back(e.item);
  return out;
}

}  // namespace sidalign
