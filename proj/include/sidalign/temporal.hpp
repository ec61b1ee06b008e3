#pragma once

#include "sidalign/core.hpp"

#include <functional>
#include <map>
#include <vector>

namespace sidalign {

/// Drops events of users or items with fewer than `min_count` events, repeated
/// until nothing changes. Surviving events keep their relative order.
std::vector<InteractionEvent> five_core_filter(const std::vector<InteractionEvent>& events,
                                               std::size_t min_count = 5);

/// Stable sort by timestamp (ties keep input order), then cut into n contiguous
/// blocks; the first |events| mod n blocks hold one extra event.
TemporalBlocks chronological_blocks(std::vector<InteractionEvent> events, std::size_t n = 10);

using UserHistories = std::map<UserId, std::vector<ItemId>>;

/// Per user, the last `max_len` items from blocks 1..upto_block (1-based, inclusive).
/// When `keep` is given, items it rejects are dropped before truncation.
UserHistories user_histories(const TemporalBlocks& blocks, std::size_t upto_block, std::size_t max_len,
                             const std::function<bool(const ItemId&)>& keep = {});

/// Per user, all items of one block in order (used to build evaluation targets).
UserHistories block_items(const TemporalBlocks& blocks, std::size_t block);

}  // namespace sidalign
