#include "sidalign/retriever.hpp"

#include "sidalign/io.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <unordered_set>

namespace sidalign {

// ---------------------------------------------------------------------------
// SidTrie

SidTrie::SidTrie(const SidAssignment& a) : depth_(a.spec.num_positions()) {
  // Inserting in (SID, item) order creates same-depth nodes in prefix order.
  std::vector<std::pair<const SemanticId*, const ItemId*>> order;
  order.reserve(a.entries.size());
  for (const auto& [item, sid] : a.entries) {
    if (sid.size() != depth_) throw ValidationError("item '" + item + "' has a SID of the wrong length");
    order.emplace_back(&sid, &item);
  }
  std::stable_sort(order.begin(), order.end(), [](const auto& x, const auto& y) { return *x.first < *y.first; });

  nodes_.emplace_back();
  for (const auto& [sid, item] : order) {
    std::uint32_t at = 0;
    for (Token t : sid->tokens) {
      auto& children = nodes_[at].children;
      if (!children.empty() && children.back().first == t) {
        at = children.back().second;
      } else {
        const auto fresh = static_cast<std::uint32_t>(nodes_.size());
        children.emplace_back(t, fresh);
        nodes_.emplace_back();
        nodes_.back().parent = at;
        nodes_.back().token = t;
        at = fresh;
      }
    }
    if (nodes_[at].items.empty()) ++num_sids_;
    nodes_[at].items.push_back(*item);
  }
}

std::vector<Token> SidTrie::prefix(std::uint32_t index) const {
  std::vector<Token> out;
  for (std::uint32_t at = index; at != root(); at = nodes_[at].parent) out.push_back(nodes_[at].token);
  std::reverse(out.begin(), out.end());
  return out;
}

std::int64_t SidTrie::child(std::uint32_t index, Token token) const {
  const auto& children = nodes_[index].children;
  auto it = std::lower_bound(children.begin(), children.end(), token,
                             [](const auto& c, Token key) { return c.first < key; });
  if (it == children.end() || it->first != token) return -1;
  return it->second;
}

bool SidTrie::contains(const SemanticId& sid) const {
  if (sid.size() != depth_ || nodes_.empty()) return false;
  std::int64_t at = 0;
  for (Token t : sid.tokens) {
    at = child(static_cast<std::uint32_t>(at), t);
    if (at < 0) return false;
  }
  return !nodes_[static_cast<std::size_t>(at)].items.empty();
}

SidTrie build_trie(const SidAssignment& a) { return SidTrie(a); }

// ---------------------------------------------------------------------------
// Counts

std::size_t ContextKeyHash::operator()(const ContextKey& k) const noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL ^ (static_cast<std::uint64_t>(k.position) << 16 | k.length);
  for (std::size_t i = 0; i < k.length; ++i) {
    h ^= k.tokens[i] + 0x9E3779B97F4A7C15ULL + (h << 6) + (h >> 2);
    h *= 0x100000001B3ULL;
  }
  return static_cast<std::size_t>(h ^ (h >> 29));
}

void CountRow::add(Token token, double amount) {
  auto it = std::lower_bound(counts.begin(), counts.end(), token,
                             [](const auto& c, Token key) { return c.first < key; });
  if (it != counts.end() && it->first == token) {
    it->second += amount;
  } else {
    counts.insert(it, {token, amount});
  }
  total += amount;
}

double CountRow::get(Token token) const {
  auto it = std::lower_bound(counts.begin(), counts.end(), token,
                             [](const auto& c, Token key) { return c.first < key; });
  return it != counts.end() && it->first == token ? it->second : 0.0;
}

NGramSidModel::NGramSidModel(CodebookSpec spec, std::size_t order, double alpha, std::vector<double> level_weights)
    : spec_(std::move(spec)), order_(order), alpha_(alpha), weights_(std::move(level_weights)) {
  if (spec_.num_positions() == 0) throw ValidationError("model spec has no positions");
  if (order_ > kMaxContext) throw ValidationError("context order above " + std::to_string(kMaxContext));
  if (!(alpha_ > 0.0) || !std::isfinite(alpha_)) throw ValidationError("smoothing alpha must be > 0");
  if (weights_.empty()) weights_ = geometric_weights(order_);
  if (weights_.size() != order_ + 1) throw ValidationError("need one interpolation weight per context length 0..order");
  for (double w : weights_) {
    if (!(w > 0.0) || !std::isfinite(w)) throw ValidationError("interpolation weights must be > 0");
  }
}

std::vector<double> NGramSidModel::geometric_weights(std::size_t order, double ratio) {
  std::vector<double> w(order + 1);
  for (std::size_t c = 0; c <= order; ++c) w[c] = std::pow(ratio, static_cast<double>(order - c));
  return w;
}

const CountRow* NGramSidModel::find(const ContextKey& key) const {
  auto it = table_.find(key);
  return it == table_.end() ? nullptr : &it->second;
}

void NGramSidModel::add_stream(std::span<const Token> stream, double amount) {
  const std::size_t num_positions = spec_.num_positions();
  ContextKey key;
  for (std::size_t s = 0; s < stream.size(); ++s) {
    key.position = static_cast<std::uint16_t>(s % num_positions);
    const std::size_t longest = std::min(order_, s);
    for (std::size_t c = 0; c <= longest; ++c) {
      key.length = static_cast<std::uint16_t>(c);
      key.tokens.fill(0);
      std::copy(stream.begin() + static_cast<std::ptrdiff_t>(s - c), stream.begin() + static_cast<std::ptrdiff_t>(s),
                key.tokens.begin());
      table_[key].add(stream[s], amount);
    }
  }
}

void NGramSidModel::insert_row(const ContextKey& key, CountRow row) {
  if (!table_.emplace(key, std::move(row)).second) throw ValidationError("duplicate context row");
}

void NGramSidModel::scale(double factor) {
  if (factor == 1.0) return;
  for (auto& [key, row] : table_) {
    for (auto& [token, count] : row.counts) count *= factor;
    row.total *= factor;
  }
}

void NGramSidModel::merge(const NGramSidModel& other) {
  if (other.spec_ != spec_ || other.order_ != order_ || other.alpha_ != alpha_ || other.weights_ != weights_)
    throw ValidationError("cannot merge models with different configurations");
  for (const auto& [key, row] : other.table_) {
    auto& mine = table_[key];
    for (const auto& [token, count] : row.counts) mine.add(token, count);
  }
}

std::vector<Token> flatten(std::span<const ItemId> items, const SidAssignment& a, bool skip_unknown) {
  std::vector<Token> stream;
  stream.reserve(items.size() * a.spec.num_positions());
  for (const auto& item : items) {
    const SemanticId* sid = a.find(item);
    if (!sid) {
      if (skip_unknown) continue;
      throw ValidationError("unknown item '" + item + "' (not in SID assignment)");
    }
    stream.insert(stream.end(), sid->tokens.begin(), sid->tokens.end());
  }
  return stream;
}

NGramSidModel train(const UserHistories& sequences, const SidAssignment& a, std::size_t order, double alpha,
                    std::vector<double> level_weights) {
  NGramSidModel model(a.spec, order, alpha, std::move(level_weights));
  for (const auto& [user, items] : sequences) model.add_stream(flatten(items, a));
  return model;
}

NGramSidModel warm_update(NGramSidModel model, const UserHistories& new_sequences, const SidAssignment& a,
                          double decay, double passes) {
  if (a.spec != model.spec()) throw ValidationError("incompatible codebook specs");
  if (!(decay > 0.0 && decay <= 1.0)) throw ValidationError("decay must lie in (0, 1]");
  if (!(passes > 0.0)) throw ValidationError("finetune passes must be > 0");
  // Resolve all items before touching the model so a bad item leaves it unchanged.
  std::vector<std::vector<Token>> streams;
  streams.reserve(new_sequences.size());
  for (const auto& [user, items] : new_sequences) streams.push_back(flatten(items, a));
  model.scale(decay);
  for (const auto& stream : streams) model.add_stream(stream, passes);
  return model;
}

Eigen::VectorXd next_token_dist(const NGramSidModel& model, std::size_t position, std::span<const Token> context) {
  const auto vocab = static_cast<Eigen::Index>(model.spec().size(position));
  const double alpha = model.alpha();
  const std::size_t longest = std::min(model.order(), context.size());
  Eigen::VectorXd dist = Eigen::VectorXd::Zero(vocab);
  double weight_sum = 0.0;
  ContextKey key;
  key.position = static_cast<std::uint16_t>(position);
  for (std::size_t c = longest + 1; c-- > 0;) {
    key.length = static_cast<std::uint16_t>(c);
    key.tokens.fill(0);
    std::copy(context.end() - static_cast<std::ptrdiff_t>(c), context.end(), key.tokens.begin());
    const CountRow* row = model.find(key);
    if (!row && c > 0) continue;
    const double w = model.level_weights()[c];
    const double total = row ? row->total : 0.0;
    const double denom = total + alpha * static_cast<double>(vocab);
    dist.array() += w * alpha / denom;
    if (row) {
      for (const auto& [token, count] : row->counts) dist[static_cast<Eigen::Index>(token)] += w * count / denom;
    }
    weight_sum += w;
  }
  dist /= weight_sum;
  return dist;
}

namespace {

struct BeamEntry {
  std::uint32_t node;
  double score;
};

// Same-depth trie indices follow prefix order, so the index breaks score ties.
bool ranks_before(const BeamEntry& x, const BeamEntry& y) {
  if (x.score != y.score) return x.score > y.score;
  return x.node < y.node;
}

}  // namespace

std::vector<ScoredItem> beam_decode(const NGramSidModel& model, std::span<const ItemId> context,
                                    const SidAssignment& a, const SidTrie& trie, std::size_t beam, std::size_t k) {
  if (beam < 1 || k < 1) throw ValidationError("beam width and k must be >= 1");
  if (a.spec != model.spec()) throw ValidationError("incompatible codebook specs");
  const std::size_t width = std::max(beam, k);
  const std::size_t num_positions = a.spec.num_positions();
  const std::size_t order = model.order();

  std::vector<Token> history = flatten(context, a, /*skip_unknown=*/true);
  if (history.size() > order) history.erase(history.begin(), history.end() - static_cast<std::ptrdiff_t>(order));

  std::vector<BeamEntry> beam_entries{{SidTrie::root(), 0.0}};
  std::vector<BeamEntry> candidates;
  std::vector<Token> ctx;
  for (std::size_t l = 0; l < num_positions; ++l) {
    candidates.clear();
    for (const auto& entry : beam_entries) {
      const auto& children = trie.node(entry.node).children;
      if (children.empty()) continue;
      ctx = history;
      const std::vector<Token> prefix = trie.prefix(entry.node);
      ctx.insert(ctx.end(), prefix.begin(), prefix.end());
      const std::size_t keep = std::min(order, ctx.size());
      const Eigen::VectorXd dist =
          next_token_dist(model, l, std::span<const Token>(ctx).subspan(ctx.size() - keep, keep));
      for (const auto& [token, child] : children)
        candidates.push_back({child, entry.score + std::log(dist[static_cast<Eigen::Index>(token)])});
    }
    if (candidates.size() > width) {
      std::nth_element(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(width), candidates.end(),
                       ranks_before);
      candidates.resize(width);
    }
    std::sort(candidates.begin(), candidates.end(), ranks_before);
    beam_entries.swap(candidates);
  }

  std::vector<ScoredItem> out;
  std::unordered_set<std::string_view> seen;
  for (const auto& entry : beam_entries) {
    for (const auto& item : trie.node(entry.node).items) {
      if (out.size() >= k) return out;
      if (!seen.insert(item).second) continue;
      out.push_back({item, SemanticId{trie.prefix(entry.node)}, entry.score});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {
constexpr char kModelMagic[8] = {'S', 'I', 'D', 'N', 'G', 'M', '0', '1'};
}

void write_model(std::ostream& out, const NGramSidModel& model) {
  const nlohmann::json header{{"order", model.order()},
                              {"alpha", model.alpha()},
                              {"spec", {{"L", model.spec().num_positions()}, {"sizes", model.spec().sizes}}},
                              {"weights", model.level_weights()}};
  const std::string text = header.dump();
  out.write(kModelMagic, 8);
  io::put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));

  std::vector<const std::pair<const ContextKey, CountRow>*> rows;
  rows.reserve(model.table().size());
  for (const auto& kv : model.table()) rows.push_back(&kv);
  std::sort(rows.begin(), rows.end(), [](const auto* x, const auto* y) { return x->first < y->first; });
  io::put_u64(out, rows.size());
  for (const auto* kv : rows) {
    const ContextKey& key = kv->first;
    io::put_u32(out, key.position);
    io::put_u32(out, key.length);
    for (std::size_t i = 0; i < key.length; ++i) io::put_u32(out, key.tokens[i]);
    io::put_u32(out, static_cast<std::uint32_t>(kv->second.counts.size()));
    io::put_f64(out, kv->second.total);
    for (const auto& [token, count] : kv->second.counts) {
      io::put_u32(out, token);
      io::put_f64(out, count);
    }
  }
}

NGramSidModel read_model(std::istream& in) {
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kModelMagic, 8) != 0)
    throw IoError("model file: bad magic (expected SIDNGM01)");
  const std::uint32_t header_len = io::get_u32(in);
  std::string text(header_len, '\0');
  if (!in.read(text.data(), header_len)) throw IoError("model file: truncated header");
  NGramSidModel model;
  try {
    const auto header = nlohmann::json::parse(text);
    std::vector<std::size_t> sizes = header.at("spec").at("sizes").get<std::vector<std::size_t>>();
    model = NGramSidModel(CodebookSpec(std::move(sizes)), header.at("order").get<std::size_t>(),
                          header.at("alpha").get<double>(), header.at("weights").get<std::vector<double>>());
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("model file: bad header: ") + e.what());
  }
  const std::uint64_t contexts = io::get_u64(in);
  for (std::uint64_t i = 0; i < contexts; ++i) {
    ContextKey key;
    const std::uint32_t position = io::get_u32(in);
    const std::uint32_t length = io::get_u32(in);
    if (position >= model.spec().num_positions() || length > model.order())
      throw IoError("model file: context key out of range");
    key.position = static_cast<std::uint16_t>(position);
    key.length = static_cast<std::uint16_t>(length);
    for (std::uint32_t t = 0; t < length; ++t) key.tokens[t] = io::get_u32(in);
    CountRow row;
    const std::uint32_t size = io::get_u32(in);
    row.total = io::get_f64(in);
    for (std::uint32_t r = 0; r < size; ++r) {
      const Token token = io::get_u32(in);
      const double count = io::get_f64(in);
      if (token >= model.spec().size(position) || !(count > 0.0)) throw IoError("model file: bad count row");
      if (!row.counts.empty() && token <= row.counts.back().first) throw IoError("model file: unsorted count row");
      row.counts.emplace_back(token, count);
    }
    model.insert_row(key, std::move(row));
  }
  return model;
}

void save_model(const std::filesystem::path& path, const NGramSidModel& model) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  write_model(out, model);
}

NGramSidModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  return read_model(in);
}

}  // namespace sidalign
