#pragma once

#include "sidalign/core.hpp"
#include "sidalign/temporal.hpp"

#include <absl/container/flat_hash_map.h>
#include <boost/container/small_vector.hpp>

#include <array>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

namespace sidalign {

// ---------------------------------------------------------------------------
// Prefix trie over the SIDs of an assignment.

/// Nodes of equal depth are numbered in lexicographic order of their prefixes.
class SidTrie {
 public:
  struct Node {
    /// Sorted by token.
    std::vector<std::pair<Token, std::uint32_t>> children;
    /// Leaves only: items sharing this SID, ascending by id.
    std::vector<ItemId> items;
    std::uint32_t parent = 0;
    Token token = 0;  // edge label from the parent
  };

  SidTrie() = default;
  explicit SidTrie(const SidAssignment& a);

  std::size_t depth() const { return depth_; }
  const Node& node(std::uint32_t index) const { return nodes_[index]; }
  static constexpr std::uint32_t root() { return 0; }
  /// Child index for `token`, or -1.
  std::int64_t child(std::uint32_t index, Token token) const;
  bool contains(const SemanticId& sid) const;
  /// Tokens on the path from the root to `index`.
  std::vector<Token> prefix(std::uint32_t index) const;
  std::size_t num_sids() const { return num_sids_; }
  std::size_t num_nodes() const { return nodes_.size(); }

 private:
  std::vector<Node> nodes_;
  std::size_t depth_ = 0;
  std::size_t num_sids_ = 0;
};

SidTrie build_trie(const SidAssignment& a);

// ---------------------------------------------------------------------------
// Count-based next-token model over flattened SID streams.

inline constexpr std::size_t kMaxContext = 16;

struct ContextKey {
  std::uint16_t position = 0;
  std::uint16_t length = 0;
  std::array<Token, kMaxContext> tokens{};

  auto operator<=>(const ContextKey&) const = default;
  bool operator==(const ContextKey&) const = default;
};

struct ContextKeyHash {
  std::size_t operator()(const ContextKey& k) const noexcept;
};

struct CountRow {
  /// Sorted by token; counts > 0. Most long-context rows hold one or two tokens.
  boost::container::small_vector<std::pair<Token, double>, 2> counts;
  double total = 0.0;

  void add(Token token, double amount);
  double get(Token token) const;
  bool operator==(const CountRow&) const = default;
};

class NGramSidModel {
 public:
  using Table = absl::flat_hash_map<ContextKey, CountRow, ContextKeyHash>;

  NGramSidModel() = default;
  /// Empty `level_weights` selects geometric_weights(order).
  NGramSidModel(CodebookSpec spec, std::size_t order, double alpha, std::vector<double> level_weights = {});

  /// w[c] = ratio^(order - c): each step toward a shorter context scales the weight by `ratio`.
  static std::vector<double> geometric_weights(std::size_t order, double ratio = 0.6);

  const CodebookSpec& spec() const { return spec_; }
  std::size_t order() const { return order_; }
  double alpha() const { return alpha_; }
  const std::vector<double>& level_weights() const { return weights_; }
  const Table& table() const { return table_; }
  const CountRow* find(const ContextKey& key) const;

  /// Counts every (position, context suffix of length 0..order) -> next token
  /// along one flattened token stream, each occurrence weighted by `amount`.
  void add_stream(std::span<const Token> stream, double amount = 1.0);
  void scale(double factor);
  /// Restores one deserialized row; the key must be new.
  void insert_row(const ContextKey& key, CountRow row);
  /// Adds the other model's counts; specs and hyper-parameters must agree.
  void merge(const NGramSidModel& other);

  bool operator==(const NGramSidModel&) const = default;

 private:
  CodebookSpec spec_;
  std::size_t order_ = 0;
  double alpha_ = 0.1;
  std::vector<double> weights_;
  Table table_;
};

/// Concatenates the SIDs of `items`; items missing from `a` are skipped when
/// `skip_unknown`, otherwise a ValidationError names them.
std::vector<Token> flatten(std::span<const ItemId> items, const SidAssignment& a, bool skip_unknown = false);

NGramSidModel train(const UserHistories& sequences, const SidAssignment& a, std::size_t order, double alpha,
                    std::vector<double> level_weights = {});

/// Scales existing counts by `decay`, then adds `passes` x the counts of `new_sequences`.
NGramSidModel warm_update(NGramSidModel model, const UserHistories& new_sequences, const SidAssignment& a,
                          double decay, double passes = 1.0);

/// Interpolated add-alpha distribution over V_position. Context levels whose
/// key was never observed are left out of the mixture (except the empty context).
Eigen::VectorXd next_token_dist(const NGramSidModel& model, std::size_t position, std::span<const Token> context);

struct ScoredItem {
  ItemId item;
  SemanticId sid;
  double score = 0.0;
};

/// Trie-constrained beam search over SIDs (effective width max(beam, k)); returns
/// at most k items ranked by (score desc, SID asc, item id asc). Context items
/// without a SID in `a` are ignored.
std::vector<ScoredItem> beam_decode(const NGramSidModel& model, std::span<const ItemId> context,
                                    const SidAssignment& a, const SidTrie& trie, std::size_t beam, std::size_t k);

// Binary model format: "SIDNGM01", u32 header length, JSON header
// {"order","alpha","spec","weights"}, u64 context count, then contexts in key
// order: u32 position, u32 length, u32 tokens..., u32 row size, f64 row total,
// (u32 token, f64 count)...
void write_model(std::ostream& out, const NGramSidModel& model);
NGramSidModel read_model(std::istream& in);
void save_model(const std::filesystem::path& path, const NGramSidModel& model);
NGramSidModel load_model(const std::filesystem::path& path);

}  // namespace sidalign
