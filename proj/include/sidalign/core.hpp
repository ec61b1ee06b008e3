#pragma once

#include <Eigen/Core>

#include <compare>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace sidalign {

using Token = std::uint32_t;
using ItemId = std::string;
using UserId = std::string;

/// Input that violates a documented precondition (bad spec, mismatched
/// assignments, unknown items). The CLI maps this to exit code 1.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Filesystem or format failure while reading/writing artifacts (exit code 2).
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Broken internal invariant; indicates a bug rather than bad input.
class InternalError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Per-position codebook sizes of a SID. Position l accepts tokens in [0, sizes[l]).
struct CodebookSpec {
  std::vector<std::size_t> sizes;

  CodebookSpec() = default;
  explicit CodebookSpec(std::vector<std::size_t> s);

  static CodebookSpec uniform(std::size_t num_positions, std::size_t size);
  /// Parses "L,V0,...,V(L-1)".
  static CodebookSpec parse(const std::string& text);

  std::size_t num_positions() const { return sizes.size(); }
  std::size_t size(std::size_t position) const { return sizes.at(position); }
  std::string to_string() const;

  bool operator==(const CodebookSpec&) const = default;
};

struct SemanticId {
  std::vector<Token> tokens;

  std::size_t size() const { return tokens.size(); }
  Token operator[](std::size_t l) const { return tokens[l]; }

  auto operator<=>(const SemanticId&) const = default;
  bool operator==(const SemanticId&) const = default;
};

/// Item -> SID map under one codebook spec. Entries are kept ordered by item id,
/// which is also the canonical serialization order. Several items may share a SID.
struct SidAssignment {
  CodebookSpec spec;
  std::map<ItemId, SemanticId> entries;

  std::size_t size() const { return entries.size(); }
  bool contains(const ItemId& item) const { return entries.count(item) != 0; }
  /// nullptr when absent.
  const SemanticId* find(const ItemId& item) const;
  const SemanticId& at(const ItemId& item) const;

  bool operator==(const SidAssignment&) const = default;
};

struct Violation {
  ItemId item;
  std::optional<std::size_t> position;
  std::string rule;
};

/// Empty iff every SID matches spec length and every token is within its codebook.
/// A malformed spec is reported as a single violation with an empty item id.
std::vector<Violation> validate_assignment(const SidAssignment& a);

/// Per-position injective partial map from new-token index to old-token index.
struct TokenMapping {
  CodebookSpec spec;
  std::vector<std::map<Token, Token>> maps;

  /// Throws ValidationError on a non-injective map or an out-of-range token.
  void check() const;
  bool operator==(const TokenMapping&) const = default;
};

/// Sparse co-occurrence counts W_l(new, old) at one SID position.
struct CooccurrenceMatrix {
  struct Entry {
    Token new_token;
    Token old_token;
    std::int64_t count;
    bool operator==(const Entry&) const = default;
  };

  std::size_t position = 0;
  /// Sorted by (new_token, old_token). compute_cooccurrence emits only positive
  /// counts; hand-built matrices may list explicit zeros.
  std::vector<Entry> entries;

  std::int64_t total() const;
  std::int64_t at(Token new_token, Token old_token) const;
};

struct InteractionEvent {
  UserId user;
  ItemId item;
  std::int64_t timestamp = 0;

  bool operator==(const InteractionEvent&) const = default;
};

/// Contiguous chronological partition of an event stream (block 0 is the oldest).
struct TemporalBlocks {
  std::vector<std::vector<InteractionEvent>> blocks;

  std::size_t size() const { return blocks.size(); }
  /// 1-based block access, matching the block_01..block_NN file naming.
  const std::vector<InteractionEvent>& block(std::size_t one_based) const;
};

/// Item embeddings: row r of `vectors` belongs to `ids[r]`; ids are strictly ascending.
class ItemEmbeddingTable {
 public:
  using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  ItemEmbeddingTable() = default;
  /// Sorts rows by id. Throws ValidationError on duplicate ids, dim 0 or non-finite values.
  ItemEmbeddingTable(std::vector<ItemId> ids, Matrix vectors);

  Eigen::Index dim() const { return vectors_.cols(); }
  std::size_t size() const { return ids_.size(); }
  bool empty() const { return ids_.empty(); }
  const std::vector<ItemId>& ids() const { return ids_; }
  const Matrix& vectors() const { return vectors_; }
  std::optional<std::size_t> index_of(const ItemId& id) const;

  bool operator==(const ItemEmbeddingTable& o) const {
    return ids_ == o.ids_ && vectors_.rows() == o.vectors_.rows() &&
           vectors_.cols() == o.vectors_.cols() && vectors_ == o.vectors_;
  }

 private:
  std::vector<ItemId> ids_;
  Matrix vectors_;
};

}  // namespace sidalign
