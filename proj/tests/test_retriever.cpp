#include "generators.hpp"
#include "oracles.hpp"

#include "sidalign/retriever.hpp"

#include <doctest.h>

#include <cmath>
#include <set>
#include <sstream>

using namespace sidalign;

namespace {

ContextKey key(std::size_t position, std::vector<Token> tokens) {
  ContextKey k;
  k.position = static_cast<std::uint16_t>(position);
  k.length = static_cast<std::uint16_t>(tokens.size());
  std::copy(tokens.begin(), tokens.end(), k.tokens.begin());
  return k;
}

UserHistories random_histories(CounterRng& rng, std::size_t users, std::size_t items, std::size_t max_len,
                               std::size_t first_user = 0) {
  UserHistories h;
  for (std::size_t u = first_user; u < first_user + users; ++u) {
    auto& seq = h["u" + std::to_string(u)];
    const auto len = gen::between(rng, 1, max_len);
    for (std::size_t i = 0; i < len; ++i) seq.push_back(gen::item_name(rng.below(items)));
  }
  return h;
}

// Re-keys a model through per-position token permutations perms[l][old] = new.
NGramSidModel relabeled(const NGramSidModel& m, const std::vector<std::vector<Token>>& perms) {
  const auto L = m.spec().num_positions();
  NGramSidModel out(m.spec(), m.order(), m.alpha(), m.level_weights());
  for (const auto& [k, row] : m.table()) {
    ContextKey nk = k;
    for (std::size_t j = 0; j < k.length; ++j) {
      const std::size_t pos = (k.position + L * kMaxContext - k.length + j) % L;
      nk.tokens[j] = perms[pos][k.tokens[j]];
    }
    CountRow nr;
    for (const auto& [token, count] : row.counts) nr.counts.push_back({perms[k.position][token], count});
    std::sort(nr.counts.begin(), nr.counts.end());
    nr.total = row.total;
    out.insert_row(nk, nr);
  }
  return out;
}

}  // namespace

TEST_SUITE("retriever") {
  TEST_CASE("trie examples") {
    SidAssignment a;
    a.spec = CodebookSpec({4, 4});
    a.entries["b"] = SemanticId{{1, 2}};
    const auto single = build_trie(a);
    CHECK(single.num_nodes() == 3);
    CHECK(single.contains(SemanticId{{1, 2}}));
    CHECK_FALSE(single.contains(SemanticId{{1, 3}}));
    a.entries["a"] = SemanticId{{1, 2}};
    const auto both = build_trie(a);
    CHECK(both.num_nodes() == 3);
    CHECK(both.num_sids() == 1);
    const auto leaf = both.child(static_cast<std::uint32_t>(both.child(SidTrie::root(), 1)), 2);
    REQUIRE(leaf >= 0);
    CHECK(both.node(static_cast<std::uint32_t>(leaf)).items == std::vector<ItemId>{"a", "b"});
  }

  TEST_CASE("counting a single item by hand") {
    SidAssignment a;
    a.spec = CodebookSpec({4, 2});
    a.entries["x"] = SemanticId{{3, 1}};
    const auto m = train({{"u", {"x"}}}, a, 1, 0.1);
    CHECK(m.table().size() == 3);
    REQUIRE(m.find(key(0, {})));
    CHECK(m.find(key(0, {}))->get(3) == 1.0);
    REQUIRE(m.find(key(1, {3})));
    CHECK(m.find(key(1, {3}))->get(1) == 1.0);
    REQUIRE(m.find(key(1, {})));
    CHECK(m.find(key(1, {}))->get(1) == 1.0);
  }

  TEST_CASE("training rejects unknown items by name") {
    SidAssignment a;
    a.spec = CodebookSpec({4});
    a.entries["x"] = SemanticId{{3}};
    try {
      train({{"u", {"x", "ghost"}}}, a, 2, 0.1);
      FAIL("expected an error");
    } catch (const ValidationError& e) {
      CHECK(std::string(e.what()).find("ghost") != std::string::npos);
    }
  }

  TEST_CASE("empty model is uniform") {
    const NGramSidModel m(CodebookSpec({5, 3}), 4, 0.1);
    for (std::size_t l = 0; l < 2; ++l) {
      const auto d = next_token_dist(m, l, std::vector<Token>{1, 0, 2});
      for (Eigen::Index t = 0; t < d.size(); ++t) CHECK(d[t] == doctest::Approx(1.0 / static_cast<double>(d.size())));
    }
  }

  TEST_CASE("a single observation with tiny alpha concentrates the mass") {
    SidAssignment a;
    a.spec = CodebookSpec({8});
    a.entries["x"] = SemanticId{{3}};
    const auto m = train({{"u", {"x"}}}, a, 0, 1e-6);
    const auto d = next_token_dist(m, 0, {});
    CHECK(d[3] == doctest::Approx((1.0 + 1e-6) / (1.0 + 8e-6)));
    CHECK(d[3] > 0.9999);
  }

  TEST_CASE("counts and distributions match the reference n-gram") {
    CounterRng rng(41, 0);
    for (int trial = 0; trial < 40; ++trial) {
      const auto spec = gen::spec(rng, 3, 6);
      const auto a = gen::assignment(rng, spec, 25);
      const auto order = gen::between(rng, 0, 5);
      const auto h = random_histories(rng, gen::between(rng, 1, 8), 25, 6);
      const auto m = train(h, a, order, 0.1);
      const oracle::NGram ref(h, a, order, 0.1, m.level_weights());
      CHECK(ref.rows() == m.table().size());
      for (const auto& [k, row] : m.table()) {
        const std::vector<Token> ctx(k.tokens.begin(), k.tokens.begin() + k.length);
        for (const auto& [token, count] : row.counts) CHECK(count == ref.count(k.position, ctx, token));
      }
      for (int probe = 0; probe < 10; ++probe) {
        const auto pos = rng.below(spec.num_positions());
        std::vector<Token> ctx;
        const auto len = gen::between(rng, 0, order + 2);
        // Slices of a training stream so the long levels are actually hit.
        const auto stream = flatten(h.begin()->second, a);
        const auto start = rng.below(stream.size());
        for (std::size_t i = start; i < stream.size() && ctx.size() < len; ++i) ctx.push_back(stream[i]);
        const auto d = next_token_dist(m, pos, ctx);
        CHECK(d.sum() == doctest::Approx(1.0).epsilon(1e-9));
        const auto want = ref.dist(pos, ctx);
        for (Eigen::Index t = 0; t < d.size(); ++t) CHECK(d[t] == doctest::Approx(want[static_cast<std::size_t>(t)]));
      }
    }
  }

  TEST_CASE("counts are additive over disjoint users") {
    CounterRng rng(42, 0);
    for (int trial = 0; trial < 30; ++trial) {
      const auto a = gen::assignment(rng, gen::spec(rng, 4, 8), 30);
      const auto h1 = random_histories(rng, 5, 30, 10, 0);
      const auto h2 = random_histories(rng, 5, 30, 10, 100);
      UserHistories all = h1;
      all.insert(h2.begin(), h2.end());
      auto merged = train(h1, a, 4, 0.1);
      merged.merge(train(h2, a, 4, 0.1));
      CHECK(merged == train(all, a, 4, 0.1));
      CHECK(warm_update(train(h1, a, 4, 0.1), h2, a, 1.0) == train(all, a, 4, 0.1));
    }
  }

  TEST_CASE("warm_update semantics") {
    CounterRng rng(43, 0);
    const auto a = gen::assignment(rng, CodebookSpec({6, 6}), 20);
    const auto base = train(random_histories(rng, 6, 20, 8), a, 3, 0.1);
    CHECK(warm_update(base, {}, a, 1.0) == base);

    const auto halved = warm_update(base, {}, a, 0.5);
    for (const auto& [k, row] : base.table()) {
      const auto* h = halved.find(k);
      REQUIRE(h);
      CHECK(h->total == row.total * 0.5);
      for (const auto& [token, count] : row.counts) CHECK(h->get(token) == count * 0.5);
    }

    const UserHistories more = {{"new", {gen::item_name(3)}}};
    const auto updated = warm_update(base, more, a, 0.5, 2.0);
    const auto k0 = key(0, {});
    const Token t = a.at(gen::item_name(3)).tokens[0];
    CHECK(updated.find(k0)->get(t) == base.find(k0)->get(t) * 0.5 + 2.0);

    SidAssignment other = a;
    other.spec = CodebookSpec({6, 7});
    CHECK_THROWS_AS(warm_update(base, more, other, 1.0), ValidationError);
    CHECK_THROWS_AS(warm_update(base, more, a, 0.0), ValidationError);
    CHECK_THROWS_AS(warm_update(base, {{"x", {"ghost"}}}, a, 1.0), ValidationError);
  }

  TEST_CASE("decode examples") {
    SidAssignment a;
    a.spec = CodebookSpec({4, 4});
    a.entries["only"] = SemanticId{{2, 3}};
    const NGramSidModel empty(a.spec, 4, 0.1);
    const std::vector<ItemId> ctx{"only", "unknown"};
    const auto one = beam_decode(empty, ctx, a, build_trie(a), 1, 10);
    REQUIRE(one.size() == 1);
    CHECK(one[0].item == "only");

    a.entries = {{"c", SemanticId{{0, 1}}}, {"a", SemanticId{{3, 0}}}, {"b", SemanticId{{0, 2}}}};
    const auto three = beam_decode(empty, {}, a, build_trie(a), 1, 3);
    REQUIRE(three.size() == 3);
    CHECK(three[0].item == "c");
    CHECK(three[1].item == "b");
    CHECK(three[2].item == "a");
    CHECK(three[0].score == doctest::Approx(2 * std::log(0.25)));
  }

  TEST_CASE("full-width beam equals exhaustive scoring") {
    CounterRng rng(44, 0);
    for (int trial = 0; trial < 60; ++trial) {
      const auto spec = gen::spec(rng, 3, 8);
      const auto n_items = gen::between(rng, 1, 200);
      const auto a = gen::assignment(rng, spec, n_items);
      const auto m = train(random_histories(rng, 20, n_items, 12), a, gen::between(rng, 1, 6), 0.1);
      const auto trie = build_trie(a);
      std::vector<ItemId> ctx;
      for (std::size_t i = gen::between(rng, 0, 4); i > 0; --i) ctx.push_back(gen::item_name(rng.below(n_items)));
      const auto k = gen::between(rng, 1, n_items);
      const auto got = beam_decode(m, ctx, a, trie, trie.num_sids(), k);
      const auto want = oracle::exhaustive_decode(m, ctx, a, k);
      REQUIRE(got.size() == want.size());
      for (std::size_t r = 0; r < got.size(); ++r) {
        CHECK(got[r].item == want[r].item);
        CHECK(got[r].score == want[r].score);
        CHECK(got[r].sid == a.at(got[r].item));
      }
    }
  }

  TEST_CASE("narrow beams only emit existing SIDs") {
    CounterRng rng(45, 0);
    for (int trial = 0; trial < 40; ++trial) {
      const auto a = gen::assignment(rng, gen::spec(rng, 4, 6), 60);
      const auto m = train(random_histories(rng, 10, 60, 10), a, 4, 0.1);
      const auto trie = build_trie(a);
      const std::vector<ItemId> ctx{gen::item_name(1)};
      const auto out = beam_decode(m, ctx, a, trie, gen::between(rng, 1, 4), gen::between(rng, 1, 20));
      std::set<ItemId> seen;
      for (const auto& s : out) {
        CHECK(a.at(s.item) == s.sid);
        CHECK(seen.insert(s.item).second);
      }
    }
  }

  TEST_CASE("relabeling tokens and model keys together leaves rankings unchanged") {
    CounterRng rng(46, 0);
    for (int trial = 0; trial < 30; ++trial) {
      const auto spec = gen::spec(rng, 3, 8);
      const auto a = gen::assignment(rng, spec, 80);
      const auto h = random_histories(rng, 15, 80, 10);
      const auto m = train(h, a, 4, 0.1);
      std::vector<std::vector<Token>> perms;
      for (std::size_t l = 0; l < spec.num_positions(); ++l) perms.push_back(gen::permutation(rng, spec.size(l)));
      const auto pa = gen::permuted(a, perms);
      const auto pm = relabeled(m, perms);
      CHECK(pm == train(h, pa, 4, 0.1));

      const std::vector<ItemId> ctx{gen::item_name(rng.below(80)), gen::item_name(rng.below(80))};
      const auto beam = gen::between(rng, 1, 10);
      auto x = beam_decode(m, ctx, a, build_trie(a), beam, 80);
      auto y = beam_decode(pm, ctx, pa, build_trie(pa), beam, 80);
      const auto by_score = [](const ScoredItem& p, const ScoredItem& q) {
        return p.score != q.score ? p.score > q.score : p.item < q.item;
      };
      std::sort(x.begin(), x.end(), by_score);
      std::sort(y.begin(), y.end(), by_score);
      REQUIRE(x.size() == y.size());
      for (std::size_t r = 0; r < x.size(); ++r) {
        CHECK(x[r].item == y[r].item);
        CHECK(x[r].score == y[r].score);
      }
    }
  }

  TEST_CASE("model binary round-trip") {
    CounterRng rng(47, 0);
    const auto a = gen::assignment(rng, CodebookSpec({16, 8, 4}), 50);
    const auto m = warm_update(train(random_histories(rng, 10, 50, 10), a, 5, 0.2), random_histories(rng, 3, 50, 5),
                               a, 0.3, 1.5);
    std::stringstream first;
    write_model(first, m);
    CHECK(first.str().rfind("SIDNGM01", 0) == 0);
    const auto back = read_model(first);
    CHECK(back == m);
    std::stringstream second;
    write_model(second, back);
    CHECK(second.str() == first.str());

    std::stringstream truncated(first.str().substr(0, first.str().size() / 2));
    CHECK_THROWS(read_model(truncated));
  }
}
