#include "generators.hpp"

#include "sidalign/alignment.hpp"
#include "sidalign/quantizer.hpp"
#include "sidalign/simulate.hpp"
#include "sidalign/temporal.hpp"

#include <doctest.h>

using namespace sidalign;

namespace {

SimulationParams small(std::uint64_t seed, double drift) {
  auto p = simulation_preset("benchmark-small");
  p.seed = seed;
  p.drift = drift;
  return p;
}

struct Tokenized {
  SidAssignment old_a, new_a;
};

Tokenized tokenize_windows(const Benchmark& b, const CodebookSpec& spec) {
  return {tokenize(b.embeddings_old_window, spec, 15, 7, 8), tokenize(b.embeddings_full_window, spec, 15, 7, 8)};
}

// Share of shared items whose SID no per-position relabeling restores.
double unrecovered(const Tokenized& t) {
  const auto r = drift_report(t.old_a, t.new_a);
  return r.item_change_rate * (1.0 - r.recoverable_fraction);
}

}  // namespace

TEST_SUITE("simulate") {
  TEST_CASE("same seed gives identical output, other seeds differ") {
    const auto a = gen_benchmark(small(3, 0.6));
    const auto b = gen_benchmark(small(3, 0.6));
    CHECK(a.events == b.events);
    CHECK(a.embeddings_old_window == b.embeddings_old_window);
    CHECK(a.embeddings_full_window == b.embeddings_full_window);
    CHECK_FALSE(gen_benchmark(small(4, 0.6)).events == a.events);
  }

  TEST_CASE("timestamps increase and sizes match") {
    const auto p = small(5, 0.6);
    const auto b = gen_benchmark(p);
    REQUIRE(b.events.size() == p.n_events);
    for (std::size_t e = 1; e < b.events.size(); ++e) CHECK(b.events[e - 1].timestamp < b.events[e].timestamp);
    CHECK(b.embeddings_old_window.dim() == static_cast<Eigen::Index>(p.dim));
    CHECK(b.embeddings_old_window.size() <= b.embeddings_full_window.size());
  }

  TEST_CASE("parameter validation") {
    auto p = small(1, 0.6);
    p.drift = -1.0;
    CHECK_THROWS_AS(gen_benchmark(p), ValidationError);
    p = small(1, 0.6);
    p.n_items = 0;
    CHECK_THROWS_AS(gen_benchmark(p), ValidationError);
    p = small(1, 0.6);
    p.subclusters = 1;
    CHECK_THROWS_AS(gen_benchmark(p), ValidationError);
    CHECK_THROWS_AS(simulation_preset("nope"), ValidationError);
  }

  TEST_CASE("without drift the two tokenizations align to near-identity") {
    const auto spec = CodebookSpec({32, 8});
    for (std::uint64_t seed : {1, 2, 3}) {
      const auto t = tokenize_windows(gen_benchmark(small(seed, 0.0)), spec);
      const auto m = align(t.old_a, t.new_a, Solver::Hungarian);
      // After relabeling, each active new token should sit on the old token it co-occurs with most.
      const auto aligned = rewrite(t.new_a, m);
      std::size_t active = 0, fixed = 0;
      for (const auto& w : compute_cooccurrence(t.old_a, aligned)) {
        std::map<Token, std::pair<Token, std::int64_t>> best;
        for (const auto& e : w.entries) {
          auto& b = best[e.new_token];
          if (e.count > b.second || (e.count == b.second && e.old_token < b.first)) b = {e.old_token, e.count};
        }
        for (const auto& [token, b] : best) {
          ++active;
          fixed += b.first == token;
        }
      }
      CHECK(static_cast<double>(fixed) / static_cast<double>(active) >= 0.95);
    }
  }

  TEST_CASE("unrecoverable SID disagreement grows with drift") {
    // Linear drift overshoots the target topic for drift >= 3, where both
    // windows see migrants already settled; the grid stays below that.
    const auto spec = CodebookSpec({32, 8});
    std::vector<double> rate;
    for (double drift : {0.0, 0.5, 1.5}) {
      double sum = 0.0;
      for (std::uint64_t seed = 1; seed <= 8; ++seed)
        sum += unrecovered(tokenize_windows(gen_benchmark(small(seed, drift)), spec));
      rate.push_back(sum / 8.0);
    }
    for (std::size_t i = 1; i < rate.size(); ++i) CHECK(rate[i] > rate[i - 1]);
  }

  TEST_CASE("default benchmark survives five-core filtering") {
    const auto b = gen_benchmark(simulation_preset("benchmark-default"));
    CHECK(static_cast<double>(five_core_filter(b.events).size()) >= 0.8 * static_cast<double>(b.events.size()));
  }

  TEST_CASE("drift report examples") {
    CounterRng rng(61, 0);
    const auto spec = CodebookSpec({16, 16});
    const auto a = gen::assignment(rng, spec, 400);

    const auto same = drift_report(a, a);
    CHECK(same.shared_items == 400);
    CHECK(same.item_change_rate == 0.0);
    CHECK(same.recoverable_fraction == 1.0);
    for (double c : same.position_churn) CHECK(c == 0.0);

    const auto shuffled = drift_report(a, gen::permuted(a, {gen::permutation(rng, 16), gen::permutation(rng, 16)}));
    CHECK(shuffled.item_change_rate > 0.8);
    CHECK(shuffled.recoverable_fraction == 1.0);
    for (double g : shuffled.aligned_agreement) CHECK(g == 1.0);

    // Independent SIDs: a relabeling recovers an item only if both positions
    // happen to match, roughly (best-cell share)^2 for 25 items per token.
    const auto random = drift_report(a, gen::assignment(rng, spec, 400));
    CHECK(random.item_change_rate > 0.9);
    CHECK(random.recoverable_fraction < 0.1);
  }
}
