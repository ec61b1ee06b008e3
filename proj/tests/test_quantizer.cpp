#include "generators.hpp"

#include "sidalign/parallel.hpp"
#include "sidalign/quantizer.hpp"

#include <doctest.h>

#include <set>

using namespace sidalign;

namespace {

ItemEmbeddingTable random_table(CounterRng& rng, std::size_t n, Eigen::Index dim) {
  std::vector<ItemId> ids;
  ItemEmbeddingTable::Matrix v(static_cast<Eigen::Index>(n), dim);
  for (std::size_t i = 0; i < n; ++i) {
    ids.push_back(gen::item_name(i));
    for (Eigen::Index d = 0; d < dim; ++d) v(static_cast<Eigen::Index>(i), d) = rng.normal();
  }
  return ItemEmbeddingTable(std::move(ids), std::move(v));
}

// Squared residual norm summed over items, computed without the library.
double brute_error(const ItemEmbeddingTable& t, const RqCodebooks& cb, std::size_t levels) {
  double total = 0.0;
  for (Eigen::Index r = 0; r < t.vectors().rows(); ++r) {
    Eigen::RowVectorXd residual = t.vectors().row(r);
    for (std::size_t l = 0; l < levels; ++l) {
      Eigen::Index best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (Eigen::Index c = 0; c < cb.centroids[l].rows(); ++c) {
        const double d = (residual - cb.centroids[l].row(c)).squaredNorm();
        if (d < best_d) best_d = d, best = c;
      }
      residual -= cb.centroids[l].row(best);
    }
    total += residual.squaredNorm();
  }
  return total / static_cast<double>(t.size());
}

}  // namespace

TEST_SUITE("quantizer") {
  TEST_CASE("identical embeddings collapse onto one centroid") {
    ItemEmbeddingTable::Matrix v(5, 3);
    for (int r = 0; r < 5; ++r) v.row(r) << 0.25, -1.5, 3.0;
    const ItemEmbeddingTable t({"a", "b", "c", "d", "e"}, v);
    const auto cb = fit(t, CodebookSpec({1}), 5, 7);
    REQUIRE(cb.centroids.size() == 1);
    CHECK(cb.centroids[0].row(0) == v.row(0));
    CHECK(quantization_error(t, cb) == 0.0);
  }

  TEST_CASE("k equal to the number of distinct points reconstructs exactly") {
    ItemEmbeddingTable::Matrix v(4, 2);
    v << 0, 0, 10, 0, 0, 10, 10, 10;
    const ItemEmbeddingTable t({"a", "b", "c", "d"}, v);
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      const auto cb = fit(t, CodebookSpec({4}), 10, seed);
      CHECK(quantization_error(t, cb) == 0.0);
      const auto sids = encode(t, cb);
      std::set<Token> used;
      for (const auto& [item, sid] : sids.entries) used.insert(sid.tokens[0]);
      CHECK(used.size() == 4);
    }
  }

  TEST_CASE("an embedding equal to centroid 7 encodes to [7]") {
    RqCodebooks cb;
    cb.spec = CodebookSpec({10});
    cb.dim = 2;
    cb.centroids.emplace_back(10, 2);
    for (int c = 0; c < 10; ++c) cb.centroids[0].row(c) << c, -c;
    ItemEmbeddingTable::Matrix v(2, 2);
    v << 7, -7, 7, -7;
    const auto sids = encode(ItemEmbeddingTable({"x", "y"}, v), cb);
    CHECK(sids.at("x") == SemanticId{{7}});
    CHECK(sids.at("y") == SemanticId{{7}});
  }

  TEST_CASE("distance ties go to the lowest centroid index") {
    RqCodebooks cb;
    cb.spec = CodebookSpec({3});
    cb.dim = 1;
    cb.centroids.emplace_back(3, 1);
    cb.centroids[0] << 2, -1, 1;
    ItemEmbeddingTable::Matrix v(1, 1);
    v << 0;
    CHECK(encode(ItemEmbeddingTable({"x"}, v), cb).at("x") == SemanticId{{1}});
  }

  TEST_CASE("encode rejects a dimension mismatch") {
    RqCodebooks cb;
    cb.spec = CodebookSpec({1});
    cb.dim = 3;
    cb.centroids.emplace_back(1, 3);
    cb.centroids[0].setZero();
    ItemEmbeddingTable::Matrix v(1, 2);
    v << 1, 2;
    CHECK_THROWS(encode(ItemEmbeddingTable({"x"}, v), cb));
  }

  TEST_CASE("Lloyd objective never increases within a level") {
    CounterRng rng(31, 0);
    for (int trial = 0; trial < 12; ++trial) {
      const auto t = random_table(rng, gen::between(rng, 20, 200), static_cast<Eigen::Index>(gen::between(rng, 1, 8)));
      const auto spec = gen::spec(rng, 3, 24);
      FitTrace trace;
      fit(t, spec, 12, static_cast<std::uint64_t>(trial), &trace, 1 + trial % 3);
      REQUIRE(trace.objective.size() == spec.num_positions());
      for (const auto& level : trace.objective) {
        REQUIRE(level.size() == 13);
        for (std::size_t i = 1; i < level.size(); ++i) CHECK(level[i] <= level[i - 1]);
      }
    }
  }

  TEST_CASE("adding a level never increases the residual error") {
    CounterRng rng(32, 0);
    for (int trial = 0; trial < 12; ++trial) {
      const auto t = random_table(rng, 200, 8);
      FitTrace trace;
      const auto cb = fit(t, CodebookSpec({16, 16, 8}), 10, static_cast<std::uint64_t>(trial), &trace);
      REQUIRE(trace.level_error.size() == 3);
      for (std::size_t l = 1; l < 3; ++l) CHECK(trace.level_error[l] <= trace.level_error[l - 1]);
      for (std::size_t l = 0; l < 3; ++l) CHECK(trace.level_error[l] == doctest::Approx(brute_error(t, cb, l + 1)));
      CHECK(quantization_error(t, cb) == doctest::Approx(brute_error(t, cb, 3)));

      const auto one = fit(t, CodebookSpec({16}), 10, static_cast<std::uint64_t>(trial));
      const auto two = fit(t, CodebookSpec({16, 16}), 10, static_cast<std::uint64_t>(trial));
      CHECK(quantization_error(t, two) <= quantization_error(t, one));
    }
  }

  TEST_CASE("fits are bit-identical across thread counts and repeated runs") {
    CounterRng rng(33, 0);
    const auto t = random_table(rng, 300, 6);
    const auto spec = CodebookSpec({32, 8, 4});
    set_num_threads(1);
    const auto reference = fit(t, spec, 10, 99, nullptr, 4);
    const auto reference_sids = encode(t, reference);
    for (std::size_t threads : {1, 2, 8}) {
      set_num_threads(threads);
      const auto cb = fit(t, spec, 10, 99, nullptr, 4);
      CHECK(cb == reference);
      CHECK(encode(t, cb) == reference_sids);
    }
    set_num_threads(0);
    CHECK_FALSE(fit(t, spec, 10, 100, nullptr, 4) == reference);
  }

  TEST_CASE("encoded tables always validate") {
    CounterRng rng(34, 0);
    for (int trial = 0; trial < 20; ++trial) {
      const auto t = random_table(rng, gen::between(rng, 1, 80), 4);
      const auto spec = gen::spec(rng, 4, 64);
      const auto sids = tokenize(t, spec, 5, static_cast<std::uint64_t>(trial));
      CHECK(sids.entries.size() == t.size());
      CHECK(validate_assignment(sids).empty());
    }
  }

  TEST_CASE("fit argument errors") {
    CounterRng rng(35, 0);
    const auto t = random_table(rng, 10, 2);
    CHECK_THROWS_AS(fit(t, CodebookSpec({4}), 0, 1), ValidationError);
    CHECK_THROWS_AS(fit(ItemEmbeddingTable(), CodebookSpec({4}), 3, 1), ValidationError);
  }
}
