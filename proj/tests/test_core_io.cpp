#include "generators.hpp"

#include "sidalign/alignment.hpp"
#include "sidalign/io.hpp"

#include <doctest.h>

#include <filesystem>
#include <sstream>

using namespace sidalign;

namespace {

SidAssignment one(const CodebookSpec& spec, std::vector<Token> tokens) {
  SidAssignment a;
  a.spec = spec;
  a.entries["x"] = SemanticId{std::move(tokens)};
  return a;
}

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "sidalign_unit";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_SUITE("core") {
  TEST_CASE("validate_assignment examples") {
    CHECK(validate_assignment(one(CodebookSpec::uniform(4, 512), {0, 511, 3, 9})).empty());

    const auto long_sid = validate_assignment(one(CodebookSpec::uniform(2, 8), {1, 2, 3}));
    REQUIRE(long_sid.size() == 1);
    CHECK(long_sid[0].item == "x");
    CHECK_FALSE(long_sid[0].position.has_value());

    const auto range = validate_assignment(one(CodebookSpec({4, 4}), {4, 0}));
    REQUIRE(range.size() == 1);
    CHECK(range[0].position == std::optional<std::size_t>(0));
  }

  TEST_CASE("validate_assignment flags exactly the corrupted entries") {
    CounterRng rng(21, 0);
    for (int trial = 0; trial < 200; ++trial) {
      const auto spec = gen::spec(rng, 4, 16);
      auto a = gen::assignment(rng, spec, gen::between(rng, 1, 30));
      CHECK(validate_assignment(a).empty());
      std::size_t corrupted = 0;
      for (auto& [item, sid] : a.entries) {
        if (rng.below(4) != 0) continue;
        ++corrupted;
        if (rng.below(2) == 0) {
          sid.tokens.push_back(0);
        } else {
          const auto l = rng.below(spec.num_positions());
          sid.tokens[l] = static_cast<Token>(spec.size(l) + rng.below(3));
        }
      }
      CHECK(validate_assignment(a).size() == corrupted);
    }
  }

  TEST_CASE("codebook spec parsing") {
    CHECK(CodebookSpec::parse("2,32,8") == CodebookSpec({32, 8}));
    CHECK(CodebookSpec::parse("2,32,8").to_string() == "2,32,8");
    CHECK_THROWS_AS(CodebookSpec::parse("3,32,8"), ValidationError);
    CHECK_THROWS_AS(CodebookSpec::parse("1,0"), ValidationError);
    CHECK_THROWS_AS(CodebookSpec::parse("two"), ValidationError);
  }

  TEST_CASE("token mapping check rejects non-injective and out-of-range maps") {
    TokenMapping m;
    m.spec = CodebookSpec({4});
    m.maps = {{{0, 1}, {1, 1}}};
    CHECK_THROWS_AS(m.check(), ValidationError);
    m.maps = {{{0, 4}}};
    CHECK_THROWS_AS(m.check(), ValidationError);
    m.maps = {{{0, 3}, {2, 0}}};
    CHECK_NOTHROW(m.check());
  }

  TEST_CASE("embedding table rejects duplicates and non-finite values") {
    ItemEmbeddingTable::Matrix v(2, 2);
    v << 1, 2, 3, 4;
    CHECK_THROWS_AS(ItemEmbeddingTable({"a", "a"}, v), ValidationError);
    v(1, 1) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(ItemEmbeddingTable({"a", "b"}, v), ValidationError);
  }
}

TEST_SUITE("io") {
  TEST_CASE("assignment JSONL round-trips byte for byte") {
    CounterRng rng(22, 0);
    for (int trial = 0; trial < 30; ++trial) {
      const auto a = gen::assignment(rng, gen::spec(rng, 4, 512), gen::between(rng, 1, 50));
      std::ostringstream first;
      io::write_assignment(first, a);
      std::istringstream in(first.str());
      const auto back = io::read_assignment(in);
      CHECK(back == a);
      std::ostringstream second;
      io::write_assignment(second, back);
      CHECK(second.str() == first.str());
    }
  }

  TEST_CASE("assignment header format") {
    std::ostringstream out;
    io::write_assignment(out, one(CodebookSpec({4, 2}), {3, 1}));
    CHECK(out.str() == "{\"spec\":{\"L\":2,\"sizes\":[4,2]}}\n{\"item\":\"x\",\"sid\":[3,1]}\n");
  }

  TEST_CASE("integer item ids are kept verbatim") {
    std::istringstream in("{\"spec\":{\"L\":1,\"sizes\":[4]}}\n{\"item\":17,\"sid\":[2]}\n");
    const auto a = io::read_assignment(in);
    CHECK(a.at("17") == SemanticId{{2}});
  }

  TEST_CASE("malformed assignment files are I/O errors") {
    std::istringstream empty("");
    CHECK_THROWS_AS(io::read_assignment(empty), IoError);
    std::istringstream bad("{\"spec\":{\"L\":1,\"sizes\":[4]}}\nnot json\n");
    CHECK_THROWS_AS(io::read_assignment(bad), IoError);
    std::istringstream out_of_range("{\"spec\":{\"L\":1,\"sizes\":[4]}}\n{\"item\":\"a\",\"sid\":[9]}\n");
    CHECK_THROWS(io::read_assignment(out_of_range));
    CHECK_THROWS_AS(io::load_assignment(scratch("does_not_exist.jsonl")), IoError);
  }

  TEST_CASE("mapping JSON round-trips") {
    CounterRng rng(23, 0);
    const auto spec = CodebookSpec({8, 8});
    const auto old_a = gen::assignment(rng, spec, 40);
    const auto new_a = gen::assignment(rng, spec, 40);
    const auto m = align(old_a, new_a, Solver::Greedy);
    const auto text = io::mapping_to_json(m);
    CHECK(io::mapping_from_json(text) == m);
    CHECK(text.find("\"maps\"") != std::string::npos);
  }

  TEST_CASE("event TSV round-trips and requires the header") {
    CounterRng rng(24, 0);
    const auto events = gen::events(rng, 50, 5, 20, 1000);
    std::ostringstream out;
    io::write_events(out, events);
    CHECK(out.str().rfind("user\titem\tts\n", 0) == 0);
    std::istringstream in(out.str());
    CHECK(io::read_events(in) == events);
    std::istringstream headless("u1\ti1\t3\n");
    CHECK_THROWS_AS(io::read_events(headless), IoError);
    std::istringstream negative("user\titem\tts\nu1\ti1\t-3\n");
    CHECK_THROWS(io::read_events(negative));
  }

  TEST_CASE("binary embeddings round-trip through f32") {
    ItemEmbeddingTable::Matrix v(3, 2);
    v << 0.5, -1.25, 2.0, 3.0, -0.0625, 8.0;
    const ItemEmbeddingTable table({"b", "a", "c"}, v);
    const auto path = scratch("emb.bin");
    io::save_embeddings(path, table);
    const auto back = io::load_embeddings(path);
    CHECK(back == table);
    const std::string bytes = io::read_file(path);
    CHECK(bytes.substr(0, 8) == "SIDEMB01");
    CHECK(bytes.size() == 8 + 4 + 4 + 3 * (4 + 1 + 2 * 4));
    io::write_file(path, bytes.substr(0, bytes.size() - 3));
    CHECK_THROWS_AS(io::load_embeddings(path), IoError);
  }
}
