#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "btrec/digest.hpp"
#include "btrec/error.hpp"
#include "btrec/model_io.hpp"
#include "fixtures.hpp"

using namespace btrec;

namespace {

struct Saved {
  fixtures::World world = fixtures::two_group_world(2, 2);
  Vocab vocab = build_vocab(world.trajs, world.pois, world.profiles, CorpusMode::personalized);
  ModelParams params = init_model(fixtures::small_config(static_cast<int>(vocab.size())));
};

// Rewrites the trailing checksum after an edit.
void reseal(std::string& bytes) {
  const std::uint32_t crc = crc32_of(std::as_bytes(std::span(bytes.data(), bytes.size() - 4)));
  for (int i = 0; i < 4; ++i) bytes[bytes.size() - 4 + static_cast<std::size_t>(i)] = static_cast<char>(crc >> (8 * i));
}

}  // namespace

TEST_CASE("save/load round trip is exact") {
  Saved s;
  const auto bytes = serialize_model(s.params, s.vocab);
  const auto back = deserialize_model(bytes);
  CHECK(back.params.config == s.params.config);
  CHECK(back.params.values == s.params.values);
  CHECK(back.vocab == s.vocab);
  CHECK(serialize_model(back.params, back.vocab) == bytes);

  const auto dir = fixtures::fresh_dir("model_io");
  save_model(dir / "m.bin", s.params, s.vocab);
  CHECK(fixtures::read_file(dir / "m.bin") == bytes);
  const auto loaded = load_model(dir / "m.bin");
  CHECK(params_digest(loaded.params) == params_digest(s.params));
}

TEST_CASE("header and version are checked") {
  Saved s;
  auto bytes = serialize_model(s.params, s.vocab);
  CHECK(bytes.substr(0, 8) == "BTRECMDL");
  auto bumped = bytes;
  bumped[8] = 2;
  reseal(bumped);
  CHECK_THROWS_AS(deserialize_model(bumped), VersionMismatch);
  CHECK_THROWS_AS(deserialize_model("NOTAMODEL....."), CorruptFile);
}

TEST_CASE("corruption is detected") {
  Saved s;
  const auto bytes = serialize_model(s.params, s.vocab);
  SUBCASE("flipped payload byte") {
    auto b = bytes;
    b[b.size() / 2] ^= 0x10;
    CHECK_THROWS_AS(deserialize_model(b), CorruptFile);
  }
  SUBCASE("truncated") {
    CHECK_THROWS_AS(deserialize_model(bytes.substr(0, bytes.size() - 9)), CorruptFile);
  }
  SUBCASE("trailing bytes with a valid checksum") {
    auto b = bytes.substr(0, bytes.size() - 4) + "xxxx" + "0000";
    reseal(b);
    CHECK_THROWS_AS(deserialize_model(b), CorruptFile);
  }
}

TEST_CASE("missing file is a data error") {
  try {
    load_model("/nonexistent/dir/model.bin");
    FAIL("expected MissingFile");
  } catch (const DataError& e) {
    CHECK(e.name() == "MissingFile");
  }
}
