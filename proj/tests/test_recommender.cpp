#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <set>

#include <json.hpp>

#include "btrec/error.hpp"
#include "btrec/recommender.hpp"
#include "fixtures.hpp"

using namespace btrec;

TEST_CASE("bootstrap of constant samples is the constant") {
  const auto t = estimate_duration({{3, {1234.5, 1234.5, 1234.5, 1234.5}}}, {});
  CHECK(t.duration(3) == 1234.5);
}

TEST_CASE("bootstrap matches the independent oracle bit for bit") {
  BootstrapOptions o;
  o.seed = 42;
  const auto t = estimate_duration({{1, {300, 600, 900}}, {7, {312.5, 610.25, 905.75, 1201.0, 455.0}}}, {}, o);
  // Frozen from tests/oracles/bootstrap_oracle.py.
  CHECK(t.duration(1) == 0x1.5e00000000000p+9);
  CHECK(t.duration(7) == 0x1.97c6666666666p+9);
}

TEST_CASE("bootstrap fallbacks") {
  const auto t = estimate_duration({{1, {100}}, {2, {200, 400}}, {3, {}}}, {1, 2, 3, 9});
  // Pooled median of {100, 200, 400}.
  CHECK(t.fallback == 200);
  CHECK(t.duration(1) == 200);
  CHECK(t.duration(3) == 200);
  CHECK(t.duration(9) == 200);
  CHECK(t.duration(42) == 200);
  CHECK(t.duration(2) > 200);
  CHECK(t.duration(2) <= 400);
  CHECK(estimate_duration({}, {5}).duration(5) == kDefaultDuration);

  BootstrapOptions bad;
  bad.level = 1.0;
  CHECK_THROWS_AS(estimate_duration({}, {}, bad), ConfigError);
  bad.level = 0.5;
  bad.resamples = 0;
  CHECK_THROWS_AS(estimate_duration({}, {}, bad), ConfigError);
}

TEST_CASE("bootstrap level orders the estimates") {
  const std::map<PoiId, std::vector<double>> s = {{1, {60, 300, 900, 1500, 2400, 3000}}};
  BootstrapOptions lo, hi;
  lo.level = 0.2;
  hi.level = 0.8;
  CHECK(estimate_duration(s, {}, lo).duration(1) < estimate_duration(s, {}, hi).duration(1));
}

namespace {

struct Toy {
  fixtures::World world = fixtures::two_group_world(4, 6);
  Vocab vocab = build_vocab(world.trajs, world.pois, world.profiles, CorpusMode::demographic);
  ModelParams params;
  DurationTable durations;

  Toy() {
    const auto corpus = build_corpus(world.trajs, world.profiles, world.pois, vocab, 64);
    params = train(init_model(fixtures::small_config(static_cast<int>(vocab.size()), 80)), corpus, vocab).params;
    durations.fallback = 100;
  }
};

const Toy& toy() {
  static const Toy t;
  return t;
}

}  // namespace

TEST_CASE("query sentence places the masked block before the gap") {
  const Toy& t = toy();
  const Recommender rec(t.params, t.vocab, t.world.pois, t.world.profiles, t.durations);
  const auto ids = rec.query_sentence("b2", {1, 3}, 1);
  std::vector<std::string> toks;
  for (TokenId id : ids) toks.push_back(t.vocab.token(id));
  CHECK(toks == std::vector<std::string>{"[CLS]", "USER:b2", "HOME:Beta", "POI:1", "CAT:Park", "USER:b2", "HOME:Beta",
                                         "[MASK]", "[UNK]", "USER:b2", "HOME:Beta", "POI:3", "CAT:Beach", "[SEP]"});
}

TEST_CASE("known users get their group's middle stop") {
  const Toy& t = toy();
  const Recommender rec(t.params, t.vocab, t.world.pois, t.world.profiles, t.durations);
  ItineraryQuery q{1, 3, 300, std::string("a2")};
  auto it = rec.recommend(q);
  CHECK(it.pois == std::vector<PoiId>{1, 2, 3});
  CHECK(it.reference_user == "a2");
  q.known_user = "b3";
  it = rec.recommend(q);
  CHECK(it.pois == std::vector<PoiId>{1, 4, 3});
  CHECK(it.durations == std::vector<double>{100, 100, 100});
}

TEST_CASE("reference user selection matches a brute-force argmax") {
  const Toy& t = toy();
  const Recommender rec(t.params, t.vocab, t.world.pois, t.world.profiles, t.durations);
  for (auto [s, d] : {std::pair<PoiId, PoiId>{1, 3}, {2, 5}, {4, 1}, {5, 3}}) {
    std::vector<TokenId> cands;
    for (PoiId p = 1; p <= 5; ++p) {
      if (p != s && p != d) cands.push_back(t.vocab.poi_id_token(p));
    }
    std::string best;
    double best_score = 0;
    for (const std::string u : {"a1", "a2", "a3", "a4", "b1", "b2", "b3", "b4"}) {
      const auto ids = rec.query_sentence(u, {s, d}, 1);
      const auto mask_pos = static_cast<std::size_t>(std::find(ids.begin(), ids.end(), special::mask) - ids.begin());
      const auto lp = log_softmax_at(t.params, std::span<const TokenId>(ids), mask_pos);
      double top = -1e300;
      for (TokenId c : cands) top = std::max(top, lp[static_cast<std::size_t>(c)]);
      if (best.empty() || top > best_score) {
        best = u;
        best_score = top;
      }
    }
    std::size_t calls = 0;
    CHECK(rec.select_reference_user({s, d, 1000, std::nullopt}, &calls) == best);
    CHECK(calls == 8);
    // An unknown user id also triggers selection.
    CHECK(rec.select_reference_user({s, d, 1000, std::string("zed")}) == best);
  }
}

TEST_CASE("insertion step matches a brute-force scan over gaps and candidates") {
  const Toy& t = toy();
  const Recommender rec(t.params, t.vocab, t.world.pois, t.world.profiles, t.durations);
  for (const std::vector<PoiId>& seq : {std::vector<PoiId>{1, 3}, {1, 2, 3}, {5, 1, 3}, {4, 2, 1, 3}}) {
    std::optional<Insertion> want;
    for (std::size_t gap = 1; gap < seq.size(); ++gap) {
      const auto ids = rec.query_sentence("a1", seq, gap);
      const auto mask_pos = static_cast<std::size_t>(std::find(ids.begin(), ids.end(), special::mask) - ids.begin());
      const auto lp = log_softmax_at(t.params, std::span<const TokenId>(ids), mask_pos);
      for (PoiId p = 1; p <= 5; ++p) {
        if (std::find(seq.begin(), seq.end(), p) != seq.end()) continue;
        const double sc = lp[static_cast<std::size_t>(t.vocab.poi_id_token(p))];
        if (!want || sc > want->score) want = Insertion{gap, p, sc};
      }
    }
    std::size_t calls = 0;
    const auto got = rec.insertion_step(seq, "a1", {1, 2, 3, 4, 5}, &calls);
    CHECK(calls == seq.size() - 1);
    if (!want) {
      CHECK_FALSE(got);
      continue;
    }
    REQUIRE(got);
    CHECK(got->gap == want->gap);
    CHECK(got->poi == want->poi);
    CHECK(got->score == want->score);
  }
  std::size_t calls = 0;
  CHECK_FALSE(rec.insertion_step({1, 2, 3, 4, 5}, "a1", {1, 2, 3, 4, 5}, &calls));
  CHECK(calls == 0);
}

TEST_CASE("decoder invariants and the unmask-call count on random queries") {
  const Toy& t = toy();
  DurationTable d;
  d.fallback = 600;
  d.estimate = {{1, 300}, {2, 900}, {3, 600}, {4, 1200}, {5, 450}};
  const Recommender rec(t.params, t.vocab, t.world.pois, t.world.profiles, d);
  Rng rng(17);
  for (int q = 0; q < 200; ++q) {
    ItineraryQuery query;
    query.source = static_cast<PoiId>(uniform_index(rng, 5)) + 1;
    do query.dest = static_cast<PoiId>(uniform_index(rng, 5)) + 1; while (query.dest == query.source);
    query.time_budget = static_cast<double>(uniform_index(rng, 5000));
    if (uniform_index(rng, 2)) query.known_user = "a" + std::to_string(1 + uniform_index(rng, 4));
    const auto it = rec.recommend(query);
    REQUIRE(it.pois.size() >= 2);
    CHECK(it.pois.front() == query.source);
    CHECK(it.pois.back() == query.dest);
    CHECK(std::set<PoiId>(it.pois.begin(), it.pois.end()).size() == it.pois.size());
    CHECK(it.durations.size() == it.pois.size());
    if (it.pois.size() > 2) CHECK(it.total_duration() <= query.time_budget);

    const std::size_t L = it.pois.size();
    std::size_t expected = query.known_user ? 0 : 8;
    for (std::size_t m = 1; m + 2 <= L; ++m) expected += m;
    CHECK(it.unmask_calls == expected);
  }
}

TEST_CASE("faithful loop may overshoot by the last insertion only") {
  const Toy& t = toy();
  DurationTable d;
  d.fallback = 100;
  const Recommender rec(t.params, t.vocab, t.world.pois, t.world.profiles, d);
  ItineraryQuery q{1, 3, 250, std::string("a1")};
  RecommendOptions faithful;
  faithful.faithful_loop = true;
  const auto guarded = rec.recommend(q);
  const auto loose = rec.recommend(q, faithful);
  CHECK(guarded.pois == std::vector<PoiId>{1, 3});
  CHECK(loose.pois.size() == 3);
  CHECK(loose.total_duration() - d.fallback <= q.time_budget);
}

TEST_CASE("plain-mode models have no reference user") {
  const auto w = fixtures::two_group_world(2, 2);
  const auto v = build_vocab(w.trajs, w.pois, w.profiles, CorpusMode::plain);
  const auto p = init_model(fixtures::small_config(static_cast<int>(v.size())));
  DurationTable d;
  const Recommender rec(p, v, w.pois, w.profiles, d);
  const auto it = rec.recommend({1, 3, 20000, std::string("a1")});
  CHECK(it.reference_user.empty());
  CHECK(it.pois.size() == 5);
  CHECK(it.unmask_calls == 1 + 2 + 3);
}

TEST_CASE("recommend rejects bad queries") {
  const Toy& t = toy();
  const Recommender rec(t.params, t.vocab, t.world.pois, t.world.profiles, t.durations);
  CHECK_THROWS_AS(rec.recommend({1, 99, 1000, std::nullopt}), TokenNotInVocab);
  CHECK_THROWS_AS(rec.recommend({1, 3, -1, std::nullopt}), ConfigError);
}

TEST_CASE("itinerary JSON is one ordered object") {
  ItineraryQuery q{1, 3, 5400, std::nullopt};
  Itinerary it;
  it.pois = {1, 2, 3};
  it.durations = {600, 1200, 600};
  it.reference_user = "a1";
  it.unmask_calls = 9;
  const auto text = itinerary_json(q, it, "btrec");
  CHECK(text.find('\n') == std::string::npos);
  const auto j = nlohmann::json::parse(text);
  CHECK(j["budget_minutes"] == 90.0);
  CHECK(j["known_user"].is_null());
  CHECK(j["itinerary"][1]["poi"] == 2);
  CHECK(j["itinerary"][1]["minutes"] == 20.0);
  CHECK(j["total_minutes"] == 40.0);
  CHECK(j["unmask_calls"] == 9);
  CHECK(text.rfind("{\"model\":\"btrec\",\"source\":1,", 0) == 0);
}
