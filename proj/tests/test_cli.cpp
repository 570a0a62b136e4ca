#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "fixtures.hpp"

namespace fs = std::filesystem;
using btrec::fixtures::fresh_dir;
using btrec::fixtures::read_file;

namespace {

struct Run {
  int code = -1;
  std::string out, err;
};

Run btrec_run(const std::string& args, const fs::path& scratch) {
  const fs::path o = scratch / "stdout.txt", e = scratch / "stderr.txt";
  const std::string cmd = std::string(BTREC_CLI_PATH) + " " + args + " >" + o.string() + " 2>" + e.string();
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = read_file(o);
  r.err = read_file(e);
  return r;
}

const char* kModelFlags = " --seed 5 --d-model 16 --layers 1 --d-ff 32 --epochs 2 --batch-size 8";

// synth -> ingest -> split -> train -> evaluate under `root`.
void pipeline(const fs::path& root, const std::string& extra = "") {
  const auto s = root.string();
  REQUIRE(btrec_run("synth --seed 3 --n-users 12 --trajs-per-user 5 --out " + s + "/raw", root).code == 0);
  REQUIRE(btrec_run("ingest --checkins " + s + "/raw/checkins.csv --pois " + s + "/raw/pois.csv --profiles " + s +
                        "/raw/profiles.csv --out " + s + "/data",
                    root)
              .code == 0);
  REQUIRE(btrec_run("split --data " + s + "/data", root).code == 0);
  REQUIRE(btrec_run("train --data " + s + "/data --out " + s + "/model" + kModelFlags + extra, root).code == 0);
  const auto r = btrec_run("evaluate --data " + s + "/data --model-dir " + s + "/model --out " + s + "/eval" +
                               kModelFlags + extra,
                           root);
  INFO(r.err);
  REQUIRE(r.code == 0);
}

}  // namespace

TEST_CASE("pipeline runs are byte-identical, whatever the thread count") {
  const auto a = fresh_dir("cli_a"), b = fresh_dir("cli_b");
  pipeline(a);
  pipeline(b, " --threads 2");
  for (const char* f : {"data/trajectories.tsv", "data/split.tsv", "model/model.bin", "model/vocab.tsv",
                        "model/loss.tsv", "eval/report.jsonl", "eval/report.csv"}) {
    INFO(f);
    CHECK(read_file(a / f) == read_file(b / f));
    CHECK_FALSE(read_file(a / f).empty());
  }
  const auto manifest = read_file(a / "model/manifest.txt");
  CHECK(manifest.find("[train]") != std::string::npos);
  CHECK(manifest.find("config_sha256") != std::string::npos);

  const auto summary_line = [&] {
    const auto text = read_file(a / "eval/report.jsonl");
    const auto last = text.rfind('\n', text.size() - 2);
    return nlohmann::json::parse(text.substr(last + 1));
  }();
  CHECK(summary_line["summary"] == true);
  CHECK(summary_line["split"] == "test");

  SUBCASE("recommend prints one JSON line") {
    const auto r = btrec_run("recommend --data " + a.string() + "/data --model-dir " + a.string() +
                                 "/model --seed 5 --src 1 --dst 2 --budget-min 240",
                             a);
    INFO(r.err);
    REQUIRE(r.code == 0);
    const auto j = nlohmann::json::parse(r.out);
    CHECK(j["itinerary"].front()["poi"] == 1);
    CHECK(j["itinerary"].back()["poi"] == 2);
    CHECK(j["total_minutes"].get<double>() <= 240.0 + 1e-9);
  }
  SUBCASE("scoring the same model on the test split twice is refused") {
    const auto r = btrec_run("evaluate --data " + a.string() + "/data --model-dir " + a.string() + "/model --out " +
                                 a.string() + "/eval" + kModelFlags,
                             a);
    CHECK(r.code == 1);
    CHECK(r.err.find("name=TestSplitReused") != std::string::npos);
  }
  SUBCASE("validation scoring is not audited") {
    for (int i = 0; i < 2; ++i) {
      const auto r = btrec_run("evaluate --split validation --data " + a.string() + "/data --model-dir " +
                                   a.string() + "/model --out " + a.string() + "/val" + kModelFlags,
                               a);
      CHECK(r.code == 0);
    }
  }
  SUBCASE("baselines evaluate without a model directory") {
    const auto r = btrec_run("evaluate --model markov --seed 5 --data " + a.string() + "/data --out " + a.string() +
                                 "/markov",
                             a);
    CHECK(r.code == 0);
    CHECK(r.out.find("markov,test,") != std::string::npos);
  }
}

TEST_CASE("exit codes and error lines") {
  const auto d = fresh_dir("cli_err");
  const auto s = d.string();

  auto r = btrec_run("train --no-such-flag 1", d);
  CHECK(r.code == 2);
  CHECK(r.err.rfind("error kind=usage", 0) == 0);

  r = btrec_run("synth --out " + s + "/raw", d);  // seed missing
  CHECK(r.code == 2);
  CHECK(r.err.find("name=ConfigError") != std::string::npos);

  r = btrec_run("synth --seed 1 --n-pois 2 --out " + s + "/raw", d);
  CHECK(r.code == 2);
  CHECK(r.err.find("name=InfeasibleConfig") != std::string::npos);

  r = btrec_run("ingest --checkins " + s + "/missing.csv --out " + s + "/data", d);
  CHECK(r.code == 3);

  REQUIRE(btrec_run("synth --seed 1 --n-users 6 --trajs-per-user 4 --out " + s + "/raw", d).code == 0);
  REQUIRE(btrec_run("ingest --checkins " + s + "/raw/checkins.csv --pois " + s + "/raw/pois.csv --out " + s + "/data",
                    d)
              .code == 0);
  REQUIRE(btrec_run("split --data " + s + "/data", d).code == 0);
  r = btrec_run("evaluate --seed 1 --data " + s + "/data --model-dir " + s + "/nomodel --out " + s + "/eval", d);
  CHECK(r.code == 3);
  CHECK(r.err.find("name=MissingFile") != std::string::npos);
  CHECK(std::count(r.err.begin(), r.err.end(), '\n') == 1);

  r = btrec_run("recommend --seed 1 --model markov --data " + s + "/data --src 1 --dst 999 --budget-min 60", d);
  CHECK(r.code == 3);
  CHECK(r.err.find("name=UnknownPoi") != std::string::npos);
}

TEST_CASE("config file values sit between flags and defaults") {
  const auto d = fresh_dir("cli_ini");
  const auto s = d.string();
  {
    std::ofstream ini(d / "run.ini");
    ini << "[run]\nseed = 4\n[synth]\nn_users = 5\ntrajs_per_user = 3\n";
  }
  auto r = btrec_run("synth --config " + s + "/run.ini --out " + s + "/raw", d);
  REQUIRE(r.code == 0);
  CHECK(r.out.find("5 users") != std::string::npos);
  r = btrec_run("synth --config " + s + "/run.ini --n-users 7 --out " + s + "/raw2", d);
  REQUIRE(r.code == 0);
  CHECK(r.out.find("7 users") != std::string::npos);
  {
    std::ofstream ini(d / "bad.ini");
    ini << "[run]\nseed = 4\nsed = 5\n";
  }
  r = btrec_run("synth --config " + s + "/bad.ini --out " + s + "/raw3", d);
  CHECK(r.code == 2);
}
