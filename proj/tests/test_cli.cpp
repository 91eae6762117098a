#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "doctest.h"

namespace fs = std::filesystem;

namespace {

const std::string kFixtures = RLDA_FIXTURES;

struct Run {
  int code = -1;
  std::string out;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Workspace {
 public:
  Workspace() : dir_(fs::temp_directory_path() / ("rlda_cli_" + std::to_string(::getpid()))) {
    fs::create_directories(dir_);
  }
  ~Workspace() { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  void write(const std::string& name, const std::string& text) const { std::ofstream(path(name)) << text; }

  Run run(const std::string& args) const {
    const auto out = dir_ / "stdout.txt";
    const std::string cmd = std::string(RLDA_CLI) + " " + args + " > " + out.string() + " 2> " +
                            (dir_ / "stderr.txt").string();
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out)};
  }

 private:
  fs::path dir_;
};

bool contains(const std::string& s, const std::string& part) { return s.find(part) != std::string::npos; }

}  // namespace

TEST_CASE("ingest") {
  Workspace ws;
  auto r = ws.run("ingest " + kFixtures + "/empty.jsonl " + ws.path("e.corpus"));
  CHECK(r.code == 0);
  CHECK(contains(r.out, "0 reviews"));

  r = ws.run("ingest " + kFixtures + "/reviews4.jsonl " + ws.path("a.corpus"));
  CHECK(r.code == 0);
  CHECK(contains(r.out, "3 reviews, 1 skipped"));

  r = ws.run("ingest --snap " + kFixtures + "/snap4.json " + ws.path("b.corpus"));
  CHECK(r.code == 0);
  CHECK(contains(r.out, "3 reviews, 1 skipped"));

  for (const char* id : {"P1:U1", "P1:U2", "P2:U1"}) {
    const auto a = ws.run("review " + ws.path("a.corpus") + " " + id);
    const auto b = ws.run("review " + ws.path("b.corpus") + " " + id);
    CHECK(a.code == 0);
    CHECK(a.out == b.out);
  }

  CHECK(ws.run("ingest " + ws.path("missing.jsonl") + " " + ws.path("x.corpus")).code == 3);
  CHECK_FALSE(fs::exists(ws.path("x.corpus")));
}

TEST_CASE("train and view") {
  Workspace ws;
  REQUIRE(ws.run("ingest " + kFixtures + "/reviews4.jsonl " + ws.path("c.corpus")).code == 0);

  const std::string common = " -k 2 --iterations 25 --seed 4";
  REQUIRE(ws.run("train " + ws.path("c.corpus") + " " + ws.path("m1") + common).code == 0);
  REQUIRE(ws.run("train " + ws.path("c.corpus") + " " + ws.path("m2") + common).code == 0);
  CHECK(slurp(ws.path("m1")) == slurp(ws.path("m2")));
  CHECK(slurp(ws.path("m1")).rfind("rlda-model 1", 0) == 0);

  REQUIRE(ws.run("train " + ws.path("c.corpus") + " " + ws.path("b1") + common + " --format binary").code == 0);
  REQUIRE(ws.run("train " + ws.path("c.corpus") + " " + ws.path("b2") + common + " --format binary").code == 0);
  CHECK(slurp(ws.path("b1")) == slurp(ws.path("b2")));
  CHECK(slurp(ws.path("b1")).rfind("RLDAMDL", 0) == 0);

  REQUIRE(ws.run("train " + ws.path("c.corpus") + " " + ws.path("one") + " -k 1 --iterations 3").code == 0);
  auto r = ws.run("view " + ws.path("one") + " " + ws.path("c.corpus"));
  REQUIRE(r.code == 0);
  const auto view = nlohmann::json::parse(r.out);
  REQUIRE(view["topics"].size() == 1);
  CHECK(view["topics"][0]["probability"] == 1.0);
  CHECK_FALSE(contains(r.out, "Great battery"));

  r = ws.run("view " + ws.path("m1") + " " + ws.path("c.corpus") + " --topic 1");
  CHECK(r.code == 0);
  for (const char* id : {"P1:U1", "P1:U2", "P2:U1"}) CHECK(contains(r.out, id));
  CHECK(ws.run("view " + ws.path("m1") + " " + ws.path("c.corpus") + " --topic 7").code == 4);

  r = ws.run("review " + ws.path("c.corpus") + " P2:U1 --keywords battery,charge");
  REQUIRE(r.code == 0);
  const auto review = nlohmann::json::parse(r.out);
  CHECK(review["text"] == "Charging is quick and the battery holds.");
  REQUIRE(review["highlights"].size() == 2);
  CHECK(review["highlights"][0]["keyword"] == "charge");
  CHECK(review["highlights"][1]["byte_start"] == 26);
  CHECK(ws.run("review " + ws.path("c.corpus") + " nobody").code == 4);

  // Resume continues from the saved state.
  REQUIRE(ws.run("train " + ws.path("c.corpus") + " " + ws.path("half") + " -k 2 --iterations 10 --seed 4").code == 0);
  REQUIRE(ws.run("train " + ws.path("c.corpus") + " " + ws.path("rest") + " --resume " + ws.path("half") +
                 " --iterations 15")
              .code == 0);
  CHECK(slurp(ws.path("rest")) == slurp(ws.path("m1")));
}

TEST_CASE("update") {
  Workspace ws;
  REQUIRE(ws.run("ingest " + kFixtures + "/reviews4.jsonl " + ws.path("c.corpus")).code == 0);
  REQUIRE(ws.run("train " + ws.path("c.corpus") + " " + ws.path("m") + " -k 2 --iterations 10").code == 0);
  ws.write("new.jsonl",
           R"({"review_id":"P3:U4","product_id":"P3","user_id":"U4","rating":1,"helpful":0,"unhelpful":0,"text":"Shipping was late and the box was crushed.","timestamp":1300010000})"
           "\n"
           R"({"review_id":"P1:U1","product_id":"P1","user_id":"U1","rating":5,"helpful":3,"unhelpful":1,"text":"Great battery life! It lasts all day.","timestamp":1300000000})"
           "\n");
  const auto r = ws.run("update " + ws.path("m") + " " + ws.path("c.corpus") + " " + ws.path("new.jsonl") +
                        " --out " + ws.path("m2") + " --corpus-out " + ws.path("c2.corpus"));
  CHECK(r.code == 0);
  CHECK(contains(r.out, "1 new reviews, 0 skipped, 1 already present"));
  const auto v = ws.run("view " + ws.path("m2") + " " + ws.path("c2.corpus") + " --topic 0");
  CHECK(v.code == 0);
  CHECK(contains(v.out, "P3:U4"));
  CHECK(ws.run("view " + ws.path("m2") + " " + ws.path("c.corpus")).code == 4);
}

TEST_CASE("config precedence") {
  Workspace ws;
  REQUIRE(ws.run("ingest " + kFixtures + "/reviews4.jsonl " + ws.path("c.corpus")).code == 0);
  ws.write("rlda.ini", "[train]\ntopics=3\niterations=5\n");
  REQUIRE(ws.run("--config " + ws.path("rlda.ini") + " train " + ws.path("c.corpus") + " " + ws.path("m3")).code == 0);
  REQUIRE(ws.run("--config " + ws.path("rlda.ini") + " train " + ws.path("c.corpus") + " " + ws.path("m2") + " -k 2")
              .code == 0);
  auto topics = [&](const std::string& model) {
    return nlohmann::json::parse(ws.run("view " + ws.path(model) + " " + ws.path("c.corpus")).out)["topics"].size();
  };
  CHECK(topics("m3") == 3);
  CHECK(topics("m2") == 2);
}

TEST_CASE("exit codes and help") {
  Workspace ws;
  CHECK(ws.run("").code == 2);
  CHECK(ws.run("frobnicate").code == 2);
  CHECK(ws.run("train only-one-arg").code == 2);
  CHECK(ws.run("train a b -k 0").code == 2);
  CHECK(ws.run("train a b --w-bits 20").code == 2);
  CHECK(ws.run("train " + ws.path("nope.corpus") + " " + ws.path("m")).code == 3);

  REQUIRE(ws.run("ingest " + kFixtures + "/reviews4.jsonl " + ws.path("c.corpus")).code == 0);
  REQUIRE(ws.run("train " + ws.path("c.corpus") + " " + ws.path("m") + " -k 2 --iterations 2").code == 0);
  auto model = slurp(ws.path("m"));
  const auto at = model.find("\ntopics ");
  REQUIRE(at != std::string::npos);
  const auto colon = model.find(':', at);
  model.insert(colon + 1, "9");
  ws.write("bad_model", model);
  CHECK(ws.run("view " + ws.path("bad_model") + " " + ws.path("c.corpus")).code == 5);
  ws.write("junk_model", "rlda-model 1\nk two\n");
  CHECK(ws.run("view " + ws.path("junk_model") + " " + ws.path("c.corpus")).code == 4);

  ws.write("bad.json", R"({"sellers": [{"id": 0, "speed": -2}]})");
  CHECK(ws.run("simulate " + ws.path("bad.json")).code == 4);

  const auto help = ws.run("train --help");
  CHECK(help.code == 0);
  for (const char* flag : {"--topics", "--iterations", "--seed", "--shards", "--w-bits", "--alpha", "--beta",
                           "--labels", "--resume", "--core-set", "--min-mass", "--min-distinctiveness", "--top",
                           "--format"}) {
    CAPTURE(flag);
    CHECK(contains(help.out, flag));
  }
  const auto top = ws.run("--help");
  for (const char* cmd : {"ingest", "train", "update", "view", "review", "simulate", "bench", "--config"}) {
    CHECK(contains(top.out, cmd));
  }
}

TEST_CASE("simulate and bench") {
  Workspace ws;
  ws.write("s.json", R"({"seed": 2, "seller_groups": [{"count": 4, "speed": [10, 20]}],
    "arrivals": {"process": "poisson", "rate": 0.02, "max_tasks": 20},
    "tasks": {"corpora": 1, "docs": 8, "doc_length": 8, "iterations": 5, "variants": 2}})");
  REQUIRE(ws.run("simulate " + ws.path("s.json") + " --metrics " + ws.path("m1.json") + " --log " + ws.path("l1"))
              .code == 0);
  REQUIRE(ws.run("simulate " + ws.path("s.json") + " --metrics " + ws.path("m2.json") + " --log " + ws.path("l2"))
              .code == 0);
  CHECK(slurp(ws.path("l1")) == slurp(ws.path("l2")));
  CHECK(slurp(ws.path("m1.json")) == slurp(ws.path("m2.json")));
  const auto metrics = nlohmann::json::parse(slurp(ws.path("m1.json")));
  CHECK(metrics["tasks_arrived"] == 20);
  CHECK(metrics["zero_sum_violations"] == 0);

  REQUIRE(ws.run("ingest " + kFixtures + "/reviews4.jsonl " + ws.path("c.corpus")).code == 0);
  const auto b = ws.run("bench " + ws.path("c.corpus") + " --k 4,8 --burn-in 2 --timed 1");
  CHECK(b.code == 0);
  CHECK(contains(b.out, "dense_ratio"));
  CHECK(contains(b.out, "sparse_ratio"));
}
