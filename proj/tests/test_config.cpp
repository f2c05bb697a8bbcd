#include "doctest.h"
#include "lotn/config.hpp"
#include "support.hpp"

using lotn::ConfigError;
using lotn::RunConfig;
using lotn::testing::TempDir;

namespace {

std::string echoed(const RunConfig& c, const std::string& key) {
  for (const auto& [k, v] : c.echo())
    if (k == key) return v;
  FAIL("key not echoed: " << key);
  return {};
}

}  // namespace

TEST_CASE("defaults match the published training setup") {
  RunConfig c;
  CHECK(echoed(c, "lr") == "0.001");
  CHECK(echoed(c, "batch") == "25");
  CHECK(c.word_dim == 300);
  CHECK(c.pos_dim == 300);
  CHECK(c.hidden == 200);
  CHECK(c.max_position == 100);
  CHECK(c.dropout == 0.5);
  CHECK_NOTHROW(c.validate());
  CHECK(c.seed_list() == std::vector<std::uint64_t>{1});
}

TEST_CASE("assignments parse values and reject unknown keys or bad values") {
  RunConfig c;
  c.set("lr", "0.01");
  c.set_assignment("variant = base");
  c.set_assignment("seeds=3, 4,5");
  CHECK(c.lr == 0.01);
  CHECK(c.variant == "base");
  CHECK(c.seed_list() == std::vector<std::uint64_t>{3, 4, 5});
  CHECK(c.is_set("lr"));
  CHECK_FALSE(c.is_set("hidden"));
  CHECK_THROWS_AS(c.set("learning_rate", "0.1"), ConfigError);
  CHECK_THROWS_AS(c.set("batch", "-3"), ConfigError);
  CHECK_THROWS_AS(c.set("batch", "2.5"), ConfigError);
  CHECK_THROWS_AS(c.set("lr", "fast"), ConfigError);
  CHECK_THROWS_AS(c.set_assignment("lr"), ConfigError);
}

TEST_CASE("files support comments and report the failing line") {
  TempDir dir;
  RunConfig c;
  c.load_file(dir.write("ok.cfg", "# comment\n\nhidden = 50  # trailing\ntowe_train = data/train.tsv\n"));
  CHECK(c.hidden == 50);
  CHECK(c.towe_train == "data/train.tsv");

  auto bad = dir.write("bad.cfg", "hidden = 50\nwhatever = 1\n");
  try {
    RunConfig d;
    d.load_file(bad);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("bad.cfg:2") != std::string::npos);
  }
  CHECK_THROWS_AS(RunConfig().load_file(dir.path() / "absent.cfg"), ConfigError);
}

TEST_CASE("later assignments win over the file") {
  TempDir dir;
  RunConfig c;
  c.load_file(dir.write("run.cfg", "lr = 0.5\nbatch = 10\n"));
  c.set("lr", "0.002");
  CHECK(c.lr == 0.002);
  CHECK(c.batch == 10);
}

TEST_CASE("echo round trips through a config file") {
  RunConfig c;
  c.set("lambda", "0.35");
  c.set("seeds", "1,2");
  c.set("embeddings", "/tmp/glove.txt");
  TempDir dir;
  RunConfig back;
  back.load_file(dir.write("echo.cfg", c.to_text()));
  CHECK(back.echo() == c.echo());
  CHECK(c.echo().size() == RunConfig::keys().size());
}

TEST_CASE("validation rejects out-of-range settings") {
  auto invalid = [](const std::string& key, const std::string& value) {
    RunConfig c;
    c.set(key, value);
    CHECK_THROWS_AS(c.validate(), ConfigError);
  };
  invalid("variant", "transformer");
  invalid("dropout", "1");
  invalid("lr", "0");
  invalid("batch", "0");
  invalid("dev_fraction", "1.5");
  invalid("shuffles", "10");
  invalid("lambda", "-0.1");
  invalid("lambda_step", "0");
}

TEST_CASE("the lambda grid has nineteen strictly increasing values") {
  RunConfig c;
  auto grid = c.lambda_grid();
  REQUIRE(grid.size() == 19);
  CHECK(grid.front() == 0.05);
  CHECK(grid.back() == 0.95);
  for (std::size_t i = 1; i < grid.size(); ++i) CHECK(grid[i] > grid[i - 1]);
  CHECK(grid[3] == 0.2);
  c.set("lambda_stop", "1.0");
  CHECK_THROWS_AS(c.lambda_grid(), ConfigError);
}
