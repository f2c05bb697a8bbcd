#include <cmath>
#include <cstring>
#include <limits>

#include "doctest.h"
#include "lotn/checkpoint.hpp"
#include "support.hpp"

using namespace lotn;
using lotn::testing::TempDir;

namespace {

bool bitwise_equal(std::span<const double> a, std::span<const double> b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

io::Checkpoint sample() {
  io::Checkpoint ck;
  ck.kind = "sentiment";
  ck.set_meta("hidden", "4");
  ck.set_meta("note", "spaces are fine");
  ck.vocab = {"<pad>", "<unk>", "caf\xc3\xa9"};
  const double tiny = std::numeric_limits<double>::denorm_min();
  ck.tensors.emplace_back("a/weight", ag::Tensor({2, 3}, {0.1, -0.0, 1e308, tiny, std::nextafter(1.0, 2.0), -7.25}));
  ck.tensors.emplace_back("a/bias", ag::Tensor({3}, {std::numeric_limits<double>::infinity(), 1.0 / 3.0, 2.0}));
  return ck;
}

}  // namespace

TEST_CASE("checkpoint round trip is bit exact") {
  TempDir dir;
  auto ck = sample();
  io::save_checkpoint(ck, dir.path() / "m.ckpt");
  auto back = io::load_checkpoint(dir.path() / "m.ckpt");
  CHECK(back.kind == "sentiment");
  CHECK(back.meta == ck.meta);
  CHECK(back.vocab == ck.vocab);
  REQUIRE(back.tensors.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(back.tensors[i].first == ck.tensors[i].first);
    CHECK(back.tensors[i].second.shape() == ck.tensors[i].second.shape());
    CHECK(bitwise_equal(back.tensors[i].second.values(), ck.tensors[i].second.values()));
  }
  CHECK(std::signbit(back.tensor("a/weight").values()[1]));

  io::save_checkpoint(back, dir.path() / "again.ckpt");
  CHECK(lotn::testing::read_file(dir.path() / "m.ckpt") == lotn::testing::read_file(dir.path() / "again.ckpt"));
}

TEST_CASE("checkpoint lookups throw on missing entries") {
  auto ck = sample();
  CHECK(ck.has_meta("hidden"));
  CHECK(ck.meta_value("hidden") == "4");
  CHECK_THROWS_AS(ck.meta_value("absent"), io::CheckpointError);
  CHECK_THROWS_AS(ck.tensor("absent"), io::CheckpointError);
  ck.set_meta("hidden", "8");
  CHECK(ck.meta_value("hidden") == "8");
  ck.set_meta("bad", "two\nlines");
  TempDir dir;
  CHECK_THROWS_AS(io::save_checkpoint(ck, dir.path() / "x.ckpt"), io::CheckpointError);
}

TEST_CASE("corrupt checkpoints are rejected") {
  TempDir dir;
  io::save_checkpoint(sample(), dir.path() / "m.ckpt");
  const std::string good = lotn::testing::read_file(dir.path() / "m.ckpt");

  CHECK_THROWS_AS(io::load_checkpoint(dir.path() / "absent.ckpt"), io::CheckpointError);
  CHECK_THROWS_AS(io::load_checkpoint(dir.write("junk.ckpt", "hello\n")), io::CheckpointError);
  CHECK_THROWS_AS(io::load_checkpoint(dir.write("short.ckpt", good.substr(0, good.size() - 5))),
                  io::CheckpointError);
  const auto payload = good.find("payload");
  CHECK_THROWS_AS(io::load_checkpoint(dir.write("nohead.ckpt", good.substr(0, payload))), io::CheckpointError);
}

TEST_CASE("atomic writes leave no temporary files behind") {
  TempDir dir;
  io::write_file_atomic(dir.path() / "r.txt", "one");
  io::write_file_atomic(dir.path() / "r.txt", "two");
  CHECK(lotn::testing::read_file(dir.path() / "r.txt") == "two");
  CHECK(std::distance(std::filesystem::directory_iterator(dir.path()), std::filesystem::directory_iterator()) == 1);
}
