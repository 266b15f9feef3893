#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "docnmt/checkpoint.hpp"
#include "docnmt/config.hpp"
#include "docnmt/errors.hpp"
#include "docnmt/hash.hpp"
#include "test_util.hpp"

namespace docnmt {
namespace {

namespace fs = std::filesystem;

fs::path temp_file(const std::string& name) { return fs::temp_directory_path() / ("docnmt_io_" + name); }

TEST(Config, ParseOverrideAndTypes) {
  auto c = Config::parse("# comment\na = 1\nb = 2.5  # trailing\nflag = true\na = 7\nname = hello world\n");
  EXPECT_EQ(c.get_int("a", 0), 7);
  EXPECT_EQ(c.get_double("b", 0), 2.5);
  EXPECT_TRUE(c.get_bool("flag", false));
  EXPECT_EQ(c.get_string("name", ""), "hello world");
  EXPECT_EQ(c.get_size("missing", 3), 3u);
  EXPECT_THROW(Config::parse("novalue\n"), UsageError);
  EXPECT_THROW(c.get_int("b", 0), UsageError);
  c.set("neg", "-1");
  EXPECT_THROW(c.get_size("neg", 0), UsageError);
}

TEST(Config, MergeAndEcho) {
  auto a = Config::parse("x = 1\ny = 2\n");
  a.merge(Config::parse("y = 3\n"));
  EXPECT_EQ(a.echo(), "x = 1\ny = 3\n");
}

TEST(Config, ShortestRoundTripDoubles) {
  EXPECT_EQ(format_double(0.1), "0.1");
  EXPECT_EQ(format_double(0.072), "0.072");
  const double v = 1.0 / 3.0;
  EXPECT_EQ(std::stod(format_double(v)), v);
}

TEST(Hash, MatchesGitBlobIds) {
  EXPECT_EQ(git_blob_hash(""), "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
  EXPECT_EQ(git_blob_hash("hello\n"), "ce013625030ba8dba906f756967f9e9ca394464a");
  const auto p = temp_file("hash.txt");
  std::ofstream(p, std::ios::binary) << "hello\n";
  EXPECT_EQ(git_blob_hash_file(p), "ce013625030ba8dba906f756967f9e9ca394464a");
  fs::remove(p);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  std::mt19937_64 rng(1);
  Model m = Model::create(testing::tiny_dims(7), 1);
  testing::randomize(m.params, rng);
  Config cfg;
  cfg.set("model.hidden", "4");
  const auto p = temp_file("rt.ckpt");
  save_checkpoint(p, cfg, m.params);
  auto ck = load_checkpoint(p);
  EXPECT_EQ(ck.config.get_string("model.hidden", ""), "4");
  ASSERT_EQ(ck.tensors.size(), m.params.size());
  Model other = Model::create(testing::tiny_dims(7), 2);
  apply_checkpoint(ck, other.params, true);
  for (auto id : m.params.ids()) EXPECT_EQ(other.params.value(id), m.params.value(id)) << m.params.name(id);
  fs::remove(p);
}

TEST(Checkpoint, PrefixAndShapeChecks) {
  ParamSet a;
  a.add("lm.x", Tensor::vector({1, 2}));
  a.add("y", Tensor::vector({3}));
  const auto p = temp_file("prefix.ckpt");
  save_checkpoint(p, {}, a);
  auto ck = load_checkpoint(p);

  ParamSet b;
  ParamId bx = b.add("lm.x", Tensor::zeros({2}));
  ParamId by = b.add("y", Tensor::zeros({1}));
  b.add("z", Tensor::zeros({1}));
  EXPECT_THROW(apply_checkpoint(ck, b, true), DataError);
  apply_checkpoint(ck, b, false, "lm.");
  EXPECT_EQ(b.value(bx), Tensor::vector({1, 2}));
  EXPECT_EQ(b.value(by)[0], 0.0);

  ParamSet c;
  c.add("lm.x", Tensor::zeros({3}));
  EXPECT_THROW(apply_checkpoint(ck, c, false), DataError);
  fs::remove(p);
}

TEST(Checkpoint, RejectsCorruptFiles) {
  const auto p = temp_file("bad.ckpt");
  std::ofstream(p) << "not a checkpoint\n";
  EXPECT_THROW(load_checkpoint(p), DataError);
  ParamSet a;
  a.add("w", Tensor::vector({1, 2, 3}));
  save_checkpoint(p, {}, a);
  const auto size = fs::file_size(p);
  fs::resize_file(p, size - 4);
  EXPECT_THROW(load_checkpoint(p), DataError);
  EXPECT_THROW(load_checkpoint(temp_file("missing.ckpt")), DataError);
  fs::remove(p);
}

}  // namespace
}  // namespace docnmt
