#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "corpus_util.hpp"
#include "docnmt/corpus.hpp"
#include "docnmt/errors.hpp"
#include "docnmt/snmt.hpp"

namespace docnmt {
namespace {

namespace fs = std::filesystem;

class TempDir : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("docnmt_corpus_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  fs::path write(const std::string& name, const std::string& text) {
    std::ofstream(dir_ / name) << text;
    return dir_ / name;
  }
  fs::path dir_;
};

TEST(Vocabulary, FrequencyCutoffAtFive) {
  std::vector<Sentence> corpus;
  for (int i = 0; i < 5; ++i) corpus.push_back({"often"});
  for (int i = 0; i < 4; ++i) corpus.push_back({"rare"});
  auto v = Vocabulary::build(corpus);
  EXPECT_TRUE(v.contains("often"));
  EXPECT_FALSE(v.contains("rare"));
  EXPECT_EQ(v.id("rare"), kUnkId);
  EXPECT_EQ(v.size(), 4u);
}

TEST(Vocabulary, AllRareLeavesReservedTokens) {
  auto v = Vocabulary::build({{"a", "b"}, {"c"}});
  EXPECT_EQ(v.size(), 3u);
  EXPECT_EQ(v.token(kUnkId), kUnkToken);
  EXPECT_EQ(v.token(kStartId), kStartToken);
  EXPECT_EQ(v.token(kEndId), kEndToken);
}

TEST(Vocabulary, OrderByCountThenLexicographic) {
  auto v = Vocabulary::build({{"b", "a", "c", "c"}}, 1);
  EXPECT_EQ(v.id("c"), 3u);
  EXPECT_EQ(v.id("a"), 4u);
  EXPECT_EQ(v.id("b"), 5u);
  EXPECT_EQ(v.decode({v.id("a"), kStartId, v.id("b"), kEndId, v.id("c")}), (Sentence{"a", "b"}));
}

TEST_F(TempDir, VocabularyRoundTrip) {
  auto v = Vocabulary::build({{"x", "y", "y"}}, 1);
  v.save(dir_ / "v.txt");
  auto w = Vocabulary::load(dir_ / "v.txt");
  EXPECT_EQ(w.size(), v.size());
  EXPECT_EQ(w.id("y"), v.id("y"));
  EXPECT_EQ(w.count(w.id("y")), 2u);
  EXPECT_THROW(Vocabulary::load(write("bad.txt", "tok\tmany\n")), DataError);
}

TEST_F(TempDir, DocumentsSplitOnBlankLines) {
  auto src = write("a.src", "s1\ns2\n\nt1\nt2\nt3\n");
  auto trg = write("a.trg", "u1\nu2\n\nv1\nv2\nv3\n");
  auto docs = load_documents(src, trg);
  ASSERT_EQ(docs.size(), 2u);
  EXPECT_EQ(docs[0].src.size(), 2u);
  EXPECT_EQ(docs[1].trg.size(), 3u);
  EXPECT_EQ(docs[1].trg[2], (Sentence{"v3"}));
}

TEST_F(TempDir, BoundaryMismatchNamesLine) {
  auto src = write("b.src", "a\nb\n\nc\nd\ne\nf\ng\n");
  auto trg = write("b.trg", "a\nb\n\nc\nd\ne\n\ng\n");
  try {
    load_documents(src, trg);
    FAIL() << "expected a data error";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("line 7"), std::string::npos) << e.what();
  }
}

TEST_F(TempDir, ShortDocumentsDropped) {
  auto src = write("c.src", "a\n\nb\nc\n");
  auto trg = write("c.trg", "x\n\ny\nz\n");
  EXPECT_EQ(load_documents(src, trg, 2).size(), 1u);
}

TEST_F(TempDir, WriteThenReadDocuments) {
  std::vector<TextDocument> docs{{"1", {{"a", "b"}, {"c"}}, {{"x"}, {"y", "z"}}}, {"2", {{"d"}}, {{"w"}}}};
  write_documents(dir_ / "d.src", dir_ / "d.trg", docs);
  auto back = load_documents(dir_ / "d.src", dir_ / "d.trg");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].src, docs[0].src);
  EXPECT_EQ(back[1].trg, docs[1].trg);
}

TEST_F(TempDir, EmptyTranslationsKeepTheirPlace) {
  auto src = write("e.src", "a b\nc\n\nd\ne\n");
  // Sentence 1 of document 1 and the final sentence are empty translations.
  auto hyp = write("e.hyp", "\nx\n\ny\n\n");
  auto docs = read_aligned_document_file(hyp, src);
  ASSERT_EQ(docs.size(), 2u);
  EXPECT_EQ(docs[0], (std::vector<Sentence>{{}, {"x"}}));
  EXPECT_EQ(docs[1], (std::vector<Sentence>{{"y"}, {}}));
  // Read without the layout, the same file collapses into the wrong shape.
  EXPECT_THROW(read_document_file(hyp), DataError);
}

TEST_F(TempDir, AlignedReadRejectsShapeMismatch) {
  auto src = write("f.src", "a\nb\n\nc\n");
  EXPECT_THROW(read_aligned_document_file(write("f1.hyp", "a\nb\nc\nd\n"), src), DataError);
  EXPECT_THROW(read_aligned_document_file(write("f2.hyp", "a\nb\n\nc\nd\n"), src), DataError);
}

TEST(Tokenize, SplitsOnWhitespace) {
  EXPECT_EQ(tokenize("  The  cat\tsat "), (Sentence{"The", "cat", "sat"}));
  EXPECT_EQ(tokenize("The Cat", true), (Sentence{"the", "cat"}));
  EXPECT_EQ(join({"a", "b"}), "a b");
}

TEST(Synthetic, DeterministicPerSeed) {
  SyntheticSpec spec;
  spec.n_docs = 5;
  auto a = gen_synthetic(spec);
  auto b = gen_synthetic(spec);
  EXPECT_EQ(a.train[3].src, b.train[3].src);
  EXPECT_EQ(a.test[0].trg, b.test[0].trg);
  spec.seed = 2;
  EXPECT_NE(gen_synthetic(spec).train[0].src, a.train[0].src);
}

TEST(Synthetic, StructureAndTranslationRules) {
  SyntheticSpec spec;
  spec.n_docs = 30;
  auto c = gen_synthetic(spec);
  std::map<std::string, std::string> seen;
  std::size_t ambiguous = 0;
  for (const auto& d : c.train) {
    ASSERT_EQ(d.src.size(), spec.sentences_per_doc);
    const std::string marker = d.src[0][0];
    ASSERT_TRUE(marker == synthetic_marker(true) || marker == synthetic_marker(false));
    for (const auto& tok : d.src[0]) EXPECT_EQ(tok, marker);
    const bool topic_a = marker == synthetic_marker(true);
    for (std::size_t s = 1; s < d.src.size(); ++s) {
      ASSERT_EQ(d.src[s].size(), d.trg[s].size());
      EXPECT_GE(d.src[s].size(), spec.min_len);
      EXPECT_LE(d.src[s].size(), spec.max_len);
      for (std::size_t k = 0; k < d.src[s].size(); ++k) {
        const auto& w = d.src[s][k];
        if (is_ambiguous_source(w)) {
          ++ambiguous;
          EXPECT_EQ(d.trg[s][k], ambiguous_rendering(w, topic_a));
        } else {
          auto [it, fresh] = seen.emplace(w, d.trg[s][k]);
          EXPECT_EQ(it->second, d.trg[s][k]) << "content words translate through a fixed map";
        }
      }
    }
  }
  EXPECT_GT(ambiguous, 0u);
  std::set<std::string> images;
  for (const auto& [w, t] : seen) images.insert(t);
  EXPECT_EQ(images.size(), seen.size()) << "the content map is a bijection";
}

TEST(Synthetic, RejectsBadSpec) {
  SyntheticSpec spec;
  spec.min_len = 9;
  spec.max_len = 3;
  EXPECT_THROW(gen_synthetic(spec), UsageError);
}

TEST(Ambiguity, GoldScoresOneAndSwappedScoresZero) {
  SyntheticSpec spec;
  spec.n_docs = 10;
  auto c = gen_synthetic(spec);
  std::vector<std::vector<Sentence>> gold, swapped;
  for (const auto& d : c.train) {
    gold.push_back(d.trg);
    auto s = d.trg;
    for (auto& sent : s) {
      for (auto& w : sent) {
        if (w.size() > 2 && w.compare(w.size() - 2, 2, "_a") == 0) w.back() = 'b';
        else if (w.size() > 2 && w.compare(w.size() - 2, 2, "_b") == 0) w.back() = 'a';
      }
    }
    swapped.push_back(s);
  }
  auto g = ambiguous_accuracy(c.train, gold);
  EXPECT_GT(g.total, 0u);
  EXPECT_EQ(g.accuracy(), 1.0);
  EXPECT_EQ(ambiguous_accuracy(c.train, swapped).correct, 0u);
}

TEST(Corpus, ToIdsUsesVocabularies) {
  auto c = testing::small_corpus();
  ASSERT_EQ(c.train.size(), c.text.train.size());
  EXPECT_EQ(c.src_vocab.decode(c.train[2].src[1]), c.text.train[2].src[1]);
  EXPECT_EQ(c.trg_vocab.decode(c.train[2].trg[1]), c.text.train[2].trg[1]);
}

}  // namespace
}  // namespace docnmt
