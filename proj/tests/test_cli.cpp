#include <gtest/gtest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "docnmt/hash.hpp"

namespace {

namespace fs = std::filesystem;

const fs::path kExe = DOCNMT_EXE;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

// Runs the tool and returns its exit status; stdout goes to `capture`.
int run(const std::string& args, const fs::path& capture = {}) {
  std::string cmd = kExe.string() + " " + args;
  cmd += capture.empty() ? " > /dev/null" : " > " + capture.string();
  cmd += " 2> /dev/null";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

class Cli : public ::testing::Test {
 protected:
  static fs::path dir() { return fs::temp_directory_path() / "docnmt_cli_test"; }
  static std::string cfg() { return " --config " + (dir() / "tiny.cfg").string() + " "; }
  static std::string p(const std::string& rel) { return (dir() / rel).string(); }

  static void SetUpTestSuite() {
    fs::remove_all(dir());
    fs::create_directories(dir());
    std::ofstream(dir() / "tiny.cfg") << "model.embed = 8\nmodel.hidden = 8\nmodel.align = 8\n"
                                         "model.lm_hidden = 8\nmodel.doc_hidden = 8\n"
                                         "synthetic.n_docs = 10\nsynthetic.n_dev_docs = 3\nsynthetic.n_test_docs = 3\n"
                                         "synthetic.sentences_per_doc = 3\nsynthetic.content_vocab = 8\n"
                                         "synthetic.n_ambiguous = 2\nvocab.min_freq = 1\n"
                                         "train.lm.epochs = 1\ntrain.stage1.epochs = 2\ntrain.stage2.epochs = 1\n"
                                         "search.beam = 2\n";
    ok_ = run("gen-synthetic" + cfg() + "--out " + p("data")) == 0 &&
          run("build-vocab" + cfg() + "--data " + p("data")) == 0 &&
          run("pretrain-lm" + cfg() + "--data " + p("data") + " --out " + p("lm")) == 0 &&
          run("train-stage1" + cfg() + "--data " + p("data") + " --init " + p("lm/lm.ckpt") + " --out " + p("s1")) == 0 &&
          run("train-stage2" + cfg() + "--data " + p("data") + " --init " + p("s1/stage1.ckpt") + " --out " + p("s2")) == 0;
  }
  static void TearDownTestSuite() { fs::remove_all(dir()); }

  void SetUp() override { ASSERT_TRUE(ok_) << "pipeline setup failed"; }

  static inline bool ok_ = false;
};

TEST_F(Cli, PipelineWritesArtifactsAndManifests) {
  for (const char* f : {"data/train.src", "data/vocab.src", "lm/lm.ckpt", "lm/train.log", "s1/stage1.ckpt",
                        "s2/stage2.ckpt", "s2/train-stage2.manifest"}) {
    EXPECT_TRUE(fs::exists(dir() / f)) << f;
  }
  const std::string manifest = slurp(dir() / "s1/train-stage1.manifest");
  EXPECT_NE(manifest.find(docnmt::git_blob_hash_file(dir() / "data/train.src")), std::string::npos);
  EXPECT_NE(manifest.find("[config]"), std::string::npos);
}

TEST_F(Cli, PassZeroIsTheSentenceLevelTranslation) {
  ASSERT_EQ(run("translate" + cfg() + "--data " + p("data") + " --model " + p("s2/stage2.ckpt") + " --base " +
                p("s1/stage1.ckpt") + " --src " + p("data/test.src") + " --passes 0 --out " + p("t0")),
            0);
  ASSERT_EQ(run("translate" + cfg() + "--data " + p("data") + " --model " + p("s1/stage1.ckpt") + " --src " +
                p("data/test.src") + " --memories none --out " + p("tn")),
            0);
  EXPECT_EQ(slurp(dir() / "t0/translations.txt"), slurp(dir() / "tn/translations.txt"));
  EXPECT_FALSE(slurp(dir() / "t0/translations.txt").empty());
}

TEST_F(Cli, TwoPassTranslationWritesAudit) {
  ASSERT_EQ(run("translate" + cfg() + "--data " + p("data") + " --model " + p("s2/stage2.ckpt") + " --base " +
                p("s1/stage1.ckpt") + " --src " + p("data/test.src") + " --out " + p("t1")),
            0);
  const std::string audit = slurp(dir() / "t1/audit.tsv");
  // Header plus three documents of three sentences, one update pass.
  EXPECT_EQ(std::count(audit.begin(), audit.end(), '\n'), 10);
  EXPECT_EQ(audit.rfind("doc\tpass\tsentence\t", 0), 0u);
}

TEST_F(Cli, EvaluateReferenceAgainstItself) {
  ASSERT_EQ(run("evaluate bleu --hyp " + p("data/test.trg") + " --ref " + p("data/test.trg"), dir() / "bleu.txt"), 0);
  EXPECT_EQ(slurp(dir() / "bleu.txt"), "bleu\t100\n");
  ASSERT_EQ(run("evaluate bleu --hyp " + p("data/test.trg") + " --ref " + p("data/test.trg") + " --out " +
                p("ev/nested")),
            0);
  EXPECT_EQ(slurp(dir() / "ev/nested/report.tsv"), "bleu\t100\n");
  EXPECT_NE(slurp(dir() / "ev/nested/evaluate-bleu.manifest").find("eval.bleu_smoothing = none"), std::string::npos);
  ASSERT_EQ(run("evaluate significance --hyp " + p("data/test.trg") + " --hyp-b " + p("data/test.trg") + " --ref " +
                    p("data/test.trg"),
                dir() / "sig.txt"),
            0);
  EXPECT_NE(slurp(dir() / "sig.txt").find("p_value\t1"), std::string::npos);
  // --hyp-b is the system under test: the reference itself beats the source copy.
  ASSERT_EQ(run("evaluate significance --hyp " + p("data/test.src") + " --hyp-b " + p("data/test.trg") + " --ref " +
                    p("data/test.trg"),
                dir() / "sig2.txt"),
            0);
  const std::string sig = slurp(dir() / "sig2.txt");
  EXPECT_EQ(sig.find("delta_bleu\t-"), std::string::npos) << sig;
  EXPECT_NE(sig.find("p_value\t0\n"), std::string::npos) << sig;
}

TEST_F(Cli, StageOneIsDeterministic) {
  ASSERT_EQ(run("train-stage1" + cfg() + "--data " + p("data") + " --init " + p("lm/lm.ckpt") + " --out " +
                p("s1b")),
            0);
  EXPECT_EQ(slurp(dir() / "s1/stage1.ckpt"), slurp(dir() / "s1b/stage1.ckpt"));
}

TEST_F(Cli, GradCheckPasses) {
  ASSERT_EQ(run("grad-check --set model.embed=4 --set model.hidden=4 --set model.align=4 --set model.lm_hidden=4 "
                "--set model.doc_hidden=4",
                dir() / "gc.txt"),
            0);
  EXPECT_EQ(slurp(dir() / "gc.txt").rfind("max_rel_error\t", 0), 0u);
}

TEST_F(Cli, ExitCodes) {
  EXPECT_EQ(run(""), 1);
  EXPECT_EQ(run("translate --data nowhere"), 1);
  EXPECT_EQ(run("build-vocab --data " + p("nowhere")), 2);
  EXPECT_EQ(run("grad-check --tolerance -1 --set model.hidden=3 --set model.embed=3 --set model.align=3 "
                "--set model.lm_hidden=3 --set model.doc_hidden=3"),
            3);
  EXPECT_EQ(run("train-stage2 --data " + p("data") + " --init " + p("s1/stage1.ckpt") + " --set bad"), 1);
}

}  // namespace
