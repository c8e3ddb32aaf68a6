#include <gtest/gtest.h>

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "json.hpp"

namespace fs = std::filesystem;

namespace {

const std::string kData = PEP_TEST_DATA;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

struct CliRun {
  int code;
  std::string err;
};

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir = fs::temp_directory_path() /
          ("pep_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }

  CliRun pep(const std::string& args, const std::string& env = "") {
    const auto err = dir / "stderr.txt";
    const std::string cmd = env + " " + PEP_CLI + " " + args + " >" + (dir / "stdout.txt").string() +
                            " 2>" + err.string();
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(err)};
  }

  // Tiny model and schedule for end-to-end runs.
  static std::string small() {
    return "--set encoder.hidden=16 --set encoder.ffn=32 --set encoder.layers=1 "
           "--set vocab.size=150 --set stage1.steps=3 --set stage1.batch_size=8 "
           "--set stage2.steps=3 --set stage2.batch_size=2 --set train.checkpoint_every=2 "
           "--set eval.k_values=4,8 --set eval.repetitions=2";
  }

  void pipeline(const fs::path& out, const std::string& extra = "") {
    const std::string s = small() + " --seed 5 " + extra;
    ASSERT_EQ(pep(s + " --out-dir " + out.string() + " synth --kind mix --count 30 --out " +
                  (out / "mix.jsonl").string()).code, 0);
    ASSERT_EQ(pep(s + " --out-dir " + out.string() + " build-vocab --corpus " +
                  (out / "mix.posts.txt").string()).code, 0);
    ASSERT_EQ(pep(s + " --out-dir " + (out / "s1").string() + " pretrain --stage 1 --vocab " +
                  (out / "vocab.txt").string() + " --corpus " + (out / "mix.posts.txt").string()).code, 0);
    ASSERT_EQ(pep(s + " --out-dir " + (out / "s2").string() + " pretrain --stage 2 --vocab " +
                  (out / "vocab.txt").string() + " --conversations " + (out / "mix.jsonl").string() +
                  " --init " + (out / "s1/stage1.ckpt").string()).code, 0);
  }

  fs::path dir;
};

}  // namespace

TEST_F(CliTest, PreprocessMatchesGolden) {
  const auto out = dir / "norm.txt";
  ASSERT_EQ(pep("--out-dir " + dir.string() + " preprocess --in " + kData + "/preprocess_input.txt --out " + out.string()).code, 0);
  EXPECT_EQ(slurp(out), slurp(kData + "/preprocess_golden.txt"));
}

TEST_F(CliTest, PreprocessRejectsInvalidUtf8WithLineNumber) {
  std::ofstream(dir / "bad.txt", std::ios::binary) << "fine\nalso fine\nbro\xc3ken\n";
  const auto r = pep("--out-dir " + dir.string() + " preprocess --in " + (dir / "bad.txt").string() +
                     " --out " + (dir / "o.txt").string());
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find("line 3"), std::string::npos) << r.err;
}

TEST_F(CliTest, PreprocessEmptyInput) {
  std::ofstream(dir / "empty.txt");
  ASSERT_EQ(pep("--out-dir " + dir.string() + " preprocess --in " + (dir / "empty.txt").string() +
                " --out " + (dir / "o.txt").string()).code, 0);
  EXPECT_EQ(slurp(dir / "o.txt"), "");
}

TEST_F(CliTest, MissingPrerequisitesAreActionable) {
  auto r = pep("--out-dir " + dir.string() + " pretrain --stage 2");
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("build-vocab"), std::string::npos) << r.err;
  r = pep("--out-dir " + dir.string() + " evaluate --vocab " + (dir / "nope.txt").string());
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("not found"), std::string::npos) << r.err;
  r = pep("--out-dir " + dir.string() + " --set no.such.key=1 stats");
  EXPECT_EQ(r.code, 2);
}

TEST_F(CliTest, ManifestRecordsInputDigest) {
  std::ofstream(dir / "abc.txt", std::ios::binary) << "abc";
  ASSERT_EQ(pep("--out-dir " + dir.string() + " preprocess --in " + (dir / "abc.txt").string() +
                " --out " + (dir / "o.txt").string()).code, 0);
  const auto m = nlohmann::json::parse(slurp(dir / "manifest.json"));
  EXPECT_EQ(m["inputs"][0]["sha256"], "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  EXPECT_FALSE(m["finished_at"].is_null());
  EXPECT_TRUE(fs::exists(dir / "config.resolved"));
}

TEST_F(CliTest, SettingPrecedence) {
  std::ofstream(dir / "run.cfg") << "train.seed = 1\ntrain.threads = 2\n";
  std::ofstream(dir / "x.txt") << "x\n";
  const std::string args = "--config " + (dir / "run.cfg").string() + " --seed 3 --out-dir " +
                           dir.string() + " preprocess --in " + (dir / "x.txt").string() + " --out " +
                           (dir / "y.txt").string();
  ASSERT_EQ(pep(args, "PEP_SEED=2 PEP_THREADS=4").code, 0);
  const auto resolved = slurp(dir / "config.resolved");
  EXPECT_NE(resolved.find("train.seed = 3\n"), std::string::npos);
  EXPECT_NE(resolved.find("train.threads = 4\n"), std::string::npos);
}

TEST_F(CliTest, SeededRunsAreBitwiseReproducible) {
  pipeline(dir / "a");
  pipeline(dir / "b");
  for (const auto* f : {"vocab.txt", "mix.jsonl", "s1/stage1.ckpt", "s1/stage1.log.tsv",
                        "s2/stage2.ckpt", "s2/stage2.log.tsv"}) {
    const auto a = slurp(dir / "a" / f);
    EXPECT_FALSE(a.empty()) << f;
    EXPECT_EQ(a, slurp(dir / "b" / f)) << f;
  }
  // The resolved config differs only in the output directory.
  auto without_out_dir = [](std::string s) {
    const auto at = s.find("paths.out_dir = ");
    return at == std::string::npos ? s : s.substr(0, at);
  };
  const auto ca = without_out_dir(slurp(dir / "a" / "s2" / "config.resolved"));
  EXPECT_NE(ca.find("train.seed = 5\n"), std::string::npos);
  EXPECT_EQ(ca, without_out_dir(slurp(dir / "b" / "s2" / "config.resolved")));
}

TEST_F(CliTest, ResumeAndDownstreamCommands) {
  pipeline(dir / "a");
  const auto a = dir / "a";
  const std::string s = small() + " --seed 5";
  const std::string s2 = " pretrain --stage 2 --vocab " + (a / "vocab.txt").string() + " --conversations " +
                         (a / "mix.jsonl").string() + " --init " + (a / "s1/stage1.ckpt").string();
  ASSERT_EQ(pep(s + " --out-dir " + (dir / "r").string() + s2 + " --stop-at 1").code, 0);
  ASSERT_EQ(pep(s + " --out-dir " + (dir / "r").string() + s2 + " --resume").code, 0);
  EXPECT_EQ(slurp(dir / "r/stage2.ckpt"), slurp(a / "s2/stage2.ckpt"));
  EXPECT_EQ(slurp(dir / "r/stage2.log.tsv"), slurp(a / "s2/stage2.log.tsv"));

  ASSERT_EQ(pep(s + " --out-dir " + a.string() + " synth --kind claims --count 30 --out " +
                (a / "claims.jsonl").string()).code, 0);
  const std::string inputs = " --vocab " + (a / "vocab.txt").string() + " --labeled " +
                             (a / "claims.jsonl").string();
  ASSERT_EQ(pep(s + " --set eval.gcn=true --out-dir " + (dir / "ev").string() + " evaluate" + inputs +
                " --checkpoint " + (a / "s2/stage2.ckpt").string() + " --dataset synth").code, 0);
  std::ifstream metrics(dir / "ev/metrics.jsonl");
  std::string line;
  std::size_t records = 0;
  while (std::getline(metrics, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j["dataset"], "synth");
    EXPECT_TRUE(j.contains("macro_f1"));
    EXPECT_TRUE(j["per_class"].contains("deep"));
    ++records;
  }
  EXPECT_EQ(records, 2u);
  ASSERT_EQ(pep(s + " --out-dir " + (dir / "fs").string() + " fewshot" + inputs + " --random-init").code, 0);
  EXPECT_NE(slurp(dir / "fs/fewshot_curve.tsv").find("k\tmean\tstddev"), std::string::npos);
  ASSERT_EQ(pep(s + " --out-dir " + (dir / "st").string() + " stats --conversations " +
                (a / "mix.jsonl").string()).code, 0);
  EXPECT_EQ(nlohmann::json::parse(slurp(dir / "st/stats.json"))["trees"]["claims"], 30);
}

TEST_F(CliTest, DeriveLabelsExport) {
  ASSERT_EQ(pep("--out-dir " + dir.string() + " derive-labels --conversations " + kData + "/nine_posts.jsonl").code, 0);
  const auto out = slurp(dir / "labels.tsv");
  EXPECT_NE(out.find("nine_posts 1 2 0 1 1\n"), std::string::npos);
  EXPECT_EQ(std::count(out.begin(), out.end(), '\n'), 36);
}
