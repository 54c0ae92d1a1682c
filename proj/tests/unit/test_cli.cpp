#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "wet/wet.hpp"

namespace wet {
namespace {

namespace fs = std::filesystem;

struct Result {
  int code = -1;
  std::string out;
};

Result run(const std::string& args) {
  const std::string cmd = std::string(WET_CLI_PATH) + " " + args + " 2>&1";
  Result r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  std::size_t got = 0;
  while ((got = fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, got);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  return {std::istreambuf_iterator<char>(in), {}};
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("wet_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

TEST_F(Cli, KeygenWritesReloadableKey) {
  const auto r = run("keygen --n 64 --k 25 --w 64 --seed 1 --out " + path("key.json"));
  ASSERT_EQ(r.code, 0) << r.out;
  const auto key = load_key(path("key.json"));
  EXPECT_EQ(key.n(), 64);
  EXPECT_EQ(key.w(), 64);
  EXPECT_EQ(key.matrix(), generate_key(KeyParams{64, 25, 64, 1}).matrix());
  EXPECT_LT((key.matrix() * key.pinv() - Matrix::Identity(64, 64)).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_NE(r.out.find("fingerprint"), std::string::npos);
}

TEST_F(Cli, InjectThenVerifyIsWatermarked) {
  ASSERT_EQ(run("keygen --n 32 --seed 1 --out " + path("a.json")).code, 0);
  ASSERT_EQ(run("keygen --n 32 --seed 2 --out " + path("b.json")).code, 0);
  ASSERT_EQ(run("gen-corpus --count 50 --dim 32 --seed 3 --prefix w --out " + path("o.jsonl")).code, 0);
  ASSERT_EQ(run("gen-corpus --count 50 --dim 32 --seed 4 --prefix c --out " + path("co.jsonl")).code, 0);
  ASSERT_EQ(run("inject --key " + path("a.json") + " --in " + path("o.jsonl") + " --out " + path("s.jsonl")).code, 0);
  ASSERT_EQ(run("inject --key " + path("b.json") + " --in " + path("co.jsonl") + " --out " + path("cs.jsonl")).code, 0);
  const auto r = run("verify --key " + path("a.json") + " --suspect " + path("s.jsonl") + " --original " +
                     path("o.jsonl") + " --contrast-suspect " + path("cs.jsonl") + " --contrast-original " +
                     path("co.jsonl") + " --out " + path("report.json") + " --csv " + path("pairs.csv"));
  ASSERT_EQ(r.code, 0) << r.out;
  const auto report = nlohmann::json::parse(slurp(path("report.json")));
  EXPECT_EQ(report.at("auc"), 1.0);
  EXPECT_EQ(report.at("decision"), "watermarked");
  EXPECT_EQ(slurp(path("pairs.csv")).rfind("set,id,cosine\n", 0), 0u);

  ASSERT_EQ(run("recover --key " + path("a.json") + " --in " + path("s.jsonl") + " --out " + path("r.jsonl")).code, 0);
  const auto originals = read_corpus(path("o.jsonl"));
  const auto recovered = read_corpus(path("r.jsonl"));
  ASSERT_EQ(recovered.size(), originals.size());
  for (std::size_t i = 0; i < originals.size(); ++i) {
    EXPECT_GE(cosine(recovered[i].vector, originals[i].vector), 1.0 - 1e-8);
  }
}

TEST_F(Cli, WeightModelPrintsTriggerProbability) {
  const auto r = run("analyze weight-model --pt 0.005 --slen 50");
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("P_S = 0.222"), std::string::npos);
  EXPECT_NE(r.out.find("p,a,p_single,p_avg,single_exceeds_avg"), std::string::npos);
}

TEST_F(Cli, DeterministicGivenSeed) {
  ASSERT_EQ(run("gen-corpus --count 5 --dim 8 --seed 9 --out " + path("x.jsonl")).code, 0);
  ASSERT_EQ(run("gen-corpus --count 5 --dim 8 --seed 9 --out " + path("y.jsonl")).code, 0);
  EXPECT_EQ(slurp(path("x.jsonl")), slurp(path("y.jsonl")));
  ASSERT_EQ(run("keygen --n 16 --k 5 --seed 9 --out " + path("k.json")).code, 0);
  const auto a = run("attack --key " + path("k.json") + " --contrast-key " + path("k.json") + " --samples 10 --seed 4");
  const auto b = run("attack --key " + path("k.json") + " --contrast-key " + path("k.json") + " --samples 10 --seed 4");
  ASSERT_EQ(a.code, 0) << a.out;
  EXPECT_EQ(a.out, b.out);
  EXPECT_NE(a.out.find("attack,p,spread,lambda,trial,delta_cos,auc,mean_cos"), std::string::npos);
}

TEST_F(Cli, ExitCodes) {
  EXPECT_EQ(run("--help").code, 0);
  EXPECT_EQ(run("frobnicate").code, 2);
  EXPECT_EQ(run("keygen --n 8 --seed 1 --out " + path("k.json") + " --bogus").code, 2);
  const auto missing = run("verify --key " + path("nope.json") + " --suspect a --original b --contrast-suspect c "
                           "--contrast-original d");
  EXPECT_EQ(missing.code, 1);
  EXPECT_NE(missing.out.find("error"), std::string::npos);
  EXPECT_EQ(run("keygen --n 8 --k 9 --seed 1 --out " + path("k.json")).code, 1);
}

}  // namespace
}  // namespace wet
