#include <gtest/gtest.h>

#include <cstdlib>
#include <sys/wait.h>

#include "gsp/io/csv.hpp"

namespace fs = std::filesystem;
using gsp::io::read_file;
using gsp::io::write_file_atomic;

namespace {

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("gsp_cli_test_" + std::to_string(::getpid()) + "_" +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    write_file_atomic(dir_ / "market.json", R"({"reserve": 5, "page_views_thousands": 3})");
    write_file_atomic(dir_ / "bidders.csv",
                      "agent_id,bid,monthly_budget,start_date,end_date,priority\n"
                      "a,30,2,,,1\n"
                      "b,20,1000000,,,2\n");
  }
  void TearDown() override { fs::remove_all(dir_); }

  int run(const std::string& args) {
    const std::string cmd = std::string(GSPCTL_PATH) + " " + args + " > " + (dir_ / "stdout").string() + " 2> " +
                            (dir_ / "stderr").string();
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, PaceWritesPacingCsv) {
  ASSERT_EQ(run("pace --market " + path("market.json") + " --bidders " + path("bidders.csv") + " --tol 1e-8 --out " +
                path("out")),
            0);
  const std::string csv = read_file(dir_ / "out" / "pacing.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "agent_id,pi,ecpm,eq,unconditional_spend");
  // pi of a is 10/33 here, printed to 12 significant digits.
  EXPECT_NE(csv.find("a,0.30303030303"), std::string::npos) << csv;
}

TEST_F(Cli, OracleCapIsAValidationError) {
  std::string rows = "agent_id,bid,monthly_budget,start_date,end_date,priority\n";
  for (int i = 0; i < 25; ++i) rows += "b" + std::to_string(i) + "," + std::to_string(10 + i) + ",100,,," + std::to_string(i) + "\n";
  write_file_atomic(dir_ / "big.csv", rows);
  EXPECT_EQ(run("outcomes --oracle --market " + path("market.json") + " --bidders " + path("big.csv") + " --out " +
                path("out")),
            1);
  EXPECT_NE(read_file(dir_ / "stderr").find("capped"), std::string::npos);
}

TEST_F(Cli, SchemaErrorsAreLineNumbered) {
  write_file_atomic(dir_ / "bad.csv", "agent_id,bid,monthly_budget,start_date,end_date,priority\na,10,2,,,1\nb,x,2,,,2\n");
  EXPECT_EQ(run("pace --market " + path("market.json") + " --bidders " + path("bad.csv") + " --out " + path("out")), 1);
  EXPECT_NE(read_file(dir_ / "stderr").find("bad.csv:3:"), std::string::npos) << read_file(dir_ / "stderr");
  EXPECT_EQ(run("pace --bogus"), 1);
  EXPECT_EQ(run("frobnicate"), 1);
}

TEST_F(Cli, NonConvergenceExitsTwo) {
  EXPECT_EQ(run("pace --market " + path("market.json") + " --bidders " + path("bidders.csv") +
                " --max-iter 1 --out " + path("out")),
            2);
}

TEST_F(Cli, RecommendPrintsJson) {
  ASSERT_EQ(run("recommend --market " + path("market.json") + " --bidders " + path("bidders.csv") + " --budget 2"), 0);
  const std::string out = read_file(dir_ / "stdout");
  for (const char* key : {"\"bid\"", "\"expected_share\"", "\"expected_spend\"", "\"corner_case\""})
    EXPECT_NE(out.find(key), std::string::npos) << key;
  EXPECT_EQ(run("recommend --market " + path("market.json") + " --bidders " + path("bidders.csv")), 1);
}

TEST_F(Cli, OutputsNeverReplaceInputs) {
  write_file_atomic(dir_ / "pacing.csv", "agent_id,bid,monthly_budget,start_date,end_date,priority\na,10,2,,,1\n");
  EXPECT_EQ(run("pace --market " + path("market.json") + " --bidders " + path("pacing.csv") + " --out " +
                dir_.string()),
            1);
  EXPECT_EQ(read_file(dir_ / "pacing.csv").substr(0, 8), "agent_id");
  EXPECT_NE(read_file(dir_ / "pacing.csv").find("monthly_budget"), std::string::npos);
}

TEST_F(Cli, GenMarketNeedsSeed) {
  EXPECT_EQ(run("gen-market --out " + path("data")), 1);
  ASSERT_EQ(run("gen-market --seed 3 --out " + path("data")), 0);
  EXPECT_TRUE(fs::exists(dir_ / "data" / "region_0" / "trace.csv"));
  ASSERT_EQ(run("simulate --market " + path("data") + " --out " + path("sim")), 0);
  EXPECT_TRUE(fs::exists(dir_ / "sim" / "region_0" / "ledgers.csv"));
  ASSERT_EQ(run("cluster --traces " + path("data/region_0/trace.csv") + " --out " + path("cl")), 0);
  EXPECT_TRUE(fs::exists(dir_ / "cl" / "clusters.csv"));
}

TEST_F(Cli, IntegrityPasses) {
  EXPECT_EQ(run("integrity --market " + path("market.json") + " --bidders " + path("bidders.csv")), 0);
  EXPECT_NE(read_file(dir_ / "stdout").find("PASS ratio-monotonicity"), std::string::npos);
}
