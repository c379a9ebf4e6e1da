// Drives the installed binary end to end through a shell. The binary path
// arrives via the CAPCHECK_BIN environment variable set by CMake.

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

struct CommandResult {
  int exit_code = -1;
  std::string output;
};

const char* binary() {
  const char* bin = std::getenv("CAPCHECK_BIN");
  if (!bin) throw std::runtime_error("CAPCHECK_BIN not set");
  return bin;
}

CommandResult run(const std::string& args) {
  const fs::path out_file =
      fs::temp_directory_path() / "capcheck_cli_output.txt";
  const std::string cmd = std::string(binary()) + " " + args + " > " +
                          out_file.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  CommandResult res;
  res.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(out_file);
  std::ostringstream os;
  os << in.rdbuf();
  res.output = os.str();
  fs::remove(out_file);
  return res;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("capcheck_cli_" + std::to_string(::getpid()));
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  fs::path dir_;
};

}  // namespace

TEST_F(CliTest, GenWritesProblemFilesAndManifest) {
  const auto out = dir_ / "gen";
  const auto res = run("gen --size A --seeds 2 --master-seed 5 --out " +
                       out.string() + " --no-arrays");
  ASSERT_EQ(res.exit_code, 0) << res.output;
  int files = 0;
  for (const auto& e : fs::directory_iterator(out)) {
    if (e.path().extension() == ".json") ++files;
  }
  EXPECT_EQ(files, 6);  // 3 architectures x 2 seeds
  EXPECT_TRUE(fs::exists(out / "manifest.txt"));
  EXPECT_NE(res.output.find("A_1_seed000.problem.json"), std::string::npos);
}

TEST_F(CliTest, GenIsReproducible) {
  const auto out1 = dir_ / "gen1";
  const auto out2 = dir_ / "gen2";
  ASSERT_EQ(run("gen --size A --seeds 2 --master-seed 5 --no-arrays --out " +
                out1.string())
                .exit_code,
            0);
  ASSERT_EQ(run("gen --size A --seeds 2 --master-seed 5 --no-arrays --out " +
                out2.string())
                .exit_code,
            0);
  EXPECT_EQ(slurp(out1 / "manifest.txt"), slurp(out2 / "manifest.txt"));
}

TEST_F(CliTest, GenRejectsBadSize) {
  const auto res = run("gen --size Q --out " + (dir_ / "x").string());
  EXPECT_EQ(res.exit_code, 2);
}

TEST_F(CliTest, FitBudgetOneReportsOneCall) {
  const auto out = dir_ / "gen";
  ASSERT_EQ(run("gen --size A --seeds 1 --master-seed 9 --no-arrays --out " +
                out.string())
                .exit_code,
            0);
  const auto res =
      run("fit --problem " + (out / "A_1_seed000.problem.json").string() +
          " --network A_1 --method sgd --budget 1");
  ASSERT_EQ(res.exit_code, 0) << res.output;
  EXPECT_NE(res.output.find("gradient_calls 1"), std::string::npos);
}

TEST_F(CliTest, FitSelfFitCgConverges) {
  const auto out = dir_ / "gen";
  ASSERT_EQ(run("gen --size A --seeds 1 --master-seed 21 --no-arrays --out " +
                out.string())
                .exit_code,
            0);
  const auto res =
      run("fit --problem " + (out / "A_1_seed000.problem.json").string() +
          " --network A_1 --method cg --budget 2000");
  ASSERT_EQ(res.exit_code, 0) << res.output;
  // parse "f_init <a>  f_opt <b>" and require b < 1e-3 a
  std::istringstream in(res.output);
  std::string token;
  double f_init = -1.0, f_opt = -1.0;
  while (in >> token) {
    if (token == "f_init") in >> f_init;
    if (token == "f_opt") in >> f_opt;
  }
  ASSERT_GT(f_init, 0.0) << res.output;
  EXPECT_LT(f_opt, 1e-3 * f_init);
}

TEST_F(CliTest, FitRejectsMismatchedDims) {
  const auto out = dir_ / "gen";
  ASSERT_EQ(run("gen --size A --seeds 1 --master-seed 3 --no-arrays --out " +
                out.string())
                .exit_code,
            0);
  const auto res =
      run("fit --problem " + (out / "A_1_seed000.problem.json").string() +
          " --network B_1 --method sgd --budget 1");
  EXPECT_NE(res.exit_code, 0);
  EXPECT_NE(res.output.find("300 in"), std::string::npos);
  EXPECT_NE(res.output.find("100 in"), std::string::npos);
}

TEST_F(CliTest, CrosscheckAndReportRoundTrip) {
  const auto out = dir_ / "cc";
  const auto res = run(
      "crosscheck --size A --seeds 1 --budget 5 --methods rmsprop,cg "
      "--master-seed 4 --format md --workers 2 --out " +
      out.string());
  ASSERT_EQ(res.exit_code, 0) << res.output;
  ASSERT_TRUE(fs::exists(out / "results.jsonl"));
  ASSERT_TRUE(fs::exists(out / "detail.md"));
  ASSERT_TRUE(fs::exists(out / "summary.md"));

  const auto rep = dir_ / "rep";
  const auto res2 = run("report --store " + (out / "results.jsonl").string() +
                        " --format md --out " + rep.string());
  ASSERT_EQ(res2.exit_code, 0) << res2.output;
  // re-rendering from the store reproduces the tables byte for byte
  EXPECT_EQ(slurp(out / "detail.md"), slurp(rep / "detail.md"));
  EXPECT_EQ(slurp(out / "summary.md"), slurp(rep / "summary.md"));
}

TEST_F(CliTest, ReportMissingStoreFailsWithIoExit) {
  const auto res = run("report --store " + (dir_ / "nope.jsonl").string());
  EXPECT_EQ(res.exit_code, 3);
}

TEST_F(CliTest, EmptyStoreFailsWithExplicitMessage) {
  const auto store = dir_ / "empty.jsonl";
  {
    std::ofstream out(store);
    out << R"({"format":"capcheck-results","version":1,"size_class":"A",)"
        << R"("methods":["cg"],"seed_count":1,"master_seed":1,"budget":5,)"
        << R"("saturation_factor":2.0,"input_distribution":"standard_normal",)"
        << R"("aggregation":"median"})" << "\n";
  }
  const auto res = run("report --store " + store.string());
  EXPECT_EQ(res.exit_code, 3);
  EXPECT_NE(res.output.find("no runs"), std::string::npos);
}

TEST_F(CliTest, MissingSubcommandIsConfigError) {
  const auto res = run("");
  EXPECT_EQ(res.exit_code, 2);
}
