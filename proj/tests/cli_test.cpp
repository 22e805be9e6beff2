#include <gtest/gtest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>

#include "suci/binary_io.hpp"
#include "suci/bundle_io.hpp"
#include "suci/report.hpp"
#include "suci/run_config.hpp"
#include "suci/train.hpp"

using namespace suci;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string out;  // stdout and stderr
};

Result run(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + " " + SUCI_CLI_PATH + " " + args + " 2>&1";
  Result r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf{};
  while (std::fgets(buf.data(), buf.size(), pipe)) r.out += buf.data();
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("suci_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

const std::string kSmallData = "--n-train-subjects 4 --n-ood-subjects 2 --samples-per-subject 20";
const std::string kSmallModel = "--d-enc 4 --d 4 --d-g 4 --d-h 4 --d-n 4 --batch-size 16";

}  // namespace

TEST(Cli, OracleOnIndependentScmPrintsZeroGap) {
  const auto r = run(std::string("oracle --scm ") + SUCI_SOURCE_DIR + "/tools/scm/independent.json");
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("gap (TV):     0.000000"), std::string::npos);
  EXPECT_EQ(r.out.find("gap (TV):     0.0000001"), std::string::npos);
  const auto c = run(std::string("oracle --scm ") + SUCI_SOURCE_DIR + "/tools/scm/confounded.json --x 0");
  ASSERT_EQ(c.code, 0) << c.out;
  EXPECT_NE(c.out.find("gap (TV):     0.159091"), std::string::npos);
}

TEST(Cli, GenThenTrainZeroEpochsEqualsInitialization) {
  const auto dir = scratch("init");
  ASSERT_EQ(run("gen " + kSmallData + " --out " + (dir / "data").string()).code, 0);
  const auto r = run("train --arm vanilla --epochs 0 " + kSmallModel + " --data " + (dir / "data").string() +
                     " --out " + (dir / "run").string());
  ASSERT_EQ(r.code, 0) << r.out;
  auto loaded = train::load_checkpoint(dir / "run" / "checkpoint");
  auto init = train::initial_checkpoint(load_bundle(dir / "data"), loaded.config);
  const auto a = loaded.views();
  const auto b = init.views();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].map(), b[i].map()) << a[i].name;
}

TEST(Cli, RerunsOverwriteWithIdenticalBytes) {
  const auto dir = scratch("idem");
  const std::string args = "train --arm suci --epochs 1 " + kSmallData + " " + kSmallModel + " --out " +
                           (dir / "run").string();
  ASSERT_EQ(run(args).code, 0);
  const auto first = io::hash_directory(dir / "run");
  ASSERT_EQ(run(args).code, 0);
  EXPECT_EQ(io::hash_directory(dir / "run"), first);

  const std::string eval = "eval --checkpoint " + (dir / "run" / "checkpoint").string() + " " + kSmallData +
                           " --split iid_test --out " + (dir / "eval").string();
  ASSERT_EQ(run(eval).code, 0);
  std::string m1, m2;
  ASSERT_TRUE(io::read_file(dir / "eval" / "metrics.json", m1));
  ASSERT_EQ(run(eval).code, 0);
  ASSERT_TRUE(io::read_file(dir / "eval" / "metrics.json", m2));
  EXPECT_EQ(m1, m2);
  const auto reports = report::load_reports(dir / "eval" / "metrics.json").reports;
  ASSERT_EQ(reports.size(), 1u);
  EXPECT_EQ(reports[0].split, "iid_test");
}

TEST(Cli, FlagsOverrideConfigFile) {
  const auto dir = scratch("override");
  ASSERT_TRUE(io::write_file(dir / "cfg.json", R"({"train": {"epochs": 3, "seed": 11}})"));
  const auto r = run("train --arm vanilla --config " + (dir / "cfg.json").string() + " --epochs 1 " + kSmallData +
                     " " + kSmallModel + " --out " + (dir / "run").string());
  ASSERT_EQ(r.code, 0) << r.out;
  const auto ck = train::load_checkpoint(dir / "run" / "checkpoint");
  EXPECT_EQ(ck.epoch, 1u);
  EXPECT_EQ(ck.config.seed, 11u);
}

TEST(Cli, RunDirectoryUsesEnvironmentBase) {
  const auto dir = scratch("env");
  const auto r = run("gen " + kSmallData, std::string(cli::kOutputDirEnv) + "=" + dir.string());
  ASSERT_EQ(r.code, 0) << r.out;
  cli::RunConfig c;
  c.gen.n_train_subjects = 4;
  c.gen.n_ood_subjects = 2;
  c.gen.samples_per_subject = 20;
  EXPECT_TRUE(fs::exists(dir / ("gen-" + cli::config_hash(c) + "-seed42") / "meta.json")) << r.out;
}

TEST(Cli, ValidationErrorsExitTwoAndNameTheField) {
  const auto dir = scratch("errors");
  ASSERT_TRUE(io::write_file(dir / "cfg.json", R"({"train": {"epochz": 3}})"));
  auto r = run("gen --config " + (dir / "cfg.json").string());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("cfg.json:train.epochz"), std::string::npos) << r.out;

  ASSERT_TRUE(io::write_file(dir / "cfg2.json", R"({"gen": {"rho": 0.05}})"));
  r = run("gen --config " + (dir / "cfg2.json").string());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("cfg2.json:gen.rho"), std::string::npos) << r.out;

  r = run("train --arm vanilla --learning-rate -1");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("train.learning_rate"), std::string::npos) << r.out;

  r = run("eval --checkpoint " + (dir / "missing").string());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("paths.checkpoint_dir"), std::string::npos) << r.out;

  EXPECT_EQ(run("train --arm both").code, 2);
  EXPECT_EQ(run("frobnicate").code, 2);
  EXPECT_EQ(run("oracle --scm " + std::string(SUCI_SOURCE_DIR) + "/tools/scm/independent.json --x 9").code, 2);
}

TEST(Cli, RuntimeFailureExitsThree) {
  const auto dir = scratch("runtime");
  ASSERT_EQ(run("gen " + kSmallData + " --out " + (dir / "data").string()).code, 0);
  // A truncated payload is a well-formed request that fails while running.
  fs::resize_file(dir / "data" / "train.bin", 0);
  const auto r = run("train --arm vanilla --epochs 0 --data " + (dir / "data").string());
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.out.find("error:"), std::string::npos);
  // Divergence is a runtime failure.
  const auto d = run("train --arm vanilla --epochs 2 --learning-rate 1e300 " + kSmallData + " " + kSmallModel +
                     " --out " + (dir / "run").string());
  EXPECT_EQ(d.code, 3) << d.out;
  EXPECT_NE(d.out.find("non-finite loss at epoch"), std::string::npos);
}

TEST(Cli, HelpListsDefaults) {
  for (const char* cmd : {"gen", "train", "eval", "ablate", "oracle", "report"}) {
    const auto r = run(std::string(cmd) + " --help");
    EXPECT_EQ(r.code, 0) << cmd;
  }
  const auto r = run("ablate --help");
  for (const char* needle : {"--epochs UINT [30]", "--rho FLOAT [0.8]", "--seeds", "[[0,1,2,3,4]]", "--learning-rate"}) {
    EXPECT_NE(r.out.find(needle), std::string::npos) << needle << "\n" << r.out;
  }
}

TEST(Cli, AblateWritesReportAndReportRebuildsSummary) {
  const auto dir = scratch("ablate");
  const auto r = run("ablate --epochs 1 " + kSmallData + " " + kSmallModel +
                     " --seeds 0,1 --variants vanilla,suci,vanilla --out " + (dir / "grid").string());
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("duplicate variant 'vanilla'"), std::string::npos);
  for (const char* f : {"metrics.json", "summary.md", "bars.svg", "scatter_vanilla.svg", "scatter_suci.svg"}) {
    EXPECT_TRUE(fs::exists(dir / "grid" / f)) << f;
  }
  EXPECT_EQ(report::load_reports(dir / "grid" / "metrics.json").reports.size(), 2u * 2u * 3u);
  std::string before;
  ASSERT_TRUE(io::read_file(dir / "grid" / "summary.md", before));
  fs::remove(dir / "grid" / "summary.md");
  ASSERT_EQ(run("report " + (dir / "grid").string()).code, 0);
  std::string after;
  ASSERT_TRUE(io::read_file(dir / "grid" / "summary.md", after));
  EXPECT_EQ(before, after);
}
