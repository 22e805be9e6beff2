#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>

#include "suci/ablation.hpp"
#include "suci/binary_io.hpp"
#include "suci/errors.hpp"
#include "suci/report.hpp"

using namespace suci;
namespace fs = std::filesystem;

namespace {

GenConfig tiny_gen(std::uint64_t seed) {
  GenConfig g;
  g.n_train_subjects = 3;
  g.n_ood_subjects = 2;
  g.samples_per_subject = 15;
  g.seed = seed;
  return g;
}

train::TrainConfig tiny_train() {
  train::TrainConfig t;
  t.epochs = 1;
  t.batch_size = 16;
  t.d_enc = 4;
  t.d = 4;
  t.d_g = 4;
  t.d_h = 4;
  t.d_n = 4;
  return t;
}

metrics::MetricsReport make_report(const std::string& variant, const std::string& split, std::uint64_t seed,
                                   double acc) {
  metrics::MetricsReport r;
  r.variant = variant;
  r.split = split;
  r.seed = seed;
  r.accuracy = acc;
  r.macro_f1 = acc / 2.0;
  r.weighted_f1 = acc;
  r.confusion = {{1, 2}, {3, 4}};
  r.n = 10;
  return r;
}

fs::path scratch_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("suci_report_" + name);
  fs::remove_all(dir);
  return dir;
}

}  // namespace

TEST(Ablation, GridShapeAndDeduplication) {
  const auto table = ablation::run_ablations([](std::uint64_t s) { return generate(tiny_gen(s)); }, tiny_train(),
                                             {0, 1}, {"vanilla", "suci", "vanilla", "no_psi"});
  ASSERT_EQ(table.warnings.size(), 1u);
  EXPECT_NE(table.warnings[0].find("vanilla"), std::string::npos);
  EXPECT_TRUE(table.failures.empty());
  ASSERT_EQ(table.reports.size(), 3u * 2u * 3u);
  EXPECT_EQ(table.reports[0].variant, "vanilla");
  EXPECT_EQ(table.reports[0].split, "train");
  EXPECT_EQ(table.reports[2].split, "ood_test");
  EXPECT_EQ(table.reports[3].seed, 1u);
  EXPECT_EQ(table.reports.back().variant, "no_psi");
}

TEST(Ablation, FailingCellIsRecordedAndGridContinues) {
  auto factory = [](std::uint64_t s) {
    auto b = generate(tiny_gen(s));
    if (s == 1) b.train[0].x[1](0, 0) = std::numeric_limits<float>::infinity();
    return b;
  };
  const auto table = ablation::run_ablations(factory, tiny_train(), {0, 1, 2}, {"vanilla", "suci"});
  ASSERT_EQ(table.failures.size(), 2u);
  for (const auto& f : table.failures) {
    EXPECT_EQ(f.seed, 1u);
    EXPECT_EQ(f.message, "non-finite loss at epoch 0");
  }
  EXPECT_EQ(table.reports.size(), 2u * 2u * 3u);
}

TEST(Ablation, InputErrors) {
  const auto b = generate(tiny_gen(0));
  EXPECT_THROW(ablation::run_ablations(b, tiny_train(), {}, {"suci"}), ValidationError);
  EXPECT_THROW(ablation::run_ablations(b, tiny_train(), {0}, {"suci", "w/o_everything"}), ValidationError);
}

TEST(Ablation, SummaryMeanAndSampleStd) {
  std::vector<metrics::MetricsReport> rs{make_report("suci", "ood_test", 0, 0.5),
                                         make_report("suci", "ood_test", 1, 0.7),
                                         make_report("suci", "ood_test", 2, 0.9),
                                         make_report("vanilla", "ood_test", 0, 0.4)};
  const auto cells = ablation::summarize(rs);
  ASSERT_EQ(cells.size(), 2u);
  EXPECT_NEAR(cells[0].accuracy_mean, 0.7, 1e-15);
  EXPECT_NEAR(cells[0].accuracy_std, 0.2, 1e-15);  // sqrt((0.04 + 0 + 0.04) / 2)
  EXPECT_NEAR(cells[0].macro_f1_std, 0.1, 1e-15);
  EXPECT_EQ(cells[0].n, 3u);
  EXPECT_EQ(cells[1].accuracy_std, 0.0);
  EXPECT_EQ(ablation::find_cell(cells, "vanilla", "iid_test"), nullptr);
}

TEST(Report, SingleReportRoundTrips) {
  auto r = make_report("suci", "ood_test", 4, 0.123456789012345678);
  r.binary_accuracy = 0.75;
  const auto dir = scratch_dir("one");
  report::render_report({r}, dir);
  const auto back = report::load_reports(dir / "metrics.json");
  ASSERT_EQ(back.reports.size(), 1u);
  EXPECT_EQ(back.reports[0], r);
  EXPECT_TRUE(fs::exists(dir / "summary.md"));
  EXPECT_TRUE(fs::exists(dir / "bars.svg"));
}

TEST(Report, TwoVariantsTwoSplitsGiveFourMeanCells) {
  std::vector<metrics::MetricsReport> rs;
  for (const char* v : {"vanilla", "suci"})
    for (const char* s : {"iid_test", "ood_test"})
      for (std::uint64_t seed : {0u, 1u}) rs.push_back(make_report(v, s, seed, 0.5 + 0.1 * static_cast<double>(seed)));
  EXPECT_EQ(ablation::summarize(rs).size(), 4u);
  const auto md = report::summary_markdown(rs);
  // Accuracy table: two rows with two "mean ± std" cells each.
  const auto acc_table = md.substr(0, md.find("## Macro-F1"));
  std::size_t cells = 0;
  for (auto pos = acc_table.find("±"); pos != std::string::npos; pos = acc_table.find("±", pos + 1)) ++cells;
  EXPECT_EQ(cells, 1u + 4u);  // the header mentions it once
  EXPECT_NE(md.find("| suci | +0.00 |"), std::string::npos);
}

TEST(Report, RegenerationIsByteIdentical) {
  std::vector<metrics::MetricsReport> rs{make_report("vanilla", "ood_test", 0, 1.0 / 3.0),
                                         make_report("suci", "ood_test", 0, 2.0 / 3.0)};
  report::Scatter sc{"suci", "h by class", nn::MatrixXd::Random(6, 2), {0, 1, 2, 0, 1, 2}};
  const auto a = scratch_dir("regen_a");
  const auto b = scratch_dir("regen_b");
  report::render_report(rs, a, {sc}, {{"no_text", 3, "boom"}});
  report::render_report(rs, b, {sc}, {{"no_text", 3, "boom"}});
  EXPECT_EQ(io::hash_directory(a), io::hash_directory(b));
  std::string ja, jb;
  ASSERT_TRUE(io::read_file(a / "metrics.json", ja));
  ASSERT_TRUE(io::read_file(b / "metrics.json", jb));
  EXPECT_EQ(ja, jb);
  EXPECT_TRUE(fs::exists(a / "scatter_suci.svg"));
  EXPECT_EQ(report::load_reports(a / "metrics.json").failures.size(), 1u);
}

TEST(Report, Errors) {
  EXPECT_THROW(report::render_report({}, scratch_dir("empty")), ValidationError);
  const auto blocker = scratch_dir("blocker");
  ASSERT_TRUE(io::write_file(blocker, "a file, not a directory"));
  EXPECT_THROW(report::render_report({make_report("suci", "train", 0, 1.0)}, blocker / "out"), RuntimeFailure);
  const auto bad = scratch_dir("badjson");
  fs::create_directories(bad);
  ASSERT_TRUE(io::write_file(bad / "metrics.json", "{\"schema_version\": 9, \"reports\": []}"));
  EXPECT_THROW(report::load_reports(bad / "metrics.json"), ValidationError);
  fs::remove(blocker);
}

TEST(Report, CollectMergesAndKeepsFirstDuplicate) {
  const auto root = scratch_dir("collect");
  report::render_report({make_report("suci", "ood_test", 0, 0.9)}, root / "a");
  report::render_report({make_report("suci", "ood_test", 0, 0.1), make_report("vanilla", "ood_test", 0, 0.8)},
                        root / "b");
  const auto all = report::collect_reports(root);
  ASSERT_EQ(all.reports.size(), 2u);
  EXPECT_EQ(all.reports[0].accuracy, 0.9);
  EXPECT_THROW(report::collect_reports(scratch_dir("nothing")), ValidationError);
}
