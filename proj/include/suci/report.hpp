#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "suci/ablation.hpp"
#include "suci/metrics.hpp"
#include "suci/nn.hpp"

namespace suci::report {

// metrics.json layout:
//   {"schema_version": 1,
//    "reports":  [MetricsReport, ...],
//    "failures": [{"variant", "seed", "message"}, ...]}
// MetricsReport keys: variant, split, seed, n, accuracy, binary_accuracy
// (null when no binary map), macro_f1, weighted_f1, confusion[truth][pred].
inline constexpr int kMetricsSchemaVersion = 1;

struct Scatter {
  std::string name;           // file stem: scatter_<name>.svg
  std::string title;
  nn::MatrixXd coords;        // n x 2
  std::vector<std::size_t> labels;
};

std::string metrics_json(const std::vector<metrics::MetricsReport>& reports,
                         const std::vector<ablation::CellFailure>& failures = {});

// Writes metrics.json, summary.md, bars.svg and one SVG per scatter.
// Throws ValidationError for no reports, RuntimeFailure if dir is unwritable.
void render_report(const std::vector<metrics::MetricsReport>& reports, const std::filesystem::path& dir,
                   const std::vector<Scatter>& scatters = {},
                   const std::vector<ablation::CellFailure>& failures = {});

// summary.md and bars.svg only.
void render_summary(const std::vector<metrics::MetricsReport>& reports, const std::filesystem::path& dir,
                    const std::vector<ablation::CellFailure>& failures = {});

struct LoadedReports {
  std::vector<metrics::MetricsReport> reports;
  std::vector<ablation::CellFailure> failures;
};

// Parses one metrics.json. Throws ValidationError naming the file.
LoadedReports load_reports(const std::filesystem::path& file);

// Every metrics.json below dir in sorted path order, merged. A
// (variant, split, seed) seen twice keeps its first occurrence.
LoadedReports collect_reports(const std::filesystem::path& dir);

std::string summary_markdown(const std::vector<metrics::MetricsReport>& reports,
                             const std::vector<ablation::CellFailure>& failures = {});
std::string bars_svg(const std::vector<metrics::MetricsReport>& reports);
std::string scatter_svg(const Scatter& scatter);

}  // namespace suci::report
