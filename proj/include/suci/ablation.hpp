#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "suci/datagen.hpp"
#include "suci/metrics.hpp"
#include "suci/train.hpp"

namespace suci::ablation {

struct CellFailure {
  std::string variant;
  std::uint64_t seed = 0;
  std::string message;
  bool operator==(const CellFailure&) const = default;
};

void to_json(nlohmann::json& j, const CellFailure& f);
void from_json(const nlohmann::json& j, CellFailure& f);

struct AblationTable {
  // One report per (variant, split, seed), variants in request order, then
  // seeds, then train / iid_test / ood_test.
  std::vector<metrics::MetricsReport> reports;
  std::vector<CellFailure> failures;
  std::vector<std::string> warnings;
};

// Called after each finished cell; may be empty.
using CellCallback = std::function<void(const std::string& variant, std::uint64_t seed,
                                        const train::Checkpoint* checkpoint, const DatasetBundle& bundle)>;

// Data for one seed.
using BundleFactory = std::function<DatasetBundle(std::uint64_t seed)>;

// Trains every variant on every seed with config.seed = seed. Duplicate
// variants are dropped with a warning. A failing cell is recorded and the
// grid continues. Throws ValidationError for an empty seed list or an
// unknown variant.
AblationTable run_ablations(const BundleFactory& bundle_for_seed, const train::TrainConfig& base,
                            const std::vector<std::uint64_t>& seeds, const std::vector<std::string>& variants,
                            const CellCallback& on_cell = {});

// Same data for every seed; only the training seed varies.
AblationTable run_ablations(const DatasetBundle& bundle, const train::TrainConfig& base,
                            const std::vector<std::uint64_t>& seeds, const std::vector<std::string>& variants,
                            const CellCallback& on_cell = {});

struct SummaryCell {
  std::string variant;
  std::string split;
  std::size_t n = 0;
  double accuracy_mean = 0.0;
  double accuracy_std = 0.0;  // sample std over seeds, 0 for one seed
  double macro_f1_mean = 0.0;
  double macro_f1_std = 0.0;
};

// One cell per (variant, split) in first-appearance order.
std::vector<SummaryCell> summarize(const std::vector<metrics::MetricsReport>& reports);

// Looks up a cell; nullptr if absent.
const SummaryCell* find_cell(const std::vector<SummaryCell>& cells, const std::string& variant,
                             const std::string& split);

}  // namespace suci::ablation
