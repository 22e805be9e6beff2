#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "suci/datagen.hpp"
#include "suci/nn.hpp"
#include "suci/train.hpp"

namespace suci::metrics {

struct MetricsReport {
  std::string variant;
  std::string split;
  std::uint64_t seed = 0;
  double accuracy = 0.0;
  std::optional<double> binary_accuracy;
  double macro_f1 = 0.0;
  double weighted_f1 = 0.0;
  std::vector<std::vector<std::size_t>> confusion;  // [truth][prediction]
  std::size_t n = 0;

  bool operator==(const MetricsReport&) const = default;
};

void to_json(nlohmann::json& j, const MetricsReport& r);
void from_json(const nlohmann::json& j, MetricsReport& r);

// Per-class F1 is 2TP / (2TP + FP + FN). Classes with neither support nor
// predictions have no F1 and are left out of the macro average.
// binary_map (optional) sends each class to 0, 1 or -1 (dropped).
MetricsReport from_predictions(const std::vector<std::size_t>& truth, const std::vector<std::size_t>& predicted,
                               std::size_t n_classes, const std::vector<int>& binary_map = {});

// Throws ValidationError on an empty split or mismatched dimensions.
MetricsReport evaluate(const train::Checkpoint& ckpt, const DatasetBundle& bundle, Split split);

struct Projection {
  nn::MatrixXd coords;      // n x 2
  double retained = 0.0;    // variance fraction on the two axes
  nn::MatrixXd axes;        // width x 2, unit columns
};

// Top-2 principal axes of the mean-centered rows. Each axis is signed so its
// largest-magnitude entry is positive. Throws ValidationError for fewer than
// two rows, width < 2, or zero variance.
Projection project2d(const nn::MatrixXd& vectors);

}  // namespace suci::metrics
