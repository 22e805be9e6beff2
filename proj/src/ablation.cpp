#include "suci/ablation.hpp"

#include <algorithm>
#include <cmath>

#include "suci/errors.hpp"

namespace suci::ablation {

void to_json(nlohmann::json& j, const CellFailure& f) {
  j = nlohmann::json{{"variant", f.variant}, {"seed", f.seed}, {"message", f.message}};
}

void from_json(const nlohmann::json& j, CellFailure& f) {
  f.variant = j.at("variant").get<std::string>();
  f.seed = j.at("seed").get<std::uint64_t>();
  f.message = j.at("message").get<std::string>();
}

AblationTable run_ablations(const BundleFactory& bundle_for_seed, const train::TrainConfig& base,
                            const std::vector<std::uint64_t>& seeds, const std::vector<std::string>& variants,
                            const CellCallback& on_cell) {
  if (seeds.empty()) throw ValidationError("seeds", "at least one seed is required");
  if (variants.empty()) throw ValidationError("variants", "at least one variant is required");
  AblationTable table;
  std::vector<std::string> unique;
  for (const auto& v : variants) {
    train::variant_flags(v);
    if (std::find(unique.begin(), unique.end(), v) != unique.end()) {
      table.warnings.push_back("duplicate variant '" + v + "' ignored");
    } else {
      unique.push_back(v);
    }
  }
  const std::vector<std::uint64_t> seed_list = [&] {
    std::vector<std::uint64_t> out;
    for (auto s : seeds) {
      if (std::find(out.begin(), out.end(), s) != out.end()) {
        table.warnings.push_back("duplicate seed " + std::to_string(s) + " ignored");
      } else {
        out.push_back(s);
      }
    }
    return out;
  }();

  // Cells are grouped by seed so each bundle is generated once.
  std::vector<std::vector<metrics::MetricsReport>> per_variant(unique.size());
  for (auto seed : seed_list) {
    const DatasetBundle bundle = bundle_for_seed(seed);
    for (std::size_t vi = 0; vi < unique.size(); ++vi) {
      auto config = base;
      config.variant = unique[vi];
      config.seed = seed;
      try {
        const auto ck = train::train(bundle, config);
        for (auto split : {Split::Train, Split::IidTest, Split::OodTest}) {
          per_variant[vi].push_back(metrics::evaluate(ck, bundle, split));
        }
        if (on_cell) on_cell(unique[vi], seed, &ck, bundle);
      } catch (const std::exception& e) {
        table.failures.push_back({unique[vi], seed, e.what()});
        if (on_cell) on_cell(unique[vi], seed, nullptr, bundle);
      }
    }
  }
  for (auto& reports : per_variant) {
    for (auto& r : reports) table.reports.push_back(std::move(r));
  }
  return table;
}

AblationTable run_ablations(const DatasetBundle& bundle, const train::TrainConfig& base,
                            const std::vector<std::uint64_t>& seeds, const std::vector<std::string>& variants,
                            const CellCallback& on_cell) {
  return run_ablations([&](std::uint64_t) { return bundle; }, base, seeds, variants, on_cell);
}

namespace {

std::pair<double, double> mean_std(const std::vector<double>& xs) {
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  if (xs.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(xs.size() - 1))};
}

}  // namespace

std::vector<SummaryCell> summarize(const std::vector<metrics::MetricsReport>& reports) {
  std::vector<SummaryCell> cells;
  std::vector<std::vector<double>> acc, f1;
  for (const auto& r : reports) {
    auto it = std::find_if(cells.begin(), cells.end(),
                           [&](const SummaryCell& c) { return c.variant == r.variant && c.split == r.split; });
    std::size_t i = static_cast<std::size_t>(it - cells.begin());
    if (it == cells.end()) {
      cells.push_back({r.variant, r.split});
      acc.emplace_back();
      f1.emplace_back();
    }
    acc[i].push_back(r.accuracy);
    f1[i].push_back(r.macro_f1);
  }
  for (std::size_t i = 0; i < cells.size(); ++i) {
    cells[i].n = acc[i].size();
    std::tie(cells[i].accuracy_mean, cells[i].accuracy_std) = mean_std(acc[i]);
    std::tie(cells[i].macro_f1_mean, cells[i].macro_f1_std) = mean_std(f1[i]);
  }
  return cells;
}

const SummaryCell* find_cell(const std::vector<SummaryCell>& cells, const std::string& variant,
                             const std::string& split) {
  for (const auto& c : cells) {
    if (c.variant == variant && c.split == split) return &c;
  }
  return nullptr;
}

}  // namespace suci::ablation
