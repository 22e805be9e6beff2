#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "suci/datagen.hpp"
#include "suci/train.hpp"

namespace suci::cli {

// Overrides the base output directory ("runs" otherwise).
inline constexpr const char* kOutputDirEnv = "SUCI_OUTPUT_DIR";

struct Paths {
  std::string output_dir;      // empty: $SUCI_OUTPUT_DIR or "runs"
  std::string data_dir;        // bundle for train / eval / ablate
  std::string checkpoint_dir;  // checkpoint for eval
  std::string report_dir;      // cells for report
  bool operator==(const Paths&) const = default;
};

struct AblateOptions {
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  std::vector<std::string> variants;  // empty: every variant
  // Regenerate data with gen.seed = seed for each seed; otherwise train on
  // paths.data_dir (or one bundle from gen) with only the training seed varying.
  bool vary_data_seed = true;
  bool scatter = true;  // projected h of ood_test for vanilla and suci, first seed
  bool operator==(const AblateOptions&) const = default;
};

struct EvalOptions {
  std::string split = "ood_test";
  bool operator==(const EvalOptions&) const = default;
};

struct RunConfig {
  GenConfig gen;
  train::TrainConfig train;
  Paths paths;
  AblateOptions ablate;
  EvalOptions eval;

  void validate() const;
  bool operator==(const RunConfig&) const = default;
};

void to_json(nlohmann::json& j, const RunConfig& c);
// Strict: unknown keys anywhere raise ValidationError("<section>.<key>").
void from_json(const nlohmann::json& j, RunConfig& c);

// Errors are reported as ValidationError("<file>:<field>").
RunConfig load_run_config(const std::filesystem::path& file);

// 16 hex digits over the canonical JSON of everything except paths.
std::string config_hash(const RunConfig& c);

// <base>/<command>-<hash>-seed<seed>, base from paths.output_dir, then the
// environment, then "runs".
std::filesystem::path run_dir(const RunConfig& c, const std::string& command, std::uint64_t seed);

}  // namespace suci::cli
