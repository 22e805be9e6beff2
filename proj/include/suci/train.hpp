#pragma once

#include <array>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "suci/datagen.hpp"
#include "suci/model.hpp"
#include "suci/nn.hpp"
#include "suci/suci.hpp"

namespace suci::train {

inline constexpr int kCheckpointFormatVersion = 1;

struct LossWeights {
  double sub = 1.0;
  double task = 1.0;
  bool operator==(const LossWeights&) const = default;
};

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  std::string task_disc_mode = "adversarial";
  std::string variant = "suci";
  LossWeights loss_weights;
  std::string backbone = "mean_pool";
  std::size_t d_enc = 32;
  std::size_t d = 64;
  std::size_t d_g = 64;
  std::size_t d_h = 64;
  std::size_t d_n = 128;
  // Optional class -> {0, 1} collapse for binary accuracy; -1 drops a class.
  std::vector<int> binary_map;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
// Rejects unknown keys with ValidationError("train.<key>").
void from_json(const nlohmann::json& j, TrainConfig& c);

enum class DictionaryKind { Learned, Random, Clustered };

struct VariantFlags {
  bool suci = true;
  bool avg_pool = false;
  bool subject_disc = true;
  bool task_disc = true;
  std::array<bool, kModalities> modalities{true, true, true};
  DictionaryKind dictionary = DictionaryKind::Learned;
  causal::InterventionOptions intervention;
};

// vanilla, suci, avg_pool, no_subject_disc, no_task_disc, no_text, no_visual,
// no_audio, random_Z, clustered_Z, no_psi, no_prior.
const std::vector<std::string>& variant_names();
// Throws ValidationError("variant") for an unknown name.
VariantFlags variant_flags(const std::string& name);

// Widths the checkpoint needs to rebuild its parameter groups.
struct DataShape {
  std::array<std::size_t, kModalities> dims{};
  std::array<std::size_t, kModalities> seq_lens{};
  std::size_t n_classes = 0;
  std::size_t n_subjects = 0;  // training subjects, the dictionary size

  static DataShape of(const GenConfig& config);
  bool operator==(const DataShape&) const = default;
};

struct EpochStats {
  double task_loss = 0.0;
  double sub_loss = 0.0;
  double all_loss = 0.0;
  double subject_ce = 0.0;
  double task_mse = 0.0;
  double task_disc_ce = 0.0;
  // Largest |psi - 1/N_c| seen this epoch; 0 under no_psi.
  double psi_uniform_deviation = 0.0;
  bool operator==(const EpochStats&) const = default;
};

struct BatchRecord {
  std::size_t epoch = 0;
  std::size_t batch = 0;
  double task_loss = 0.0;
  double sub_loss = 0.0;
  double all_loss = 0.0;
};

struct FeatureRecord {
  std::size_t epoch = 0;
  std::size_t subject = 0;
  nn::VectorXd s;
};

struct TrainLog {
  std::vector<BatchRecord> batches;
  // When set, every subject feature fed to the dictionary is kept.
  bool record_features = false;
  std::vector<FeatureRecord> features;
};

class Checkpoint {
 public:
  Checkpoint() = default;
  Checkpoint(const Checkpoint& other);
  Checkpoint& operator=(const Checkpoint& other);
  Checkpoint(Checkpoint&&) = default;
  Checkpoint& operator=(Checkpoint&&) = default;

  TrainConfig config;
  DataShape shape;
  std::size_t epoch = 0;
  std::unique_ptr<model::Backbone> backbone;
  std::optional<nn::Affine> vanilla_head;
  std::optional<causal::SuciParams> suci;
  std::optional<causal::ConfounderDictionary> dictionary;
  std::vector<EpochStats> history;

  bool is_suci() const { return suci.has_value(); }
  // Every parameter tensor in a fixed order.
  std::vector<nn::TensorView> views();
};

// Parameter groups of the right shapes, all zero; no dictionary.
Checkpoint empty_checkpoint(const DataShape& shape, const TrainConfig& config);

// Initial parameters exactly as training would start from them.
Checkpoint initial_checkpoint(const DatasetBundle& bundle, const TrainConfig& config);

// Both throw RuntimeFailure("non-finite loss at epoch k") on divergence.
Checkpoint train_vanilla(const DatasetBundle& bundle, const TrainConfig& config, TrainLog* log = nullptr);
Checkpoint train_suci(const DatasetBundle& bundle, const TrainConfig& config, TrainLog* log = nullptr);
// Dispatches on config.variant.
Checkpoint train(const DatasetBundle& bundle, const TrainConfig& config, TrainLog* log = nullptr);

// Logits for a batch; for SuCI checkpoints through the frozen dictionary.
nn::MatrixXd predict_logits(const Checkpoint& ckpt, const model::SampleBatch& batch);
// Pre-classifier features: h for SuCI, m for vanilla.
nn::MatrixXd representations(const Checkpoint& ckpt, const model::SampleBatch& batch);

// Directory with manifest.json, params.bin and (SuCI only) dictionary.bin.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& dir);
// Throws ValidationError on malformed manifests, RuntimeFailure on I/O.
Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace suci::train
