#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

namespace suci {

inline constexpr std::size_t kModalities = 3;
inline constexpr std::array<const char*, kModalities> kModalityNames = {"t", "v", "a"};

enum class Split { Train, IidTest, OodTest };
enum class SubjectGroup { Train, Ood };

const char* to_string(Split split);
Split split_from_string(const std::string& name);

struct GenConfig {
  std::size_t n_train_subjects = 24;
  std::size_t n_ood_subjects = 8;
  std::size_t samples_per_subject = 200;
  std::array<std::size_t, kModalities> seq_lens = {12, 10, 10};
  std::array<std::size_t, kModalities> dims = {16, 8, 8};
  std::size_t n_classes = 3;
  double rho = 0.8;
  double alpha_signal = 1.0;
  double beta_style = 1.5;
  // Overrides beta_style for individual modalities when set.
  std::optional<std::array<double, kModalities>> beta_style_per_modality;
  // Share of each style vector pointing along a direction common to all
  // subjects with the same preferred class. 0 gives independent styles.
  double style_group_coupling = 0.0;
  double sigma_noise = 0.7;
  double iid_holdout_frac = 0.2;
  std::uint64_t seed = 42;

  // Throws ValidationError naming the first offending field.
  void validate() const;

  double beta_for(std::size_t modality) const {
    return beta_style_per_modality ? (*beta_style_per_modality)[modality] : beta_style;
  }
  std::size_t d_s() const { return dims[0] + dims[1] + dims[2]; }
  // ceil((1 - iid_holdout_frac) * samples_per_subject)
  std::size_t train_samples_per_subject() const;

  bool operator==(const GenConfig&) const = default;
};

void to_json(nlohmann::json& j, const GenConfig& c);
// Strict: unknown keys are rejected, missing keys keep their defaults.
void from_json(const nlohmann::json& j, GenConfig& c);

struct SubjectProfile {
  std::size_t subject_id = 0;
  std::size_t preferred_class = 0;
  std::array<Eigen::VectorXd, kModalities> style_vectors;  // unit norm, unscaled
  SubjectGroup group = SubjectGroup::Train;

  bool operator==(const SubjectProfile&) const = default;
};

struct MultimodalSample {
  std::array<Eigen::MatrixXf, kModalities> x;  // T_m x d_m each
  std::size_t y_t = 0;
  std::size_t y_s = 0;
  Split split = Split::Train;

  bool operator==(const MultimodalSample& o) const {
    for (std::size_t m = 0; m < kModalities; ++m) {
      if (x[m].rows() != o.x[m].rows() || x[m].cols() != o.x[m].cols() || x[m] != o.x[m]) {
        return false;
      }
    }
    return y_t == o.y_t && y_s == o.y_s && split == o.split;
  }
};

struct DatasetBundle {
  GenConfig config;
  std::vector<SubjectProfile> subjects;
  std::vector<MultimodalSample> train, iid_test, ood_test;

  const std::vector<MultimodalSample>& split(Split s) const;
  std::vector<MultimodalSample>& split(Split s);

  bool operator==(const DatasetBundle&) const = default;
};

// Class-signal directions u_{m,c}: per modality a C x d_m matrix with
// orthonormal rows.
std::array<Eigen::MatrixXd, kModalities> class_directions(const GenConfig& config);

// Deterministic given config.seed. Subjects 0..n_train-1 are training
// subjects; the rest are OOD.
DatasetBundle generate(const GenConfig& config);

}  // namespace suci
