#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "suci/datagen.hpp"
#include "suci/model.hpp"
#include "suci/nn.hpp"
#include "suci/rng.hpp"

namespace suci::causal {

using nn::MatrixXd;
using nn::VectorXd;

// ---- dynamic fusion -------------------------------------------------------

struct FusionWeights {
  VectorXd w;  // d_m
  VectorXd b;  // T_m
};

struct FusionResult {
  VectorXd xi;  // T_m, simplex
  VectorXd p;   // d_m
};

// xi = softmax(x w + b), p = xi^T x.
FusionResult dynamic_fusion(const MatrixXd& x, const FusionWeights& weights);

// Accumulates dL/dw and dL/db into grad given dL/dp.
void dynamic_fusion_backward(const MatrixXd& x, const FusionResult& fwd, const VectorXd& dp, FusionWeights& grad);

// ---- parameters -----------------------------------------------------------

struct SuciShape {
  std::array<std::size_t, kModalities> dims{};
  std::array<std::size_t, kModalities> seq_lens{};
  std::array<bool, kModalities> modalities{true, true, true};
  std::size_t n_classes = 3;
  std::size_t n_subjects = 24;  // N_c
  std::size_t d = 64;           // backbone output width
  std::size_t d_g = 64;
  std::size_t d_h = 64;
  std::size_t d_n = 128;

  // Width of s: the summed dims of enabled modalities.
  std::size_t d_s() const;
  void validate() const;
};

struct InterventionParams {
  MatrixXd w_m;  // d_h x d
  MatrixXd w_h;  // d_h x d_s
  MatrixXd w_q;  // d_n x d
  MatrixXd w_k;  // d_n x d_s
  nn::Affine head;  // d_h -> C

  void append_views(const std::string& prefix, std::vector<nn::TensorView>& out);
  InterventionParams zeros_like() const;
};

struct SuciParams {
  SuciShape shape;
  std::array<FusionWeights, kModalities> fusion;
  nn::Affine gen_first;   // d_s -> d_g
  nn::Affine gen_second;  // d_g -> d_s
  nn::Affine subject_disc;  // d_s -> N_c
  nn::Affine task_disc;     // d_s -> C
  InterventionParams intervention;

  // Zero parameters of the given shape.
  explicit SuciParams(const SuciShape& shape);
  SuciParams zeros_like() const { return SuciParams(shape); }
  void append_views(const std::string& prefix, std::vector<nn::TensorView>& out);
};

// Affine weights uniform in +-1/sqrt(fan_in); fusion biases start at zero.
SuciParams init_suci_params(const SuciShape& shape, std::uint64_t seed);

// ---- subject feature path -------------------------------------------------

MatrixXd subject_generator(const MatrixXd& p, const nn::Affine& first, const nn::Affine& second,
                           MatrixXd* hidden_pre = nullptr);

struct SubjectPathTape {
  std::vector<std::array<FusionResult, kModalities>> fused;  // per sample
  MatrixXd p;           // B x d_s
  MatrixXd hidden_pre;  // B x d_g
};

// Per sample: fuse (or mean-pool) each enabled modality, concatenate, run the
// generator. Returns s (B x d_s).
MatrixXd subject_features(const model::SampleBatch& batch, const SuciParams& params, bool avg_pool,
                          SubjectPathTape* tape = nullptr);

void subject_features_backward(const model::SampleBatch& batch, const SuciParams& params, bool avg_pool,
                               const SubjectPathTape& tape, const MatrixXd& ds, SuciParams& grad);

// ---- subject loss ---------------------------------------------------------

enum class TaskDiscMode { Literal, Adversarial };

std::string to_string(TaskDiscMode mode);
// Throws ValidationError("task_disc_mode") for anything else.
TaskDiscMode task_disc_mode_from_string(const std::string& s);

struct SubjectLossTerms {
  bool subject_ce = true;
  bool task_mse = true;
};

struct SubjectLoss {
  double subject_ce = 0.0;
  double task_mse = 0.0;
  double total = 0.0;
  MatrixXd ds;  // dL_sub/ds
  nn::Affine grad_subject_disc;
  // Zero in adversarial mode: D_t is frozen for the MSE term.
  nn::Affine grad_task_disc;
};

// Batch-mean CE(D_s(s), y_s) + MSE(softmax(D_t(s)), 1/C), MSE averaged over
// the C categories.
SubjectLoss subject_loss(const MatrixXd& s, const std::vector<std::size_t>& y_s, const nn::Affine& subject_disc,
                         const nn::Affine& task_disc, TaskDiscMode mode, SubjectLossTerms terms = {});

// Adversarial mode's separate D_t step: CE of D_t on a detached copy of s.
struct TaskDiscStep {
  double loss = 0.0;
  nn::Affine grad;
};
TaskDiscStep task_discriminator_step(const MatrixXd& s_detached, const std::vector<std::size_t>& y_t,
                                     const nn::Affine& task_disc);

// ---- confounder dictionary ------------------------------------------------

class ConfounderDictionary {
 public:
  ConfounderDictionary() = default;
  // Uniform priors over rows and empty caches until set_counts is called.
  explicit ConfounderDictionary(MatrixXd prototypes);

  std::size_t size() const { return static_cast<std::size_t>(z_.rows()); }
  Eigen::Index width() const { return z_.cols(); }
  const MatrixXd& prototypes() const { return z_; }
  const VectorXd& priors() const { return priors_; }
  const std::vector<std::size_t>& counts() const { return counts_; }
  std::size_t total() const { return total_; }

  // N_i from the full training split; priors become N_i / N.
  void set_counts(std::vector<std::size_t> counts);
  // Replaces prototypes and priors wholesale (clustered variant, checkpoint load).
  void assign(MatrixXd prototypes, VectorXd priors, std::vector<std::size_t> counts);

  void accumulate(std::size_t subject, const Eigen::Ref<const VectorXd>& s);
  void accumulate(const std::vector<std::size_t>& subjects, const MatrixXd& s);
  const MatrixXd& cache_sum() const { return cache_sum_; }
  const std::vector<std::size_t>& cache_count() const { return cache_count_; }

  // Epoch boundary: z_i <- cache mean for observed subjects; clears the cache.
  void update();
  std::size_t updates() const { return updates_; }
  void set_updates(std::size_t n) { updates_ = n; }

  bool operator==(const ConfounderDictionary&) const = default;

 private:
  void reset_cache();

  MatrixXd z_;
  VectorXd priors_;
  std::vector<std::size_t> counts_;
  std::size_t total_ = 0;
  MatrixXd cache_sum_;
  std::vector<std::size_t> cache_count_;
  std::size_t updates_ = 0;
};

// Entries i.i.d. uniform on [0, 1).
ConfounderDictionary init_dictionary(std::size_t n_subjects, std::size_t d_s, std::uint64_t seed);
// Same distribution; the trainer never updates it.
ConfounderDictionary random_dictionary(std::size_t n_subjects, std::size_t d_s, std::uint64_t seed);

struct KMeansResult {
  MatrixXd centroids;
  std::vector<std::size_t> assignment;
  std::vector<std::size_t> sizes;
  std::size_t iterations = 0;
};

// k-means++ seeding, then Lloyd iterations until the largest centroid shift
// is below 1e-6 or 100 iterations; best of 10 seedings by inertia. Throws
// ValidationError when k exceeds the number of distinct rows.
KMeansResult kmeans(const MatrixXd& features, std::size_t k, std::uint64_t seed);
ConfounderDictionary clustered_dictionary(const MatrixXd& features, std::size_t n_clusters, std::uint64_t seed);

// ---- intervention ---------------------------------------------------------

struct InterventionOptions {
  bool uniform_psi = false;
  bool uniform_prior = false;
};

struct Intervention {
  MatrixXd logits;       // B x C
  MatrixXd psi;          // B x N_c
  MatrixXd expectation;  // B x d_s, E[h(z)]
  MatrixXd hidden;       // B x d_h
  MatrixXd query;        // B x d_n
  MatrixXd keys;         // N_c x d_n
  VectorXd prior;        // N_c, the p(z_i) actually used
};

// scores_i = (W_q m)^T (W_k z_i) / sqrt(d_s); psi = softmax(scores);
// E = sum_i psi_i z_i p(z_i); logits = head(W_m m + W_h E).
Intervention intervene(const MatrixXd& m, const ConfounderDictionary& dict, const InterventionParams& params,
                       InterventionOptions options = {});

// Accumulates parameter gradients and returns dL/dm. Z receives no gradient.
MatrixXd intervene_backward(const MatrixXd& m, const ConfounderDictionary& dict, const InterventionParams& params,
                            InterventionOptions options, const Intervention& fwd, const MatrixXd& dlogits,
                            InterventionParams& grad);

}  // namespace suci::causal
