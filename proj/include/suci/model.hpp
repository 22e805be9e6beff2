#pragma once

#include <array>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "suci/datagen.hpp"
#include "suci/nn.hpp"

namespace suci::model {

using nn::MatrixXd;
using SampleBatch = std::vector<const MultimodalSample*>;

struct BackboneShape {
  std::array<std::size_t, kModalities> input_dims{};
  std::size_t d_enc = 32;
  std::size_t d = 64;
};

// Intermediate values a backbone needs for its backward pass.
struct Tape {
  virtual ~Tape() = default;
};

// F_m: maps a batch of multimodal samples to representations m (B x d).
// Implementations are registered by name so a checkpoint can rebuild them.
class Backbone {
 public:
  virtual ~Backbone() = default;

  virtual std::string kind() const = 0;
  virtual const BackboneShape& shape() const = 0;
  std::size_t output_width() const { return shape().d; }

  MatrixXd encode(const SampleBatch& batch) const { return encode(batch, nullptr); }
  // When tape is non-null it receives what backward() needs.
  virtual MatrixXd encode(const SampleBatch& batch, std::unique_ptr<Tape>* tape) const = 0;
  // Accumulates parameter gradients for dL/dm into grad (same kind).
  virtual void backward(const Tape& tape, const MatrixXd& dm, Backbone& grad) const = 0;

  virtual std::unique_ptr<Backbone> clone() const = 0;
  virtual std::unique_ptr<Backbone> zeros_like() const = 0;
  virtual void append_views(const std::string& prefix, std::vector<nn::TensorView>& out) = 0;
};

using BackboneFactory = std::function<std::unique_ptr<Backbone>(const BackboneShape&, std::uint64_t seed)>;

void register_backbone(const std::string& kind, BackboneFactory factory);
// Throws ValidationError for an unknown kind.
std::unique_ptr<Backbone> make_backbone(const std::string& kind, const BackboneShape& shape, std::uint64_t seed);
std::vector<std::string> registered_backbones();

// Reference backbone: per modality mean over frames -> affine -> GeLU,
// concatenation -> affine -> GeLU.
class MeanPoolBackbone final : public Backbone {
 public:
  static constexpr const char* kKind = "mean_pool";

  // Zero-initialized.
  explicit MeanPoolBackbone(const BackboneShape& shape);

  std::string kind() const override { return kKind; }
  const BackboneShape& shape() const override { return shape_; }
  using Backbone::encode;
  MatrixXd encode(const SampleBatch& batch, std::unique_ptr<Tape>* tape) const override;
  void backward(const Tape& tape, const MatrixXd& dm, Backbone& grad) const override;
  std::unique_ptr<Backbone> clone() const override { return std::make_unique<MeanPoolBackbone>(*this); }
  std::unique_ptr<Backbone> zeros_like() const override { return std::make_unique<MeanPoolBackbone>(shape_); }
  void append_views(const std::string& prefix, std::vector<nn::TensorView>& out) override;

  std::array<nn::Affine, kModalities> encoders;
  nn::Affine fusion;

 private:
  BackboneShape shape_;
};

// Baseline classifier over m: affine d -> C, no softmax.
MatrixXd vanilla_logits(const MatrixXd& m, const nn::Affine& head);

// Throws ValidationError naming the modality and axis when a sample does
// not match the expected feature widths.
void check_batch(const SampleBatch& batch, const std::array<std::size_t, kModalities>& dims);

}  // namespace suci::model
