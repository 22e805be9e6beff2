#include "suci/model.hpp"

#include <map>
#include <mutex>

#include "suci/errors.hpp"
#include "suci/rng.hpp"

namespace suci::model {

namespace {

struct MeanPoolTape final : Tape {
  std::array<MatrixXd, kModalities> pooled;
  std::array<MatrixXd, kModalities> enc_pre;
  MatrixXd concat;
  MatrixXd fusion_pre;
};

std::map<std::string, BackboneFactory>& registry() {
  static std::map<std::string, BackboneFactory> r = {
      {MeanPoolBackbone::kKind, [](const BackboneShape& shape, std::uint64_t seed) {
         auto b = std::make_unique<MeanPoolBackbone>(shape);
         Rng rng(seed);
         for (auto& e : b->encoders) nn::init_uniform(e, rng);
         nn::init_uniform(b->fusion, rng);
         return std::unique_ptr<Backbone>(std::move(b));
       }}};
  return r;
}

std::mutex& registry_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace

void register_backbone(const std::string& kind, BackboneFactory factory) {
  std::lock_guard lock(registry_mutex());
  registry()[kind] = std::move(factory);
}

std::unique_ptr<Backbone> make_backbone(const std::string& kind, const BackboneShape& shape,
                                        std::uint64_t seed) {
  BackboneFactory factory;
  {
    std::lock_guard lock(registry_mutex());
    auto it = registry().find(kind);
    if (it == registry().end()) throw ValidationError("backbone", "unknown backbone kind '" + kind + "'");
    factory = it->second;
  }
  if (shape.d_enc < 1 || shape.d < 1) throw ValidationError("backbone", "widths must be >= 1");
  return factory(shape, seed);
}

std::vector<std::string> registered_backbones() {
  std::lock_guard lock(registry_mutex());
  std::vector<std::string> out;
  for (const auto& [k, _] : registry()) out.push_back(k);
  return out;
}

void check_batch(const SampleBatch& batch, const std::array<std::size_t, kModalities>& dims) {
  for (const auto* s : batch) {
    for (std::size_t m = 0; m < kModalities; ++m) {
      if (static_cast<std::size_t>(s->x[m].cols()) != dims[m]) {
        throw ValidationError(std::string("x_") + kModalityNames[m],
                              "feature axis (columns) is " + std::to_string(s->x[m].cols()) + ", expected " +
                                  std::to_string(dims[m]));
      }
      if (s->x[m].rows() < 1) {
        throw ValidationError(std::string("x_") + kModalityNames[m], "frame axis (rows) is empty");
      }
    }
  }
}

MeanPoolBackbone::MeanPoolBackbone(const BackboneShape& shape) : shape_(shape) {
  for (std::size_t m = 0; m < kModalities; ++m) {
    encoders[m] = nn::Affine(static_cast<Eigen::Index>(shape.input_dims[m]), static_cast<Eigen::Index>(shape.d_enc));
  }
  fusion = nn::Affine(static_cast<Eigen::Index>(kModalities * shape.d_enc), static_cast<Eigen::Index>(shape.d));
}

MatrixXd MeanPoolBackbone::encode(const SampleBatch& batch, std::unique_ptr<Tape>* tape) const {
  check_batch(batch, shape_.input_dims);
  const auto n = static_cast<Eigen::Index>(batch.size());
  const auto d_enc = static_cast<Eigen::Index>(shape_.d_enc);
  auto t = std::make_unique<MeanPoolTape>();
  t->concat.resize(n, static_cast<Eigen::Index>(kModalities) * d_enc);
  for (std::size_t m = 0; m < kModalities; ++m) {
    MatrixXd pooled(n, static_cast<Eigen::Index>(shape_.input_dims[m]));
    for (Eigen::Index i = 0; i < n; ++i) {
      pooled.row(i) = batch[static_cast<std::size_t>(i)]->x[m].cast<double>().colwise().mean();
    }
    t->enc_pre[m] = encoders[m].forward(pooled);
    t->concat.middleCols(static_cast<Eigen::Index>(m) * d_enc, d_enc) = nn::gelu(t->enc_pre[m]);
    t->pooled[m] = std::move(pooled);
  }
  t->fusion_pre = fusion.forward(t->concat);
  MatrixXd out = nn::gelu(t->fusion_pre);
  if (tape) *tape = std::move(t);
  return out;
}

void MeanPoolBackbone::backward(const Tape& tape, const MatrixXd& dm, Backbone& grad_base) const {
  const auto& t = dynamic_cast<const MeanPoolTape&>(tape);
  auto& grad = dynamic_cast<MeanPoolBackbone&>(grad_base);
  const auto d_enc = static_cast<Eigen::Index>(shape_.d_enc);
  const MatrixXd d_fusion_pre = nn::gelu_backward(t.fusion_pre, dm);
  const MatrixXd d_concat = fusion.backward(t.concat, d_fusion_pre, grad.fusion);
  for (std::size_t m = 0; m < kModalities; ++m) {
    const MatrixXd d_pre =
        nn::gelu_backward(t.enc_pre[m], d_concat.middleCols(static_cast<Eigen::Index>(m) * d_enc, d_enc));
    encoders[m].backward(t.pooled[m], d_pre, grad.encoders[m]);
  }
}

void MeanPoolBackbone::append_views(const std::string& prefix, std::vector<nn::TensorView>& out) {
  for (std::size_t m = 0; m < kModalities; ++m) {
    encoders[m].append_views(prefix + ".encoder_" + kModalityNames[m], out);
  }
  fusion.append_views(prefix + ".fusion", out);
}

MatrixXd vanilla_logits(const MatrixXd& m, const nn::Affine& head) {
  if (m.cols() != head.in()) {
    throw ValidationError("m", "width " + std::to_string(m.cols()) + " does not match head input " +
                                   std::to_string(head.in()));
  }
  return head.forward(m);
}

}  // namespace suci::model
