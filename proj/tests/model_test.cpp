#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "gradcheck.hpp"
#include "suci/errors.hpp"
#include "suci/model.hpp"
#include "suci/rng.hpp"

using namespace suci;
using namespace suci::model;

namespace {

MultimodalSample random_sample(Rng& rng, const std::array<std::size_t, kModalities>& dims, Eigen::Index frames) {
  MultimodalSample s;
  for (std::size_t m = 0; m < kModalities; ++m) {
    s.x[m].resize(frames, static_cast<Eigen::Index>(dims[m]));
    for (Eigen::Index i = 0; i < s.x[m].size(); ++i) s.x[m].data()[i] = static_cast<float>(rng.normal());
  }
  return s;
}

SampleBatch pointers(const std::vector<MultimodalSample>& v) {
  SampleBatch out;
  for (const auto& s : v) out.push_back(&s);
  return out;
}

double scalar_gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

}  // namespace

TEST(Encode, ZeroWeightsGiveZeroRepresentation) {
  BackboneShape shape{{4, 3, 2}, 5, 6};
  MeanPoolBackbone b(shape);
  Rng rng(1);
  std::vector<MultimodalSample> v{random_sample(rng, shape.input_dims, 3), random_sample(rng, shape.input_dims, 2)};
  const auto m = b.encode(pointers(v));
  ASSERT_EQ(m.rows(), 2);
  ASSERT_EQ(m.cols(), 6);
  EXPECT_EQ(m.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Encode, IdenticalSamplesGiveIdenticalRows) {
  BackboneShape shape{{4, 3, 2}, 5, 6};
  auto b = make_backbone("mean_pool", shape, 7);
  Rng rng(2);
  const auto s = random_sample(rng, shape.input_dims, 4);
  std::vector<MultimodalSample> v{s, s};
  const auto m = b->encode(pointers(v));
  EXPECT_EQ(m.row(0), m.row(1));
  EXPECT_EQ(m, b->encode(pointers(v)));
}

TEST(Encode, HandEvaluatedTwoByTwo) {
  BackboneShape shape{{2, 2, 2}, 2, 2};
  MeanPoolBackbone b(shape);
  const double w_enc[3][2][2] = {{{0.5, -1.0}, {2.0, 0.25}}, {{1.0, 0.0}, {0.0, 1.0}}, {{-0.5, 0.5}, {0.3, 0.7}}};
  const double b_enc[3][2] = {{0.1, -0.2}, {0.0, 0.0}, {0.05, 0.4}};
  for (std::size_t m = 0; m < 3; ++m)
    for (int r = 0; r < 2; ++r) {
      b.encoders[m].bias[r] = b_enc[m][r];
      for (int c = 0; c < 2; ++c) b.encoders[m].weight(r, c) = w_enc[m][r][c];
    }
  double w_fus[2][6];
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 6; ++c) {
      w_fus[r][c] = 0.1 * (r + 1) - 0.05 * c;
      b.fusion.weight(r, c) = w_fus[r][c];
    }
  const double b_fus[2] = {0.3, -0.1};
  b.fusion.bias << b_fus[0], b_fus[1];

  MultimodalSample s;
  const float frames[3][2][2] = {{{1, 2}, {3, -1}}, {{0.5f, 0.5f}, {-0.5f, 1.5f}}, {{2, 0}, {0, -2}}};
  for (std::size_t m = 0; m < 3; ++m) {
    s.x[m].resize(2, 2);
    for (int t = 0; t < 2; ++t)
      for (int c = 0; c < 2; ++c) s.x[m](t, c) = frames[m][t][c];
  }

  double concat[6];
  for (std::size_t m = 0; m < 3; ++m) {
    const double mean[2] = {(frames[m][0][0] + frames[m][1][0]) / 2.0, (frames[m][0][1] + frames[m][1][1]) / 2.0};
    for (int r = 0; r < 2; ++r) {
      concat[2 * m + static_cast<std::size_t>(r)] =
          scalar_gelu(w_enc[m][r][0] * mean[0] + w_enc[m][r][1] * mean[1] + b_enc[m][r]);
    }
  }
  double expected[2];
  for (int r = 0; r < 2; ++r) {
    double acc = b_fus[r];
    for (int c = 0; c < 6; ++c) acc += w_fus[r][c] * concat[c];
    expected[r] = scalar_gelu(acc);
  }
  const auto out = b.encode(SampleBatch{&s});
  EXPECT_NEAR(out(0, 0), expected[0], 1e-12);
  EXPECT_NEAR(out(0, 1), expected[1], 1e-12);
}

TEST(Encode, BatchPermutationPermutesRows) {
  BackboneShape shape{{3, 2, 2}, 4, 5};
  auto b = make_backbone("mean_pool", shape, 11);
  Rng rng(3);
  std::vector<MultimodalSample> v;
  for (int i = 0; i < 6; ++i) v.push_back(random_sample(rng, shape.input_dims, 3));
  const auto m = b->encode(pointers(v));
  std::vector<std::size_t> perm{4, 2, 0, 5, 1, 3};
  SampleBatch permuted;
  for (auto i : perm) permuted.push_back(&v[i]);
  const auto mp = b->encode(permuted);
  for (std::size_t i = 0; i < perm.size(); ++i) {
    // Vectorized products may round differently by row position.
    EXPECT_LE((mp.row(static_cast<Eigen::Index>(i)) - m.row(static_cast<Eigen::Index>(perm[i]))).cwiseAbs().maxCoeff(),
              1e-12);
  }
}

TEST(Encode, ShapeMismatchNamesModalityAndAxis) {
  BackboneShape shape{{3, 2, 2}, 4, 5};
  MeanPoolBackbone b(shape);
  Rng rng(4);
  auto s = random_sample(rng, {3, 3, 2}, 2);
  try {
    b.encode(SampleBatch{&s});
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.field(), "x_v");
    EXPECT_NE(std::string(e.what()).find("feature axis"), std::string::npos);
  }
}

TEST(Registry, UnknownKindRejectedAndCustomKindUsable) {
  EXPECT_THROW(make_backbone("transformer", BackboneShape{{2, 2, 2}}, 1), ValidationError);
  register_backbone("mean_pool_zero", [](const BackboneShape& shape, std::uint64_t) {
    return std::unique_ptr<Backbone>(std::make_unique<MeanPoolBackbone>(shape));
  });
  auto b = make_backbone("mean_pool_zero", BackboneShape{{2, 2, 2}, 3, 4}, 1);
  EXPECT_EQ(b->output_width(), 4u);
  const auto kinds = registered_backbones();
  EXPECT_NE(std::find(kinds.begin(), kinds.end(), "mean_pool"), kinds.end());
}

TEST(VanillaHead, IdentityZeroAndArithmetic) {
  nn::Affine head(3, 3);
  head.weight.setIdentity();
  Eigen::MatrixXd m(1, 3);
  m << 0.3, -1.2, 2.0;
  EXPECT_EQ(vanilla_logits(m, head), m);

  nn::Affine zero(3, 3);
  const auto z = vanilla_logits(m, zero);
  EXPECT_EQ(z.cwiseAbs().maxCoeff(), 0.0);
  const auto p = nn::softmax_rows(z);
  for (int c = 0; c < 3; ++c) EXPECT_DOUBLE_EQ(p(0, c), 1.0 / 3.0);

  Rng rng(5);
  nn::Affine h(4, 2);
  nn::init_uniform(h, rng);
  Eigen::MatrixXd x(1, 4);
  x << 0.1, 0.2, -0.3, 0.4;
  const auto out = vanilla_logits(x, h);
  for (int r = 0; r < 2; ++r) {
    double acc = h.bias[r];
    for (int c = 0; c < 4; ++c) acc += h.weight(r, c) * x(0, c);
    EXPECT_NEAR(out(0, r), acc, 1e-14);
  }
  EXPECT_THROW(vanilla_logits(Eigen::MatrixXd::Zero(1, 5), h), ValidationError);
}

TEST(Gradients, EncodeAndHeadMatchFiniteDifferences) {
  BackboneShape shape{{3, 2, 4}, 3, 4};
  auto b = make_backbone("mean_pool", shape, 13);
  Rng rng(6);
  nn::Affine head(4, 3);
  nn::init_uniform(head, rng);
  std::vector<MultimodalSample> v;
  for (int i = 0; i < 5; ++i) v.push_back(random_sample(rng, shape.input_dims, 3));
  const std::vector<std::size_t> labels{0, 2, 1, 1, 0};
  const auto batch = pointers(v);

  auto loss = [&] { return nn::cross_entropy(vanilla_logits(b->encode(batch), head), labels).loss; };

  std::unique_ptr<Tape> tape;
  const auto m = b->encode(batch, &tape);
  const auto ce = nn::cross_entropy(vanilla_logits(m, head), labels);
  auto grad_b = b->zeros_like();
  nn::Affine grad_head = head.zeros_like();
  const auto dm = head.backward(m, ce.grad, grad_head);
  b->backward(*tape, dm, *grad_b);

  std::vector<nn::TensorView> params, grads;
  b->append_views("backbone", params);
  head.append_views("head", params);
  grad_b->append_views("backbone", grads);
  grad_head.append_views("head", grads);
  const auto worst = gradcheck::worst_gradient_error(params, grads, loss);
  EXPECT_LT(worst.rel_error, gradcheck::kFdRelTol) << worst.name;
}

TEST(Adam, FirstStepMovesByLearningRate) {
  // With bias correction the first update is lr * sign(g) up to epsilon.
  Eigen::MatrixXd p(1, 3);
  p << 1.0, -2.0, 0.5;
  Eigen::MatrixXd g(1, 3);
  g << 0.3, -4.0, 1e-3;
  nn::Adam adam({});
  adam.step({nn::view("p", p)}, {nn::view("g", g)});
  EXPECT_NEAR(p(0, 0), 1.0 - 1e-3, 1e-9);
  EXPECT_NEAR(p(0, 1), -2.0 + 1e-3, 1e-9);
  EXPECT_NEAR(p(0, 2), 0.5 - 1e-3, 1e-8);
  EXPECT_EQ(adam.steps(), 1u);
}
