#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <map>

#include "suci/errors.hpp"
#include "suci/rng.hpp"
#include "suci/scm.hpp"

using namespace suci;
using namespace suci::scm;

namespace {

// Z confounds X and Y: P(z=1|x=1) = 0.8 while P(z=1) = 0.5.
DiscreteScm confounded_2x2x2() {
  return DiscreteScm({0.5, 0.5}, {{0.8, 0.2}, {0.2, 0.8}},
                     {{{0.9, 0.3}, {0.7, 0.1}}, {{0.1, 0.7}, {0.3, 0.9}}});
}

std::vector<double> random_simplex(Rng& rng, std::size_t n, bool allow_zeros = false) {
  std::vector<double> v(n);
  double sum = 0.0;
  for (auto& e : v) {
    e = -std::log(1.0 - rng.uniform());
    if (allow_zeros && rng.uniform() < 0.2) e = 0.0;
    sum += e;
  }
  if (sum == 0.0) {
    v[0] = 1.0;
    sum = 1.0;
  }
  for (auto& e : v) e /= sum;
  return v;
}

DiscreteScm random_scm(Rng& rng, std::size_t nz, std::size_t nx, std::size_t ny) {
  auto prior = random_simplex(rng, nz, true);
  std::vector<std::vector<double>> xz(nx, std::vector<double>(nz));
  for (std::size_t z = 0; z < nz; ++z) {
    auto col = random_simplex(rng, nx);
    for (std::size_t x = 0; x < nx; ++x) xz[x][z] = col[x];
  }
  std::vector<std::vector<std::vector<double>>> yxz(
      ny, std::vector<std::vector<double>>(nx, std::vector<double>(nz)));
  for (std::size_t x = 0; x < nx; ++x)
    for (std::size_t z = 0; z < nz; ++z) {
      auto col = random_simplex(rng, ny);
      for (std::size_t y = 0; y < ny; ++y) yxz[y][x][z] = col[y];
    }
  // Renormalize exactly so that validation at 1e-12 always passes.
  return DiscreteScm(prior, xz, yxz);
}

// Oracle: full joint P(z, x, y) enumerated cell by cell, then conditioned on x.
std::vector<double> joint_conditional(const DiscreteScm& scm, std::size_t x) {
  std::vector<double> num(scm.y_card(), 0.0);
  double den = 0.0;
  for (std::size_t z = 0; z < scm.z_card(); ++z)
    for (std::size_t xp = 0; xp < scm.x_card(); ++xp)
      for (std::size_t y = 0; y < scm.y_card(); ++y) {
        const double cell = scm.prior(z) * scm.p_x_given_z(xp, z) * scm.p_y_given_xz(y, xp, z);
        if (xp == x) {
          num[y] += cell;
          den += cell;
        }
      }
  for (auto& v : num) v /= den;
  return num;
}

double max_abs_diff(const Distribution& a, const Distribution& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

void expect_simplex(const Distribution& d) {
  double sum = 0.0;
  for (double p : d) {
    EXPECT_GE(p, 0.0);
    sum += p;
  }
  EXPECT_NEAR(sum, 1.0, 1e-12);
}

}  // namespace

TEST(Scm, RejectsBadTables) {
  EXPECT_THROW(DiscreteScm({0.5, 0.6}, {{1.0, 1.0}}, {{{1.0, 1.0}}}), ValidationError);
  EXPECT_THROW(DiscreteScm({1.0}, {{0.5}, {0.6}}, {{{1.0}, {1.0}}}), ValidationError);
  EXPECT_THROW(DiscreteScm({1.0}, {{1.0}}, {{{0.7}}, {{0.2}}}), ValidationError);
  EXPECT_THROW(DiscreteScm({}, {}, {}), ValidationError);
  EXPECT_THROW(DiscreteScm({1.5, -0.5}, {{1.0, 1.0}}, {{{1.0, 1.0}}}), ValidationError);
}

TEST(Scm, ObservationalMatchesJointEnumeration) {
  const auto scm = confounded_2x2x2();
  for (std::size_t x = 0; x < 2; ++x) {
    const auto obs = observational(scm, x);
    EXPECT_LE(max_abs_diff(obs, joint_conditional(scm, x)), 1e-12);
    expect_simplex(obs);
  }
  // Hand value: P(y=1|x=1) = 0.2*0.3 + 0.8*0.9.
  EXPECT_NEAR(observational(scm, 1)[1], 0.78, 1e-12);
}

TEST(Scm, ObservationalSingleStratumIsTheSlice) {
  DiscreteScm scm({1.0}, {{0.3}, {0.7}}, {{{0.25}, {0.6}}, {{0.75}, {0.4}}});
  EXPECT_EQ(observational(scm, 1), (Distribution{0.6, 0.4}));
  EXPECT_EQ(interventional_backdoor(scm, 1), observational(scm, 1));
}

TEST(Scm, UnreachableEvidenceIsAnError) {
  DiscreteScm scm({1.0, 0.0}, {{1.0, 0.0}, {0.0, 1.0}},
                  {{{0.5, 0.5}, {0.5, 0.2}}, {{0.5, 0.5}, {0.5, 0.8}}});
  EXPECT_THROW(observational(scm, 1), UnreachableEvidence);
  // The interventional distribution stays defined.
  const auto dox = interventional_backdoor(scm, 1);
  EXPECT_NEAR(dox[1], 0.5, 1e-15);
  EXPECT_LE(max_abs_diff(dox, interventional_bruteforce(scm, 1)), 1e-12);
}

TEST(Scm, IndexOutOfRange) {
  const auto scm = confounded_2x2x2();
  EXPECT_THROW(observational(scm, 2), ValidationError);
  EXPECT_THROW(interventional_backdoor(scm, 2), ValidationError);
  EXPECT_THROW(interventional_bruteforce(scm, 5), ValidationError);
}

TEST(Scm, BackdoorHandValues) {
  const auto scm = confounded_2x2x2();
  // 0.5*0.3 + 0.5*0.9
  EXPECT_NEAR(interventional_backdoor(scm, 1)[1], 0.6, 1e-12);
  EXPECT_NEAR(total_variation(observational(scm, 1), interventional_backdoor(scm, 1)), 0.18,
              1e-12);
}

TEST(Scm, UniformPriorIdenticalSlices) {
  DiscreteScm scm({1.0 / 3, 1.0 / 3, 1.0 / 3}, {{0.2, 0.5, 0.9}, {0.8, 0.5, 0.1}},
                  {{{0.3, 0.3, 0.3}, {0.6, 0.6, 0.6}}, {{0.7, 0.7, 0.7}, {0.4, 0.4, 0.4}}});
  EXPECT_LE(max_abs_diff(interventional_backdoor(scm, 0), {0.3, 0.7}), 1e-15);
}

TEST(Scm, DeterministicOutcomeGivesPriorMixture) {
  // z_card = 3, Y fully determined by z.
  DiscreteScm scm({0.2, 0.3, 0.5}, {{0.9, 0.5, 0.1}, {0.1, 0.5, 0.9}},
                  {{{1, 0, 0}, {1, 0, 0}}, {{0, 1, 0}, {0, 1, 0}}, {{0, 0, 1}, {0, 0, 1}}});
  const auto bf = interventional_bruteforce(scm, 0);
  EXPECT_LE(max_abs_diff(bf, {0.2, 0.3, 0.5}), 1e-15);
}

TEST(Scm, IndependentConfounderMakesRoutesAgree) {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t nz = 1 + rng.below(6), nx = 1 + rng.below(6), ny = 1 + rng.below(6);
    auto base = random_scm(rng, nz, nx, ny).to_json();
    const auto col = random_simplex(rng, nx);
    for (std::size_t x = 0; x < nx; ++x)
      for (std::size_t z = 0; z < nz; ++z) base["x_given_z"][x][z] = col[x];
    const auto scm = DiscreteScm::from_json(base);
    for (std::size_t x = 0; x < nx; ++x) {
      if (scm.marginal_x(x) <= 0.0) continue;
      EXPECT_LE(max_abs_diff(observational(scm, x), interventional_backdoor(scm, x)), 1e-12);
    }
  }
}

TEST(Scm, RandomizedBackdoorVersusBruteforce) {
  Rng rng(2024);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto scm = random_scm(rng, 1 + rng.below(6), 1 + rng.below(6), 1 + rng.below(6));
    for (std::size_t x = 0; x < scm.x_card(); ++x) {
      const auto a = interventional_backdoor(scm, x);
      const auto b = interventional_bruteforce(scm, x);
      expect_simplex(a);
      worst = std::max(worst, max_abs_diff(a, b));
    }
  }
  EXPECT_LE(worst, 1e-12);
}

TEST(Scm, SamplingConvergesToObservationalNotInterventional) {
  const auto scm = confounded_2x2x2();
  const auto samples = sample_observational(scm, 100000, 7);
  std::map<std::size_t, std::array<double, 2>> counts;
  for (const auto& t : samples) counts[t.x][t.y] += 1.0;
  for (std::size_t x = 0; x < 2; ++x) {
    const double n = counts[x][0] + counts[x][1];
    const double p1 = counts[x][1] / n;
    EXPECT_NEAR(p1, observational(scm, x)[1], 0.01);
    EXPECT_GT(std::abs(p1 - interventional_backdoor(scm, x)[1]), 0.05);
  }
}

TEST(Scm, SamplingIsReproducible) {
  const auto scm = confounded_2x2x2();
  EXPECT_EQ(sample_observational(scm, 500, 3), sample_observational(scm, 500, 3));
  EXPECT_NE(sample_observational(scm, 500, 3), sample_observational(scm, 500, 4));
  EXPECT_THROW(sample_observational(scm, 0, 1), ValidationError);
}

TEST(Scm, DeterministicModelSamplesIdenticalTriples) {
  DiscreteScm scm({0.0, 1.0}, {{0.0, 0.0}, {1.0, 1.0}}, {{{1.0, 1.0}, {0.0, 0.0}}, {{0.0, 0.0}, {1.0, 1.0}}});
  const auto samples = sample_observational(scm, 200, 99);
  for (const auto& t : samples) EXPECT_EQ(t, (Triple{1, 1, 1}));
}

TEST(Scm, JsonRoundTripAndUnknownKeys) {
  const auto scm = confounded_2x2x2();
  const auto again = DiscreteScm::from_json(scm.to_json());
  EXPECT_EQ(again.to_json(), scm.to_json());
  auto doc = scm.to_json();
  doc["extra"] = 1;
  EXPECT_THROW(DiscreteScm::from_json(doc), ValidationError);
  doc.erase("extra");
  doc.erase("prior_z");
  EXPECT_THROW(DiscreteScm::from_json(doc), ValidationError);
}
