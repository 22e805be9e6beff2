#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace suci::scm {

using Distribution = std::vector<double>;

// Thrown by observational() when P(X = x) is zero under the model.
class UnreachableEvidence : public std::domain_error {
 public:
  explicit UnreachableEvidence(std::size_t x);
};

// Finite structural causal model with graph Z -> X, Z -> Y, X -> Y.
//
// Storage follows the JSON layout, with z as the last axis everywhere:
//   prior_z[z]
//   x_given_z[x][z]      = P(X = x | Z = z)
//   y_given_xz[y][x][z]  = P(Y = y | X = x, Z = z)
class DiscreteScm {
 public:
  static constexpr std::size_t kMaxCardinality = 16;
  static constexpr double kSimplexTolerance = 1e-12;

  // Validates every probability vector; throws ValidationError.
  DiscreteScm(Distribution prior_z, std::vector<std::vector<double>> x_given_z,
              std::vector<std::vector<std::vector<double>>> y_given_xz);

  static DiscreteScm from_json(const nlohmann::json& doc);
  static DiscreteScm load(const std::filesystem::path& path);
  nlohmann::json to_json() const;

  std::size_t z_card() const { return z_card_; }
  std::size_t x_card() const { return x_card_; }
  std::size_t y_card() const { return y_card_; }

  double prior(std::size_t z) const { return prior_z_[z]; }
  double p_x_given_z(std::size_t x, std::size_t z) const { return x_given_z_[x * z_card_ + z]; }
  double p_y_given_xz(std::size_t y, std::size_t x, std::size_t z) const {
    return y_given_xz_[(y * x_card_ + x) * z_card_ + z];
  }

  // P(X = x) = sum_z P(x|z) P(z).
  double marginal_x(std::size_t x) const;

 private:
  std::size_t z_card_, x_card_, y_card_;
  std::vector<double> prior_z_;
  std::vector<double> x_given_z_;
  std::vector<double> y_given_xz_;
};

// P(Y | X = x) = sum_z P(Y|x,z) P(z|x), with P(z|x) from Bayes' rule.
Distribution observational(const DiscreteScm& scm, std::size_t x);

// P(Y | do(X = x)) = sum_z P(Y|x,z) P(z).
Distribution interventional_backdoor(const DiscreteScm& scm, std::size_t x);

// P(Y | do(X = x)) by building the truncated-factorization joint over
// (z, x', y) with the Z -> X edge removed and X clamped, then marginalizing.
Distribution interventional_bruteforce(const DiscreteScm& scm, std::size_t x);

struct Triple {
  std::size_t z, x, y;
  bool operator==(const Triple&) const = default;
};

// Ancestral sampling z ~ P(z), x ~ P(x|z), y ~ P(y|x,z).
std::vector<Triple> sample_observational(const DiscreteScm& scm, std::size_t n,
                                         std::uint64_t seed);

double total_variation(const Distribution& a, const Distribution& b);

}  // namespace suci::scm
