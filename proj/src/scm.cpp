#include "suci/scm.hpp"

#include <cmath>
#include <fstream>

#include "suci/errors.hpp"
#include "suci/rng.hpp"

namespace suci::scm {

UnreachableEvidence::UnreachableEvidence(std::size_t x)
    : std::domain_error("unreachable evidence: P(X=" + std::to_string(x) + ") = 0") {}

namespace {

void check_card(std::size_t card, const char* name) {
  if (card < 1 || card > DiscreteScm::kMaxCardinality) {
    throw ValidationError(name, "cardinality must be in [1, " +
                                    std::to_string(DiscreteScm::kMaxCardinality) + "], got " +
                                    std::to_string(card));
  }
}

void check_simplex(double sum, bool any_negative, const std::string& field) {
  if (any_negative) throw ValidationError(field, "negative probability");
  if (std::abs(sum - 1.0) > DiscreteScm::kSimplexTolerance) {
    throw ValidationError(field, "probabilities sum to " + std::to_string(sum) + ", expected 1");
  }
}

void check_index(std::size_t x, std::size_t card) {
  if (x >= card) {
    throw ValidationError("x", "index " + std::to_string(x) + " out of range [0, " +
                                   std::to_string(card) + ")");
  }
}

}  // namespace

DiscreteScm::DiscreteScm(Distribution prior_z, std::vector<std::vector<double>> x_given_z,
                         std::vector<std::vector<std::vector<double>>> y_given_xz)
    : z_card_(prior_z.size()), x_card_(x_given_z.size()), y_card_(y_given_xz.size()) {
  check_card(z_card_, "prior_z");
  check_card(x_card_, "x_given_z");
  check_card(y_card_, "y_given_xz");

  prior_z_ = std::move(prior_z);
  {
    double sum = 0.0;
    bool neg = false;
    for (double p : prior_z_) {
      sum += p;
      neg |= !(p >= 0.0);
    }
    check_simplex(sum, neg, "prior_z");
  }

  x_given_z_.resize(x_card_ * z_card_);
  for (std::size_t x = 0; x < x_card_; ++x) {
    if (x_given_z[x].size() != z_card_) {
      throw ValidationError("x_given_z", "row " + std::to_string(x) + " has " +
                                             std::to_string(x_given_z[x].size()) +
                                             " entries, expected z_card=" + std::to_string(z_card_));
    }
    for (std::size_t z = 0; z < z_card_; ++z) x_given_z_[x * z_card_ + z] = x_given_z[x][z];
  }
  for (std::size_t z = 0; z < z_card_; ++z) {
    double sum = 0.0;
    bool neg = false;
    for (std::size_t x = 0; x < x_card_; ++x) {
      sum += p_x_given_z(x, z);
      neg |= !(p_x_given_z(x, z) >= 0.0);
    }
    check_simplex(sum, neg, "x_given_z[:][" + std::to_string(z) + "]");
  }

  y_given_xz_.resize(y_card_ * x_card_ * z_card_);
  for (std::size_t y = 0; y < y_card_; ++y) {
    if (y_given_xz[y].size() != x_card_) {
      throw ValidationError("y_given_xz", "slice " + std::to_string(y) + " has " +
                                              std::to_string(y_given_xz[y].size()) +
                                              " rows, expected x_card=" + std::to_string(x_card_));
    }
    for (std::size_t x = 0; x < x_card_; ++x) {
      if (y_given_xz[y][x].size() != z_card_) {
        throw ValidationError("y_given_xz", "row [" + std::to_string(y) + "][" +
                                                std::to_string(x) + "] has wrong length");
      }
      for (std::size_t z = 0; z < z_card_; ++z) {
        y_given_xz_[(y * x_card_ + x) * z_card_ + z] = y_given_xz[y][x][z];
      }
    }
  }
  for (std::size_t x = 0; x < x_card_; ++x) {
    for (std::size_t z = 0; z < z_card_; ++z) {
      double sum = 0.0;
      bool neg = false;
      for (std::size_t y = 0; y < y_card_; ++y) {
        sum += p_y_given_xz(y, x, z);
        neg |= !(p_y_given_xz(y, x, z) >= 0.0);
      }
      check_simplex(sum, neg,
                    "y_given_xz[:][" + std::to_string(x) + "][" + std::to_string(z) + "]");
    }
  }
}

DiscreteScm DiscreteScm::from_json(const nlohmann::json& doc) {
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    if (it.key() != "prior_z" && it.key() != "x_given_z" && it.key() != "y_given_xz") {
      throw ValidationError(it.key(), "unknown key in SCM document");
    }
  }
  for (const char* key : {"prior_z", "x_given_z", "y_given_xz"}) {
    if (!doc.contains(key)) throw ValidationError(key, "missing from SCM document");
  }
  try {
    return DiscreteScm(doc.at("prior_z").get<Distribution>(),
                       doc.at("x_given_z").get<std::vector<std::vector<double>>>(),
                       doc.at("y_given_xz").get<std::vector<std::vector<std::vector<double>>>>());
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("scm", std::string("malformed SCM document: ") + e.what());
  }
}

DiscreteScm DiscreteScm::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError(path.string(), "cannot open SCM file");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path.string(), std::string("invalid JSON: ") + e.what());
  }
  return from_json(doc);
}

nlohmann::json DiscreteScm::to_json() const {
  std::vector<std::vector<double>> xz(x_card_, std::vector<double>(z_card_));
  for (std::size_t x = 0; x < x_card_; ++x)
    for (std::size_t z = 0; z < z_card_; ++z) xz[x][z] = p_x_given_z(x, z);
  std::vector<std::vector<std::vector<double>>> yxz(
      y_card_, std::vector<std::vector<double>>(x_card_, std::vector<double>(z_card_)));
  for (std::size_t y = 0; y < y_card_; ++y)
    for (std::size_t x = 0; x < x_card_; ++x)
      for (std::size_t z = 0; z < z_card_; ++z) yxz[y][x][z] = p_y_given_xz(y, x, z);
  return {{"prior_z", prior_z_}, {"x_given_z", xz}, {"y_given_xz", yxz}};
}

double DiscreteScm::marginal_x(std::size_t x) const {
  double total = 0.0;
  for (std::size_t z = 0; z < z_card_; ++z) total += p_x_given_z(x, z) * prior(z);
  return total;
}

Distribution observational(const DiscreteScm& scm, std::size_t x) {
  check_index(x, scm.x_card());
  const double evidence = scm.marginal_x(x);
  if (!(evidence > 0.0)) throw UnreachableEvidence(x);

  Distribution out(scm.y_card(), 0.0);
  for (std::size_t z = 0; z < scm.z_card(); ++z) {
    const double posterior = scm.p_x_given_z(x, z) * scm.prior(z) / evidence;
    for (std::size_t y = 0; y < scm.y_card(); ++y) out[y] += scm.p_y_given_xz(y, x, z) * posterior;
  }
  return out;
}

Distribution interventional_backdoor(const DiscreteScm& scm, std::size_t x) {
  check_index(x, scm.x_card());
  Distribution out(scm.y_card(), 0.0);
  // Zero-prior strata stay in the sum; they contribute nothing.
  for (std::size_t z = 0; z < scm.z_card(); ++z) {
    for (std::size_t y = 0; y < scm.y_card(); ++y) {
      out[y] += scm.p_y_given_xz(y, x, z) * scm.prior(z);
    }
  }
  return out;
}

Distribution interventional_bruteforce(const DiscreteScm& scm, std::size_t x) {
  check_index(x, scm.x_card());
  const std::size_t nz = scm.z_card(), nx = scm.x_card(), ny = scm.y_card();

  // Mutilated joint P_do(z, x', y) = P(z) * [x' == x] * P(y | x', z).
  std::vector<double> joint(nz * nx * ny, 0.0);
  for (std::size_t z = 0; z < nz; ++z) {
    for (std::size_t xp = 0; xp < nx; ++xp) {
      const double clamp = xp == x ? 1.0 : 0.0;
      for (std::size_t y = 0; y < ny; ++y) {
        joint[(z * nx + xp) * ny + y] = scm.prior(z) * clamp * scm.p_y_given_xz(y, xp, z);
      }
    }
  }

  Distribution out(ny, 0.0);
  for (std::size_t cell = 0; cell < joint.size(); ++cell) out[cell % ny] += joint[cell];
  return out;
}

std::vector<Triple> sample_observational(const DiscreteScm& scm, std::size_t n,
                                         std::uint64_t seed) {
  if (n < 1) throw ValidationError("n", "sample count must be >= 1");
  Rng rng(seed);
  std::vector<double> weights;
  std::vector<Triple> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    weights.assign(scm.z_card(), 0.0);
    for (std::size_t z = 0; z < scm.z_card(); ++z) weights[z] = scm.prior(z);
    const std::size_t z = rng.categorical(weights);

    weights.assign(scm.x_card(), 0.0);
    for (std::size_t x = 0; x < scm.x_card(); ++x) weights[x] = scm.p_x_given_z(x, z);
    const std::size_t x = rng.categorical(weights);

    weights.assign(scm.y_card(), 0.0);
    for (std::size_t y = 0; y < scm.y_card(); ++y) weights[y] = scm.p_y_given_xz(y, x, z);
    const std::size_t y = rng.categorical(weights);

    out.push_back({z, x, y});
  }
  return out;
}

double total_variation(const Distribution& a, const Distribution& b) {
  if (a.size() != b.size()) throw ValidationError("distribution", "length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += std::abs(a[i] - b[i]);
  return 0.5 * acc;
}

}  // namespace suci::scm
