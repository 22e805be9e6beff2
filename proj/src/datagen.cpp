#include "suci/datagen.hpp"

#include <cmath>

#include "suci/errors.hpp"
#include "suci/rng.hpp"

namespace suci {

namespace {

constexpr std::uint64_t kClassDirectionStream = 0;
constexpr std::uint64_t kGroupDirectionStream = 1;
constexpr std::uint64_t kSubjectStreamBase = 1000;

// Modified Gram-Schmidt over Gaussian draws. Rows of `basis` that are
// already orthonormal are kept; `extra` new rows are appended.
Eigen::MatrixXd extend_orthonormal(const Eigen::MatrixXd& basis, std::size_t extra,
                                   std::size_t dim, Rng& rng) {
  Eigen::MatrixXd out(basis.rows() + static_cast<Eigen::Index>(extra), dim);
  out.topRows(basis.rows()) = basis;
  for (Eigen::Index r = basis.rows(); r < out.rows(); ++r) {
    Eigen::VectorXd v;
    double norm = 0.0;
    do {
      v.resize(static_cast<Eigen::Index>(dim));
      for (Eigen::Index k = 0; k < v.size(); ++k) v[k] = rng.normal();
      for (Eigen::Index prev = 0; prev < r; ++prev) v -= out.row(prev).dot(v) * out.row(prev).transpose();
      norm = v.norm();
    } while (norm < 1e-6);
    out.row(r) = v / norm;
  }
  return out;
}

Eigen::VectorXd random_unit(std::size_t dim, Rng& rng) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(dim));
  double norm = 0.0;
  do {
    for (Eigen::Index k = 0; k < v.size(); ++k) v[k] = rng.normal();
    norm = v.norm();
  } while (norm < 1e-9);
  return v / norm;
}

}  // namespace

const char* to_string(Split split) {
  switch (split) {
    case Split::Train:
      return "train";
    case Split::IidTest:
      return "iid_test";
    case Split::OodTest:
      return "ood_test";
  }
  return "?";
}

Split split_from_string(const std::string& name) {
  if (name == "train") return Split::Train;
  if (name == "iid_test") return Split::IidTest;
  if (name == "ood_test") return Split::OodTest;
  throw ValidationError("split", "unknown split '" + name + "' (train | iid_test | ood_test)");
}

void GenConfig::validate() const {
  auto require = [](bool ok, const char* field, const std::string& msg) {
    if (!ok) throw ValidationError(field, msg);
  };
  require(n_train_subjects >= 1, "n_train_subjects", "must be >= 1");
  require(n_ood_subjects >= 1, "n_ood_subjects", "must be >= 1");
  require(samples_per_subject >= 1, "samples_per_subject", "must be >= 1");
  require(n_classes >= 2, "n_classes", "must be >= 2");
  require(n_train_subjects >= n_classes, "n_train_subjects",
          "must be >= n_classes so every class has a preferred subject");
  for (std::size_t m = 0; m < kModalities; ++m) {
    require(seq_lens[m] >= 1, "seq_lens", "every frame count must be >= 1");
    require(dims[m] >= 1, "dims", "every feature width must be >= 1");
    require(dims[m] >= n_classes, "dims", "feature width must be >= n_classes for orthonormal class directions");
    if (style_group_coupling > 0.0) {
      require(dims[m] >= 2 * n_classes, "dims",
              "feature width must be >= 2*n_classes when style_group_coupling > 0");
    }
    require(std::isfinite(beta_for(m)) && beta_for(m) >= 0.0, "beta_style_per_modality",
            "must be finite and >= 0");
  }
  require(std::isfinite(rho) && rho >= 1.0 / static_cast<double>(n_classes) - 1e-12 && rho <= 1.0,
          "rho", "must lie in [1/n_classes, 1]");
  require(std::isfinite(alpha_signal) && alpha_signal >= 0.0, "alpha_signal", "must be >= 0");
  require(std::isfinite(beta_style) && beta_style >= 0.0, "beta_style", "must be >= 0");
  require(std::isfinite(sigma_noise) && sigma_noise >= 0.0, "sigma_noise", "must be >= 0");
  require(style_group_coupling >= 0.0 && style_group_coupling <= 1.0, "style_group_coupling",
          "must lie in [0, 1]");
  require(iid_holdout_frac > 0.0 && iid_holdout_frac < 1.0, "iid_holdout_frac",
          "must lie in (0, 1)");
}

std::size_t GenConfig::train_samples_per_subject() const {
  // The 1e-9 slack keeps e.g. (1 - 0.2) * 200 from rounding up to 161.
  const double raw = (1.0 - iid_holdout_frac) * static_cast<double>(samples_per_subject);
  return static_cast<std::size_t>(std::ceil(raw - 1e-9));
}

void to_json(nlohmann::json& j, const GenConfig& c) {
  j = nlohmann::json{{"n_train_subjects", c.n_train_subjects},
                     {"n_ood_subjects", c.n_ood_subjects},
                     {"samples_per_subject", c.samples_per_subject},
                     {"seq_lens", c.seq_lens},
                     {"dims", c.dims},
                     {"n_classes", c.n_classes},
                     {"rho", c.rho},
                     {"alpha_signal", c.alpha_signal},
                     {"beta_style", c.beta_style},
                     {"style_group_coupling", c.style_group_coupling},
                     {"sigma_noise", c.sigma_noise},
                     {"iid_holdout_frac", c.iid_holdout_frac},
                     {"seed", c.seed}};
  j["beta_style_per_modality"] =
      c.beta_style_per_modality ? nlohmann::json(*c.beta_style_per_modality) : nlohmann::json(nullptr);
}

void from_json(const nlohmann::json& j, GenConfig& c) {
  if (!j.is_object()) throw ValidationError("gen", "expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const auto& key = it.key();
    const auto& v = it.value();
    try {
      if (key == "n_train_subjects") c.n_train_subjects = v.get<std::size_t>();
      else if (key == "n_ood_subjects") c.n_ood_subjects = v.get<std::size_t>();
      else if (key == "samples_per_subject") c.samples_per_subject = v.get<std::size_t>();
      else if (key == "seq_lens") c.seq_lens = v.get<std::array<std::size_t, kModalities>>();
      else if (key == "dims") c.dims = v.get<std::array<std::size_t, kModalities>>();
      else if (key == "n_classes") c.n_classes = v.get<std::size_t>();
      else if (key == "rho") c.rho = v.get<double>();
      else if (key == "alpha_signal") c.alpha_signal = v.get<double>();
      else if (key == "beta_style") c.beta_style = v.get<double>();
      else if (key == "beta_style_per_modality") {
        if (v.is_null()) c.beta_style_per_modality.reset();
        else c.beta_style_per_modality = v.get<std::array<double, kModalities>>();
      } else if (key == "style_group_coupling") c.style_group_coupling = v.get<double>();
      else if (key == "sigma_noise") c.sigma_noise = v.get<double>();
      else if (key == "iid_holdout_frac") c.iid_holdout_frac = v.get<double>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else throw ValidationError("gen." + key, "unknown key");
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("gen." + key, std::string("wrong type: ") + e.what());
    }
  }
}

const std::vector<MultimodalSample>& DatasetBundle::split(Split s) const {
  switch (s) {
    case Split::Train:
      return train;
    case Split::IidTest:
      return iid_test;
    case Split::OodTest:
      return ood_test;
  }
  return train;
}

std::vector<MultimodalSample>& DatasetBundle::split(Split s) {
  return const_cast<std::vector<MultimodalSample>&>(std::as_const(*this).split(s));
}

std::array<Eigen::MatrixXd, kModalities> class_directions(const GenConfig& config) {
  Rng rng(config.seed, kClassDirectionStream);
  std::array<Eigen::MatrixXd, kModalities> out;
  for (std::size_t m = 0; m < kModalities; ++m) {
    out[m] = extend_orthonormal(Eigen::MatrixXd(0, config.dims[m]), config.n_classes,
                                config.dims[m], rng);
  }
  return out;
}

DatasetBundle generate(const GenConfig& config) {
  config.validate();
  const auto directions = class_directions(config);
  const std::size_t n_classes = config.n_classes;

  // Group directions are orthogonal to the class directions so that the
  // shared style component carries no class signal by itself.
  std::array<Eigen::MatrixXd, kModalities> group_dirs;
  if (config.style_group_coupling > 0.0) {
    Rng grng(config.seed, kGroupDirectionStream);
    for (std::size_t m = 0; m < kModalities; ++m) {
      group_dirs[m] = extend_orthonormal(directions[m], n_classes, config.dims[m], grng)
                          .bottomRows(static_cast<Eigen::Index>(n_classes));
    }
  }

  DatasetBundle bundle;
  bundle.config = config;
  const std::size_t n_subjects = config.n_train_subjects + config.n_ood_subjects;
  const std::size_t n_train_each = config.train_samples_per_subject();

  for (std::size_t sid = 0; sid < n_subjects; ++sid) {
    Rng rng(config.seed, kSubjectStreamBase + sid);
    SubjectProfile profile;
    profile.subject_id = sid;
    profile.group = sid < config.n_train_subjects ? SubjectGroup::Train : SubjectGroup::Ood;
    profile.preferred_class = sid % n_classes;
    const double coupling = config.style_group_coupling;
    for (std::size_t m = 0; m < kModalities; ++m) {
      Eigen::VectorXd style = random_unit(config.dims[m], rng);
      if (coupling > 0.0) {
        style = coupling * group_dirs[m].row(static_cast<Eigen::Index>(profile.preferred_class)).transpose() +
                std::sqrt(1.0 - coupling * coupling) * style;
        style.normalize();
      }
      profile.style_vectors[m] = std::move(style);
    }

    for (std::size_t k = 0; k < config.samples_per_subject; ++k) {
      MultimodalSample sample;
      sample.y_s = sid;
      if (profile.group == SubjectGroup::Train) {
        if (rng.uniform() < config.rho) {
          sample.y_t = profile.preferred_class;
        } else {
          const std::size_t other = rng.below(n_classes - 1);
          sample.y_t = other < profile.preferred_class ? other : other + 1;
        }
        sample.split = k < n_train_each ? Split::Train : Split::IidTest;
      } else {
        sample.y_t = rng.below(n_classes);
        sample.split = Split::OodTest;
      }

      for (std::size_t m = 0; m < kModalities; ++m) {
        const Eigen::VectorXd base =
            config.alpha_signal * directions[m].row(static_cast<Eigen::Index>(sample.y_t)).transpose() +
            config.beta_for(m) * profile.style_vectors[m];
        Eigen::MatrixXf frames(config.seq_lens[m], config.dims[m]);
        for (Eigen::Index t = 0; t < frames.rows(); ++t) {
          for (Eigen::Index c = 0; c < frames.cols(); ++c) {
            frames(t, c) = static_cast<float>(base[c] + config.sigma_noise * rng.normal());
          }
        }
        sample.x[m] = std::move(frames);
      }
      bundle.split(sample.split).push_back(std::move(sample));
    }
    bundle.subjects.push_back(std::move(profile));
  }
  return bundle;
}

}  // namespace suci
