#include "suci/suci.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "suci/errors.hpp"

namespace suci::causal {

namespace {

Eigen::Index idx(std::size_t v) { return static_cast<Eigen::Index>(v); }

void require_width(const char* field, Eigen::Index got, Eigen::Index want) {
  if (got != want) {
    throw ValidationError(field, "width " + std::to_string(got) + " does not match expected " + std::to_string(want));
  }
}

constexpr std::size_t kKMeansRestarts = 10;

MatrixXd kmeanspp_seed(const MatrixXd& features, std::size_t k, Rng& rng) {
  const auto n = static_cast<std::uint64_t>(features.rows());
  MatrixXd centroids(idx(k), features.cols());
  centroids.row(0) = features.row(static_cast<Eigen::Index>(rng.below(n)));
  VectorXd d2 = (features.rowwise() - centroids.row(0)).rowwise().squaredNorm();
  for (std::size_t c = 1; c < k; ++c) {
    const std::size_t pick = rng.categorical(std::vector<double>(d2.data(), d2.data() + d2.size()));
    centroids.row(idx(c)) = features.row(idx(pick));
    d2 = d2.cwiseMin((features.rowwise() - centroids.row(idx(c))).rowwise().squaredNorm());
  }
  return centroids;
}

// Until the largest centroid shift is below 1e-6 or 100 iterations.
KMeansResult lloyd(const MatrixXd& features, MatrixXd centroids) {
  const auto n = static_cast<std::size_t>(features.rows());
  const auto k = static_cast<std::size_t>(centroids.rows());
  KMeansResult out;
  out.centroids = std::move(centroids);
  out.assignment.assign(n, 0);
  for (out.iterations = 1;; ++out.iterations) {
    for (std::size_t i = 0; i < n; ++i) {
      Eigen::Index best;
      (out.centroids.rowwise() - features.row(idx(i))).rowwise().squaredNorm().minCoeff(&best);
      out.assignment[i] = static_cast<std::size_t>(best);
    }
    MatrixXd next = MatrixXd::Zero(out.centroids.rows(), out.centroids.cols());
    std::vector<std::size_t> sizes(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      next.row(idx(out.assignment[i])) += features.row(idx(i));
      ++sizes[out.assignment[i]];
    }
    for (std::size_t c = 0; c < k; ++c) {
      // An emptied cluster keeps its previous centroid.
      if (sizes[c] > 0) {
        next.row(idx(c)) /= static_cast<double>(sizes[c]);
      } else {
        next.row(idx(c)) = out.centroids.row(idx(c));
      }
    }
    const double shift = (next - out.centroids).rowwise().norm().maxCoeff();
    out.centroids = std::move(next);
    out.sizes = std::move(sizes);
    if (shift < 1e-6 || out.iterations == 100) break;
  }
  // Final assignment against the final centroids.
  for (std::size_t i = 0; i < n; ++i) {
    Eigen::Index best;
    (out.centroids.rowwise() - features.row(idx(i))).rowwise().squaredNorm().minCoeff(&best);
    out.assignment[i] = static_cast<std::size_t>(best);
  }
  out.sizes.assign(k, 0);
  for (auto a : out.assignment) ++out.sizes[a];
  return out;
}

}  // namespace

FusionResult dynamic_fusion(const MatrixXd& x, const FusionWeights& weights) {
  require_width("fusion.w", weights.w.size(), x.cols());
  require_width("fusion.b", weights.b.size(), x.rows());
  FusionResult out;
  out.xi = nn::softmax(x * weights.w + weights.b);
  out.p = x.transpose() * out.xi;
  return out;
}

void dynamic_fusion_backward(const MatrixXd& x, const FusionResult& fwd, const VectorXd& dp, FusionWeights& grad) {
  const VectorXd dxi = x * dp;
  const VectorXd dscores = fwd.xi.cwiseProduct((dxi.array() - fwd.xi.dot(dxi)).matrix());
  grad.w += x.transpose() * dscores;
  grad.b += dscores;
}

// ---- parameters -----------------------------------------------------------

std::size_t SuciShape::d_s() const {
  std::size_t total = 0;
  for (std::size_t m = 0; m < kModalities; ++m)
    if (modalities[m]) total += dims[m];
  return total;
}

void SuciShape::validate() const {
  if (d_s() == 0) throw ValidationError("modalities", "at least one modality must be enabled");
  if (n_classes < 2) throw ValidationError("n_classes", "must be >= 2");
  if (n_subjects < 1) throw ValidationError("n_subjects", "must be >= 1");
  if (d < 1 || d_g < 1 || d_h < 1 || d_n < 1) throw ValidationError("widths", "d, d_g, d_h, d_n must be >= 1");
  for (std::size_t m = 0; m < kModalities; ++m) {
    if (dims[m] < 1 || seq_lens[m] < 1) {
      throw ValidationError(std::string("x_") + kModalityNames[m], "dims and seq_lens must be >= 1");
    }
  }
}

void InterventionParams::append_views(const std::string& prefix, std::vector<nn::TensorView>& out) {
  out.push_back(nn::view(prefix + ".w_m", w_m));
  out.push_back(nn::view(prefix + ".w_h", w_h));
  out.push_back(nn::view(prefix + ".w_q", w_q));
  out.push_back(nn::view(prefix + ".w_k", w_k));
  head.append_views(prefix + ".head", out);
}

InterventionParams InterventionParams::zeros_like() const {
  return {MatrixXd::Zero(w_m.rows(), w_m.cols()), MatrixXd::Zero(w_h.rows(), w_h.cols()),
          MatrixXd::Zero(w_q.rows(), w_q.cols()), MatrixXd::Zero(w_k.rows(), w_k.cols()), head.zeros_like()};
}

SuciParams::SuciParams(const SuciShape& s) : shape(s) {
  shape.validate();
  const auto d_s = idx(shape.d_s());
  for (std::size_t m = 0; m < kModalities; ++m) {
    fusion[m].w = VectorXd::Zero(idx(shape.dims[m]));
    fusion[m].b = VectorXd::Zero(idx(shape.seq_lens[m]));
  }
  gen_first = nn::Affine(d_s, idx(shape.d_g));
  gen_second = nn::Affine(idx(shape.d_g), d_s);
  subject_disc = nn::Affine(d_s, idx(shape.n_subjects));
  task_disc = nn::Affine(d_s, idx(shape.n_classes));
  intervention.w_m = MatrixXd::Zero(idx(shape.d_h), idx(shape.d));
  intervention.w_h = MatrixXd::Zero(idx(shape.d_h), d_s);
  intervention.w_q = MatrixXd::Zero(idx(shape.d_n), idx(shape.d));
  intervention.w_k = MatrixXd::Zero(idx(shape.d_n), d_s);
  intervention.head = nn::Affine(idx(shape.d_h), idx(shape.n_classes));
}

void SuciParams::append_views(const std::string& prefix, std::vector<nn::TensorView>& out) {
  for (std::size_t m = 0; m < kModalities; ++m) {
    const std::string name = prefix + ".fusion_" + kModalityNames[m];
    out.push_back(nn::view(name + ".w", fusion[m].w));
    out.push_back(nn::view(name + ".b", fusion[m].b));
  }
  gen_first.append_views(prefix + ".generator.first", out);
  gen_second.append_views(prefix + ".generator.second", out);
  subject_disc.append_views(prefix + ".subject_disc", out);
  task_disc.append_views(prefix + ".task_disc", out);
  intervention.append_views(prefix + ".intervention", out);
}

SuciParams init_suci_params(const SuciShape& shape, std::uint64_t seed) {
  SuciParams p(shape);
  Rng rng(seed);
  for (auto& f : p.fusion) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(f.w.size()));
    for (Eigen::Index i = 0; i < f.w.size(); ++i) f.w[i] = rng.uniform(-bound, bound);
  }
  nn::init_uniform(p.gen_first, rng);
  nn::init_uniform(p.gen_second, rng);
  nn::init_uniform(p.subject_disc, rng);
  nn::init_uniform(p.task_disc, rng);
  nn::init_uniform(p.intervention.w_m, rng);
  nn::init_uniform(p.intervention.w_h, rng);
  nn::init_uniform(p.intervention.w_q, rng);
  nn::init_uniform(p.intervention.w_k, rng);
  nn::init_uniform(p.intervention.head, rng);
  return p;
}

// ---- subject feature path -------------------------------------------------

MatrixXd subject_generator(const MatrixXd& p, const nn::Affine& first, const nn::Affine& second,
                           MatrixXd* hidden_pre) {
  require_width("p", p.cols(), first.in());
  MatrixXd pre = first.forward(p);
  MatrixXd s = second.forward(nn::gelu(pre));
  if (hidden_pre) *hidden_pre = std::move(pre);
  return s;
}

MatrixXd subject_features(const model::SampleBatch& batch, const SuciParams& params, bool avg_pool,
                          SubjectPathTape* tape) {
  const auto& shape = params.shape;
  MatrixXd p(idx(batch.size()), idx(shape.d_s()));
  std::vector<std::array<FusionResult, kModalities>> fused(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    Eigen::Index off = 0;
    for (std::size_t m = 0; m < kModalities; ++m) {
      if (!shape.modalities[m]) continue;
      const auto& x = batch[i]->x[m];
      if (x.cols() != idx(shape.dims[m]) || x.rows() != idx(shape.seq_lens[m])) {
        throw ValidationError(std::string("x_") + kModalityNames[m],
                              "expected " + std::to_string(shape.seq_lens[m]) + " x " +
                                  std::to_string(shape.dims[m]) + " (frames x features)");
      }
      const MatrixXd xd = x.cast<double>();
      if (avg_pool) {
        fused[i][m].p = xd.colwise().mean().transpose();
      } else {
        fused[i][m] = dynamic_fusion(xd, params.fusion[m]);
      }
      p.row(idx(i)).segment(off, x.cols()) = fused[i][m].p.transpose();
      off += x.cols();
    }
  }
  MatrixXd hidden_pre;
  MatrixXd s = subject_generator(p, params.gen_first, params.gen_second, &hidden_pre);
  if (tape) {
    tape->fused = std::move(fused);
    tape->p = std::move(p);
    tape->hidden_pre = std::move(hidden_pre);
  }
  return s;
}

void subject_features_backward(const model::SampleBatch& batch, const SuciParams& params, bool avg_pool,
                               const SubjectPathTape& tape, const MatrixXd& ds, SuciParams& grad) {
  const MatrixXd hidden = nn::gelu(tape.hidden_pre);
  const MatrixXd dhidden = params.gen_second.backward(hidden, ds, grad.gen_second);
  const MatrixXd dp = params.gen_first.backward(tape.p, nn::gelu_backward(tape.hidden_pre, dhidden), grad.gen_first);
  if (avg_pool) return;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    Eigen::Index off = 0;
    for (std::size_t m = 0; m < kModalities; ++m) {
      if (!params.shape.modalities[m]) continue;
      const auto width = idx(params.shape.dims[m]);
      dynamic_fusion_backward(batch[i]->x[m].cast<double>(), tape.fused[i][m],
                              dp.row(idx(i)).segment(off, width).transpose(), grad.fusion[m]);
      off += width;
    }
  }
}

// ---- subject loss ---------------------------------------------------------

std::string to_string(TaskDiscMode mode) { return mode == TaskDiscMode::Literal ? "literal" : "adversarial"; }

TaskDiscMode task_disc_mode_from_string(const std::string& s) {
  if (s == "literal") return TaskDiscMode::Literal;
  if (s == "adversarial") return TaskDiscMode::Adversarial;
  throw ValidationError("task_disc_mode", "must be 'literal' or 'adversarial', got '" + s + "'");
}

SubjectLoss subject_loss(const MatrixXd& s, const std::vector<std::size_t>& y_s, const nn::Affine& subject_disc,
                         const nn::Affine& task_disc, TaskDiscMode mode, SubjectLossTerms terms) {
  if (mode != TaskDiscMode::Literal && mode != TaskDiscMode::Adversarial) {
    throw ValidationError("task_disc_mode", "invalid mode");
  }
  require_width("s", s.cols(), subject_disc.in());
  require_width("s", s.cols(), task_disc.in());
  if (task_disc.out() < 2) throw ValidationError("n_classes", "task discriminator needs at least 2 classes");
  if (static_cast<std::size_t>(s.rows()) != y_s.size() || y_s.empty()) {
    throw ValidationError("y_s", "need one subject label per row of s");
  }
  for (auto y : y_s) {
    if (idx(y) >= subject_disc.out()) {
      throw ValidationError("y_s", "subject index " + std::to_string(y) + " outside [0, " +
                                       std::to_string(subject_disc.out()) + ")");
    }
  }

  SubjectLoss out;
  out.ds = MatrixXd::Zero(s.rows(), s.cols());
  out.grad_subject_disc = subject_disc.zeros_like();
  out.grad_task_disc = task_disc.zeros_like();

  if (terms.subject_ce) {
    const auto ce = nn::cross_entropy(subject_disc.forward(s), y_s);
    out.subject_ce = ce.loss;
    out.ds += subject_disc.backward(s, ce.grad, out.grad_subject_disc);
  }
  if (terms.task_mse) {
    const double c = static_cast<double>(task_disc.out());
    const double n = static_cast<double>(s.rows());
    const MatrixXd probs = nn::softmax_rows(task_disc.forward(s));
    const MatrixXd diff = probs.array() - 1.0 / c;
    out.task_mse = diff.squaredNorm() / (c * n);
    const MatrixXd dlogits = nn::softmax_rows_backward(probs, diff * (2.0 / (c * n)));
    if (mode == TaskDiscMode::Literal) {
      out.ds += task_disc.backward(s, dlogits, out.grad_task_disc);
    } else {
      // D_t frozen: gradient reaches s only.
      out.ds += dlogits * task_disc.weight;
    }
  }
  out.total = out.subject_ce + out.task_mse;
  return out;
}

TaskDiscStep task_discriminator_step(const MatrixXd& s_detached, const std::vector<std::size_t>& y_t,
                                     const nn::Affine& task_disc) {
  require_width("s", s_detached.cols(), task_disc.in());
  const auto ce = nn::cross_entropy(task_disc.forward(s_detached), y_t);
  TaskDiscStep out{ce.loss, task_disc.zeros_like()};
  task_disc.backward(s_detached, ce.grad, out.grad);
  return out;
}

// ---- confounder dictionary ------------------------------------------------

ConfounderDictionary::ConfounderDictionary(MatrixXd prototypes) : z_(std::move(prototypes)) {
  if (z_.rows() < 1) throw ValidationError("dictionary", "needs at least one prototype");
  priors_ = VectorXd::Constant(z_.rows(), 1.0 / static_cast<double>(z_.rows()));
  reset_cache();
}

void ConfounderDictionary::reset_cache() {
  cache_sum_ = MatrixXd::Zero(z_.rows(), z_.cols());
  cache_count_.assign(size(), 0);
}

void ConfounderDictionary::set_counts(std::vector<std::size_t> counts) {
  if (counts.size() != size()) throw ValidationError("dictionary.counts", "one count per prototype required");
  std::size_t total = 0;
  for (auto c : counts) total += c;
  if (total == 0) throw ValidationError("dictionary.counts", "at least one subject needs training samples");
  counts_ = std::move(counts);
  total_ = total;
  for (std::size_t i = 0; i < size(); ++i) {
    priors_[idx(i)] = static_cast<double>(counts_[i]) / static_cast<double>(total_);
  }
}

void ConfounderDictionary::assign(MatrixXd prototypes, VectorXd priors, std::vector<std::size_t> counts) {
  if (prototypes.rows() < 1 || priors.size() != prototypes.rows() || counts.size() != static_cast<std::size_t>(prototypes.rows())) {
    throw ValidationError("dictionary", "prototype, prior and count sizes disagree");
  }
  z_ = std::move(prototypes);
  priors_ = std::move(priors);
  counts_ = std::move(counts);
  total_ = 0;
  for (auto c : counts_) total_ += c;
  reset_cache();
}

void ConfounderDictionary::accumulate(std::size_t subject, const Eigen::Ref<const VectorXd>& s) {
  if (subject >= size()) throw ValidationError("y_s", "unknown subject id " + std::to_string(subject));
  require_width("s", s.size(), z_.cols());
  if (!counts_.empty() && cache_count_[subject] >= counts_[subject]) {
    throw RuntimeFailure("subject " + std::to_string(subject) +
                         " accumulated more often than it has training samples this epoch");
  }
  cache_sum_.row(idx(subject)) += s.transpose();
  ++cache_count_[subject];
}

void ConfounderDictionary::accumulate(const std::vector<std::size_t>& subjects, const MatrixXd& s) {
  if (static_cast<std::size_t>(s.rows()) != subjects.size()) {
    throw ValidationError("y_s", "need one subject id per row");
  }
  for (std::size_t i = 0; i < subjects.size(); ++i) accumulate(subjects[i], s.row(idx(i)).transpose());
}

void ConfounderDictionary::update() {
  for (std::size_t i = 0; i < size(); ++i) {
    if (cache_count_[i] > 0) z_.row(idx(i)) = cache_sum_.row(idx(i)) / static_cast<double>(cache_count_[i]);
  }
  reset_cache();
  ++updates_;
}

ConfounderDictionary init_dictionary(std::size_t n_subjects, std::size_t d_s, std::uint64_t seed) {
  if (n_subjects < 1) throw ValidationError("n_subjects", "must be >= 1");
  Rng rng(seed);
  MatrixXd z(idx(n_subjects), idx(d_s));
  // Row-major draw order so a prefix of subjects is seed-stable.
  for (Eigen::Index r = 0; r < z.rows(); ++r)
    for (Eigen::Index c = 0; c < z.cols(); ++c) z(r, c) = rng.uniform();
  return ConfounderDictionary(std::move(z));
}

ConfounderDictionary random_dictionary(std::size_t n_subjects, std::size_t d_s, std::uint64_t seed) {
  return init_dictionary(n_subjects, d_s, seed);
}

KMeansResult kmeans(const MatrixXd& features, std::size_t k, std::uint64_t seed) {
  const auto n = static_cast<std::size_t>(features.rows());
  if (n == 0) throw ValidationError("features", "clustering needs at least one feature vector");
  if (k < 1) throw ValidationError("n_clusters", "must be >= 1");
  {
    std::set<std::vector<double>> distinct;
    for (std::size_t i = 0; i < n && distinct.size() < k; ++i) {
      const VectorXd row = features.row(idx(i)).transpose();
      distinct.emplace(row.data(), row.data() + row.size());
    }
    if (distinct.size() < k) {
      throw ValidationError("n_clusters", std::to_string(k) + " clusters requested but only " +
                                              std::to_string(distinct.size()) + " distinct points");
    }
  }

  Rng rng(seed);
  KMeansResult best;
  double best_inertia = std::numeric_limits<double>::infinity();
  for (std::size_t restart = 0; restart < kKMeansRestarts; ++restart) {
    auto run = lloyd(features, kmeanspp_seed(features, k, rng));
    double inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      inertia += (features.row(idx(i)) - run.centroids.row(idx(run.assignment[i]))).squaredNorm();
    }
    if (inertia < best_inertia) {
      best_inertia = inertia;
      best = std::move(run);
    }
  }
  return best;
}

ConfounderDictionary clustered_dictionary(const MatrixXd& features, std::size_t n_clusters, std::uint64_t seed) {
  auto km = kmeans(features, n_clusters, seed);
  VectorXd priors(idx(n_clusters));
  for (std::size_t c = 0; c < n_clusters; ++c) {
    priors[idx(c)] = static_cast<double>(km.sizes[c]) / static_cast<double>(features.rows());
  }
  ConfounderDictionary dict(km.centroids);
  dict.assign(std::move(km.centroids), std::move(priors), std::move(km.sizes));
  return dict;
}

// ---- intervention ---------------------------------------------------------

Intervention intervene(const MatrixXd& m, const ConfounderDictionary& dict, const InterventionParams& params,
                       InterventionOptions options) {
  if (dict.size() == 0) throw ValidationError("dictionary", "empty dictionary");
  require_width("m", m.cols(), params.w_m.cols());
  require_width("m", m.cols(), params.w_q.cols());
  require_width("dictionary", dict.width(), params.w_h.cols());
  require_width("dictionary", dict.width(), params.w_k.cols());
  const MatrixXd& z = dict.prototypes();
  const auto n_c = z.rows();

  Intervention out;
  out.query = m * params.w_q.transpose();
  out.keys = z * params.w_k.transpose();
  if (options.uniform_psi) {
    out.psi = MatrixXd::Constant(m.rows(), n_c, 1.0 / static_cast<double>(n_c));
  } else {
    out.psi = nn::softmax_rows(out.query * out.keys.transpose() / std::sqrt(static_cast<double>(z.cols())));
  }
  out.prior = options.uniform_prior ? VectorXd::Constant(n_c, 1.0 / static_cast<double>(n_c)) : dict.priors();
  out.expectation = out.psi * (out.prior.asDiagonal() * z);
  out.hidden = m * params.w_m.transpose() + out.expectation * params.w_h.transpose();
  out.logits = params.head.forward(out.hidden);
  return out;
}

MatrixXd intervene_backward(const MatrixXd& m, const ConfounderDictionary& dict, const InterventionParams& params,
                            InterventionOptions options, const Intervention& fwd, const MatrixXd& dlogits,
                            InterventionParams& grad) {
  const MatrixXd& z = dict.prototypes();
  const MatrixXd dh = params.head.backward(fwd.hidden, dlogits, grad.head);
  grad.w_m.noalias() += dh.transpose() * m;
  grad.w_h.noalias() += dh.transpose() * fwd.expectation;
  MatrixXd dm = dh * params.w_m;
  if (!options.uniform_psi) {
    const MatrixXd de = dh * params.w_h;
    const MatrixXd dpsi = (de * z.transpose()) * fwd.prior.asDiagonal();
    const double scale = 1.0 / std::sqrt(static_cast<double>(z.cols()));
    const MatrixXd dscores = nn::softmax_rows_backward(fwd.psi, dpsi) * scale;
    const MatrixXd dq = dscores * fwd.keys;
    const MatrixXd dk = dscores.transpose() * fwd.query;
    grad.w_q.noalias() += dq.transpose() * m;
    grad.w_k.noalias() += dk.transpose() * z;
    dm.noalias() += dq * params.w_q;
  }
  return dm;
}

}  // namespace suci::causal
