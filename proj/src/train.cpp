#include "suci/train.hpp"

#include <cmath>
#include <functional>
#include <numeric>

#include "suci/errors.hpp"
#include "suci/rng.hpp"

namespace suci::train {

namespace {

constexpr std::uint64_t kStreamBackbone = 1;
constexpr std::uint64_t kStreamHead = 2;
constexpr std::uint64_t kStreamSuci = 3;
constexpr std::uint64_t kStreamDictionary = 4;
constexpr std::uint64_t kStreamShuffle = 100;
constexpr std::uint64_t kStreamCluster = 10000;

constexpr std::size_t kEvalBatch = 256;

model::BackboneShape backbone_shape(const DataShape& shape, const TrainConfig& config) {
  return {shape.dims, config.d_enc, config.d};
}

causal::SuciShape suci_shape(const DataShape& shape, const TrainConfig& config, const VariantFlags& flags) {
  causal::SuciShape s;
  s.dims = shape.dims;
  s.seq_lens = shape.seq_lens;
  s.modalities = flags.modalities;
  s.n_classes = shape.n_classes;
  s.n_subjects = shape.n_subjects;
  s.d = config.d;
  s.d_g = config.d_g;
  s.d_h = config.d_h;
  s.d_n = config.d_n;
  return s;
}

void zero(const std::vector<nn::TensorView>& views) {
  for (const auto& v : views) v.map().setZero();
}

// Stored checkpoints hold float32; rounding once here makes save/load exact.
void quantize(Checkpoint& ck) {
  for (const auto& v : ck.views()) {
    auto m = v.map();
    m = m.cast<float>().cast<double>();
  }
  if (ck.dictionary) {
    nn::MatrixXd z = ck.dictionary->prototypes().cast<float>().cast<double>();
    const auto updates = ck.dictionary->updates();
    ck.dictionary->assign(std::move(z), ck.dictionary->priors(), ck.dictionary->counts());
    ck.dictionary->set_updates(updates);
  }
}

std::vector<std::size_t> permutation(std::size_t n, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  return order;
}

std::vector<std::size_t> training_counts(const DatasetBundle& bundle, std::size_t n_subjects) {
  std::vector<std::size_t> counts(n_subjects, 0);
  for (const auto& s : bundle.train) {
    if (s.y_s >= n_subjects) throw ValidationError("bundle.train", "subject id outside the training subject range");
    ++counts[s.y_s];
  }
  return counts;
}

void check_bundle(const DatasetBundle& bundle, const TrainConfig& config) {
  config.validate();
  if (bundle.train.empty()) throw ValidationError("bundle.train", "training split is empty");
}

void check_finite(double loss, std::size_t epoch) {
  if (!std::isfinite(loss)) throw RuntimeFailure("non-finite loss at epoch " + std::to_string(epoch));
}

struct EpochAccumulator {
  EpochStats sum;
  double n = 0.0;

  void add(const EpochStats& batch, double weight) {
    sum.task_loss += weight * batch.task_loss;
    sum.sub_loss += weight * batch.sub_loss;
    sum.all_loss += weight * batch.all_loss;
    sum.subject_ce += weight * batch.subject_ce;
    sum.task_mse += weight * batch.task_mse;
    sum.task_disc_ce += weight * batch.task_disc_ce;
    sum.psi_uniform_deviation = std::max(sum.psi_uniform_deviation, batch.psi_uniform_deviation);
    n += weight;
  }

  EpochStats mean() const {
    EpochStats out = sum;
    out.task_loss /= n;
    out.sub_loss /= n;
    out.all_loss /= n;
    out.subject_ce /= n;
    out.task_mse /= n;
    out.task_disc_ce /= n;
    return out;
  }
};

template <typename Step>
void run_epochs(const DatasetBundle& bundle, Checkpoint& ck, TrainLog* log, Step&& step,
                const std::function<void(std::size_t)>& end_of_epoch) {
  const auto& config = ck.config;
  const std::size_t n = bundle.train.size();
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    Rng rng(config.seed, kStreamShuffle + epoch);
    const auto order = permutation(n, rng);
    EpochAccumulator acc;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < n; start += config.batch_size, ++batch_index) {
      model::SampleBatch batch;
      for (std::size_t i = start; i < std::min(n, start + config.batch_size); ++i) {
        batch.push_back(&bundle.train[order[i]]);
      }
      const EpochStats stats = step(batch, epoch);
      check_finite(stats.all_loss, epoch);
      acc.add(stats, static_cast<double>(batch.size()));
      if (log) log->batches.push_back({epoch, batch_index, stats.task_loss, stats.sub_loss, stats.all_loss});
    }
    end_of_epoch(epoch);
    ck.history.push_back(acc.mean());
    ck.epoch = epoch + 1;
  }
}

std::vector<std::size_t> labels_of(const model::SampleBatch& batch, bool subject) {
  std::vector<std::size_t> out;
  out.reserve(batch.size());
  for (const auto* s : batch) out.push_back(subject ? s->y_s : s->y_t);
  return out;
}

}  // namespace

// ---- config ---------------------------------------------------------------

void TrainConfig::validate() const {
  if (batch_size < 1) throw ValidationError("train.batch_size", "must be >= 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ValidationError("train.learning_rate", "must be a finite value > 0");
  }
  if (!std::isfinite(loss_weights.sub) || !std::isfinite(loss_weights.task) || loss_weights.sub < 0.0 ||
      loss_weights.task < 0.0) {
    throw ValidationError("train.loss_weights", "weights must be finite and >= 0");
  }
  if (d_enc < 1 || d < 1 || d_g < 1 || d_h < 1 || d_n < 1) {
    throw ValidationError("train.widths", "d_enc, d, d_g, d_h, d_n must be >= 1");
  }
  try {
    causal::task_disc_mode_from_string(task_disc_mode);
  } catch (const ValidationError& e) {
    throw ValidationError("train.task_disc_mode", e.message());
  }
  variant_flags(variant);
  for (int v : binary_map) {
    if (v < -1 || v > 1) throw ValidationError("train.binary_map", "entries must be -1, 0 or 1");
  }
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"epochs", c.epochs},
                     {"batch_size", c.batch_size},
                     {"learning_rate", c.learning_rate},
                     {"seed", c.seed},
                     {"task_disc_mode", c.task_disc_mode},
                     {"variant", c.variant},
                     {"loss_weights", {{"sub", c.loss_weights.sub}, {"task", c.loss_weights.task}}},
                     {"backbone", c.backbone},
                     {"d_enc", c.d_enc},
                     {"d", c.d},
                     {"d_g", c.d_g},
                     {"d_h", c.d_h},
                     {"d_n", c.d_n},
                     {"binary_map", c.binary_map}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  if (!j.is_object()) throw ValidationError("train", "expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const auto& key = it.key();
    const auto& v = it.value();
    try {
      if (key == "epochs") c.epochs = v.get<std::size_t>();
      else if (key == "batch_size") c.batch_size = v.get<std::size_t>();
      else if (key == "learning_rate") c.learning_rate = v.get<double>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "task_disc_mode") c.task_disc_mode = v.get<std::string>();
      else if (key == "variant") c.variant = v.get<std::string>();
      else if (key == "loss_weights") {
        if (!v.is_object()) throw ValidationError("train.loss_weights", "expected an object");
        for (auto w = v.begin(); w != v.end(); ++w) {
          if (w.key() == "sub") c.loss_weights.sub = w.value().get<double>();
          else if (w.key() == "task") c.loss_weights.task = w.value().get<double>();
          else throw ValidationError("train.loss_weights." + w.key(), "unknown key");
        }
      } else if (key == "backbone") c.backbone = v.get<std::string>();
      else if (key == "d_enc") c.d_enc = v.get<std::size_t>();
      else if (key == "d") c.d = v.get<std::size_t>();
      else if (key == "d_g") c.d_g = v.get<std::size_t>();
      else if (key == "d_h") c.d_h = v.get<std::size_t>();
      else if (key == "d_n") c.d_n = v.get<std::size_t>();
      else if (key == "binary_map") c.binary_map = v.get<std::vector<int>>();
      else throw ValidationError("train." + key, "unknown key");
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("train." + key, std::string("wrong type: ") + e.what());
    }
  }
}

const std::vector<std::string>& variant_names() {
  static const std::vector<std::string> names = {"vanilla",  "suci",      "avg_pool",    "no_subject_disc",
                                                 "no_task_disc", "no_text", "no_visual", "no_audio",
                                                 "random_Z", "clustered_Z", "no_psi",   "no_prior"};
  return names;
}

VariantFlags variant_flags(const std::string& name) {
  VariantFlags f;
  if (name == "vanilla") f.suci = false;
  else if (name == "suci") {
  } else if (name == "avg_pool") f.avg_pool = true;
  else if (name == "no_subject_disc") f.subject_disc = false;
  else if (name == "no_task_disc") f.task_disc = false;
  else if (name == "no_text") f.modalities[0] = false;
  else if (name == "no_visual") f.modalities[1] = false;
  else if (name == "no_audio") f.modalities[2] = false;
  else if (name == "random_Z") f.dictionary = DictionaryKind::Random;
  else if (name == "clustered_Z") f.dictionary = DictionaryKind::Clustered;
  else if (name == "no_psi") f.intervention.uniform_psi = true;
  else if (name == "no_prior") f.intervention.uniform_prior = true;
  else throw ValidationError("train.variant", "unknown variant '" + name + "'");
  return f;
}

DataShape DataShape::of(const GenConfig& config) {
  return {config.dims, config.seq_lens, config.n_classes, config.n_train_subjects};
}

// ---- checkpoint -----------------------------------------------------------

Checkpoint::Checkpoint(const Checkpoint& o)
    : config(o.config),
      shape(o.shape),
      epoch(o.epoch),
      backbone(o.backbone ? o.backbone->clone() : nullptr),
      vanilla_head(o.vanilla_head),
      suci(o.suci),
      dictionary(o.dictionary),
      history(o.history) {}

Checkpoint& Checkpoint::operator=(const Checkpoint& o) {
  if (this != &o) *this = Checkpoint(o);
  return *this;
}

std::vector<nn::TensorView> Checkpoint::views() {
  std::vector<nn::TensorView> out;
  if (backbone) backbone->append_views("backbone", out);
  if (vanilla_head) vanilla_head->append_views("head", out);
  if (suci) suci->append_views("suci", out);
  return out;
}

Checkpoint empty_checkpoint(const DataShape& shape, const TrainConfig& config) {
  config.validate();
  const auto flags = variant_flags(config.variant);
  Checkpoint ck;
  ck.config = config;
  ck.shape = shape;
  ck.backbone = model::make_backbone(config.backbone, backbone_shape(shape, config), 0)->zeros_like();
  if (flags.suci) {
    ck.suci.emplace(suci_shape(shape, config, flags));
  } else {
    ck.vanilla_head.emplace(static_cast<Eigen::Index>(config.d), static_cast<Eigen::Index>(shape.n_classes));
  }
  return ck;
}

Checkpoint initial_checkpoint(const DatasetBundle& bundle, const TrainConfig& config) {
  check_bundle(bundle, config);
  const auto shape = DataShape::of(bundle.config);
  const auto flags = variant_flags(config.variant);
  Checkpoint ck = empty_checkpoint(shape, config);
  ck.backbone = model::make_backbone(config.backbone, backbone_shape(shape, config),
                                     mix_seed(config.seed, kStreamBackbone));
  if (ck.vanilla_head) {
    Rng rng(config.seed, kStreamHead);
    nn::init_uniform(*ck.vanilla_head, rng);
  }
  if (ck.suci) {
    ck.suci = causal::init_suci_params(ck.suci->shape, mix_seed(config.seed, kStreamSuci));
    const auto d_s = ck.suci->shape.d_s();
    const auto seed = mix_seed(config.seed, kStreamDictionary);
    ck.dictionary = flags.dictionary == DictionaryKind::Random
                        ? causal::random_dictionary(shape.n_subjects, d_s, seed)
                        : causal::init_dictionary(shape.n_subjects, d_s, seed);
    ck.dictionary->set_counts(training_counts(bundle, shape.n_subjects));
  }
  quantize(ck);
  return ck;
}

// ---- training -------------------------------------------------------------

Checkpoint train_vanilla(const DatasetBundle& bundle, const TrainConfig& config, TrainLog* log) {
  if (variant_flags(config.variant).suci) {
    throw ValidationError("train.variant", "train_vanilla needs variant 'vanilla'");
  }
  Checkpoint ck = initial_checkpoint(bundle, config);
  Checkpoint grads = empty_checkpoint(ck.shape, config);
  const auto params = ck.views();
  const auto grad_views = grads.views();
  nn::Adam adam({.learning_rate = config.learning_rate});

  auto step = [&](const model::SampleBatch& batch, std::size_t) {
    zero(grad_views);
    std::unique_ptr<model::Tape> tape;
    const auto m = ck.backbone->encode(batch, &tape);
    const auto ce = nn::cross_entropy(model::vanilla_logits(m, *ck.vanilla_head), labels_of(batch, false));
    EpochStats stats;
    stats.task_loss = ce.loss;
    stats.all_loss = config.loss_weights.task * ce.loss;
    if (!std::isfinite(stats.all_loss)) return stats;
    const auto dm = ck.vanilla_head->backward(m, ce.grad * config.loss_weights.task, *grads.vanilla_head);
    ck.backbone->backward(*tape, dm, *grads.backbone);
    adam.step(params, grad_views);
    return stats;
  };
  run_epochs(bundle, ck, log, step, [](std::size_t) {});
  quantize(ck);
  return ck;
}

Checkpoint train_suci(const DatasetBundle& bundle, const TrainConfig& config, TrainLog* log) {
  const auto flags = variant_flags(config.variant);
  if (!flags.suci) throw ValidationError("train.variant", "train_suci needs a SuCI variant");
  const auto mode = causal::task_disc_mode_from_string(config.task_disc_mode);
  Checkpoint ck = initial_checkpoint(bundle, config);
  Checkpoint grads = empty_checkpoint(ck.shape, config);
  const auto params = ck.views();
  const auto grad_views = grads.views();
  nn::Adam adam({.learning_rate = config.learning_rate});
  auto& sp = *ck.suci;
  auto& gp = *grads.suci;
  auto& dict = *ck.dictionary;
  const double n_c = static_cast<double>(dict.size());
  const auto& w = config.loss_weights;

  // clustered_Z re-clusters all of an epoch's subject features.
  nn::MatrixXd epoch_features;
  Eigen::Index epoch_rows = 0;
  if (flags.dictionary == DictionaryKind::Clustered) {
    epoch_features.resize(static_cast<Eigen::Index>(bundle.train.size()), dict.width());
  }

  auto step = [&](const model::SampleBatch& batch, std::size_t epoch) {
    zero(grad_views);
    const auto y_t = labels_of(batch, false);
    const auto y_s = labels_of(batch, true);

    std::unique_ptr<model::Tape> btape;
    const auto m = ck.backbone->encode(batch, &btape);
    causal::SubjectPathTape stape;
    const auto s = causal::subject_features(batch, sp, flags.avg_pool, &stape);
    const auto iv = causal::intervene(m, dict, sp.intervention, flags.intervention);
    const auto ce = nn::cross_entropy(iv.logits, y_t);
    const auto sl = causal::subject_loss(s, y_s, sp.subject_disc, sp.task_disc, mode,
                                         {.subject_ce = flags.subject_disc, .task_mse = flags.task_disc});

    EpochStats stats;
    stats.task_loss = ce.loss;
    stats.sub_loss = sl.total;
    stats.subject_ce = sl.subject_ce;
    stats.task_mse = sl.task_mse;
    stats.all_loss = w.sub * sl.total + w.task * ce.loss;
    stats.psi_uniform_deviation = (iv.psi.array() - 1.0 / n_c).abs().maxCoeff();
    if (!std::isfinite(stats.all_loss)) return stats;

    const auto dm = causal::intervene_backward(m, dict, sp.intervention, flags.intervention, iv, ce.grad * w.task,
                                               gp.intervention);
    ck.backbone->backward(*btape, dm, *grads.backbone);
    gp.subject_disc.weight += w.sub * sl.grad_subject_disc.weight;
    gp.subject_disc.bias += w.sub * sl.grad_subject_disc.bias;
    if (mode == causal::TaskDiscMode::Literal) {
      gp.task_disc.weight += w.sub * sl.grad_task_disc.weight;
      gp.task_disc.bias += w.sub * sl.grad_task_disc.bias;
    } else if (flags.task_disc) {
      const auto td = causal::task_discriminator_step(s, y_t, sp.task_disc);
      stats.task_disc_ce = td.loss;
      gp.task_disc.weight += td.grad.weight;
      gp.task_disc.bias += td.grad.bias;
    }
    causal::subject_features_backward(batch, sp, flags.avg_pool, stape, sl.ds * w.sub, gp);
    adam.step(params, grad_views);

    if (log && log->record_features) {
      for (std::size_t i = 0; i < y_s.size(); ++i) {
        log->features.push_back({epoch, y_s[i], s.row(static_cast<Eigen::Index>(i)).transpose()});
      }
    }
    if (flags.dictionary == DictionaryKind::Learned) {
      dict.accumulate(y_s, s);
    } else if (flags.dictionary == DictionaryKind::Clustered) {
      epoch_features.middleRows(epoch_rows, s.rows()) = s;
      epoch_rows += s.rows();
    }
    return stats;
  };

  auto end_of_epoch = [&](std::size_t epoch) {
    if (flags.dictionary == DictionaryKind::Learned) {
      dict.update();
    } else if (flags.dictionary == DictionaryKind::Clustered) {
      const auto updates = dict.updates();
      dict = causal::clustered_dictionary(epoch_features, dict.size(), mix_seed(config.seed, kStreamCluster + epoch));
      dict.set_updates(updates + 1);
      epoch_rows = 0;
    }
  };
  run_epochs(bundle, ck, log, step, end_of_epoch);
  quantize(ck);
  return ck;
}

Checkpoint train(const DatasetBundle& bundle, const TrainConfig& config, TrainLog* log) {
  return variant_flags(config.variant).suci ? train_suci(bundle, config, log) : train_vanilla(bundle, config, log);
}

// ---- inference ------------------------------------------------------------

namespace {

template <typename Fn>
nn::MatrixXd in_chunks(const model::SampleBatch& batch, Eigen::Index width, Fn&& fn) {
  nn::MatrixXd out(static_cast<Eigen::Index>(batch.size()), width);
  for (std::size_t start = 0; start < batch.size(); start += kEvalBatch) {
    const auto end = std::min(batch.size(), start + kEvalBatch);
    const model::SampleBatch chunk(batch.begin() + static_cast<std::ptrdiff_t>(start),
                                   batch.begin() + static_cast<std::ptrdiff_t>(end));
    out.middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(end - start)) = fn(chunk);
  }
  return out;
}

}  // namespace

nn::MatrixXd predict_logits(const Checkpoint& ck, const model::SampleBatch& batch) {
  const auto width = static_cast<Eigen::Index>(ck.shape.n_classes);
  if (!ck.is_suci()) {
    return in_chunks(batch, width, [&](const model::SampleBatch& b) {
      return model::vanilla_logits(ck.backbone->encode(b), *ck.vanilla_head);
    });
  }
  const auto flags = variant_flags(ck.config.variant);
  return in_chunks(batch, width, [&](const model::SampleBatch& b) {
    return causal::intervene(ck.backbone->encode(b), *ck.dictionary, ck.suci->intervention, flags.intervention)
        .logits;
  });
}

nn::MatrixXd representations(const Checkpoint& ck, const model::SampleBatch& batch) {
  if (!ck.is_suci()) {
    return in_chunks(batch, static_cast<Eigen::Index>(ck.config.d),
                     [&](const model::SampleBatch& b) { return ck.backbone->encode(b); });
  }
  const auto flags = variant_flags(ck.config.variant);
  return in_chunks(batch, static_cast<Eigen::Index>(ck.config.d_h), [&](const model::SampleBatch& b) {
    return causal::intervene(ck.backbone->encode(b), *ck.dictionary, ck.suci->intervention, flags.intervention)
        .hidden;
  });
}

}  // namespace suci::train
