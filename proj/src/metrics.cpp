#include "suci/metrics.hpp"

#include <Eigen/Eigenvalues>

#include "suci/errors.hpp"

namespace suci::metrics {

void to_json(nlohmann::json& j, const MetricsReport& r) {
  j = nlohmann::json{{"variant", r.variant},
                     {"split", r.split},
                     {"seed", r.seed},
                     {"accuracy", r.accuracy},
                     {"macro_f1", r.macro_f1},
                     {"weighted_f1", r.weighted_f1},
                     {"confusion", r.confusion},
                     {"n", r.n}};
  j["binary_accuracy"] = r.binary_accuracy ? nlohmann::json(*r.binary_accuracy) : nlohmann::json(nullptr);
}

void from_json(const nlohmann::json& j, MetricsReport& r) {
  r.variant = j.at("variant").get<std::string>();
  r.split = j.at("split").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.accuracy = j.at("accuracy").get<double>();
  r.macro_f1 = j.at("macro_f1").get<double>();
  r.weighted_f1 = j.at("weighted_f1").get<double>();
  r.confusion = j.at("confusion").get<std::vector<std::vector<std::size_t>>>();
  r.n = j.at("n").get<std::size_t>();
  const auto& b = j.at("binary_accuracy");
  r.binary_accuracy = b.is_null() ? std::nullopt : std::optional<double>(b.get<double>());
}

MetricsReport from_predictions(const std::vector<std::size_t>& truth, const std::vector<std::size_t>& predicted,
                               std::size_t n_classes, const std::vector<int>& binary_map) {
  if (truth.empty()) throw ValidationError("split", "cannot compute metrics on an empty split");
  if (truth.size() != predicted.size()) throw ValidationError("predictions", "length differs from labels");
  if (!binary_map.empty() && binary_map.size() != n_classes) {
    throw ValidationError("train.binary_map", "needs one entry per class");
  }
  MetricsReport r;
  r.n = truth.size();
  r.confusion.assign(n_classes, std::vector<std::size_t>(n_classes, 0));
  std::size_t correct = 0, bin_total = 0, bin_correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] >= n_classes || predicted[i] >= n_classes) throw ValidationError("labels", "class out of range");
    ++r.confusion[truth[i]][predicted[i]];
    correct += truth[i] == predicted[i];
    if (!binary_map.empty() && binary_map[truth[i]] >= 0) {
      ++bin_total;
      bin_correct += binary_map[truth[i]] == binary_map[predicted[i]];
    }
  }
  r.accuracy = static_cast<double>(correct) / static_cast<double>(r.n);
  if (bin_total > 0) r.binary_accuracy = static_cast<double>(bin_correct) / static_cast<double>(bin_total);

  double macro = 0.0, weighted = 0.0;
  std::size_t counted = 0;
  for (std::size_t c = 0; c < n_classes; ++c) {
    std::size_t support = 0, predicted_c = 0;
    for (std::size_t k = 0; k < n_classes; ++k) {
      support += r.confusion[c][k];
      predicted_c += r.confusion[k][c];
    }
    if (support == 0 && predicted_c == 0) continue;
    const double tp = static_cast<double>(r.confusion[c][c]);
    const double f1 = 2.0 * tp / static_cast<double>(support + predicted_c);
    macro += f1;
    weighted += f1 * static_cast<double>(support);
    ++counted;
  }
  r.macro_f1 = macro / static_cast<double>(counted);
  r.weighted_f1 = weighted / static_cast<double>(r.n);
  return r;
}

MetricsReport evaluate(const train::Checkpoint& ck, const DatasetBundle& bundle, Split split) {
  const auto shape = train::DataShape::of(bundle.config);
  if (shape.dims != ck.shape.dims || shape.seq_lens != ck.shape.seq_lens || shape.n_classes != ck.shape.n_classes) {
    throw ValidationError("bundle", "dimensions do not match the checkpoint");
  }
  const auto& samples = bundle.split(split);
  if (samples.empty()) throw ValidationError("split", std::string(to_string(split)) + " is empty");
  model::SampleBatch batch;
  std::vector<std::size_t> truth;
  for (const auto& s : samples) {
    batch.push_back(&s);
    truth.push_back(s.y_t);
  }
  const auto logits = train::predict_logits(ck, batch);
  std::vector<std::size_t> predicted(samples.size());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Eigen::Index k;
    logits.row(i).maxCoeff(&k);
    predicted[static_cast<std::size_t>(i)] = static_cast<std::size_t>(k);
  }
  auto r = from_predictions(truth, predicted, shape.n_classes, ck.config.binary_map);
  r.variant = ck.config.variant;
  r.split = to_string(split);
  r.seed = ck.config.seed;
  return r;
}

Projection project2d(const nn::MatrixXd& vectors) {
  if (vectors.rows() < 2) throw ValidationError("vectors", "need at least two vectors");
  if (vectors.cols() < 2) throw ValidationError("vectors", "need width >= 2");
  const nn::MatrixXd centered = vectors.rowwise() - vectors.colwise().mean();
  const nn::MatrixXd cov = centered.transpose() * centered / static_cast<double>(vectors.rows() - 1);
  const double total = cov.trace();
  if (!(total > 0.0)) throw ValidationError("vectors", "all vectors are identical (rank 0)");
  Eigen::SelfAdjointEigenSolver<nn::MatrixXd> eig(cov);
  // Eigenvalues come in ascending order.
  const auto w = cov.cols();
  Projection p;
  p.axes.resize(w, 2);
  for (int k = 0; k < 2; ++k) {
    nn::VectorXd axis = eig.eigenvectors().col(w - 1 - k);
    Eigen::Index big;
    axis.cwiseAbs().maxCoeff(&big);
    if (axis[big] < 0) axis = -axis;
    p.axes.col(k) = axis;
  }
  p.retained = std::min(1.0, (eig.eigenvalues()[w - 1] + eig.eigenvalues()[w - 2]) / total);
  p.coords = centered * p.axes;
  return p;
}

}  // namespace suci::metrics
