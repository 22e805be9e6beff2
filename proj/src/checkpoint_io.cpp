#include <filesystem>
#include <map>

#include "suci/binary_io.hpp"
#include "suci/errors.hpp"
#include "suci/train.hpp"

namespace suci::train {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Row-major float32 of a column-major tensor.
void put_row_major(std::string& out, const nn::TensorView& v) {
  const auto m = v.map();
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) io::put_f32(out, static_cast<float>(m(r, c)));
}

void get_row_major(const std::string& in, std::size_t offset, const nn::TensorView& v) {
  auto m = v.map();
  const char* p = in.data() + offset;
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c, p += 4) m(r, c) = io::get_f32(p);
}

json stats_json(const EpochStats& s) {
  return {{"task_loss", s.task_loss},       {"sub_loss", s.sub_loss}, {"all_loss", s.all_loss},
          {"subject_ce", s.subject_ce},     {"task_mse", s.task_mse}, {"task_disc_ce", s.task_disc_ce},
          {"psi_uniform_deviation", s.psi_uniform_deviation}};
}

EpochStats stats_from_json(const json& j) {
  EpochStats s;
  s.task_loss = j.at("task_loss").get<double>();
  s.sub_loss = j.at("sub_loss").get<double>();
  s.all_loss = j.at("all_loss").get<double>();
  s.subject_ce = j.at("subject_ce").get<double>();
  s.task_mse = j.at("task_mse").get<double>();
  s.task_disc_ce = j.at("task_disc_ce").get<double>();
  s.psi_uniform_deviation = j.at("psi_uniform_deviation").get<double>();
  return s;
}

std::string read_or_throw(const fs::path& path) {
  std::string data;
  if (!io::read_file(path, data)) throw RuntimeFailure("cannot read " + path.string());
  return data;
}

void write_or_throw(const fs::path& path, const std::string& data) {
  if (!io::write_file(path, data)) throw RuntimeFailure("cannot write " + path.string());
}

}  // namespace

void save_checkpoint(const Checkpoint& ck_in, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw RuntimeFailure("cannot create " + dir.string() + ": " + ec.message());

  // views() needs mutable access; serialize from a copy to keep the input const.
  Checkpoint ck = ck_in;
  std::string params;
  json tensors = json::array();
  for (const auto& v : ck.views()) {
    tensors.push_back({{"name", v.name}, {"shape", {v.rows, v.cols}}, {"offset", params.size()}});
    put_row_major(params, v);
  }

  json manifest;
  manifest["format_version"] = kCheckpointFormatVersion;
  manifest["config"] = ck.config;
  manifest["shape"] = {{"dims", ck.shape.dims},
                       {"seq_lens", ck.shape.seq_lens},
                       {"n_classes", ck.shape.n_classes},
                       {"n_subjects", ck.shape.n_subjects}};
  manifest["epoch"] = ck.epoch;
  json history = json::array();
  for (const auto& h : ck.history) history.push_back(stats_json(h));
  manifest["history"] = history;
  manifest["params"] = {{"file", "params.bin"},
                        {"dtype", "float32"},
                        {"byte_order", "little"},
                        {"layout", "row_major"},
                        {"byte_size", params.size()},
                        {"tensors", tensors}};

  fs::remove(dir / "dictionary.bin", ec);
  if (ck.dictionary) {
    const auto& d = *ck.dictionary;
    std::string payload;
    auto z = d.prototypes();
    put_row_major(payload, nn::view("z", z));
    std::vector<double> priors(d.priors().data(), d.priors().data() + d.priors().size());
    manifest["dictionary"] = {{"file", "dictionary.bin"},
                              {"shape", {d.size(), d.width()}},
                              {"byte_size", payload.size()},
                              {"counts", d.counts()},
                              {"total", d.total()},
                              {"priors", priors},
                              {"updates", d.updates()}};
    write_or_throw(dir / "dictionary.bin", payload);
  } else {
    manifest["dictionary"] = nullptr;
  }
  write_or_throw(dir / "params.bin", params);
  write_or_throw(dir / "manifest.json", manifest.dump(2) + "\n");
}

Checkpoint load_checkpoint(const fs::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  json manifest;
  try {
    manifest = json::parse(read_or_throw(manifest_path));
  } catch (const json::parse_error& e) {
    throw ValidationError(manifest_path.string(), std::string("invalid JSON: ") + e.what());
  }
  try {
    const int version = manifest.at("format_version").get<int>();
    if (version != kCheckpointFormatVersion) {
      throw ValidationError(manifest_path.string() + ":format_version",
                            "unsupported checkpoint format " + std::to_string(version));
    }
    const auto config = manifest.at("config").get<TrainConfig>();
    DataShape shape;
    const auto& js = manifest.at("shape");
    shape.dims = js.at("dims").get<std::array<std::size_t, kModalities>>();
    shape.seq_lens = js.at("seq_lens").get<std::array<std::size_t, kModalities>>();
    shape.n_classes = js.at("n_classes").get<std::size_t>();
    shape.n_subjects = js.at("n_subjects").get<std::size_t>();

    Checkpoint ck = empty_checkpoint(shape, config);
    ck.epoch = manifest.at("epoch").get<std::size_t>();
    for (const auto& h : manifest.at("history")) ck.history.push_back(stats_from_json(h));

    const auto& jp = manifest.at("params");
    const std::string params = read_or_throw(dir / jp.at("file").get<std::string>());
    if (params.size() != jp.at("byte_size").get<std::size_t>()) {
      throw ValidationError((dir / "params.bin").string(), "size disagrees with manifest");
    }
    std::map<std::string, json> by_name;
    for (const auto& t : jp.at("tensors")) by_name[t.at("name").get<std::string>()] = t;
    const auto views = ck.views();
    if (by_name.size() != views.size()) {
      throw ValidationError(manifest_path.string() + ":params.tensors", "tensor list does not match the model");
    }
    for (const auto& v : views) {
      auto it = by_name.find(v.name);
      if (it == by_name.end()) throw ValidationError(manifest_path.string() + ":params.tensors", "missing " + v.name);
      const auto shp = it->second.at("shape").get<std::array<Eigen::Index, 2>>();
      const auto offset = it->second.at("offset").get<std::size_t>();
      if (shp[0] != v.rows || shp[1] != v.cols) {
        throw ValidationError(manifest_path.string() + ":params.tensors", "shape mismatch for " + v.name);
      }
      if (offset + 4 * static_cast<std::size_t>(v.size()) > params.size()) {
        throw ValidationError((dir / "params.bin").string(), "truncated at " + v.name);
      }
      get_row_major(params, offset, v);
    }

    const auto& jd = manifest.at("dictionary");
    if (ck.is_suci() != !jd.is_null()) {
      throw ValidationError(manifest_path.string() + ":dictionary", "presence disagrees with the variant");
    }
    if (!jd.is_null()) {
      const auto shp = jd.at("shape").get<std::array<Eigen::Index, 2>>();
      const std::string payload = read_or_throw(dir / jd.at("file").get<std::string>());
      if (payload.size() != static_cast<std::size_t>(4 * shp[0] * shp[1])) {
        throw ValidationError((dir / "dictionary.bin").string(), "size disagrees with manifest");
      }
      nn::MatrixXd z(shp[0], shp[1]);
      get_row_major(payload, 0, nn::view("z", z));
      const auto priors = jd.at("priors").get<std::vector<double>>();
      causal::ConfounderDictionary dict(z);
      dict.assign(std::move(z), Eigen::Map<const nn::VectorXd>(priors.data(), static_cast<Eigen::Index>(priors.size())),
                  jd.at("counts").get<std::vector<std::size_t>>());
      dict.set_updates(jd.at("updates").get<std::size_t>());
      ck.dictionary = std::move(dict);
    }
    return ck;
  } catch (const json::exception& e) {
    throw ValidationError(manifest_path.string(), std::string("malformed manifest: ") + e.what());
  }
}

}  // namespace suci::train
