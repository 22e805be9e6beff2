#include "suci/bundle_io.hpp"

#include <nlohmann/json.hpp>

#include "suci/binary_io.hpp"
#include "suci/errors.hpp"

namespace suci {

namespace fs = std::filesystem;
using nlohmann::json;

const char* to_string(BundleErrc code) {
  switch (code) {
    case BundleErrc::Io:
      return "io error";
    case BundleErrc::VersionMismatch:
      return "format version mismatch";
    case BundleErrc::Truncated:
      return "truncated payload";
    case BundleErrc::ShapeMismatch:
      return "manifest/payload shape mismatch";
    case BundleErrc::Malformed:
      return "malformed manifest";
  }
  return "?";
}

BundleError::BundleError(BundleErrc code, const std::string& what)
    : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

namespace {

constexpr std::array<Split, 3> kSplits = {Split::Train, Split::IidTest, Split::OodTest};

const char* group_name(SubjectGroup g) { return g == SubjectGroup::Train ? "train" : "ood"; }

std::size_t record_floats(const GenConfig& c) {
  std::size_t n = 0;
  for (std::size_t m = 0; m < kModalities; ++m) n += c.seq_lens[m] * c.dims[m];
  return n;
}

}  // namespace

void save_bundle(const DatasetBundle& bundle, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw BundleError(BundleErrc::Io, "cannot create " + dir.string() + ": " + ec.message());

  const GenConfig& cfg = bundle.config;
  json meta;
  meta["format_version"] = kBundleFormatVersion;
  meta["config"] = cfg;

  json subjects = json::array();
  for (const auto& s : bundle.subjects) {
    json styles = json::object();
    for (std::size_t m = 0; m < kModalities; ++m) {
      styles[kModalityNames[m]] = std::vector<double>(s.style_vectors[m].data(),
                                                      s.style_vectors[m].data() + s.style_vectors[m].size());
    }
    subjects.push_back({{"subject_id", s.subject_id},
                        {"preferred_class", s.preferred_class},
                        {"group", group_name(s.group)},
                        {"style_vectors", styles}});
  }
  meta["subjects"] = subjects;

  const std::size_t stride = record_floats(cfg) * 4;
  json arrays = json::object();
  std::size_t offset = 0;
  for (std::size_t m = 0; m < kModalities; ++m) {
    arrays[kModalityNames[m]] = {{"shape", {cfg.seq_lens[m], cfg.dims[m]}}, {"record_offset", offset}};
    offset += cfg.seq_lens[m] * cfg.dims[m] * 4;
  }

  json splits = json::object();
  for (Split split : kSplits) {
    const auto& samples = bundle.split(split);
    std::string payload;
    payload.reserve(samples.size() * stride);
    std::vector<std::size_t> labels, subject_ids;
    for (const auto& s : samples) {
      for (std::size_t m = 0; m < kModalities; ++m) {
        if (static_cast<std::size_t>(s.x[m].rows()) != cfg.seq_lens[m] ||
            static_cast<std::size_t>(s.x[m].cols()) != cfg.dims[m]) {
          throw BundleError(BundleErrc::ShapeMismatch,
                            std::string("sample shape disagrees with config for modality ") + kModalityNames[m]);
        }
        for (Eigen::Index r = 0; r < s.x[m].rows(); ++r)
          for (Eigen::Index c = 0; c < s.x[m].cols(); ++c) io::put_f32(payload, s.x[m](r, c));
      }
      labels.push_back(s.y_t);
      subject_ids.push_back(s.y_s);
    }
    const std::string file = std::string(to_string(split)) + ".bin";
    if (!io::write_file(dir / file, payload)) throw BundleError(BundleErrc::Io, "cannot write " + file);
    splits[to_string(split)] = {{"file", file},
                                {"count", samples.size()},
                                {"record_stride", stride},
                                {"byte_size", payload.size()},
                                {"labels", labels},
                                {"subjects", subject_ids},
                                {"arrays", arrays}};
  }
  meta["splits"] = splits;

  if (!io::write_file(dir / "meta.json", meta.dump(2) + "\n")) {
    throw BundleError(BundleErrc::Io, "cannot write meta.json");
  }
}

DatasetBundle load_bundle(const fs::path& dir) {
  std::string text;
  if (!io::read_file(dir / "meta.json", text)) {
    throw BundleError(BundleErrc::Io, "cannot read " + (dir / "meta.json").string());
  }
  json meta;
  try {
    meta = json::parse(text);
  } catch (const json::exception& e) {
    throw BundleError(BundleErrc::Malformed, e.what());
  }

  DatasetBundle bundle;
  try {
    if (meta.at("format_version").get<int>() != kBundleFormatVersion) {
      throw BundleError(BundleErrc::VersionMismatch,
                        "file has version " + meta.at("format_version").dump() + ", reader expects " +
                            std::to_string(kBundleFormatVersion));
    }
    try {
      bundle.config = meta.at("config").get<GenConfig>();
      bundle.config.validate();
    } catch (const ValidationError& e) {
      throw BundleError(BundleErrc::Malformed, e.what());
    }
    const GenConfig& cfg = bundle.config;

    for (const auto& js : meta.at("subjects")) {
      SubjectProfile p;
      p.subject_id = js.at("subject_id").get<std::size_t>();
      p.preferred_class = js.at("preferred_class").get<std::size_t>();
      const auto group = js.at("group").get<std::string>();
      if (group != "train" && group != "ood") throw BundleError(BundleErrc::Malformed, "bad subject group " + group);
      p.group = group == "train" ? SubjectGroup::Train : SubjectGroup::Ood;
      for (std::size_t m = 0; m < kModalities; ++m) {
        const auto v = js.at("style_vectors").at(kModalityNames[m]).get<std::vector<double>>();
        if (v.size() != cfg.dims[m]) {
          throw BundleError(BundleErrc::ShapeMismatch, "style vector width disagrees with config");
        }
        p.style_vectors[m] = Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
      }
      bundle.subjects.push_back(std::move(p));
    }

    for (Split split : kSplits) {
      const auto& js = meta.at("splits").at(to_string(split));
      const auto count = js.at("count").get<std::size_t>();
      const auto stride = js.at("record_stride").get<std::size_t>();
      const auto byte_size = js.at("byte_size").get<std::size_t>();
      const auto labels = js.at("labels").get<std::vector<std::size_t>>();
      const auto subject_ids = js.at("subjects").get<std::vector<std::size_t>>();
      if (labels.size() != count || subject_ids.size() != count) {
        throw BundleError(BundleErrc::Malformed, std::string("label index length differs from count in ") +
                                                     to_string(split));
      }

      // Shapes declared by the manifest must agree with the config and
      // with the declared payload geometry.
      std::array<std::size_t, kModalities> offsets{};
      std::size_t expected_offset = 0;
      for (std::size_t m = 0; m < kModalities; ++m) {
        const auto& ja = js.at("arrays").at(kModalityNames[m]);
        const auto shape = ja.at("shape").get<std::array<std::size_t, 2>>();
        offsets[m] = ja.at("record_offset").get<std::size_t>();
        if (shape[0] != cfg.seq_lens[m] || shape[1] != cfg.dims[m] || offsets[m] != expected_offset) {
          throw BundleError(BundleErrc::ShapeMismatch,
                            std::string("array ") + kModalityNames[m] + " in " + to_string(split) +
                                " disagrees with config shape");
        }
        expected_offset += shape[0] * shape[1] * 4;
      }
      if (stride != record_floats(cfg) * 4 || byte_size != count * stride) {
        throw BundleError(BundleErrc::ShapeMismatch,
                          std::string(to_string(split)) + ": manifest shapes imply " +
                              std::to_string(count * record_floats(cfg) * 4) + " bytes, payload declared " +
                              std::to_string(byte_size));
      }

      std::string payload;
      const auto file = js.at("file").get<std::string>();
      if (!io::read_file(dir / file, payload)) throw BundleError(BundleErrc::Io, "cannot read " + file);
      if (payload.size() < byte_size) {
        throw BundleError(BundleErrc::Truncated, file + " has " + std::to_string(payload.size()) +
                                                     " bytes, expected " + std::to_string(byte_size));
      }
      if (payload.size() > byte_size) {
        throw BundleError(BundleErrc::ShapeMismatch, file + " is longer than the manifest declares");
      }

      auto& samples = bundle.split(split);
      samples.reserve(count);
      for (std::size_t i = 0; i < count; ++i) {
        MultimodalSample s;
        s.y_t = labels[i];
        s.y_s = subject_ids[i];
        s.split = split;
        if (s.y_t >= cfg.n_classes) throw BundleError(BundleErrc::Malformed, "label out of range");
        if (s.y_s >= bundle.subjects.size()) throw BundleError(BundleErrc::Malformed, "subject index out of range");
        const char* rec = payload.data() + i * stride;
        for (std::size_t m = 0; m < kModalities; ++m) {
          Eigen::MatrixXf x(cfg.seq_lens[m], cfg.dims[m]);
          const char* p = rec + offsets[m];
          for (Eigen::Index r = 0; r < x.rows(); ++r)
            for (Eigen::Index c = 0; c < x.cols(); ++c, p += 4) x(r, c) = io::get_f32(p);
          s.x[m] = std::move(x);
        }
        samples.push_back(std::move(s));
      }
    }
  } catch (const json::exception& e) {
    throw BundleError(BundleErrc::Malformed, e.what());
  }
  return bundle;
}

}  // namespace suci
