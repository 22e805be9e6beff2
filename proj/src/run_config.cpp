#include "suci/run_config.hpp"

#include <cstdlib>

#include <fmt/format.h>

#include "suci/binary_io.hpp"
#include "suci/errors.hpp"

namespace suci::cli {

using nlohmann::json;

namespace {

template <class F>
void strict_object(const json& j, const std::string& section, F&& handle) {
  if (!j.is_object()) throw ValidationError(section, "expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    try {
      if (!handle(it.key(), it.value())) throw ValidationError(section + "." + it.key(), "unknown key");
    } catch (const json::exception& e) {
      throw ValidationError(section + "." + it.key(), std::string("wrong type: ") + e.what());
    }
  }
}

}  // namespace

void RunConfig::validate() const {
  try {
    gen.validate();
  } catch (const ValidationError& e) {
    throw ValidationError("gen." + e.field(), e.message());
  }
  train.validate();
  if (ablate.seeds.empty()) throw ValidationError("ablate.seeds", "at least one seed is required");
  for (const auto& v : ablate.variants) {
    try {
      train::variant_flags(v);
    } catch (const ValidationError& e) {
      throw ValidationError("ablate.variants", e.message());
    }
  }
  try {
    split_from_string(eval.split);
  } catch (const ValidationError& e) {
    throw ValidationError("eval.split", e.message());
  }
  if (!train.binary_map.empty() && train.binary_map.size() != gen.n_classes) {
    throw ValidationError("train.binary_map", "needs one entry per class (gen.n_classes)");
  }
}

void to_json(json& j, const RunConfig& c) {
  j = json{{"gen", c.gen},
           {"train", c.train},
           {"paths",
            {{"output_dir", c.paths.output_dir},
             {"data_dir", c.paths.data_dir},
             {"checkpoint_dir", c.paths.checkpoint_dir},
             {"report_dir", c.paths.report_dir}}},
           {"ablate",
            {{"seeds", c.ablate.seeds},
             {"variants", c.ablate.variants},
             {"vary_data_seed", c.ablate.vary_data_seed},
             {"scatter", c.ablate.scatter}}},
           {"eval", {{"split", c.eval.split}}}};
}

void from_json(const json& j, RunConfig& c) {
  strict_object(j, "config", [&](const std::string& key, const json& v) {
    if (key == "gen") c.gen = v.get<GenConfig>();
    else if (key == "train") c.train = v.get<train::TrainConfig>();
    else if (key == "paths") {
      strict_object(v, "paths", [&](const std::string& k, const json& x) {
        if (k == "output_dir") c.paths.output_dir = x.get<std::string>();
        else if (k == "data_dir") c.paths.data_dir = x.get<std::string>();
        else if (k == "checkpoint_dir") c.paths.checkpoint_dir = x.get<std::string>();
        else if (k == "report_dir") c.paths.report_dir = x.get<std::string>();
        else return false;
        return true;
      });
    } else if (key == "ablate") {
      strict_object(v, "ablate", [&](const std::string& k, const json& x) {
        if (k == "seeds") c.ablate.seeds = x.get<std::vector<std::uint64_t>>();
        else if (k == "variants") c.ablate.variants = x.get<std::vector<std::string>>();
        else if (k == "vary_data_seed") c.ablate.vary_data_seed = x.get<bool>();
        else if (k == "scatter") c.ablate.scatter = x.get<bool>();
        else return false;
        return true;
      });
    } else if (key == "eval") {
      strict_object(v, "eval", [&](const std::string& k, const json& x) {
        if (k == "split") c.eval.split = x.get<std::string>();
        else return false;
        return true;
      });
    } else {
      return false;
    }
    return true;
  });
}

RunConfig load_run_config(const std::filesystem::path& file) {
  std::string text;
  if (!io::read_file(file, text)) throw ValidationError(file.string(), "cannot read config file");
  RunConfig c;
  try {
    c = json::parse(text).get<RunConfig>();
  } catch (const json::parse_error& e) {
    throw ValidationError(file.string(), std::string("invalid JSON: ") + e.what());
  } catch (const ValidationError& e) {
    throw ValidationError(file.string() + ":" + e.field(), e.message());
  }
  return c;
}

std::string config_hash(const RunConfig& c) {
  json j = c;
  j.erase("paths");
  return fmt::format("{:016x}", io::fnv1a64(j.dump()));
}

std::filesystem::path run_dir(const RunConfig& c, const std::string& command, std::uint64_t seed) {
  std::filesystem::path base = "runs";
  if (!c.paths.output_dir.empty()) {
    base = c.paths.output_dir;
  } else if (const char* env = std::getenv(kOutputDirEnv); env && *env) {
    base = env;
  }
  return base / fmt::format("{}-{}-seed{}", command, config_hash(c), seed);
}

}  // namespace suci::cli
