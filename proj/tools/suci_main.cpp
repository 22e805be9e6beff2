// Command-line entry point: gen, train, eval, ablate, oracle, report.
//
// Exit codes: 0 success, 2 validation error, 3 runtime failure.

#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "suci/ablation.hpp"
#include "suci/binary_io.hpp"
#include "suci/bundle_io.hpp"
#include "suci/errors.hpp"
#include "suci/metrics.hpp"
#include "suci/report.hpp"
#include "suci/run_config.hpp"
#include "suci/scm.hpp"
#include "suci/train.hpp"

namespace fs = std::filesystem;
using namespace suci;
using cli::RunConfig;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitRuntime = 3;

// Flag values are parsed into their own storage and copied over the config
// file values afterwards, so flags always win.
class Overrides {
 public:
  template <class T>
  CLI::Option* add(CLI::App* app, const std::string& name, const std::string& help,
                   std::function<T&(RunConfig&)> field) {
    RunConfig defaults;
    auto storage = std::make_shared<T>(field(defaults));
    CLI::Option* opt = app->add_option(name, *storage, help)->capture_default_str();
    apply_.push_back([opt, storage, field](RunConfig& c) {
      if (opt->count() > 0) field(c) = *storage;
    });
    return opt;
  }

  void apply(RunConfig& c) const {
    for (const auto& f : apply_) f(c);
  }

 private:
  std::vector<std::function<void(RunConfig&)>> apply_;
};

struct Common {
  std::string config_file;
  std::string out;
  Overrides overrides;
};

void add_common(CLI::App* app, Common& common) {
  app->add_option("--config", common.config_file, "JSON run config; flags override its values")
      ->check(CLI::ExistingFile);
  app->add_option("--out", common.out, "output directory (default: run directory named by config hash and seed)");
  common.overrides.add<std::string>(app, "--output-dir", "base directory for run directories (env SUCI_OUTPUT_DIR)",
                                    [](RunConfig& c) -> std::string& { return c.paths.output_dir; });
}

void add_gen_flags(CLI::App* app, Overrides& o) {
  o.add<std::uint64_t>(app, "--gen-seed", "data generation seed", [](RunConfig& c) -> auto& { return c.gen.seed; });
  o.add<std::size_t>(app, "--n-train-subjects", "training subjects",
                     [](RunConfig& c) -> auto& { return c.gen.n_train_subjects; });
  o.add<std::size_t>(app, "--n-ood-subjects", "held-out subjects",
                     [](RunConfig& c) -> auto& { return c.gen.n_ood_subjects; });
  o.add<std::size_t>(app, "--samples-per-subject", "samples per subject",
                     [](RunConfig& c) -> auto& { return c.gen.samples_per_subject; });
  o.add<std::size_t>(app, "--n-classes", "sentiment classes", [](RunConfig& c) -> auto& { return c.gen.n_classes; });
  o.add<double>(app, "--rho", "probability of a subject's preferred class", [](RunConfig& c) -> auto& { return c.gen.rho; });
  o.add<double>(app, "--alpha-signal", "class signal scale", [](RunConfig& c) -> auto& { return c.gen.alpha_signal; });
  o.add<double>(app, "--beta-style", "subject style scale", [](RunConfig& c) -> auto& { return c.gen.beta_style; });
  o.add<double>(app, "--sigma-noise", "per-frame noise scale", [](RunConfig& c) -> auto& { return c.gen.sigma_noise; });
  o.add<double>(app, "--style-group-coupling", "style share tied to the preferred class, in [0, 1]",
                [](RunConfig& c) -> auto& { return c.gen.style_group_coupling; });
  o.add<double>(app, "--iid-holdout-frac", "per-subject fraction held out for iid_test",
                [](RunConfig& c) -> auto& { return c.gen.iid_holdout_frac; });
}

void add_train_flags(CLI::App* app, Overrides& o) {
  o.add<std::size_t>(app, "--epochs", "training epochs", [](RunConfig& c) -> auto& { return c.train.epochs; });
  o.add<std::size_t>(app, "--batch-size", "minibatch size", [](RunConfig& c) -> auto& { return c.train.batch_size; });
  o.add<double>(app, "--learning-rate", "Adam learning rate",
                [](RunConfig& c) -> auto& { return c.train.learning_rate; });
  o.add<std::uint64_t>(app, "--seed", "training seed", [](RunConfig& c) -> auto& { return c.train.seed; });
  o.add<std::string>(app, "--task-disc-mode", "adversarial | literal",
                     [](RunConfig& c) -> auto& { return c.train.task_disc_mode; });
  o.add<double>(app, "--loss-weight-sub", "weight of the subject loss",
                [](RunConfig& c) -> auto& { return c.train.loss_weights.sub; });
  o.add<double>(app, "--loss-weight-task", "weight of the task loss",
                [](RunConfig& c) -> auto& { return c.train.loss_weights.task; });
  o.add<std::size_t>(app, "--d-enc", "per-modality encoder width", [](RunConfig& c) -> auto& { return c.train.d_enc; });
  o.add<std::size_t>(app, "--d", "backbone output width", [](RunConfig& c) -> auto& { return c.train.d; });
  o.add<std::size_t>(app, "--d-g", "generator hidden width", [](RunConfig& c) -> auto& { return c.train.d_g; });
  o.add<std::size_t>(app, "--d-h", "intervention hidden width", [](RunConfig& c) -> auto& { return c.train.d_h; });
  o.add<std::size_t>(app, "--d-n", "attention key width", [](RunConfig& c) -> auto& { return c.train.d_n; });
  o.add<std::vector<int>>(app, "--binary-map", "class -> 0/1 for binary accuracy, -1 drops a class",
                          [](RunConfig& c) -> auto& { return c.train.binary_map; });
}

void add_data_flag(CLI::App* app, Overrides& o) {
  o.add<std::string>(app, "--data", "bundle directory (default: generate from the gen section)",
                     [](RunConfig& c) -> auto& { return c.paths.data_dir; });
}

RunConfig resolve(const Common& common) {
  RunConfig c;
  if (!common.config_file.empty()) c = cli::load_run_config(common.config_file);
  common.overrides.apply(c);
  try {
    c.validate();
  } catch (const ValidationError& e) {
    if (common.config_file.empty()) throw;
    throw ValidationError(common.config_file + ":" + e.field(), e.message());
  }
  return c;
}

fs::path output_dir(const Common& common, const RunConfig& c, const std::string& command, std::uint64_t seed) {
  return common.out.empty() ? cli::run_dir(c, command, seed) : fs::path(common.out);
}

void write_or_throw(const fs::path& path, const std::string& data) {
  std::error_code ec;
  fs::create_directories(path.parent_path(), ec);
  if (!io::write_file(path, data)) throw RuntimeFailure("cannot write " + path.string());
}

void require_dir(const std::string& dir, const std::string& field) {
  if (!fs::is_directory(dir)) throw ValidationError(field, "no such directory '" + dir + "'");
}

DatasetBundle bundle_for(const RunConfig& c) {
  if (!c.paths.data_dir.empty()) {
    require_dir(c.paths.data_dir, "paths.data_dir");
    return load_bundle(c.paths.data_dir);
  }
  return generate(c.gen);
}

// ---- commands -------------------------------------------------------------

int cmd_gen(const Common& common) {
  const auto c = resolve(common);
  const auto dir = output_dir(common, c, "gen", c.gen.seed);
  save_bundle(generate(c.gen), dir);
  std::cout << dir.string() << "\n";
  return 0;
}

int cmd_train(const Common& common, const std::string& arm, const std::string& variant) {
  auto c = resolve(common);
  c.train.variant = variant.empty() ? arm : variant;
  const auto flags = train::variant_flags(c.train.variant);
  if ((arm == "suci") != flags.suci) {
    throw ValidationError("variant", "'" + c.train.variant + "' does not belong to arm '" + arm + "'");
  }
  const auto bundle = bundle_for(c);
  const auto dir = output_dir(common, c, "train-" + c.train.variant, c.train.seed);
  const auto ck = train::train(bundle, c.train);
  train::save_checkpoint(ck, dir / "checkpoint");
  write_or_throw(dir / "config.json", nlohmann::json(c).dump(2) + "\n");
  for (std::size_t e = 0; e < ck.history.size(); ++e) {
    const auto& h = ck.history[e];
    std::cerr << fmt::format("epoch {:3d}  task {:.4f}  sub {:.4f}  all {:.4f}\n", e, h.task_loss, h.sub_loss,
                             h.all_loss);
  }
  std::cout << (dir / "checkpoint").string() << "\n";
  return 0;
}

int cmd_eval(const Common& common, const std::string& checkpoint) {
  const auto c = resolve(common);
  const std::string ck_dir = checkpoint.empty() ? c.paths.checkpoint_dir : checkpoint;
  if (ck_dir.empty()) throw ValidationError("paths.checkpoint_dir", "no checkpoint given (--checkpoint)");
  require_dir(ck_dir, "paths.checkpoint_dir");
  const auto ck = train::load_checkpoint(ck_dir);
  // Without --data the bundle is regenerated from the gen section.
  const auto bundle = bundle_for(c);
  const auto report = metrics::evaluate(ck, bundle, split_from_string(c.eval.split));
  const auto dir = output_dir(common, c, "eval-" + ck.config.variant, ck.config.seed);
  write_or_throw(dir / "metrics.json", report::metrics_json({report}));
  std::cout << fmt::format("{} {} accuracy {:.4f} macro_f1 {:.4f} weighted_f1 {:.4f}\n", report.variant,
                           report.split, report.accuracy, report.macro_f1, report.weighted_f1);
  std::cout << (dir / "metrics.json").string() << "\n";
  return 0;
}

int cmd_ablate(const Common& common) {
  const auto c = resolve(common);
  auto variants = c.ablate.variants.empty() ? train::variant_names() : c.ablate.variants;
  const auto dir = output_dir(common, c, "ablate", c.ablate.seeds.front());

  ablation::BundleFactory factory;
  std::optional<DatasetBundle> fixed;
  if (c.ablate.vary_data_seed) {
    if (!c.paths.data_dir.empty()) {
      throw ValidationError("ablate.vary_data_seed", "cannot vary the data seed with a fixed data directory");
    }
    factory = [&](std::uint64_t seed) {
      auto g = c.gen;
      g.seed = seed;
      return generate(g);
    };
  } else {
    fixed = bundle_for(c);
    factory = [&](std::uint64_t) { return *fixed; };
  }

  std::vector<report::Scatter> scatters;
  const auto first_seed = c.ablate.seeds.front();
  auto on_cell = [&](const std::string& variant, std::uint64_t seed, const train::Checkpoint* ck,
                     const DatasetBundle& bundle) {
    std::cerr << fmt::format("{:<16} seed {:<4} {}\n", variant, seed, ck ? "done" : "FAILED");
    if (!ck || !c.ablate.scatter || seed != first_seed || (variant != "vanilla" && variant != "suci")) return;
    // Up to 100 OOD samples per class, in split order.
    model::SampleBatch batch;
    std::vector<std::size_t> labels;
    std::map<std::size_t, std::size_t> taken;
    for (const auto& s : bundle.ood_test) {
      if (taken[s.y_t]++ < 100) {
        batch.push_back(&s);
        labels.push_back(s.y_t);
      }
    }
    try {
      const auto p = metrics::project2d(train::representations(*ck, batch));
      scatters.push_back({variant, fmt::format("{} features, ood_test, seed {} ({:.0f}% variance)", variant, seed,
                                               100.0 * p.retained),
                          p.coords, labels});
    } catch (const ValidationError& e) {
      std::cerr << "warning: no scatter for " << variant << ": " << e.what() << "\n";
    }
  };

  const auto table = ablation::run_ablations(factory, c.train, c.ablate.seeds, variants, on_cell);
  for (const auto& w : table.warnings) std::cerr << "warning: " << w << "\n";
  if (table.reports.empty()) throw RuntimeFailure("every ablation cell failed");
  report::render_report(table.reports, dir, scatters, table.failures);
  write_or_throw(dir / "config.json", nlohmann::json(c).dump(2) + "\n");
  std::cout << report::summary_markdown(table.reports, table.failures);
  std::cout << dir.string() << "\n";
  return table.failures.empty() ? 0 : kExitRuntime;
}

int cmd_oracle(const std::string& scm_path, const std::optional<std::size_t>& x_only) {
  const auto model = scm::DiscreteScm::load(scm_path);
  if (x_only && *x_only >= model.x_card()) {
    throw ValidationError("x", fmt::format("must be < {} (X cardinality)", model.x_card()));
  }
  auto fmt_dist = [](const scm::Distribution& d) {
    std::string s = "[";
    for (std::size_t i = 0; i < d.size(); ++i) s += fmt::format("{}{:.6f}", i ? ", " : "", d[i]);
    return s + "]";
  };
  for (std::size_t x = 0; x < model.x_card(); ++x) {
    if (x_only && x != *x_only) continue;
    const auto intv = scm::interventional_backdoor(model, x);
    if (model.marginal_x(x) == 0.0) {
      if (x_only) throw ValidationError("x", fmt::format("P(X={}) is zero; the observational law is undefined", x));
      std::cout << fmt::format("x={} unreachable\n  do(x):        {}\n", x, fmt_dist(intv));
      continue;
    }
    const auto obs = scm::observational(model, x);
    std::cout << fmt::format("x={}\n  P(y|x):       {}\n  P(y|do(x)):   {}\n  gap (TV):     {:.6f}\n", x, fmt_dist(obs),
                             fmt_dist(intv), scm::total_variation(obs, intv));
  }
  return 0;
}

int cmd_report(const Common& common, const std::string& dir_arg) {
  const auto c = resolve(common);
  const std::string dir = dir_arg.empty() ? c.paths.report_dir : dir_arg;
  if (dir.empty()) throw ValidationError("paths.report_dir", "no report directory given");
  const auto loaded = report::collect_reports(dir);
  const fs::path out = common.out.empty() ? fs::path(dir) : fs::path(common.out);
  report::render_summary(loaded.reports, out, loaded.failures);
  std::cout << report::summary_markdown(loaded.reports, loaded.failures);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Subject-level causal intervention (SuCI) on a synthetic multimodal benchmark"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "help for every subcommand");

  Common gen_c, train_c, eval_c, ablate_c, report_c;

  auto* gen = app.add_subcommand("gen", "generate a synthetic dataset bundle");
  add_common(gen, gen_c);
  add_gen_flags(gen, gen_c.overrides);

  std::string arm, variant;
  auto* trn = app.add_subcommand("train", "train one arm and save a checkpoint");
  add_common(trn, train_c);
  trn->add_option("--arm", arm, "vanilla | suci")->required()->check(CLI::IsMember({"vanilla", "suci"}));
  trn->add_option("--variant", variant, "ablation variant within the arm (default: the arm itself)");
  add_data_flag(trn, train_c.overrides);
  add_gen_flags(trn, train_c.overrides);
  add_train_flags(trn, train_c.overrides);

  std::string checkpoint;
  auto* evl = app.add_subcommand("eval", "evaluate a checkpoint on one split");
  add_common(evl, eval_c);
  evl->add_option("--checkpoint", checkpoint, "checkpoint directory");
  add_data_flag(evl, eval_c.overrides);
  add_gen_flags(evl, eval_c.overrides);
  eval_c.overrides.add<std::string>(evl, "--split", "train | iid_test | ood_test",
                                    [](RunConfig& c) -> auto& { return c.eval.split; });

  auto* abl = app.add_subcommand("ablate", "train and evaluate every variant on every seed");
  add_common(abl, ablate_c);
  add_data_flag(abl, ablate_c.overrides);
  add_gen_flags(abl, ablate_c.overrides);
  add_train_flags(abl, ablate_c.overrides);
  ablate_c.overrides.add<std::vector<std::uint64_t>>(abl, "--seeds", "seeds", [](RunConfig& c) -> auto& {
    return c.ablate.seeds;
  })->delimiter(',');
  ablate_c.overrides.add<std::vector<std::string>>(abl, "--variants", "variants (default: all)",
                                                   [](RunConfig& c) -> auto& { return c.ablate.variants; })
      ->delimiter(',');
  ablate_c.overrides.add<bool>(abl, "--vary-data-seed", "regenerate data with gen seed = seed",
                               [](RunConfig& c) -> auto& { return c.ablate.vary_data_seed; });
  ablate_c.overrides.add<bool>(abl, "--scatter", "write 2-D feature scatter plots",
                               [](RunConfig& c) -> auto& { return c.ablate.scatter; });

  std::string scm_path;
  std::optional<std::size_t> x_value;
  auto* orc = app.add_subcommand("oracle", "observational vs interventional outcome law of a discrete SCM");
  orc->add_option("--scm", scm_path, "SCM JSON file")->required()->check(CLI::ExistingFile);
  orc->add_option("--x", x_value, "only this value of X (default: every value)");

  std::string report_dir;
  auto* rep = app.add_subcommand("report", "summarize every metrics.json below a directory");
  add_common(rep, report_c);
  rep->add_option("dir", report_dir, "directory holding metrics.json files (default: paths.report_dir)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  try {
    if (*gen) return cmd_gen(gen_c);
    if (*trn) return cmd_train(train_c, arm, variant);
    if (*evl) return cmd_eval(eval_c, checkpoint);
    if (*abl) return cmd_ablate(ablate_c);
    if (*orc) return cmd_oracle(scm_path, x_value);
    if (*rep) return cmd_report(report_c, report_dir);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const BundleError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.code() == BundleErrc::Io ? kExitRuntime : kExitValidation;
  } catch (const scm::UnreachableEvidence& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}
