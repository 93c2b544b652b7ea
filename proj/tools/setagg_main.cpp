// Command-line front end: subcommands for data generation, training,
// evaluation, model comparison, hyperparameter search, capacity sweeps, and
// the constructive threshold-circuit checks.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error, 3 invalid
// configuration or data.

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "setagg/commands.hpp"

namespace {

using nlohmann::json;

struct Flags {
  std::string config_path;
  std::string data_path;
  std::string out_dir;
  std::string preset_name;
  std::string model_path;
  std::string compare_to = "label";
  std::vector<std::string> model_paths;
  std::vector<unsigned long long> seeds;
  unsigned long long seed = 0;
  int ell = 0;
  int max_epochs = 0;
  int trials = 0;
  int max_items_cap = 0;
  double lr = 0.0;
  double eps = 1e-2;
  std::vector<int> ell_values = {1, 2, 4, 8, 16, 24};
  std::vector<double> sharpness = {5.0, 10.0, 20.0, 40.0};
};

struct SubOptions {
  CLI::App* sub = nullptr;
  CLI::Option* config = nullptr;
  CLI::Option* data = nullptr;
  CLI::Option* out = nullptr;
  CLI::Option* preset = nullptr;
  CLI::Option* ell = nullptr;
  CLI::Option* lr = nullptr;
  CLI::Option* max_epochs = nullptr;
  CLI::Option* seed = nullptr;
  CLI::Option* seeds = nullptr;
  CLI::Option* trials = nullptr;
  CLI::Option* max_items = nullptr;
};

// Registers the options shared by data-driven subcommands.
SubOptions add_common(CLI::App& app, Flags& f, const std::string& name, const std::string& help,
                      bool with_model_flags) {
  SubOptions o;
  o.sub = app.add_subcommand(name, help);
  o.config = o.sub->add_option("-c,--config", f.config_path,
                               "run configuration file (.toml subset or .json)");
  o.data = o.sub->add_option("--data", f.data_path, "dataset file (.csv grouped or .jsonl)");
  o.out = o.sub->add_option("-o,--out", f.out_dir, "output directory");
  o.max_items = o.sub->add_option("--max-items", f.max_items_cap,
                                  "drop examples whose choice sets exceed this size");
  if (with_model_flags) {
    o.preset = o.sub->add_option("--preset", f.preset_name, "model preset name");
    o.ell = o.sub->add_option("--ell", f.ell, "base-class size override");
    o.lr = o.sub->add_option("--lr", f.lr, "learning-rate override");
    o.max_epochs = o.sub->add_option("--max-epochs", f.max_epochs, "epoch-budget override");
    o.seed = o.sub->add_option("--seed", f.seed, "single run seed (shorthand for --seeds)");
    o.seeds = o.sub->add_option("--seeds", f.seeds, "run seed list")->delimiter(',');
  }
  return o;
}

// Builds the effective configuration tree: file first, then flag overrides.
json build_tree(const Flags& f, const SubOptions& o) {
  json tree = o.config->count() ? setagg::parse_config_file(f.config_path) : json::object();
  if (!tree.is_object())
    throw setagg::ConfigError("config: top level must be a table");
  if (o.data && o.data->count()) tree["data"] = {{"path", f.data_path}};
  if (o.max_items && o.max_items->count()) tree["data"]["max_items"] = f.max_items_cap;
  if (o.out->count()) tree["output"]["dir"] = f.out_dir;
  if (o.preset && o.preset->count()) tree["model"] = {{"preset", f.preset_name}};
  if (o.ell && o.ell->count()) tree["model"]["ell"] = f.ell;
  if (o.lr && o.lr->count()) tree["train"]["learning_rate"] = f.lr;
  if (o.max_epochs && o.max_epochs->count()) tree["train"]["max_epochs"] = f.max_epochs;
  if (o.trials && o.trials->count()) tree["search"]["trials"] = f.trials;
  if (o.seeds && o.seeds->count()) {
    tree["seeds"] = f.seeds;
    tree.erase("seed_base");
    tree.erase("n_seeds");
  } else if (o.seed && o.seed->count()) {
    tree["seeds"] = std::vector<unsigned long long>{f.seed};
    tree.erase("seed_base");
    tree.erase("n_seeds");
  }
  return tree;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"set-dependent discrete choice toolkit"};
  app.set_version_flag("--version", "setagg 0.1.0");
  app.require_subcommand(1);
  Flags f;

  SubOptions gen = add_common(app, f, "generate",
                              "sample a synthetic choice dataset from a generator config", false);
  CLI::Option* gen_seed =
      gen.sub->add_option("--seed", f.seed, "generator seed override");

  SubOptions train = add_common(app, f, "train",
                                "train one model per seed and report test metrics", true);

  SubOptions evaluate =
      add_common(app, f, "evaluate", "score a saved model snapshot on a dataset", false);
  evaluate.sub->add_option("--model", f.model_path, "model snapshot file")->required();

  SubOptions analyze = add_common(
      app, f, "analyze", "agreement regions and deletion sensitivity for several models", false);
  analyze.sub->add_option("--models", f.model_paths, "model snapshot files (two or more)")
      ->required()
      ->delimiter(',');
  analyze.sub->add_option("--compare-to", f.compare_to, "deletion check target")
      ->check(CLI::IsMember({"label", "full"}));

  SubOptions tune =
      add_common(app, f, "tune", "random hyperparameter search on the first seed's split", true);
  tune.trials = tune.sub->add_option("--trials", f.trials, "number of search trials");

  SubOptions sweep = add_common(app, f, "sweep-ell",
                                "retrain across base-class sizes and tabulate accuracy and "
                                "deletion sensitivity",
                                true);
  sweep.sub->add_option("--values", f.ell_values, "base-class sizes to sweep")->delimiter(',');

  SubOptions basis = add_common(app, f, "triple-basis",
                                "constructive threshold-circuit checks on a worked example", false);
  basis.sub->add_option("--M", f.sharpness, "sigmoid sharpness values")->delimiter(',');
  basis.sub->add_option("--eps", f.eps, "indifference tolerance");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen.sub->parsed()) {
      json tree = build_tree(f, gen);
      if (gen_seed->count()) tree["data"]["seed"] = f.seed;
      setagg::cli::cmd_generate(setagg::RunConfig::resolve(tree));
    } else if (train.sub->parsed()) {
      setagg::cli::cmd_train(setagg::RunConfig::resolve(build_tree(f, train)));
    } else if (evaluate.sub->parsed()) {
      setagg::cli::cmd_evaluate(setagg::RunConfig::resolve(build_tree(f, evaluate)), f.model_path);
    } else if (analyze.sub->parsed()) {
      setagg::CompareTo mode = f.compare_to == "label" ? setagg::CompareTo::Label
                                                       : setagg::CompareTo::FullSetPrediction;
      setagg::cli::cmd_analyze(setagg::RunConfig::resolve(build_tree(f, analyze)), f.model_paths,
                               mode);
    } else if (tune.sub->parsed()) {
      setagg::cli::cmd_tune(setagg::RunConfig::resolve(build_tree(f, tune)));
    } else if (sweep.sub->parsed()) {
      setagg::cli::cmd_sweep_ell(setagg::RunConfig::resolve(build_tree(f, sweep)), f.ell_values);
    } else if (basis.sub->parsed()) {
      setagg::cli::cmd_triple_basis(setagg::RunConfig::resolve(build_tree(f, basis)), f.sharpness,
                                    f.eps);
    }
  } catch (const setagg::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 3;
  } catch (const setagg::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
