// attntul command-line entry point.
//
//   attntul preprocess   --config run.cfg --dataset checkins.csv
//   attntul build-graphs --config run.cfg
//   attntul train        --config run.cfg [--ablation tul-g]
//   attntul evaluate     --config run.cfg [--ablation tul-g] [--split test]
//   attntul embed        --config run.cfg
//   attntul synth        --kind disjoint --out toy.csv
//
// Exit status: 0 success, 1 usage or configuration error, 2 data error.

#include "attntul/config.hpp"
#include "attntul/error.hpp"
#include "attntul/pipeline.hpp"
#include "attntul/synthetic.hpp"

#include <CLI11.hpp>

#include <deque>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace {

using attntul::RunConfig;

// Flag values collected before the config file is read, so that flags
// override the file regardless of argument order.
struct Overrides {
  std::optional<std::string> config_path;
  std::deque<std::pair<std::string, std::optional<std::string>>> flags;  // stable addresses
  std::vector<std::string> sets;

  void add(CLI::App* cmd, const std::string& flag, const std::string& key, const std::string& help) {
    flags.emplace_back(key, std::nullopt);
    cmd->add_option(flag, flags.back().second, help);
  }

  RunConfig resolve() const {
    RunConfig c;
    if (config_path) attntul::load_config_file(*config_path, c);
    for (const auto& [key, value] : flags)
      if (value) c.set(key, *value);
    for (const auto& kv : sets) {
      auto eq = kv.find('=');
      if (eq == std::string::npos) throw attntul::ConfigError("--set expects key=value, got `" + kv + "`");
      c.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    return c;
  }
};

CLI::App* stage(CLI::App& app, const char* name, const char* help, Overrides& o) {
  auto* cmd = app.add_subcommand(name, help);
  cmd->add_option("-c,--config", o.config_path, "key = value configuration file");
  cmd->add_option("--set", o.sets, "override any configuration key, key=value")->take_all();
  o.add(cmd, "-o,--output-dir", "output_dir", "artifact directory");
  o.add(cmd, "--threads", "threads", "OpenMP threads (0 = default)");
  return cmd;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Trajectory-user linking with local/global graph attention"};
  app.require_subcommand(1);

  Overrides pre, graphs, trn, eval, emb;

  auto* c_pre = stage(app, "preprocess", "grid the dataset, split sub-trajectories", pre);
  pre.add(c_pre, "-d,--dataset", "dataset", "CSV of user,timestamp,latitude,longitude");
  pre.add(c_pre, "--cell-size", "cell_size", "grid cell side in metres");
  pre.add(c_pre, "--tau", "tau", "sub-trajectory interval in seconds");
  pre.add(c_pre, "--time-window", "time_window", "time-of-day window in seconds");

  auto* c_graphs = stage(app, "build-graphs", "build the local and global spatial graphs", graphs);

  auto* c_train = stage(app, "train", "train a model and keep the best checkpoint", trn);
  trn.add(c_train, "--ablation", "ablation", "tul-l, tul-g, tul-sa, tul-ea or tul-ts");
  trn.add(c_train, "--epochs", "epochs", "maximum epochs");
  trn.add(c_train, "--lr,--learning-rate", "learning_rate", "Adam learning rate");
  trn.add(c_train, "--batch-size", "batch_size", "trajectories per batch");
  trn.add(c_train, "--patience", "patience", "early-stopping patience in epochs");
  trn.add(c_train, "--seed", "seed", "run seed");
  trn.add(c_train, "--dim", "d", "embedding dimension");

  auto* c_eval = stage(app, "evaluate", "score a checkpoint on the test split", eval);
  eval.add(c_eval, "--ablation", "ablation", "variant whose checkpoint to score");
  std::string split = "test";
  c_eval->add_option("--split", split, "test or validation")->check(CLI::IsMember({"test", "validation"}));

  auto* c_embed = stage(app, "embed", "export [z_l ; z_g] for every trajectory", emb);
  emb.add(c_embed, "--ablation", "ablation", "variant whose checkpoint to use");

  auto* c_synth = app.add_subcommand("synth", "write a synthetic dataset");
  std::string kind = "disjoint", out_path;
  attntul::SyntheticOptions so;
  c_synth->add_option("--kind", kind, "disjoint or shared")->check(CLI::IsMember({"disjoint", "shared"}));
  c_synth->add_option("--out", out_path, "output CSV")->required();
  c_synth->add_option("--users", so.users, "user count");
  c_synth->add_option("--per-user", so.per_user, "sub-trajectories per user");
  c_synth->add_option("--seed", so.seed, "generator seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (c_pre->parsed()) {
      attntul::cmd_preprocess(pre.resolve(), &std::cerr);
    } else if (c_graphs->parsed()) {
      attntul::cmd_build_graphs(graphs.resolve(), &std::cerr);
    } else if (c_train->parsed()) {
      attntul::cmd_train(trn.resolve(), &std::cerr);
    } else if (c_eval->parsed()) {
      attntul::cmd_evaluate(eval.resolve(), split, &std::cout);
    } else if (c_embed->parsed()) {
      attntul::cmd_embed(emb.resolve(), &std::cerr);
    } else if (c_synth->parsed()) {
      auto data = kind == "disjoint" ? attntul::make_disjoint_regions(so)
                                     : attntul::make_shared_region_orders(so);
      std::ofstream out(out_path);
      if (!out) throw attntul::DataError("cannot write " + out_path);
      attntul::write_dataset_csv(out, data);
    }
  } catch (const attntul::ShapeError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::invalid_argument& e) {  // ConfigError and bad option values
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
