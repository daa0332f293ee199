#include "oracles.hpp"
#include "support.hpp"

#include "attntul/config.hpp"
#include "attntul/error.hpp"
#include "attntul/graph.hpp"
#include "attntul/pipeline.hpp"
#include "attntul/synthetic.hpp"

#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <sys/wait.h>

using namespace attntul;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::map<std::string, std::string> key_values(const fs::path& p) {
  std::map<std::string, std::string> kv;
  std::istringstream in(slurp(p));
  std::string line;
  while (std::getline(in, line)) {
    auto eq = line.find('=');
    if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

void write_toy_dataset(const fs::path& path, std::size_t users = 3, std::size_t per_user = 5) {
  SyntheticOptions o;
  o.users = users;
  o.per_user = per_user;
  std::ofstream out(path);
  write_dataset_csv(out, make_disjoint_regions(o));
}

RunConfig toy_run(const testing::TempDir& dir, const std::string& out = "out") {
  RunConfig c;
  c.dataset = dir.str("toy.csv");
  c.output_dir = dir.str(out);
  c.model.d = 8;
  c.model.heads = 2;
  c.model.attn_layers = 1;
  c.train.epochs_max = 3;
  c.train.record_time = false;
  return c;
}

void run_all(const RunConfig& c) {
  cmd_preprocess(c);
  cmd_build_graphs(c);
  cmd_train(c);
  cmd_evaluate(c);
  cmd_embed(c);
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(ATTNTUL_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_SUITE("config") {

TEST_CASE("defaults follow the reference settings") {
  RunConfig c;
  CHECK(c.model.d == 128);
  CHECK(c.model.gcn_layers == 2);
  CHECK(c.model.attn_layers == 3);
  CHECK(c.model.heads == 4);
  CHECK(c.model.lambda_l2 == 5e-4);
  CHECK(c.model.dropout_rate == 0.5);
  CHECK(c.train.epochs_max == 80);
  CHECK(c.train.batch_size == 16);
  CHECK(c.train.patience == 10);
  CHECK(c.effective_model().time_vocab == 12);
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("config files and overrides") {
  RunConfig c;
  std::istringstream in("# comment\n d = 64\nheads=2 # trailing\n\nablation = tul-ea\nlearning_rate=0.005\n");
  parse_config(in, c);
  CHECK(c.model.d == 64);
  CHECK(c.model.heads == 2);
  CHECK(c.train.learning_rate == 0.005);
  auto m = c.effective_model();
  CHECK(m.use_softmax_global);
  CHECK_FALSE(m.disable_local);
  CHECK_FALSE(m.disable_global);
  CHECK_FALSE(m.disable_self_attention);
  CHECK_FALSE(m.disable_time_state);

  // a later set wins, as a flag applied after the file does
  c.set("d", "32");
  CHECK(c.model.d == 32);

  std::istringstream unknown("d = 8\nwidth = 3\n");
  try {
    parse_config(unknown, c, "run.cfg");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("run.cfg:2") != std::string::npos);
    CHECK(msg.find("width") != std::string::npos);
  }
  CHECK_THROWS_AS(c.set("d", "many"), ConfigError);
  CHECK_THROWS_AS(c.set("ablation", "tul-q"), ConfigError);
  RunConfig bad;
  bad.set("time_window", "7000");  // does not divide a day
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  RunConfig round;
  std::istringstream text(c.to_text());
  parse_config(text, round);
  CHECK(round.to_text() == c.to_text());
}

TEST_CASE("ablation names map to exactly one flag") {
  const std::map<std::string, bool ModelConfig::*> flags{
      {"tul-l", &ModelConfig::disable_local},          {"tul-g", &ModelConfig::disable_global},
      {"tul-sa", &ModelConfig::disable_self_attention}, {"tul-ea", &ModelConfig::use_softmax_global},
      {"tul-ts", &ModelConfig::disable_time_state}};
  for (const auto& [name, flag] : flags) {
    RunConfig c;
    c.set("ablation", name);
    auto m = c.effective_model();
    int set = 0;
    for (const auto& [other, f] : flags) set += m.*f ? 1 : 0;
    CHECK(m.*flag);
    CHECK(set == 1);
  }
}

}  // TEST_SUITE

TEST_SUITE("pipeline") {

TEST_CASE("end-to-end toy run writes every artifact") {
  testing::TempDir dir("pipe");
  write_toy_dataset(dir.path() / "toy.csv");
  auto c = toy_run(dir);
  run_all(c);
  const auto paths = ArtifactPaths::for_config(c);
  for (const auto& p : {paths.gridmap, paths.sequences, paths.splits, paths.manifest, paths.local_graph,
                        paths.global_graph, paths.checkpoint, paths.history, paths.metrics, paths.embeddings})
    CHECK_MESSAGE(fs::exists(p), p.string());

  // manifest counts against a direct count of the CSV
  std::ifstream csv(c.dataset);
  std::string line;
  std::getline(csv, line);
  std::set<std::string> users;
  std::set<std::pair<std::string, long long>> intervals;
  std::size_t points = 0;
  while (std::getline(csv, line)) {
    std::istringstream row(line);
    std::string user, t;
    std::getline(row, user, ',');
    std::getline(row, t, ',');
    users.insert(user);
    intervals.insert({user, static_cast<long long>(std::floor(std::stod(t) / c.tau))});
    ++points;
  }
  auto manifest = key_values(paths.manifest);
  CHECK(manifest.at("users") == std::to_string(users.size()));
  CHECK(manifest.at("trajectories") == std::to_string(intervals.size()));
  CHECK(manifest.at("points") == std::to_string(points));
  CHECK(manifest.at("train") == "9");  // 3 of 5 per user
  CHECK(manifest.at("validation") == "3");
  CHECK(manifest.at("test") == "3");

  std::ifstream lg(paths.local_graph);
  auto local = read_local_graph(lg);
  std::ifstream sq(paths.sequences);
  auto seqs = read_sequences(sq);
  CHECK(local.adjacency == testing::local_graph_oracle(seqs, local.n_grids));
  CHECK(slurp(paths.local_graph).find("symmetric 1") != std::string::npos);

  auto metrics = key_values(paths.metrics);
  CHECK(metrics.count("acc@1") == 1);
  CHECK(metrics.count("macro_f1") == 1);
  const auto history = slurp(paths.history);
  const auto epochs = std::count(history.begin(), history.end(), '\n');
  CHECK(epochs >= 1);
  CHECK(epochs <= 3);

  std::ifstream emb(paths.embeddings);
  std::size_t rows = 0;
  while (std::getline(emb, line)) {
    ++rows;
    CHECK(std::count(line.begin(), line.end(), '\t') == 2 + 2 * 8 - 1);
  }
  CHECK(rows == 15);
}

TEST_CASE("reruns are byte-identical") {
  testing::TempDir dir("rerun");
  write_toy_dataset(dir.path() / "toy.csv");
  auto a = toy_run(dir, "a"), b = toy_run(dir, "b");
  run_all(a);
  run_all(b);
  const auto pa = ArtifactPaths::for_config(a), pb = ArtifactPaths::for_config(b);
  CHECK(slurp(pa.gridmap) == slurp(pb.gridmap));
  CHECK(slurp(pa.sequences) == slurp(pb.sequences));
  CHECK(slurp(pa.splits) == slurp(pb.splits));
  CHECK(slurp(pa.local_graph) == slurp(pb.local_graph));
  CHECK(slurp(pa.global_graph) == slurp(pb.global_graph));
  CHECK(slurp(pa.checkpoint) == slurp(pb.checkpoint));
  CHECK(slurp(pa.history) == slurp(pb.history));
  CHECK(slurp(pa.metrics) == slurp(pb.metrics));
  CHECK(slurp(pa.embeddings) == slurp(pb.embeddings));

  // rerunning a stage in place rewrites the same bytes
  const auto before = slurp(pa.global_graph);
  cmd_build_graphs(a);
  CHECK(slurp(pa.global_graph) == before);
}

TEST_CASE("stages report what is missing") {
  testing::TempDir dir("stage");
  auto c = toy_run(dir);
  try {
    cmd_build_graphs(c);
    FAIL("expected StageError");
  } catch (const StageError& e) {
    CHECK(e.stage() == "preprocess");
  }
  write_toy_dataset(dir.path() / "toy.csv");
  cmd_preprocess(c);
  cmd_build_graphs(c);
  try {
    cmd_evaluate(c);
    FAIL("expected StageError");
  } catch (const StageError& e) {
    CHECK(e.stage() == "train");
  }

  std::ofstream(dir.path() / "empty.csv") << "";
  c.dataset = dir.str("empty.csv");
  CHECK_THROWS_AS(cmd_preprocess(c), DataError);
}

TEST_CASE("artifact readers round-trip") {
  std::vector<GridSequence> seqs{testing::sequence_of({1, 2, 3}, "7", 4), testing::sequence_of({0}, "10", 1)};
  seqs[0].entries[1].motion_state = 5;
  seqs[0].entries[2].time_window = 11;
  std::stringstream s;
  write_sequences(s, seqs);
  auto back = read_sequences(s);
  REQUIRE(back.size() == 2);
  CHECK(back[0].user_id == "7");
  CHECK(back[0].interval_index == 4);
  CHECK(back[0].entries[1].motion_state == 5);
  CHECK(back[0].entries[2].time_window == 11);
  CHECK(back[1].entries[0].t == seqs[1].entries[0].t);

  DatasetSplit split{{0, 3}, {1}, {2, 4}};
  std::stringstream sp;
  write_split(sp, split);
  auto sb = read_split(sp);
  CHECK(sb.train == split.train);
  CHECK(sb.validation == split.validation);
  CHECK(sb.test == split.test);
}

TEST_CASE("command-line exit codes") {
  testing::TempDir dir("cli");
  write_toy_dataset(dir.path() / "toy.csv");
  const std::string out = " -o " + dir.str("out");
  CHECK(run_cli("") == 1);
  CHECK(run_cli("frobnicate") == 1);
  CHECK(run_cli("preprocess --set width=3 -d " + dir.str("toy.csv") + out) == 1);
  CHECK(run_cli("train --ablation tul-x" + out) == 1);
  CHECK(run_cli("preprocess -d " + dir.str("missing.csv") + out) == 2);
  CHECK(run_cli("evaluate" + out) == 2);
  CHECK(run_cli("preprocess -d " + dir.str("toy.csv") + out) == 0);
  CHECK(run_cli("build-graphs" + out) == 0);

  // flags override the config file
  std::ofstream(dir.path() / "run.cfg") << "output_dir = " << dir.str("elsewhere") << "\ncell_size = 80\n";
  CHECK(run_cli("preprocess -c " + dir.str("run.cfg") + " -d " + dir.str("toy.csv") + out + "2") == 0);
  CHECK(fs::exists(dir.path() / "out2" / "manifest.txt"));
  CHECK_FALSE(fs::exists(dir.path() / "elsewhere"));
  CHECK(key_values(dir.path() / "out2" / "manifest.txt").at("cell_size").rfind("80", 0) == 0);
}

}  // TEST_SUITE
