#include "attntul/pipeline.hpp"

#include "attntul/checkpoint.hpp"
#include "attntul/error.hpp"
#include "attntul/kernels.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

namespace fs = std::filesystem;

namespace attntul {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_file(const fs::path& path, const std::function<void(std::ostream&)>& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  body(out);
  out.flush();
  if (!out) throw DataError("failed writing " + path.string());
}

std::ifstream open_artifact(const fs::path& path, const std::string& stage) {
  if (!fs::exists(path)) throw StageError(path.string(), stage);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return in;
}

void apply_threads(const RunConfig& c) {
  if (c.threads > 0) kernels::set_threads(c.threads);
}

std::string variant_suffix(const RunConfig& c) {
  return c.ablation == Ablation::none ? "" : "." + ablation_name(c.ablation);
}

std::int64_t parse_int(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    auto v = std::stoll(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw DataError("malformed " + what + ": `" + s + "`");
}

double parse_double(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    auto v = std::stod(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw DataError("malformed " + what + ": `" + s + "`");
}

std::map<std::string, std::string> read_key_values(std::istream& in, const std::string& what) {
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) throw DataError(what + ": expected key=value, got `" + line + "`");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

const std::string& need(const std::map<std::string, std::string>& kv, const std::string& key,
                        const std::string& what) {
  auto it = kv.find(key);
  if (it == kv.end()) throw DataError(what + " lacks `" + key + "`");
  return it->second;
}

// ---- model config stored in checkpoints -----------------------------------

void store_model_config(std::map<std::string, std::string>& meta, const ModelConfig& m) {
  meta["model.d"] = std::to_string(m.d);
  meta["model.gcn_layers"] = std::to_string(m.gcn_layers);
  meta["model.attn_layers"] = std::to_string(m.attn_layers);
  meta["model.heads"] = std::to_string(m.heads);
  meta["model.lambda"] = fmt(m.lambda_l2);
  meta["model.dropout"] = fmt(m.dropout_rate);
  meta["model.state_vocab"] = std::to_string(m.state_vocab);
  meta["model.time_vocab"] = std::to_string(m.time_vocab);
  meta["model.disable_local"] = std::to_string(m.disable_local);
  meta["model.disable_global"] = std::to_string(m.disable_global);
  meta["model.disable_self_attention"] = std::to_string(m.disable_self_attention);
  meta["model.use_softmax_global"] = std::to_string(m.use_softmax_global);
  meta["model.disable_time_state"] = std::to_string(m.disable_time_state);
  meta["model.binarize_adjacency"] = std::to_string(m.binarize_adjacency);
  meta["model.scale_full_d"] = std::to_string(m.scale_full_d);
}

ModelConfig load_model_config(const std::map<std::string, std::string>& meta) {
  const std::string what = "checkpoint metadata";
  auto z = [&](const char* k) { return static_cast<std::size_t>(parse_int(need(meta, k, what), k)); };
  auto b = [&](const char* k) { return parse_int(need(meta, k, what), k) != 0; };
  ModelConfig m;
  m.d = z("model.d");
  m.gcn_layers = z("model.gcn_layers");
  m.attn_layers = z("model.attn_layers");
  m.heads = z("model.heads");
  m.lambda_l2 = parse_double(need(meta, "model.lambda", what), "model.lambda");
  m.dropout_rate = parse_double(need(meta, "model.dropout", what), "model.dropout");
  m.state_vocab = z("model.state_vocab");
  m.time_vocab = z("model.time_vocab");
  m.disable_local = b("model.disable_local");
  m.disable_global = b("model.disable_global");
  m.disable_self_attention = b("model.disable_self_attention");
  m.use_softmax_global = b("model.use_softmax_global");
  m.disable_time_state = b("model.disable_time_state");
  m.binarize_adjacency = b("model.binarize_adjacency");
  m.scale_full_d = b("model.scale_full_d");
  return m;
}

// ---- loaded stage outputs --------------------------------------------------

std::vector<std::string> user_roster(const std::vector<GridSequence>& seqs) {
  std::vector<std::string> users;
  for (const auto& s : seqs)
    if (users.empty() || users.back() != s.user_id) users.push_back(s.user_id);
  return users;
}

std::string trajectory_id(const GridSequence& s) {
  return s.user_id + ":" + std::to_string(s.interval_index);
}

struct Workspace {
  std::vector<GridSequence> sequences;
  DatasetSplit split;
  std::vector<std::string> user_names;
  std::vector<std::string> ids;
  std::vector<std::size_t> users;
  std::vector<TrajectoryInput> inputs;
  std::size_t n_grids = 0;
  ModelGraphs graphs;

  TrainingData data() const { return {&graphs, inputs, users, &split}; }
};

Workspace load_workspace(const RunConfig& c, bool binarize) {
  const auto paths = ArtifactPaths::for_config(c);
  Workspace w;
  {
    auto in = open_artifact(paths.sequences, "preprocess");
    w.sequences = read_sequences(in);
  }
  {
    auto in = open_artifact(paths.splits, "preprocess");
    w.split = read_split(in);
  }
  LocalSpatialGraph local;
  GlobalSpatialGraph global;
  {
    auto in = open_artifact(paths.local_graph, "build-graphs");
    local = read_local_graph(in);
  }
  {
    auto in = open_artifact(paths.global_graph, "build-graphs");
    global = read_global_graph(in);
  }
  if (global.trajectory_count != w.sequences.size())
    throw DataError("global graph has " + std::to_string(global.trajectory_count) +
                    " trajectories but sequences.tsv has " + std::to_string(w.sequences.size()) +
                    "; rerun `build-graphs`");

  w.user_names = user_roster(w.sequences);
  std::map<std::string, std::size_t> index;
  for (std::size_t u = 0; u < w.user_names.size(); ++u) index[w.user_names[u]] = u;
  for (std::size_t i = 0; i < w.sequences.size(); ++i) {
    const auto& s = w.sequences[i];
    w.users.push_back(index.at(s.user_id));
    w.ids.push_back(trajectory_id(s));
    w.inputs.push_back(make_trajectory_input(s, i));
  }
  w.n_grids = local.n_grids;
  w.graphs = ModelGraphs::prepare(local, global, binarize);
  return w;
}

void log_line(std::ostream* log, const std::string& s) {
  if (log) *log << s << '\n';
}

}  // namespace

ArtifactPaths ArtifactPaths::for_config(const RunConfig& c) {
  const fs::path dir = c.output_dir;
  const auto v = variant_suffix(c);
  ArtifactPaths p;
  p.gridmap = dir / "gridmap.txt";
  p.sequences = dir / "sequences.tsv";
  p.splits = dir / "splits.txt";
  p.manifest = dir / "manifest.txt";
  p.local_graph = dir / "local.graph";
  p.global_graph = dir / "global.graph";
  p.checkpoint = dir / ("model" + v + ".ckpt");
  p.history = dir / ("history" + v + ".tsv");
  p.metrics = dir / ("metrics" + v + ".txt");
  p.embeddings = dir / ("embeddings" + v + ".tsv");
  return p;
}

// ---- artifact formats ------------------------------------------------------

void write_sequences(std::ostream& out, const std::vector<GridSequence>& seqs) {
  // user \t interval \t t,grid,state,window \t ...
  for (const auto& s : seqs) {
    out << s.user_id << '\t' << s.interval_index;
    for (const auto& e : s.entries)
      out << '\t' << fmt(e.t) << ',' << e.grid << ',' << e.motion_state << ',' << e.time_window;
    out << '\n';
  }
}

std::vector<GridSequence> read_sequences(std::istream& in) {
  std::vector<GridSequence> seqs;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string where = "sequences line " + std::to_string(lineno);
    std::vector<std::string> fields;
    std::stringstream ss(line);
    for (std::string f; std::getline(ss, f, '\t');) fields.push_back(f);
    if (fields.size() < 3) throw DataError(where + ": expected user, interval and entries");
    GridSequence s;
    s.user_id = fields[0];
    s.interval_index = parse_int(fields[1], where);
    for (std::size_t i = 2; i < fields.size(); ++i) {
      std::stringstream es(fields[i]);
      std::string t, g, st, w;
      if (!std::getline(es, t, ',') || !std::getline(es, g, ',') || !std::getline(es, st, ',') ||
          !std::getline(es, w))
        throw DataError(where + ": malformed entry `" + fields[i] + "`");
      s.entries.push_back({parse_double(t, where), static_cast<GridIndex>(parse_int(g, where)),
                           static_cast<int>(parse_int(st, where)), static_cast<int>(parse_int(w, where))});
    }
    seqs.push_back(std::move(s));
  }
  return seqs;
}

void write_split(std::ostream& out, const DatasetSplit& split) {
  auto row = [&](const char* name, const std::vector<std::size_t>& idx) {
    out << name;
    for (auto i : idx) out << ' ' << i;
    out << '\n';
  };
  row("train", split.train);
  row("validation", split.validation);
  row("test", split.test);
}

DatasetSplit read_split(std::istream& in) {
  DatasetSplit split;
  std::string line;
  bool seen[3] = {false, false, false};
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string name;
    ss >> name;
    std::vector<std::size_t>* target = nullptr;
    int slot = -1;
    if (name == "train") target = &split.train, slot = 0;
    else if (name == "validation") target = &split.validation, slot = 1;
    else if (name == "test") target = &split.test, slot = 2;
    else throw DataError("splits: unknown split `" + name + "`");
    seen[slot] = true;
    for (std::string tok; ss >> tok;)
      target->push_back(static_cast<std::size_t>(parse_int(tok, "split index")));
  }
  if (!seen[0] || !seen[1] || !seen[2]) throw DataError("splits: missing train, validation or test line");
  return split;
}

void write_gridmap(std::ostream& out, const GridMap& gm) {
  out << "min_lon=" << fmt(gm.min_lon) << '\n'
      << "min_lat=" << fmt(gm.min_lat) << '\n'
      << "max_lon=" << fmt(gm.max_lon) << '\n'
      << "max_lat=" << fmt(gm.max_lat) << '\n'
      << "cell_size=" << fmt(gm.cell_size) << '\n'
      << "cols=" << gm.cols << '\n'
      << "rows=" << gm.rows << '\n'
      << "grids=" << gm.n_grids() << '\n';
}

GridMap read_gridmap(std::istream& in) {
  const std::string what = "gridmap";
  auto kv = read_key_values(in, what);
  GridMap gm;
  gm.min_lon = parse_double(need(kv, "min_lon", what), "min_lon");
  gm.min_lat = parse_double(need(kv, "min_lat", what), "min_lat");
  gm.max_lon = parse_double(need(kv, "max_lon", what), "max_lon");
  gm.max_lat = parse_double(need(kv, "max_lat", what), "max_lat");
  gm.cell_size = parse_double(need(kv, "cell_size", what), "cell_size");
  gm.cols = parse_int(need(kv, "cols", what), "cols");
  gm.rows = parse_int(need(kv, "rows", what), "rows");
  return gm;
}

// ---- commands --------------------------------------------------------------

PreprocessSummary cmd_preprocess(const RunConfig& c, std::ostream* log) {
  c.validate();
  apply_threads(c);
  if (c.dataset.empty()) throw ConfigError("preprocess needs a dataset path");
  auto loaded = read_dataset_file(c.dataset, c.max_failure_rate);

  std::vector<SpatioTemporalPoint> all;
  for (const auto& tr : loaded.trajectories) all.insert(all.end(), tr.points.begin(), tr.points.end());
  const GridMap gm = build_grid_map(all, c.cell_size);

  std::vector<GridSequence> seqs;
  for (const auto& tr : loaded.trajectories)
    for (const auto& sub : split_trajectory_by_interval(tr, c.tau))
      seqs.push_back(to_grid_sequence(sub, gm, c.time_window));
  const auto split = chronological_split(seqs);

  PreprocessSummary s;
  s.users = loaded.trajectories.size();
  s.trajectories = seqs.size();
  s.points = all.size();
  s.grids = static_cast<std::size_t>(gm.n_grids());
  s.lines = loaded.lines;
  s.failures = loaded.failures;

  const auto paths = ArtifactPaths::for_config(c);
  fs::create_directories(c.output_dir);
  write_file(paths.gridmap, [&](std::ostream& o) { write_gridmap(o, gm); });
  write_file(paths.sequences, [&](std::ostream& o) { write_sequences(o, seqs); });
  write_file(paths.splits, [&](std::ostream& o) { write_split(o, split); });
  write_file(paths.manifest, [&](std::ostream& o) {
    o << "users=" << s.users << '\n'
      << "trajectories=" << s.trajectories << '\n'
      << "points=" << s.points << '\n'
      << "grids=" << s.grids << '\n'
      << "lines=" << s.lines << '\n'
      << "failures=" << s.failures << '\n'
      << "train=" << split.train.size() << '\n'
      << "validation=" << split.validation.size() << '\n'
      << "test=" << split.test.size() << '\n'
      << "cell_size=" << fmt(c.cell_size) << '\n'
      << "tau=" << fmt(c.tau) << '\n'
      << "time_window=" << c.time_window << '\n';
  });
  log_line(log, "preprocess: " + std::to_string(s.users) + " users, " + std::to_string(s.trajectories) +
                    " sub-trajectories, " + std::to_string(s.points) + " points, " +
                    std::to_string(s.grids) + " grids (" + std::to_string(s.failures) +
                    " malformed lines skipped)");
  return s;
}

GraphSummary cmd_build_graphs(const RunConfig& c, std::ostream* log) {
  c.validate();
  apply_threads(c);
  const auto paths = ArtifactPaths::for_config(c);
  GridMap gm;
  std::vector<GridSequence> seqs;
  DatasetSplit split;
  {
    auto in = open_artifact(paths.gridmap, "preprocess");
    gm = read_gridmap(in);
  }
  {
    auto in = open_artifact(paths.sequences, "preprocess");
    seqs = read_sequences(in);
  }
  {
    auto in = open_artifact(paths.splits, "preprocess");
    split = read_split(in);
  }
  const auto n_grids = static_cast<std::size_t>(gm.n_grids());

  auto local = build_local_graph(seqs, n_grids);
  auto incidence = build_grid_incidence(seqs, n_grids);

  const auto users = user_roster(seqs);
  std::map<std::string, std::size_t> index;
  for (std::size_t u = 0; u < users.size(); ++u) index[users[u]] = u;
  std::vector<std::optional<std::size_t>> labels(seqs.size());
  for (auto i : split.train) {
    if (i >= seqs.size()) throw DataError("splits.txt refers to trajectory " + std::to_string(i) + " beyond sequences.tsv");
    labels[i] = index.at(seqs[i].user_id);
  }
  std::vector<std::string> roster;
  for (const auto& s : seqs) roster.push_back(trajectory_id(s));
  for (const auto& u : users) roster.push_back("user:" + u);
  auto global = build_global_graph(incidence, labels, users.size(), roster);

  write_file(paths.local_graph, [&](std::ostream& o) { write_local_graph(o, local); });
  write_file(paths.global_graph, [&](std::ostream& o) { write_global_graph(o, global); });

  GraphSummary g{local.adjacency.nnz(), global.node_count(), global.adjacency.nnz()};
  log_line(log, "build-graphs: local " + std::to_string(n_grids) + " nodes / " +
                    std::to_string(g.local_edges) + " entries, global " + std::to_string(g.global_nodes) +
                    " nodes / " + std::to_string(g.global_edges) + " entries");
  return g;
}

TrainSummary cmd_train(const RunConfig& c, std::ostream* log) {
  c.validate();
  apply_threads(c);
  const auto model = c.effective_model();
  const auto tc = c.effective_train();
  auto w = load_workspace(c, model.binarize_adjacency);
  const auto data = w.data();

  auto initial = ModelParams::initialize(model, w.n_grids, w.user_names.size(), derive_seed(tc.seed, "init"));
  log_line(log, "train [" + ablation_name(c.ablation) + "]: " + std::to_string(w.split.train.size()) +
                    " train / " + std::to_string(w.split.validation.size()) + " validation trajectories, " +
                    std::to_string(active_parameter_count(initial, model)) + " active parameters");
  auto result = train(model, tc, data, std::move(initial), [&](const EpochRecord& r) {
    if (!log) return;
    char buf[128];
    std::snprintf(buf, sizeof buf, "epoch %3zu  loss %.6f  val_acc@1 %.4f  %.1fs", r.epoch, r.train_loss,
                  r.val_acc1, r.seconds);
    *log << buf << '\n';
  });

  const auto paths = ArtifactPaths::for_config(c);
  Checkpoint ckpt;
  ckpt.params = result.best;
  store_model_config(ckpt.metadata, model);
  ckpt.metadata["grids"] = std::to_string(w.n_grids);
  ckpt.metadata["users"] = std::to_string(w.user_names.size());
  ckpt.metadata["best_epoch"] = std::to_string(result.best_epoch);
  ckpt.metadata["ablation"] = ablation_name(c.ablation);
  ckpt.metadata["seed"] = std::to_string(tc.seed);
  save_checkpoint(paths.checkpoint.string(), ckpt);
  write_file(paths.history, [&](std::ostream& o) { write_history(o, result.history); });

  TrainSummary s;
  s.epochs_run = result.history.size();
  s.best_epoch = result.best_epoch;
  s.best_val_acc1 = result.history.at(result.best_epoch - 1).val_acc1;
  s.checkpoint = paths.checkpoint;
  log_line(log, "train: best epoch " + std::to_string(s.best_epoch) + " of " + std::to_string(s.epochs_run) +
                    ", checkpoint " + paths.checkpoint.string());
  return s;
}

namespace {

struct LoadedModel {
  ModelConfig config;
  ModelParams params;
};

LoadedModel load_model(const RunConfig& c, const Workspace& w) {
  const auto paths = ArtifactPaths::for_config(c);
  if (!fs::exists(paths.checkpoint)) throw StageError(paths.checkpoint.string(), "train");
  auto ckpt = load_checkpoint(paths.checkpoint.string());
  LoadedModel m;
  m.config = load_model_config(ckpt.metadata);
  m.params = ModelParams::initialize(m.config, w.n_grids, w.user_names.size(), 0);
  assign_parameters(m.params, ckpt.params);
  return m;
}

Workspace load_for_checkpoint(const RunConfig& c) {
  const auto paths = ArtifactPaths::for_config(c);
  if (!fs::exists(paths.checkpoint)) throw StageError(paths.checkpoint.string(), "train");
  auto ckpt = load_checkpoint(paths.checkpoint.string());
  return load_workspace(c, load_model_config(ckpt.metadata).binarize_adjacency);
}

}  // namespace

MetricsReport cmd_evaluate(const RunConfig& c, const std::string& split, std::ostream* log) {
  c.validate();
  apply_threads(c);
  if (split != "test" && split != "validation")
    throw ConfigError("evaluate split must be test or validation, got `" + split + "`");
  auto w = load_for_checkpoint(c);
  auto m = load_model(c, w);
  const auto& idx = split == "test" ? w.split.test : w.split.validation;
  if (idx.empty()) throw DataError(split + " split is empty");
  auto report = evaluate_on_split(m.config, m.params, w.data(), idx);

  const auto paths = ArtifactPaths::for_config(c);
  const auto out_path = split == "test" ? paths.metrics : paths.metrics.parent_path() / ("validation_" + paths.metrics.filename().string());
  write_file(out_path, [&](std::ostream& o) { write_metrics(o, report); });
  if (log) {
    *log << "evaluate [" << ablation_name(c.ablation) << "] on " << idx.size() << ' ' << split
         << " trajectories:\n";
    write_metrics(*log, report);
  }
  return report;
}

std::size_t cmd_embed(const RunConfig& c, std::ostream* log) {
  c.validate();
  apply_threads(c);
  auto w = load_for_checkpoint(c);
  auto m = load_model(c, w);
  auto rows = export_embeddings(m.config, m.params, w.data(), w.ids);
  const auto paths = ArtifactPaths::for_config(c);
  write_file(paths.embeddings, [&](std::ostream& o) { write_embeddings(o, rows, w.user_names); });
  log_line(log, "embed: " + std::to_string(rows.size()) + " rows of width " +
                    std::to_string(2 * m.config.d) + " -> " + paths.embeddings.string());
  return rows.size();
}

}  // namespace attntul
