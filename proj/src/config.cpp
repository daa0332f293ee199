#include "attntul/config.hpp"

#include "attntul/error.hpp"
#include "attntul/mobility.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <sstream>

namespace attntul {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* expected) {
  throw ConfigError("invalid value `" + value + "` for " + key + ": expected " + expected);
}

template <class T>
T parse_integer(const std::string& key, const std::string& v) {
  T out{};
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size() || v.empty()) bad_value(key, v, "an integer");
  return out;
}

double parse_real(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    bad_value(key, v, "a number");
  }
  if (used != v.size() || !std::isfinite(out)) bad_value(key, v, "a finite number");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  bad_value(key, v, "true or false");
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

const char* bool_text(bool b) { return b ? "true" : "false"; }

}  // namespace

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> k = {
      "dataset",        "output_dir",  "cell_size",   "tau",          "time_window",
      "max_failure_rate", "seed",      "threads",     "ablation",     "d",
      "gcn_layers",     "attn_layers", "heads",       "lambda",       "dropout",
      "binarize_adjacency", "scale_full_d", "learning_rate", "epochs", "batch_size",
      "patience",       "stop_metric", "record_time"};
  return k;
}

void RunConfig::set(const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  if (key == "dataset") dataset = v;
  else if (key == "output_dir") output_dir = v;
  else if (key == "cell_size") cell_size = parse_real(key, v);
  else if (key == "tau") tau = parse_real(key, v);
  else if (key == "time_window") time_window = parse_integer<std::int64_t>(key, v);
  else if (key == "max_failure_rate") max_failure_rate = parse_real(key, v);
  else if (key == "seed") seed = parse_integer<std::uint64_t>(key, v);
  else if (key == "threads") threads = parse_integer<int>(key, v);
  else if (key == "ablation") ablation = parse_ablation(v);
  else if (key == "d") model.d = parse_integer<std::size_t>(key, v);
  else if (key == "gcn_layers") model.gcn_layers = parse_integer<std::size_t>(key, v);
  else if (key == "attn_layers") model.attn_layers = parse_integer<std::size_t>(key, v);
  else if (key == "heads") model.heads = parse_integer<std::size_t>(key, v);
  else if (key == "lambda") model.lambda_l2 = parse_real(key, v);
  else if (key == "dropout") model.dropout_rate = parse_real(key, v);
  else if (key == "binarize_adjacency") model.binarize_adjacency = parse_bool(key, v);
  else if (key == "scale_full_d") model.scale_full_d = parse_bool(key, v);
  else if (key == "learning_rate") train.learning_rate = parse_real(key, v);
  else if (key == "epochs") train.epochs_max = parse_integer<std::size_t>(key, v);
  else if (key == "batch_size") train.batch_size = parse_integer<std::size_t>(key, v);
  else if (key == "patience") train.patience = parse_integer<std::size_t>(key, v);
  else if (key == "stop_metric") {
    if (v == "val_acc1") train.stop_metric = StopMetric::val_acc1;
    else if (v == "val_loss") train.stop_metric = StopMetric::val_loss;
    else bad_value(key, v, "val_acc1 or val_loss");
  } else if (key == "record_time") train.record_time = parse_bool(key, v);
  else throw ConfigError("unknown configuration key `" + key + "`");
}

ModelConfig RunConfig::effective_model() const {
  ModelConfig m = model;
  apply_ablation(m, ablation);
  m.time_vocab = static_cast<std::size_t>(time_window_vocab(time_window));
  return m;
}

TrainConfig RunConfig::effective_train() const {
  TrainConfig t = train;
  t.seed = seed;
  return t;
}

void RunConfig::validate() const {
  if (!(cell_size > 0.0)) throw ConfigError("cell_size must be positive");
  if (!(tau > 0.0)) throw ConfigError("tau must be positive");
  if (!(max_failure_rate >= 0.0 && max_failure_rate <= 1.0))
    throw ConfigError("max_failure_rate must lie in [0, 1]");
  if (threads < 0) throw ConfigError("threads must be non-negative");
  try {
    validate_time_window(time_window);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  if (!(model.dropout_rate >= 0.0 && model.dropout_rate < 1.0))
    throw ConfigError("dropout must lie in [0, 1)");
  if (model.lambda_l2 < 0.0) throw ConfigError("lambda must be non-negative");
  effective_model().validate();
  train.validate();
}

std::string RunConfig::to_text() const {
  std::ostringstream o;
  o << "dataset=" << dataset << '\n'
    << "output_dir=" << output_dir << '\n'
    << "cell_size=" << fmt(cell_size) << '\n'
    << "tau=" << fmt(tau) << '\n'
    << "time_window=" << time_window << '\n'
    << "max_failure_rate=" << fmt(max_failure_rate) << '\n'
    << "seed=" << seed << '\n'
    << "threads=" << threads << '\n'
    << "ablation=" << ablation_name(ablation) << '\n'
    << "d=" << model.d << '\n'
    << "gcn_layers=" << model.gcn_layers << '\n'
    << "attn_layers=" << model.attn_layers << '\n'
    << "heads=" << model.heads << '\n'
    << "lambda=" << fmt(model.lambda_l2) << '\n'
    << "dropout=" << fmt(model.dropout_rate) << '\n'
    << "binarize_adjacency=" << bool_text(model.binarize_adjacency) << '\n'
    << "scale_full_d=" << bool_text(model.scale_full_d) << '\n'
    << "learning_rate=" << fmt(train.learning_rate) << '\n'
    << "epochs=" << train.epochs_max << '\n'
    << "batch_size=" << train.batch_size << '\n'
    << "patience=" << train.patience << '\n'
    << "stop_metric=" << (train.stop_metric == StopMetric::val_acc1 ? "val_acc1" : "val_loss") << '\n'
    << "record_time=" << bool_text(train.record_time) << '\n';
  return o.str();
}

void parse_config(std::istream& in, RunConfig& config, const std::string& source) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(source + ":" + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    try {
      config.set(key, line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(source + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

void load_config_file(const std::string& path, RunConfig& config) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  parse_config(in, config, path);
}

}  // namespace attntul
