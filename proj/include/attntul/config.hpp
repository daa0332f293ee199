#pragma once

// Run configuration: a flat `key = value` file with `#` comments, overridden
// by command-line flags. Unknown keys are rejected.

#include "attntul/model.hpp"
#include "attntul/trainer.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace attntul {

struct RunConfig {
  std::string dataset;
  std::string output_dir = "out";
  double cell_size = 40.0;            // meters
  double tau = 6 * 3600.0;            // sub-trajectory interval, seconds
  std::int64_t time_window = 7200;    // seconds, divides one day
  double max_failure_rate = 0.01;
  std::uint64_t seed = 42;
  int threads = 0;                    // 0 keeps the OpenMP default
  Ablation ablation = Ablation::none;
  ModelConfig model;
  TrainConfig train;

  // Sets one key from its textual value; throws ConfigError for unknown
  // keys and unparsable or out-of-range values.
  void set(const std::string& key, const std::string& value);

  static const std::vector<std::string>& keys();

  // Model config with the ablation applied and the time vocabulary derived
  // from time_window.
  ModelConfig effective_model() const;
  TrainConfig effective_train() const;

  void validate() const;

  // Every key in canonical order, `key=value` per line.
  std::string to_text() const;
};

// Applies each `key = value` line of `in` onto `config`. `source` names the
// input in error messages.
void parse_config(std::istream& in, RunConfig& config, const std::string& source = "config");
void load_config_file(const std::string& path, RunConfig& config);

}  // namespace attntul
