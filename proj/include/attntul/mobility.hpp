#pragma once

// Raw mobility records, gridding, and the per-point annotations (motion
// state, time-of-day window) consumed by the location encoder.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace attntul {

struct SpatioTemporalPoint {
  double t = 0.0;  // seconds since epoch
  double lon = 0.0;
  double lat = 0.0;
};

struct RawTrajectory {
  std::string user_id;
  std::vector<SpatioTemporalPoint> points;  // non-empty, non-decreasing t
};

struct SubTrajectory {
  std::string user_id;
  std::int64_t interval_index = 0;
  std::vector<SpatioTemporalPoint> points;
};

using GridIndex = std::int32_t;

// Uniform cell_size x cell_size metre cells over the bounding box of a
// dataset, using an equirectangular projection at the box mid-latitude.
// Grid index = row * cols + col, row counted northwards from min_lat.
struct GridMap {
  double min_lon = 0.0;
  double min_lat = 0.0;
  double max_lon = 0.0;
  double max_lat = 0.0;
  double cell_size = 0.0;
  std::int64_t cols = 1;
  std::int64_t rows = 1;

  std::int64_t n_grids() const noexcept { return cols * rows; }
  double meters_per_degree_lat() const noexcept;
  double meters_per_degree_lon() const noexcept;

  // Offset of (lon, lat) from the south-west corner, in metres.
  std::pair<double, double> to_meters(double lon, double lat) const noexcept;
};

GridMap build_grid_map(std::span<const SpatioTemporalPoint> points, double cell_size);

// Cell edges belong to the higher-index cell; the box maximum belongs to
// the last cell. Points inside the one-cell slack ring clamp to the border
// cells. Throws DataError for points beyond the slack ring.
GridIndex map_point_to_grid(const SpatioTemporalPoint& p, const GridMap& gm);

std::vector<SubTrajectory> split_trajectory_by_interval(const RawTrajectory& tr, double tau);

struct MotionThresholds {
  double speed_tolerance = 0.1;   // relative speed change before accel/decel
  double turn_degrees = 15.0;     // heading change before left/right
};

inline constexpr int kMotionStateCount = 9;

// state = 3 * speed_class + direction_class with speed {constant, accel,
// decel} and direction {straight, left, right}. The first two points of a
// sub-trajectory have no preceding segment pair and get state 0.
std::vector<int> encode_motion_states(const SubTrajectory& st,
                                      const MotionThresholds& thresholds = {});

inline constexpr std::int64_t kSecondsPerDay = 86400;

// Throws ConfigError unless window_len is a positive divisor of one day.
void validate_time_window(std::int64_t window_len);
std::int64_t time_window_vocab(std::int64_t window_len);
std::vector<int> encode_time_windows(const SubTrajectory& st, std::int64_t window_len);

struct GridEntry {
  double t = 0.0;
  GridIndex grid = 0;
  int motion_state = 0;
  int time_window = 0;
};

struct GridSequence {
  std::string user_id;
  std::int64_t interval_index = 0;
  std::vector<GridEntry> entries;
};

GridSequence to_grid_sequence(const SubTrajectory& st, const GridMap& gm,
                              std::int64_t window_len,
                              const MotionThresholds& thresholds = {});

// Indices into the sub-trajectory roster passed to chronological_split.
struct DatasetSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;
};

struct SplitCounts {
  std::size_t train = 0;
  std::size_t validation = 0;
  std::size_t test = 0;
};

// Per-user 60/20/20 sizes. Train takes floor(0.6 n) (at least one); the
// remainder is halved with the odd item going to test, so every user with
// two or more sub-trajectories keeps its latest one in test.
SplitCounts split_counts(std::size_t n);

// Per user, ordered by interval index: earliest -> train, then validation,
// then test.
DatasetSplit chronological_split(std::span<const SubTrajectory> subs);
DatasetSplit chronological_split(std::span<const GridSequence> seqs);

// Numeric-aware ordering for opaque user ids ("2" < "10").
bool user_id_less(const std::string& a, const std::string& b);

struct LoadedDataset {
  std::vector<RawTrajectory> trajectories;  // ordered by user_id_less
  std::size_t lines = 0;                    // data lines, header excluded
  std::size_t records = 0;
  std::size_t failures = 0;
};

// `user_id,timestamp,latitude,longitude` per line, optional header (second
// field non-numeric). Throws DataError for empty input or when more than
// max_failure_rate of the lines fail to parse.
LoadedDataset read_dataset(std::istream& in, double max_failure_rate = 0.01);
LoadedDataset read_dataset_file(const std::string& path, double max_failure_rate = 0.01);

}  // namespace attntul
