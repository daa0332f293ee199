#include "attntul/mobility.hpp"

#include "attntul/error.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <numbers>
#include <sstream>

namespace attntul {

namespace {

constexpr double kEarthRadiusMeters = 6371008.8;
constexpr double kMetersPerDegree = kEarthRadiusMeters * std::numbers::pi / 180.0;

// Accepts edges within this many cells of an exact multiple when sizing
// the map, so a 100 m box with 50 m cells yields 2 columns despite
// projection round-off.
constexpr double kSizingSlack = 1e-9;

std::int64_t cells_for_extent(double extent_m, double cell) {
  auto n = static_cast<std::int64_t>(std::ceil(extent_m / cell - kSizingSlack));
  return std::max<std::int64_t>(n, 1);
}

bool parse_double(std::string_view s, double& out) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  if (s.empty()) return false;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(out);
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  for (;;) {
    auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return fields;
}

template <class Seq, class KeyFn>
DatasetSplit split_by_user(std::span<const Seq> items, KeyFn interval_of) {
  std::map<std::string, std::vector<std::size_t>> by_user;
  for (std::size_t i = 0; i < items.size(); ++i) by_user[items[i].user_id].push_back(i);

  DatasetSplit split;
  for (auto& [user, idx] : by_user) {
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return interval_of(items[a]) < interval_of(items[b]);
    });
    auto counts = split_counts(idx.size());
    std::size_t k = 0;
    for (std::size_t i = 0; i < counts.train; ++i) split.train.push_back(idx[k++]);
    for (std::size_t i = 0; i < counts.validation; ++i) split.validation.push_back(idx[k++]);
    for (std::size_t i = 0; i < counts.test; ++i) split.test.push_back(idx[k++]);
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.validation.begin(), split.validation.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

}  // namespace

double GridMap::meters_per_degree_lat() const noexcept { return kMetersPerDegree; }

double GridMap::meters_per_degree_lon() const noexcept {
  double mid = 0.5 * (min_lat + max_lat) * std::numbers::pi / 180.0;
  return kMetersPerDegree * std::cos(mid);
}

std::pair<double, double> GridMap::to_meters(double lon, double lat) const noexcept {
  return {(lon - min_lon) * meters_per_degree_lon(), (lat - min_lat) * meters_per_degree_lat()};
}

GridMap build_grid_map(std::span<const SpatioTemporalPoint> points, double cell_size) {
  if (points.empty()) throw DataError("build_grid_map: no points");
  if (!(cell_size > 0.0)) throw ConfigError("build_grid_map: cell_size must be positive");

  GridMap gm;
  gm.cell_size = cell_size;
  gm.min_lon = gm.max_lon = points.front().lon;
  gm.min_lat = gm.max_lat = points.front().lat;
  for (const auto& p : points) {
    gm.min_lon = std::min(gm.min_lon, p.lon);
    gm.max_lon = std::max(gm.max_lon, p.lon);
    gm.min_lat = std::min(gm.min_lat, p.lat);
    gm.max_lat = std::max(gm.max_lat, p.lat);
  }
  auto [w, h] = gm.to_meters(gm.max_lon, gm.max_lat);
  gm.cols = cells_for_extent(w, cell_size);
  gm.rows = cells_for_extent(h, cell_size);
  return gm;
}

GridIndex map_point_to_grid(const SpatioTemporalPoint& p, const GridMap& gm) {
  auto [x, y] = gm.to_meters(p.lon, p.lat);
  auto [w, h] = gm.to_meters(gm.max_lon, gm.max_lat);
  const double slack = gm.cell_size;
  if (!(x >= -slack && x <= w + slack && y >= -slack && y <= h + slack)) {
    std::ostringstream msg;
    msg.precision(10);
    msg << "point (lon=" << p.lon << ", lat=" << p.lat << ") lies outside the grid map";
    throw DataError(msg.str());
  }
  auto col = static_cast<std::int64_t>(std::floor(x / gm.cell_size));
  auto row = static_cast<std::int64_t>(std::floor(y / gm.cell_size));
  col = std::clamp<std::int64_t>(col, 0, gm.cols - 1);
  row = std::clamp<std::int64_t>(row, 0, gm.rows - 1);
  return static_cast<GridIndex>(row * gm.cols + col);
}

std::vector<SubTrajectory> split_trajectory_by_interval(const RawTrajectory& tr, double tau) {
  if (!(tau > 0.0)) throw ConfigError("interval length tau must be positive");
  std::vector<SubTrajectory> out;
  for (const auto& p : tr.points) {
    auto idx = static_cast<std::int64_t>(std::floor(p.t / tau));
    if (out.empty() || out.back().interval_index != idx) {
      out.push_back(SubTrajectory{tr.user_id, idx, {}});
    }
    out.back().points.push_back(p);
  }
  return out;
}

std::vector<int> encode_motion_states(const SubTrajectory& st, const MotionThresholds& th) {
  const auto& pts = st.points;
  std::vector<int> states(pts.size(), 0);
  if (pts.size() < 3) return states;

  double mean_lat = 0.0;
  for (const auto& p : pts) mean_lat += p.lat;
  mean_lat /= static_cast<double>(pts.size());
  const double kx = kMetersPerDegree * std::cos(mean_lat * std::numbers::pi / 180.0);
  const double ky = kMetersPerDegree;
  const double turn = th.turn_degrees * std::numbers::pi / 180.0;

  struct Segment {
    double dx, dy, dt;
  };
  auto segment = [&](std::size_t a, std::size_t b) {
    return Segment{(pts[b].lon - pts[a].lon) * kx, (pts[b].lat - pts[a].lat) * ky,
                   pts[b].t - pts[a].t};
  };

  for (std::size_t i = 2; i < pts.size(); ++i) {
    Segment prev = segment(i - 2, i - 1);
    Segment cur = segment(i - 1, i);

    int speed_class = 0;
    if (prev.dt > 0.0 && cur.dt > 0.0) {
      double v_prev = std::hypot(prev.dx, prev.dy) / prev.dt;
      double v_cur = std::hypot(cur.dx, cur.dy) / cur.dt;
      if (v_cur > (1.0 + th.speed_tolerance) * v_prev) {
        speed_class = 1;
      } else if (v_cur < (1.0 - th.speed_tolerance) * v_prev) {
        speed_class = 2;
      }
    }

    int direction_class = 0;
    bool prev_moves = prev.dx != 0.0 || prev.dy != 0.0;
    bool cur_moves = cur.dx != 0.0 || cur.dy != 0.0;
    if (prev_moves && cur_moves) {
      double delta = std::atan2(cur.dy, cur.dx) - std::atan2(prev.dy, prev.dx);
      // wrap into (-pi, pi]
      while (delta > std::numbers::pi) delta -= 2.0 * std::numbers::pi;
      while (delta <= -std::numbers::pi) delta += 2.0 * std::numbers::pi;
      if (delta > turn) {
        direction_class = 1;
      } else if (delta < -turn) {
        direction_class = 2;
      }
    }
    states[i] = 3 * speed_class + direction_class;
  }
  return states;
}

void validate_time_window(std::int64_t window_len) {
  if (window_len <= 0 || kSecondsPerDay % window_len != 0) {
    throw ConfigError("time_window must be a positive divisor of 86400 seconds, got " +
                      std::to_string(window_len));
  }
}

std::int64_t time_window_vocab(std::int64_t window_len) {
  validate_time_window(window_len);
  return kSecondsPerDay / window_len;
}

std::vector<int> encode_time_windows(const SubTrajectory& st, std::int64_t window_len) {
  validate_time_window(window_len);
  std::vector<int> out;
  out.reserve(st.points.size());
  for (const auto& p : st.points) {
    auto secs = static_cast<std::int64_t>(std::floor(p.t));
    auto of_day = ((secs % kSecondsPerDay) + kSecondsPerDay) % kSecondsPerDay;
    out.push_back(static_cast<int>(of_day / window_len));
  }
  return out;
}

GridSequence to_grid_sequence(const SubTrajectory& st, const GridMap& gm,
                              std::int64_t window_len, const MotionThresholds& thresholds) {
  auto states = encode_motion_states(st, thresholds);
  auto windows = encode_time_windows(st, window_len);
  GridSequence seq{st.user_id, st.interval_index, {}};
  seq.entries.reserve(st.points.size());
  for (std::size_t i = 0; i < st.points.size(); ++i) {
    seq.entries.push_back(
        GridEntry{st.points[i].t, map_point_to_grid(st.points[i], gm), states[i], windows[i]});
  }
  return seq;
}

SplitCounts split_counts(std::size_t n) {
  if (n == 0) return {};
  SplitCounts c;
  c.train = std::max<std::size_t>(1, (n * 6) / 10);
  std::size_t rest = n - c.train;
  c.validation = rest / 2;
  c.test = rest - c.validation;
  return c;
}

DatasetSplit chronological_split(std::span<const SubTrajectory> subs) {
  return split_by_user(subs, [](const SubTrajectory& s) { return s.interval_index; });
}

DatasetSplit chronological_split(std::span<const GridSequence> seqs) {
  return split_by_user(seqs, [](const GridSequence& s) { return s.interval_index; });
}

bool user_id_less(const std::string& a, const std::string& b) {
  auto numeric = [](const std::string& s) {
    return !s.empty() && std::all_of(s.begin(), s.end(),
                                     [](unsigned char c) { return std::isdigit(c) != 0; });
  };
  if (numeric(a) && numeric(b)) {
    auto strip = [](const std::string& s) {
      auto nz = s.find_first_not_of('0');
      return nz == std::string::npos ? std::string("0") : s.substr(nz);
    };
    auto sa = strip(a), sb = strip(b);
    if (sa.size() != sb.size()) return sa.size() < sb.size();
    if (sa != sb) return sa < sb;
  }
  return a < b;
}

LoadedDataset read_dataset(std::istream& in, double max_failure_rate) {
  LoadedDataset ds;
  std::map<std::string, std::vector<SpatioTemporalPoint>> by_user;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    std::string_view view = trim(line);
    if (view.empty()) continue;
    auto fields = split_fields(view);
    if (first) {
      first = false;
      double probe = 0.0;
      if (fields.size() >= 2 && !parse_double(fields[1], probe)) continue;  // header
    }
    ++ds.lines;
    SpatioTemporalPoint p;
    std::string_view user = fields.empty() ? std::string_view{} : trim(fields[0]);
    bool ok = fields.size() == 4 && !user.empty() && parse_double(fields[1], p.t) &&
              parse_double(fields[2], p.lat) && parse_double(fields[3], p.lon) &&
              p.lat >= -90.0 && p.lat <= 90.0 && p.lon >= -180.0 && p.lon <= 180.0;
    if (!ok) {
      ++ds.failures;
      continue;
    }
    ++ds.records;
    by_user[std::string(user)].push_back(p);
  }
  if (ds.records == 0) throw DataError("dataset contains no parseable records");
  if (static_cast<double>(ds.failures) > max_failure_rate * static_cast<double>(ds.lines)) {
    throw DataError(std::to_string(ds.failures) + " of " + std::to_string(ds.lines) +
                    " lines failed to parse (limit " +
                    std::to_string(max_failure_rate * 100.0) + "%)");
  }

  for (auto& [user, pts] : by_user) {
    std::stable_sort(pts.begin(), pts.end(),
                     [](const auto& a, const auto& b) { return a.t < b.t; });
    ds.trajectories.push_back(RawTrajectory{user, std::move(pts)});
  }
  std::stable_sort(ds.trajectories.begin(), ds.trajectories.end(),
                   [](const auto& a, const auto& b) { return user_id_less(a.user_id, b.user_id); });
  return ds;
}

LoadedDataset read_dataset_file(const std::string& path, double max_failure_rate) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset " + path);
  return read_dataset(in, max_failure_rate);
}

}  // namespace attntul
