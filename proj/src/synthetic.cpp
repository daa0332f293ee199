#include "attntul/synthetic.hpp"

#include "attntul/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <ostream>
#include <random>

namespace attntul {

namespace {

constexpr double kMetersPerDegree = 6371008.8 * std::numbers::pi / 180.0;

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * std::generate_canonical<double, 53>(rng);
}

std::size_t uniform_count(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return lo + static_cast<std::size_t>(rng() % (hi - lo + 1));
}

SpatioTemporalPoint at_offset(const SyntheticOptions& o, double t, double east, double north) {
  const double lat = o.origin_lat + north / kMetersPerDegree;
  const double lon =
      o.origin_lon + east / (kMetersPerDegree * std::cos(o.origin_lat * std::numbers::pi / 180.0));
  return {t, lon, lat};
}

void check(const SyntheticOptions& o) {
  if (o.users == 0 || o.per_user == 0) throw std::invalid_argument("synthetic: need users and sub-trajectories");
  if (o.min_points == 0 || o.min_points > o.max_points)
    throw std::invalid_argument("synthetic: bad point-count range");
  if (!(o.interval > 0.0)) throw std::invalid_argument("synthetic: interval must be positive");
}

// Point times spread over the first 80% of the interval.
std::vector<double> point_times(std::mt19937_64& rng, double start, double interval, std::size_t n) {
  std::vector<double> t(n);
  const double step = 0.8 * interval / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    t[i] = std::floor(start + step * (static_cast<double>(i) + uniform(rng, 0.0, 0.9)));
  return t;
}

std::string user_name(std::size_t u) { return std::to_string(u + 1); }

}  // namespace

std::vector<RawTrajectory> make_disjoint_regions(const SyntheticOptions& o) {
  check(o);
  std::mt19937_64 rng(o.seed);
  const std::size_t per_row = 5;
  const double side = 400.0, pitch = 600.0;
  std::vector<RawTrajectory> out;
  for (std::size_t u = 0; u < o.users; ++u) {
    const double x0 = static_cast<double>(u % per_row) * pitch;
    const double y0 = static_cast<double>(u / per_row) * pitch;
    RawTrajectory tr{user_name(u), {}};
    for (std::size_t k = 0; k < o.per_user; ++k) {
      const auto n = uniform_count(rng, o.min_points, o.max_points);
      for (double t : point_times(rng, static_cast<double>(k) * o.interval, o.interval, n))
        tr.points.push_back(at_offset(o, t, x0 + uniform(rng, 0.0, side), y0 + uniform(rng, 0.0, side)));
    }
    out.push_back(std::move(tr));
  }
  return out;
}

std::vector<RawTrajectory> make_shared_region_orders(const SyntheticOptions& o, std::size_t pool,
                                                     std::size_t route) {
  check(o);
  if (route == 0 || route > pool) throw std::invalid_argument("synthetic: route longer than pool");
  std::mt19937_64 rng(o.seed);
  const std::size_t per_row = 4;
  const double pitch = 100.0;

  std::vector<std::size_t> ids(pool);
  for (std::size_t i = 0; i < pool; ++i) ids[i] = i;

  std::vector<RawTrajectory> out;
  for (std::size_t u = 0; u < o.users; ++u) {
    std::vector<std::size_t> r = ids;
    std::shuffle(r.begin(), r.end(), rng);
    r.resize(route);
    RawTrajectory tr{user_name(u), {}};
    for (std::size_t k = 0; k < o.per_user; ++k) {
      const auto n = uniform_count(rng, o.min_points, o.max_points);
      const auto start = static_cast<std::size_t>(rng() % route);
      auto times = point_times(rng, static_cast<double>(k) * o.interval, o.interval, n);
      for (std::size_t i = 0; i < n; ++i) {
        const auto poi = r[(start + i) % route];
        const double east = static_cast<double>(poi % per_row) * pitch + 20.0;
        const double north = static_cast<double>(poi / per_row) * pitch + 20.0;
        tr.points.push_back(at_offset(o, times[i], east, north));
      }
    }
    out.push_back(std::move(tr));
  }
  return out;
}

void write_dataset_csv(std::ostream& out, const std::vector<RawTrajectory>& trajectories) {
  out << "user,timestamp,latitude,longitude\n";
  char buf[128];
  for (const auto& tr : trajectories)
    for (const auto& p : tr.points) {
      std::snprintf(buf, sizeof buf, ",%.0f,%.10f,%.10f\n", p.t, p.lat, p.lon);
      out << tr.user_id << buf;
    }
}

}  // namespace attntul
