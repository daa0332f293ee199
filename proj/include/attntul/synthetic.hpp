#pragma once

// Small generated mobility datasets with known user structure.

#include "attntul/mobility.hpp"

#include <cstdint>
#include <iosfwd>
#include <vector>

namespace attntul {

struct SyntheticOptions {
  std::size_t users = 10;
  std::size_t per_user = 30;      // sub-trajectories per user, one per interval
  std::size_t min_points = 5;
  std::size_t max_points = 10;
  double interval = 6 * 3600.0;   // seconds between sub-trajectory starts
  double origin_lat = 30.0;
  double origin_lon = 104.0;
  std::uint64_t seed = 1;
};

// Each user moves inside a private 400 m square; squares are 200 m apart.
std::vector<RawTrajectory> make_disjoint_regions(const SyntheticOptions& opts);

// All users draw from one pool of points of interest 100 m apart. Each
// user repeats a private route over part of the pool; a sub-trajectory is
// a cyclic window of that route, so users differ mainly in visit order.
std::vector<RawTrajectory> make_shared_region_orders(const SyntheticOptions& opts,
                                                     std::size_t pool = 10,
                                                     std::size_t route = 6);

// `user,timestamp,latitude,longitude` with a header line.
void write_dataset_csv(std::ostream& out, const std::vector<RawTrajectory>& trajectories);

}  // namespace attntul
