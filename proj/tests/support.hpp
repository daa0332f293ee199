#pragma once

#include "attntul/mobility.hpp"
#include "attntul/tensor.hpp"

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

namespace testing {

inline constexpr double kMetersPerDegree = 6371008.8 * std::numbers::pi / 180.0;

// Point `east`/`north` metres from (lon0, lat0), using the same
// equirectangular scale as the library at latitude `ref_lat`.
inline attntul::SpatioTemporalPoint offset_point(double t, double east, double north,
                                                 double lon0 = 0.0, double lat0 = 0.0,
                                                 double ref_lat = 0.0) {
  return {t, lon0 + east / (kMetersPerDegree * std::cos(ref_lat * std::numbers::pi / 180.0)),
          lat0 + north / kMetersPerDegree};
}

inline std::vector<double> uniform_values(std::mt19937_64& rng, std::size_t n, double lo = -1.0,
                                          double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

inline attntul::ad::Tensor random_matrix(std::mt19937_64& rng, std::size_t r, std::size_t c,
                                         double lo = -1.0, double hi = 1.0) {
  return attntul::ad::Tensor::matrix(r, c, uniform_values(rng, r * c, lo, hi));
}

inline attntul::GridSequence sequence_of(std::vector<int> grids, std::string user = "u",
                                         std::int64_t interval = 0) {
  attntul::GridSequence s{std::move(user), interval, {}};
  double t = 0.0;
  for (int g : grids) s.entries.push_back({t += 60.0, g, 0, 0});
  return s;
}

// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
public:
  explicit TempDir(const std::string& tag) {
    static std::uint64_t counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("attntul-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const noexcept { return path_; }
  std::string str(const std::string& leaf = "") const { return (path_ / leaf).string(); }

private:
  std::filesystem::path path_;
};

}  // namespace testing
