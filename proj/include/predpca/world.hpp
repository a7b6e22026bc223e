#pragma once

// A deterministic synthetic country used in place of real monitor sites and
// GIS layers: cities with rank-size populations, a highway network joining
// neighbouring cities, arterial and local roads, rail, ports, airports, a
// coastline, and smooth land-cover and elevation fields. Covariates carry
// small location-specific noise that is a pure function of the coordinates.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "predpca/linalg.hpp"
#include "predpca/preprocess.hpp"
#include "predpca/rng.hpp"

namespace predpca {

inline constexpr std::uint64_t kDefaultWorldSeed = 20160301;

class SyntheticWorld {
 public:
  struct City {
    Location at;
    double population;
    double spread_km;
  };
  struct Segment {
    Location a, b;
  };

  explicit SyntheticWorld(std::uint64_t seed = kDefaultWorldSeed) : seed_(seed) {
    Rng rng(mix_seed(seed, 0));
    while (cities_.size() < kCities) {
      const Location c{rng.uniform(150.0, kWidth - 150.0), rng.uniform(150.0, kHeight - 150.0)};
      const bool spaced = std::all_of(cities_.begin(), cities_.end(),
                                      [&](const City& o) { return distance_km(o.at, c) > 140.0; });
      if (!spaced) continue;
      const double rank = static_cast<double>(cities_.size() + 1);
      const double pop = 4.0e6 * std::pow(rank, -1.05);
      cities_.push_back({c, pop, 6.0 * std::pow(pop / 1.0e5, 0.35)});
    }

    for (std::size_t i = 0; i < cities_.size(); ++i) {
      std::vector<std::pair<double, std::size_t>> near;
      for (std::size_t j = 0; j < cities_.size(); ++j)
        if (j != i) near.push_back({distance_km(cities_[i].at, cities_[j].at), j});
      std::sort(near.begin(), near.end());
      for (std::size_t r = 0; r < 3; ++r) {
        const std::size_t j = near[r].second;
        if (j < i && is_neighbour(j, i)) continue;  // already joined from j
        highways_.push_back({cities_[i].at, cities_[j].at});
        if (highways_.size() % 2 == 0) rail_.push_back({cities_[i].at, cities_[j].at});
      }
      const int spokes = 4 + static_cast<int>(rng.index(3));
      for (int s = 0; s < spokes; ++s) {
        const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
        const double len = 20.0 + 25.0 * std::log10(cities_[i].population / 1.0e4);
        arterials_.push_back({cities_[i].at, {cities_[i].at.x_km + len * std::cos(angle),
                                              cities_[i].at.y_km + len * std::sin(angle)}});
      }
      if (i < 20)
        airports_.push_back({cities_[i].at.x_km + rng.uniform(-15.0, 15.0),
                             cities_[i].at.y_km + rng.uniform(-15.0, 15.0)});
    }

    for (int i = 0; i < 4000; ++i) {
      if (rng.uniform() < 0.75) {
        const City& c = cities_[pick_city(rng, 0.7)];
        local_roads_.push_back({c.at.x_km + 2.5 * c.spread_km * rng.normal(),
                                c.at.y_km + 2.5 * c.spread_km * rng.normal()});
      } else {
        local_roads_.push_back({rng.uniform(0.0, kWidth), rng.uniform(0.0, kHeight)});
      }
    }
    for (int i = 0; i < 6; ++i) ports_.push_back({1.0, rng.uniform(200.0, kHeight - 200.0)});
    for (int i = 0; i < 5; ++i) ports_.push_back({kWidth - 1.0, rng.uniform(200.0, kHeight - 200.0)});
    for (int i = 0; i < 3; ++i) ports_.push_back({rng.uniform(kGulfLo, kGulfHi), 1.0});
    for (int i = 0; i < 60; ++i) {
      const City& c = cities_[pick_city(rng, 1.0)];
      emitters_.push_back({c.at.x_km + 30.0 * rng.normal(), c.at.y_km + 30.0 * rng.normal()});
    }
    for (int i = 0; i < 60; ++i) lakes_.push_back({rng.uniform(0.0, kWidth), rng.uniform(0.0, kHeight)});
    for (auto& mode : modes_)
      mode = {rng.uniform(400.0, 2200.0), rng.uniform(0.0, 2.0 * std::numbers::pi),
              rng.uniform(0.0, 2.0 * std::numbers::pi), rng.uniform(0.0, 2.0 * std::numbers::pi)};
  }

  std::uint64_t seed() const { return seed_; }
  const std::vector<City>& cities() const { return cities_; }
  static constexpr double width_km() { return kWidth; }
  static constexpr double height_km() { return kHeight; }

  /// n distinct sites, a fraction `urban` clustered around cities and the
  /// rest spread over the whole domain.
  std::vector<Location> location_pool(std::size_t n, std::uint64_t stream, double urban = 0.65) const {
    Rng rng(mix_seed(seed_, 1000 + stream));
    std::vector<Location> out;
    out.reserve(n);
    while (out.size() < n) {
      Location s;
      if (rng.uniform() < urban) {
        const City& c = cities_[pick_city(rng, 0.6)];
        s = {c.at.x_km + 3.0 * c.spread_km * rng.normal(), c.at.y_km + 3.0 * c.spread_km * rng.normal()};
      } else {
        s = {rng.uniform(0.0, kWidth), rng.uniform(0.0, kHeight)};
      }
      s.x_km = std::clamp(s.x_km, 2.0, kWidth - 2.0);
      s.y_km = std::clamp(s.y_km, 2.0, kHeight - 2.0);
      s.x_km = std::round(s.x_km * 1000.0) / 1000.0;
      s.y_km = std::round(s.y_km * 1000.0) / 1000.0;
      out.push_back(s);
    }
    for (std::size_t i = 1; i < out.size(); ++i)
      for (std::size_t j = 0; j < i; ++j)
        if (out[i] == out[j]) out[i].x_km += 0.001 * static_cast<double>(i);
    return out;
  }

  static std::vector<std::string> covariate_names() {
    return {"dist_a1",     "dist_a2",      "dist_a3",    "dist_rail",  "dist_port",
            "dist_coast",  "dist_airport", "dist_major", "pop_1km",    "pop_5km",
            "pop_15km",    "imperv_1km",   "imperv_5km", "forest_5km", "agri_5km",
            "ndvi_250m",   "ndvi_1km",     "ndvi_5km",   "elevation",  "water_1km",
            "emitters_5km"};
  }

  RawCovariateTable covariates(std::span<const Location> locs) const {
    RawCovariateTable t;
    t.names = covariate_names();
    for (const auto& name : t.names) t.kinds.push_back(kind_from_name(name));
    t.values.resize(static_cast<Eigen::Index>(locs.size()), static_cast<Eigen::Index>(t.names.size()));
    for (std::size_t i = 0; i < locs.size(); ++i) {
      t.location_ids.push_back(std::to_string(i + 1));
      const auto row = covariate_row(locs[i]);
      for (std::size_t j = 0; j < row.size(); ++j)
        t.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = row[j];
    }
    return t;
  }

 private:
  static constexpr std::size_t kCities = 40;
  static constexpr double kWidth = 4500.0, kHeight = 2700.0;
  static constexpr double kGulfLo = 2400.0, kGulfHi = 3900.0;

  struct Mode {
    double wavelength, angle, phase, phase2;
  };

  bool is_neighbour(std::size_t a, std::size_t b) const {
    std::vector<std::pair<double, std::size_t>> near;
    for (std::size_t j = 0; j < cities_.size(); ++j)
      if (j != a) near.push_back({distance_km(cities_[a].at, cities_[j].at), j});
    std::sort(near.begin(), near.end());
    for (std::size_t r = 0; r < 3; ++r)
      if (near[r].second == b) return true;
    return false;
  }

  std::size_t pick_city(Rng& rng, double power) const {
    std::vector<double> w;
    for (const auto& c : cities_) w.push_back(std::pow(c.population, power));
    return rng.categorical(w);
  }

  static double segment_distance(const Location& p, const Segment& s) {
    const double dx = s.b.x_km - s.a.x_km, dy = s.b.y_km - s.a.y_km;
    const double len2 = dx * dx + dy * dy;
    double t = len2 > 0.0 ? ((p.x_km - s.a.x_km) * dx + (p.y_km - s.a.y_km) * dy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    return distance_km(p, {s.a.x_km + t * dx, s.a.y_km + t * dy});
  }
  static double nearest_segment(const Location& p, const std::vector<Segment>& segs) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& s : segs) best = std::min(best, segment_distance(p, s));
    return best;
  }
  static double nearest_point(const Location& p, const std::vector<Location>& pts) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& q : pts) best = std::min(best, distance_km(p, q));
    return best;
  }

  double field(const Location& p, std::size_t first, std::size_t count) const {
    double v = 0.0;
    for (std::size_t m = first; m < first + count; ++m) {
      const Mode& md = modes_[m];
      const double proj = p.x_km * std::cos(md.angle) + p.y_km * std::sin(md.angle);
      v += std::sin(2.0 * std::numbers::pi * proj / md.wavelength + md.phase);
    }
    return v / std::sqrt(static_cast<double>(count) / 2.0);
  }

  /// Population within `buffer_km`, from Gaussian city densities.
  double population(const Location& p, double buffer_km) const {
    double density = 4.0;  // rural people per km^2
    for (const auto& c : cities_) {
      const double s2 = c.spread_km * c.spread_km + 0.5 * buffer_km * buffer_km;
      const double d = distance_km(p, c.at);
      density += c.population / (2.0 * std::numbers::pi * s2) * std::exp(-d * d / (2.0 * s2));
    }
    return density * std::numbers::pi * buffer_km * buffer_km;
  }

  std::array<double, 21> covariate_row(const Location& p) const {
    Rng noise(mix_seed(seed_ ^ std::bit_cast<std::uint64_t>(p.x_km), std::bit_cast<std::uint64_t>(p.y_km)));
    auto jitter = [&](double sd) { return std::exp(sd * noise.normal()); };

    const double a1 = nearest_segment(p, highways_) * 1000.0 * jitter(0.1);
    const double a2 = std::min(nearest_segment(p, arterials_) * 1000.0, a1 * 1.5) * jitter(0.2);
    const double a3 = nearest_point(p, local_roads_) * 400.0 * jitter(0.5);
    const double rail = nearest_segment(p, rail_) * 1000.0 * jitter(0.1);
    const double port = nearest_point(p, ports_) * 1000.0;
    double coast_km = std::min(p.x_km, kWidth - p.x_km);
    if (p.x_km > kGulfLo && p.x_km < kGulfHi) coast_km = std::min(coast_km, p.y_km);
    const double coast = coast_km * 1000.0;
    const double airport = nearest_point(p, airports_) * 1000.0 * jitter(0.05);
    const double major = std::min(a1, a2);

    const double pop1 = population(p, 1.0) * jitter(0.3);
    const double pop5 = population(p, 5.0) * jitter(0.2);
    const double pop15 = population(p, 15.0) * jitter(0.1);
    const double dens1 = pop1 / std::numbers::pi, dens5 = pop5 / (25.0 * std::numbers::pi);
    const double imperv1 = std::clamp(95.0 * (1.0 - std::exp(-dens1 / 1500.0)) + 2.0 * noise.normal(), 0.0, 100.0);
    const double imperv5 = std::clamp(90.0 * (1.0 - std::exp(-dens5 / 1500.0)) + 1.0 * noise.normal(), 0.0, 100.0);

    const double forest_base = 50.0 + 30.0 * field(p, 0, 4) + 5.0 * noise.normal();
    const double forest = std::clamp(forest_base, 0.0, 100.0) * (1.0 - imperv5 / 100.0);
    const double agri_share = 0.5 + 0.25 * field(p, 4, 3);
    const double agri = std::clamp((100.0 - forest - imperv5) * agri_share + 3.0 * noise.normal(), 0.0, 100.0);
    auto ndvi = [&](double sd) {
      return 0.15 + 0.006 * forest + 0.003 * agri - 0.003 * imperv1 + sd * noise.normal();
    };
    const double ndvi250 = ndvi(0.08), ndvi1 = ndvi(0.04), ndvi5 = ndvi(0.02);
    const double mountain = (p.x_km - 1100.0) / 350.0;
    const double elevation =
        std::max(0.0, 250.0 + 1800.0 * std::exp(-mountain * mountain) + 250.0 * field(p, 7, 3) +
                          40.0 * noise.normal() + 0.05 * coast_km);

    double water = 0.0;
    if (coast_km < 8.0) water = 30.0 * (1.0 - coast_km / 8.0) * jitter(0.3);
    const double lake = nearest_point(p, lakes_);
    if (lake < 12.0) water += 50.0 * (1.0 - lake / 12.0) * jitter(0.3);
    double emitters = 0.0;
    for (const auto& e : emitters_)
      if (distance_km(p, e) < 5.0) emitters += 1.0;

    return {a1,     a2,       a3,      rail,     port,      coast,   airport,
            major,  pop1,     pop5,    pop15,    imperv1,   imperv5, forest,
            agri,   ndvi250,  ndvi1,   ndvi5,    elevation, water,   emitters};
  }

  std::uint64_t seed_;
  std::vector<City> cities_;
  std::vector<Segment> highways_, rail_, arterials_;
  std::vector<Location> local_roads_, ports_, airports_, emitters_, lakes_;
  std::array<Mode, 10> modes_{};
};

}  // namespace predpca
