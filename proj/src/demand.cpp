#include "utc/demand.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "utc/rng.hpp"

namespace utc {

using nlohmann::json;

std::string_view to_string(Mode mode) noexcept {
  switch (mode) {
    case Mode::walk: return "walk";
    case Mode::vehicle: return "vehicle";
    case Mode::bus: return "bus";
    case Mode::subway: return "subway";
    case Mode::taxi: return "taxi";
  }
  return "vehicle";
}

Mode parse_mode(std::string_view text) {
  for (Mode m : kModes) {
    if (to_string(m) == text) return m;
  }
  throw Error(Errc::validation, "unknown mode '" + std::string(text) + "'");
}

namespace {

std::vector<double> min_max(const std::vector<double>& v) {
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  std::vector<double> out(v.size(), 0.0);
  const double range = *hi - *lo;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (range > 0) {
      out[i] = (v[i] - *lo) / range;
    } else {
      out[i] = v[i] > 0 ? 1.0 : 0.0;
    }
  }
  return out;
}

}  // namespace

ActivityProfile compute_activity(const TrafficNetwork& net, double w_pop, double w_poi) {
  if (w_pop < 0 || w_poi < 0 || (w_pop == 0 && w_poi == 0)) {
    throw Error(Errc::precondition, "activity weights must be >= 0 and not both zero");
  }
  const auto& zones = net.zones();
  std::vector<double> pop, poi;
  for (const Zone& z : zones) {
    pop.push_back(z.population_density);
    poi.push_back(z.poi_count);
  }
  const auto np = min_max(pop);
  const auto nq = min_max(poi);
  ActivityProfile out;
  bool any = false;
  for (std::size_t i = 0; i < zones.size(); ++i) {
    out.zones.push_back(zones[i].id);
    out.intensity.push_back(w_pop * np[i] + w_poi * nq[i]);
    any = any || out.intensity.back() > 0;
  }
  if (!any) throw Error(Errc::validation, "all zones have zero activity");
  return out;
}

ODMatrix gravity_demand(const ActivityProfile& activity, std::span<const double> impedance,
                        double total_trips) {
  const std::size_t n = activity.zones.size();
  if (!(total_trips > 0)) throw Error(Errc::precondition, "total_trips must be > 0");
  if (impedance.size() != n * n) throw Error(Errc::precondition, "impedance table must be zones x zones");
  for (double e : impedance) {
    if (!(e > 0)) throw Error(Errc::precondition, "impedance values must be > 0");
  }
  ODMatrix od;
  od.zones = activity.zones;
  od.total.assign(n * n, 0.0);
  double denom = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double w = activity.intensity[i] * activity.intensity[j] / impedance[i * n + j];
      od.total[i * n + j] = w;
      denom += w;
    }
  }
  if (!(denom > 0)) throw Error(Errc::validation, "degenerate activity: gravity denominator is zero");
  for (double& d : od.total) d = total_trips * d / denom;
  return od;
}

void ModeSplitTable::set(const std::string& category, const ModeShares& shares) {
  double sum = 0.0;
  for (double p : shares) {
    if (!(p >= 0.0 && p <= 1.0)) {
      throw Error(Errc::validation, "mode split '" + category + "': probabilities must be in [0,1]");
    }
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw Error(Errc::validation, "mode split '" + category + "': row sums to " + std::to_string(sum));
  }
  ModeShares row = shares;
  for (double& p : row) p /= sum;
  rows_[category] = row;
}

const ModeShares& ModeSplitTable::row(const std::string& category) const {
  auto it = rows_.find(category);
  if (it == rows_.end()) throw Error(Errc::not_found, "unknown mode-split category '" + category + "'");
  return it->second;
}

ModeSplitTable ModeSplitTable::from_json(const json& doc) {
  if (!doc.is_object()) throw Error(Errc::validation, "mode split table must be an object");
  ModeSplitTable table;
  for (const auto& [category, row] : doc.items()) {
    ModeShares shares{};
    for (const auto& [mode, p] : row.items()) {
      shares[static_cast<std::size_t>(parse_mode(mode))] = p.get<double>();
    }
    table.set(category, shares);
  }
  return table;
}

json ModeSplitTable::to_json() const {
  json out = json::object();
  for (const auto& [category, row] : rows_) {
    json r = json::object();
    for (Mode m : kModes) r[std::string(to_string(m))] = row[static_cast<std::size_t>(m)];
    out[category] = r;
  }
  return out;
}

ModeSplitTable ModeSplitTable::defaults() {
  // walk, vehicle, bus, subway, taxi
  ModeSplitTable t;
  t.set("other|<1km", {0.60, 0.15, 0.10, 0.05, 0.10});
  t.set("other|1-5km", {0.15, 0.30, 0.25, 0.20, 0.10});
  t.set("other|5-15km", {0.02, 0.40, 0.20, 0.30, 0.08});
  t.set("other|>15km", {0.00, 0.50, 0.10, 0.35, 0.05});
  t.set("home-work|<1km", {0.55, 0.15, 0.15, 0.10, 0.05});
  t.set("home-work|1-5km", {0.10, 0.25, 0.30, 0.30, 0.05});
  t.set("home-work|5-15km", {0.01, 0.35, 0.20, 0.40, 0.04});
  t.set("home-work|>15km", {0.00, 0.45, 0.10, 0.42, 0.03});
  return t;
}

std::string distance_bin(double meters) {
  if (meters < 1000.0) return "<1km";
  if (meters < 5000.0) return "1-5km";
  if (meters < 15000.0) return "5-15km";
  return ">15km";
}

Categorizer distance_purpose_categorizer(const TrafficNetwork& net,
                                         std::map<std::pair<Id, Id>, std::string> purposes) {
  std::vector<Point> centroids;
  std::vector<Id> ids;
  for (const Zone& z : net.zones()) {
    centroids.push_back(z.centroid);
    ids.push_back(z.id);
  }
  return [centroids = std::move(centroids), ids = std::move(ids),
          purposes = std::move(purposes)](std::size_t i, std::size_t j) {
    auto it = purposes.find({ids[i], ids[j]});
    const std::string purpose = it == purposes.end() ? "other" : it->second;
    return purpose + "|" + distance_bin(distance(centroids[i], centroids[j]));
  };
}

ODMatrix apply_mode_split(ODMatrix od, const ModeSplitTable& table, const Categorizer& categorize) {
  const std::size_t n = od.size();
  od.by_mode.assign(n * n, ModeShares{});
  od.category.assign(n * n, {});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t k = i * n + j;
      od.category[k] = categorize(i, j);
      const ModeShares& p = table.row(od.category[k]);
      for (std::size_t m = 0; m < kModeCount; ++m) od.by_mode[k][m] = od.total[k] * p[m];
    }
  }
  return od;
}

TemporalProfile uniform_profile() {
  TemporalProfile p;
  p.fill(1.0);
  return p;
}

TemporalProfile rush_hour_profile() {
  TemporalProfile p;
  for (int h = 0; h < 24; ++h) {
    const bool peak = (h >= 6 && h < 10) || (h >= 15 && h < 20);
    const bool night = h < 5;
    p[h] = peak ? 3.0 : (night ? 0.3 : 1.0);
  }
  return p;
}

TemporalProfile profile_from_json(const json& doc) {
  if (doc.is_string()) {
    const auto name = doc.get<std::string>();
    if (name == "uniform") return uniform_profile();
    if (name == "rush_hour") return rush_hour_profile();
    throw Error(Errc::validation, "unknown temporal profile '" + name + "'");
  }
  TemporalProfile p{};
  if (doc.is_array()) {
    if (doc.size() != 24) throw Error(Errc::validation, "temporal profile needs 24 hourly weights");
    for (std::size_t h = 0; h < 24; ++h) p[h] = doc[h].get<double>();
  } else if (doc.is_object()) {
    for (const auto& [hour, w] : doc.items()) {
      const int h = std::stoi(hour);
      if (h < 0 || h > 23) throw Error(Errc::validation, "profile hour out of range: " + hour);
      p[h] = w.get<double>();
    }
  } else {
    throw Error(Errc::validation, "temporal profile must be an array, object or name");
  }
  return p;
}

std::vector<Trip> sample_trips(const ODMatrix& od, const TemporalProfile& profile, std::uint64_t seed) {
  double weight_sum = 0.0;
  for (double w : profile) {
    if (w < 0) throw Error(Errc::precondition, "temporal profile weights must be >= 0");
    weight_sum += w;
  }
  if (!(weight_sum > 0)) throw Error(Errc::precondition, "temporal profile is all zero");
  if (!od.has_modes()) throw Error(Errc::precondition, "OD matrix has no mode split");

  struct Draw {
    double departure;
    std::size_t origin, dest, mode;
  };
  std::vector<Draw> draws;
  const std::size_t n = od.size();
  for (std::size_t h = 0; h < 24; ++h) {
    if (profile[h] == 0.0) continue;
    const double share = profile[h] / weight_sum;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t m = 0; m < kModeCount; ++m) {
          const double mean = od.by_mode[i * n + j][m] * share;
          if (mean <= 0) continue;
          CounterRng rng(hash_key({seed, h, i, j, m}));
          const std::uint64_t count = rng.poisson(mean);
          for (std::uint64_t k = 0; k < count; ++k) {
            double t = static_cast<double>(h) * 3600.0 + rng.uniform() * 3600.0;
            t = std::min(t, std::nextafter(static_cast<double>(h + 1) * 3600.0, 0.0));
            draws.push_back({t, i, j, m});
          }
        }
      }
    }
  }
  std::sort(draws.begin(), draws.end(), [](const Draw& a, const Draw& b) {
    if (a.departure != b.departure) return a.departure < b.departure;
    if (a.origin != b.origin) return a.origin < b.origin;
    if (a.dest != b.dest) return a.dest < b.dest;
    return a.mode < b.mode;
  });
  std::vector<Trip> trips;
  trips.reserve(draws.size());
  for (std::size_t k = 0; k < draws.size(); ++k) {
    const Draw& d = draws[k];
    trips.push_back({k + 1, od.zones[d.origin], od.zones[d.dest], static_cast<Mode>(d.mode), d.departure});
  }
  return trips;
}

json DemandStats::to_json() const {
  return json{{"Taxi", taxi},         {"Public Transit", public_transit()},
              {"Walk", walk},         {"Vehicle", vehicle},
              {"Bus", bus},           {"Subway", subway},
              {"Total", total()}};
}

namespace {
void add_mode(DemandStats& s, Mode m, double v) {
  switch (m) {
    case Mode::walk: s.walk += v; break;
    case Mode::vehicle: s.vehicle += v; break;
    case Mode::bus: s.bus += v; break;
    case Mode::subway: s.subway += v; break;
    case Mode::taxi: s.taxi += v; break;
  }
}
}  // namespace

DemandStats demand_stats(std::span<const Trip> trips) {
  DemandStats s;
  for (const Trip& t : trips) add_mode(s, t.mode, 1.0);
  return s;
}

DemandStats demand_stats(const ODMatrix& od) {
  DemandStats s;
  for (const auto& cell : od.by_mode) {
    for (Mode m : kModes) add_mode(s, m, cell[static_cast<std::size_t>(m)]);
  }
  return s;
}

json to_json(const Trip& trip) {
  return json{{"id", trip.id},
              {"origin", trip.origin},
              {"destination", trip.destination},
              {"mode", to_string(trip.mode)},
              {"departure_time", trip.departure_time}};
}

json to_json(const ODMatrix& od) {
  json cells = json::array();
  const std::size_t n = od.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      json c{{"origin", od.zones[i]}, {"destination", od.zones[j]}, {"total", od.at(i, j)}};
      if (od.has_modes()) {
        c["category"] = od.category[i * n + j];
        for (Mode m : kModes) c[std::string(to_string(m))] = od.mode_demand(i, j, m);
      }
      cells.push_back(std::move(c));
    }
  }
  return json{{"zones", od.zones}, {"cells", cells}};
}

}  // namespace utc
