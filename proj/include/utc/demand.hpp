#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "utc/network.hpp"

namespace utc {

enum class Mode : std::uint8_t { walk = 0, vehicle = 1, bus = 2, subway = 3, taxi = 4 };
inline constexpr std::size_t kModeCount = 5;
inline constexpr std::array<Mode, kModeCount> kModes{Mode::walk, Mode::vehicle, Mode::bus,
                                                    Mode::subway, Mode::taxi};

std::string_view to_string(Mode mode) noexcept;
Mode parse_mode(std::string_view text);

/// Per-zone activity intensity Q, aligned with the network's zone order.
struct ActivityProfile {
  std::vector<Id> zones;
  std::vector<double> intensity;
};

/// Q_i = w_pop * norm(pop_i) + w_poi * norm(poi_i), each input min-max
/// normalised over zones. A constant input normalises to 1 where positive.
ActivityProfile compute_activity(const TrafficNetwork& net, double w_pop, double w_poi);

using ModeShares = std::array<double, kModeCount>;

struct ODMatrix {
  std::vector<Id> zones;
  std::vector<double> total;         // trips/day, row-major origin x destination
  std::vector<ModeShares> by_mode;   // empty until a mode split is applied
  std::vector<std::string> category; // empty until a mode split is applied

  std::size_t size() const noexcept { return zones.size(); }
  double at(std::size_t i, std::size_t j) const { return total[i * zones.size() + j]; }
  double mode_demand(std::size_t i, std::size_t j, Mode m) const {
    return by_mode[i * zones.size() + j][static_cast<std::size_t>(m)];
  }
  bool has_modes() const noexcept { return !by_mode.empty(); }
};

/// Gravity model normalised to a daily total:
/// D_ij = total * (Q_i Q_j / e_ij) / sum_kl (Q_k Q_l / e_kl).
/// `impedance` is row-major zone x zone.
ODMatrix gravity_demand(const ActivityProfile& activity, std::span<const double> impedance,
                        double total_trips);

class ModeSplitTable {
 public:
  /// Rows are validated (entries in [0,1], sum within 1e-9 of 1) and then
  /// renormalised so the marginal holds to rounding.
  void set(const std::string& category, const ModeShares& shares);
  const ModeShares& row(const std::string& category) const;
  bool contains(const std::string& category) const { return rows_.count(category) > 0; }
  const std::map<std::string, ModeShares>& rows() const noexcept { return rows_; }

  static ModeSplitTable from_json(const nlohmann::json& doc);
  nlohmann::json to_json() const;
  /// Illustrative survey-style shares over the distance x purpose categories.
  static ModeSplitTable defaults();

 private:
  std::map<std::string, ModeShares> rows_;
};

using Categorizer = std::function<std::string(std::size_t origin, std::size_t dest)>;

/// "<1km", "1-5km", "5-15km" or ">15km".
std::string distance_bin(double meters);

/// Category key "<purpose>|<distance bin>" from centroid distance; purpose is
/// looked up per (origin id, dest id) and defaults to "other".
Categorizer distance_purpose_categorizer(const TrafficNetwork& net,
                                         std::map<std::pair<Id, Id>, std::string> purposes = {});

ODMatrix apply_mode_split(ODMatrix od, const ModeSplitTable& table, const Categorizer& categorize);

struct Trip {
  std::uint64_t id = 0;
  Id origin;
  Id destination;
  Mode mode = Mode::vehicle;
  double departure_time = 0.0;  // seconds since midnight

  friend bool operator==(const Trip&, const Trip&) = default;
};

using TemporalProfile = std::array<double, 24>;

TemporalProfile uniform_profile();
/// Elevated weights 06:00-10:00 and 15:00-20:00.
TemporalProfile rush_hour_profile();
TemporalProfile profile_from_json(const nlohmann::json& doc);

/// Poisson sampling per (hour, origin, dest, mode) cell with a counter-based
/// stream keyed on the cell, so the result is independent of iteration order.
/// Departures are uniform within the hour; output sorted by departure time.
std::vector<Trip> sample_trips(const ODMatrix& od, const TemporalProfile& profile, std::uint64_t seed);

/// Demand statistics in the regional-summary shape: every mode is reported,
/// public transit = bus + subway.
struct DemandStats {
  double walk = 0.0;
  double vehicle = 0.0;
  double bus = 0.0;
  double subway = 0.0;
  double taxi = 0.0;

  double public_transit() const noexcept { return bus + subway; }
  double total() const noexcept { return walk + vehicle + bus + subway + taxi; }
  nlohmann::json to_json() const;
};

DemandStats demand_stats(std::span<const Trip> trips);
DemandStats demand_stats(const ODMatrix& od);

nlohmann::json to_json(const Trip& trip);
nlohmann::json to_json(const ODMatrix& od);

}  // namespace utc
