#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "utc/reward.hpp"
#include "utc/state.hpp"

namespace utc {

inline constexpr double kDefaultDt = 1.0;

/// Vehicles wait outside the network until their first lane has space; taxis
/// start idle at zone anchors, round-robin over zones in network order.
EnvState init_state(std::shared_ptr<const TrafficNetwork> net, std::vector<Trip> trips,
                    std::size_t fleet_size, std::uint64_t seed, DynamicsParams params = {});

/// Advances the state by one tick of `dt` seconds. Sub-step order: inject due
/// trips, apply plans, transit, taxis, lane traversal and discharge, accumulate.
/// Plans in `actions` are validated and applied idempotently.
void step(EnvState& state, const ActionBundle& actions, double dt = kDefaultDt);

/// `horizon / dt` sequential steps, then metrics over the interval.
struct HorizonResult {
  EnvState state;
  HorizonMetrics metrics;
};
HorizonResult run_horizon(EnvState state, const ActionBundle& actions, double horizon,
                          double dt = kDefaultDt, std::span<const Task> tasks = kAllTasks);

/// Deep copy. Shared context is immutable, so sharing it keeps clones independent.
inline EnvState clone_state(const EnvState& state) { return state; }

/// 64-bit FNV-1a digest over the canonical field order documented in
/// docs/state_hash.md.
std::uint64_t state_hash(const EnvState& state);

/// Conservation and capacity checks; returns a description of the first violation.
std::optional<std::string> check_invariants(const EnvState& state);

/// Bus: grams of fuel. Subway: watt-hours. Idle time does not cost subways.
double consumption_update(VehicleKind kind, double meters, double idle_seconds, double stops,
                          const ConsumptionModel& model = {});

/// Phase index active at time t, or nullopt during lost time.
std::optional<std::size_t> active_phase(const SignalState& signal, const Junction& junction,
                                        double t);
/// `to_lane == SIZE_MAX` asks about leaving the network at the lane's end.
bool movement_green(const EnvState& state, std::size_t from_lane, std::size_t to_lane, double t);
/// Share of the cycle in which the lane may discharge (1 when ungated).
double green_fraction(const EnvState& state, std::size_t lane);

/// Accumulated waiting of a vehicle including its currently open halting spell.
double current_waiting(const EnvState& state, const Vehicle& v);

/// Places a vehicle directly at the back of a lane queue; used by tests and
/// fixtures that need a constructed congestion pattern.
VehicleId place_queued_vehicle(EnvState& state, std::size_t lane, std::vector<std::uint32_t> path = {});

}  // namespace utc
