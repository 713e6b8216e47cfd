#pragma once

#include <cstdint>
#include <vector>

#include "uavdc/common.hpp"

namespace uavdc::scenario {

struct Region {
    double x_max = 1000.0;
    double y_max = 1000.0;

    bool contains(double x, double y) const { return x >= 0.0 && x <= x_max && y >= 0.0 && y <= y_max; }
};

struct GroundNode {
    int id = 0;
    double x = 0.0;
    double y = 0.0;
};

// State at slot n (post-move). velocity is the commanded velocity of the move
// that produced this state; position may have been clamped at the region
// boundary, in which case the commanded velocity is kept for the kinematic
// constraints (the boundary is a soft wall handled by the reward penalty).
struct UavState {
    double x = 0.0;
    double y = 0.0;
    double altitude = 50.0;
    double vx = 0.0;
    double vy = 0.0;
    int slot = 0;  // completed moves; 0 right after reset, 1..N afterwards
};

struct KinematicLimits {
    double v_min = 5.0;
    double v_max = 17.0;
    double a_max = 15.0;
    double slot_duration = 1.0;  // tau, seconds
    int n_slots = 30;
};

struct CoverageRule {
    double d_threshold = 250.0;
    bool use_3d = true;  // include altitude in the distance
};

struct AdvanceResult {
    UavState state;
    bool out_of_bounds = false;
};

// Moves the UAV by distance along heading (radians). Position is clamped to
// the region; velocity is the commanded displacement / tau.
AdvanceResult advance_uav(const UavState& state, double distance, double heading,
                          const KinematicLimits& limits, const Region& region);

// Row-major mask over (distance index, heading index) pairs. Speed band is
// enforced on every induced velocity; the acceleration bound only couples
// consecutive real moves, so it applies from the third slot onward
// (state.slot >= 2). If no pair is feasible, the least-violating pair is
// enabled so a policy always has an action.
std::vector<std::uint8_t> feasible_action_mask(const UavState& state,
                                               const std::vector<double>& distance_levels,
                                               const std::vector<double>& heading_levels,
                                               const KinematicLimits& limits);

// 1 iff the node lies within the coverage distance (ties count as covered).
int coverage_indicator(const UavState& uav, const GroundNode& node, const CoverageRule& rule);

std::vector<int> scheduled_set(const UavState& uav, const std::vector<GroundNode>& nodes,
                               const CoverageRule& rule);

double distance_3d(const UavState& uav, const GroundNode& node);
double distance_2d(const UavState& uav, const GroundNode& node);

}  // namespace uavdc::scenario
