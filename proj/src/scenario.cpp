#include "uavdc/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace uavdc::scenario {

AdvanceResult advance_uav(const UavState& state, double distance, double heading,
                          const KinematicLimits& limits, const Region& region) {
    AdvanceResult out;
    const double dx = distance * std::cos(heading);
    const double dy = distance * std::sin(heading);
    double nx = state.x + dx;
    double ny = state.y + dy;
    out.out_of_bounds = !region.contains(nx, ny);
    nx = std::clamp(nx, 0.0, region.x_max);
    ny = std::clamp(ny, 0.0, region.y_max);

    out.state = state;
    out.state.x = nx;
    out.state.y = ny;
    out.state.vx = dx / limits.slot_duration;
    out.state.vy = dy / limits.slot_duration;
    out.state.slot = state.slot + 1;
    return out;
}

std::vector<std::uint8_t> feasible_action_mask(const UavState& state,
                                               const std::vector<double>& distance_levels,
                                               const std::vector<double>& heading_levels,
                                               const KinematicLimits& limits) {
    const double tau = limits.slot_duration;
    const bool check_accel = state.slot >= 2;  // induced slot >= 3
    const std::size_t n = distance_levels.size() * heading_levels.size();
    std::vector<std::uint8_t> mask(n, 0);

    bool any = false;
    double best_violation = std::numeric_limits<double>::infinity();
    std::size_t best_index = 0;

    std::size_t idx = 0;
    for (double d : distance_levels) {
        for (double h : heading_levels) {
            const double vx = d * std::cos(h) / tau;
            const double vy = d * std::sin(h) / tau;
            const double speed = std::hypot(vx, vy);
            double violation = std::max(0.0, speed - limits.v_max) + std::max(0.0, limits.v_min - speed);
            if (check_accel) {
                const double accel = std::hypot(vx - state.vx, vy - state.vy) / tau;
                violation += std::max(0.0, accel - limits.a_max);
            }
            if (violation == 0.0) {
                mask[idx] = 1;
                any = true;
            } else if (violation < best_violation) {
                best_violation = violation;
                best_index = idx;
            }
            ++idx;
        }
    }
    if (!any) mask[best_index] = 1;  // least-violating fallback
    return mask;
}

double distance_3d(const UavState& uav, const GroundNode& node) {
    return std::sqrt((uav.x - node.x) * (uav.x - node.x) + (uav.y - node.y) * (uav.y - node.y) +
                     uav.altitude * uav.altitude);
}

double distance_2d(const UavState& uav, const GroundNode& node) {
    return std::hypot(uav.x - node.x, uav.y - node.y);
}

int coverage_indicator(const UavState& uav, const GroundNode& node, const CoverageRule& rule) {
    const double d = rule.use_3d ? distance_3d(uav, node) : distance_2d(uav, node);
    return d <= rule.d_threshold ? 1 : 0;
}

std::vector<int> scheduled_set(const UavState& uav, const std::vector<GroundNode>& nodes,
                               const CoverageRule& rule) {
    std::vector<int> out;
    for (const auto& node : nodes) {
        if (coverage_indicator(uav, node, rule)) out.push_back(node.id);
    }
    return out;
}

}  // namespace uavdc::scenario
