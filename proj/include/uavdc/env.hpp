#pragma once

#include <cstdint>
#include <vector>

#include "uavdc/beamforming.hpp"
#include "uavdc/channel.hpp"
#include "uavdc/common.hpp"
#include "uavdc/link.hpp"
#include "uavdc/rng.hpp"
#include "uavdc/scenario.hpp"

namespace uavdc::env {

using Observation = Eigen::VectorXd;

// Joint action: one distance level, one heading level, one power level per
// node, and (codebook modes only) one codeword per node.
struct FactoredAction {
    int distance_index = 0;
    int heading_index = 0;
    std::vector<int> power_index;
    std::vector<int> beam_index;
};

struct ActionSpace {
    std::vector<double> distance_levels;  // meters per slot
    std::vector<double> heading_levels;   // radians
    std::vector<double> power_levels_w;   // watts
    int n_nodes = 0;
    int codebook_size = 0;  // 0: no beam branches

    // Branch arities in network-head order: distance, heading, K powers,
    // then K beam branches when a codebook is in play.
    std::vector<int> arities() const;
    std::vector<int> to_branch_indices(const FactoredAction& a) const;
    FactoredAction from_branch_indices(const std::vector<int>& idx) const;
};

struct RewardBreakdown {
    double volume_term = 0.0;
    double coverage_bonus = 0.0;
    double oob_penalty = 0.0;
    double total() const { return volume_term + coverage_bonus - oob_penalty; }
};

enum class RewardMode { cumulative, incremental };

// volumes/coverage are slot-major histories up to and including the current
// slot. Cumulative mode scores the running total each slot (the default);
// incremental mode scores only the current slot's volume.
RewardBreakdown compute_reward(const std::vector<std::vector<double>>& volumes,
                               const std::vector<std::vector<std::uint8_t>>& coverage,
                               bool out_of_bounds, double omega, double oob_penalty,
                               double volume_scale, RewardMode mode);

struct Transition {
    Observation obs;
    std::vector<int> branch_actions;
    double reward = 0.0;
    Observation next_obs;
    bool done = false;
};

enum class BeamformerMode { sca, codebook_action, fixed_codeword, mmse_oracle };
enum class ObsMode { compact, raw_csi };

struct EnvConfig {
    scenario::Region region;
    scenario::KinematicLimits limits;
    scenario::CoverageRule coverage;
    channel::ChannelParams channel;
    link::LinkParams link;
    ActionSpace space;
    double start_x = 500.0;
    double start_y = 500.0;
    double altitude = 50.0;
    double omega = 10.0;        // coverage bonus weight
    double oob_penalty = 50.0;  // P_out
    double volume_scale = 0.0;  // 0: auto 1/(tau*B)
    RewardMode reward_mode = RewardMode::cumulative;
    ObsMode obs_mode = ObsMode::compact;
    BeamformerMode beam_mode = BeamformerMode::sca;
    int fixed_codeword = 0;
    bool fairness_floor = true;  // residual rate floors fed to the SCA solver
    beam::ScaParams sca;
    std::vector<scenario::GroundNode> nodes;  // explicit layout; empty = seeded uniform
    std::uint64_t node_seed = 1;
    int n_nodes = 5;

    void validate() const;
};

struct StepResult {
    Observation obs;
    double reward = 0.0;
    bool done = false;
    RewardBreakdown breakdown;
    link::SlotLinkReport report;
    scenario::UavState uav;
    bool out_of_bounds = false;
    bool floor_infeasible = false;
    std::vector<int> scheduled_ids;
};

class Environment {
  public:
    Environment(const EnvConfig& cfg, std::uint64_t run_seed);

    // Starts episode `episode_index`; node layout depends only on the config,
    // channel substreams on (run seed, episode, slot, node).
    Observation reset(int episode_index);
    StepResult step(const FactoredAction& action);

    std::vector<std::uint8_t> feasible_mask() const;
    bool done() const { return slot_ >= cfg_.limits.n_slots; }
    int current_slot() const { return slot_ + 1; }
    const std::vector<scenario::GroundNode>& nodes() const { return nodes_; }
    const scenario::UavState& uav_state() const { return uav_; }
    const ActionSpace& space() const { return cfg_.space; }
    const EnvConfig& config() const { return cfg_; }
    const std::vector<double>& node_volumes() const { return node_volumes_; }
    const std::vector<link::SlotLinkReport>& reports() const { return reports_; }
    int observation_size() const;
    double volume_scale() const;

  private:
    Observation encode() const;

    EnvConfig cfg_;
    RngStream base_;
    beam::Codebook codebook_;
    std::vector<scenario::GroundNode> nodes_;
    scenario::UavState uav_;
    channel::ChannelMatrix last_channel_;
    int episode_ = 0;
    int slot_ = 0;  // completed slots
    std::vector<std::vector<double>> volume_hist_;
    std::vector<std::vector<std::uint8_t>> coverage_hist_;
    std::vector<double> node_volumes_;
    std::vector<double> banked_rate_;  // bits/s/Hz accumulated, for rate floors
    std::vector<link::SlotLinkReport> reports_;
};

}  // namespace uavdc::env
