#include "uavdc/env.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace uavdc::env {

std::vector<int> ActionSpace::arities() const {
    std::vector<int> a{static_cast<int>(distance_levels.size()), static_cast<int>(heading_levels.size())};
    for (int k = 0; k < n_nodes; ++k) a.push_back(static_cast<int>(power_levels_w.size()));
    if (codebook_size > 0)
        for (int k = 0; k < n_nodes; ++k) a.push_back(codebook_size);
    return a;
}

std::vector<int> ActionSpace::to_branch_indices(const FactoredAction& a) const {
    std::vector<int> idx{a.distance_index, a.heading_index};
    idx.insert(idx.end(), a.power_index.begin(), a.power_index.end());
    if (codebook_size > 0) idx.insert(idx.end(), a.beam_index.begin(), a.beam_index.end());
    return idx;
}

FactoredAction ActionSpace::from_branch_indices(const std::vector<int>& idx) const {
    FactoredAction a;
    a.distance_index = idx.at(0);
    a.heading_index = idx.at(1);
    a.power_index.assign(idx.begin() + 2, idx.begin() + 2 + n_nodes);
    if (codebook_size > 0) a.beam_index.assign(idx.begin() + 2 + n_nodes, idx.begin() + 2 + 2 * n_nodes);
    return a;
}

RewardBreakdown compute_reward(const std::vector<std::vector<double>>& volumes,
                               const std::vector<std::vector<std::uint8_t>>& coverage,
                               bool out_of_bounds, double omega, double oob_penalty,
                               double volume_scale, RewardMode mode) {
    if (volumes.empty() || volumes.size() != coverage.size())
        throw std::invalid_argument("compute_reward: history shape mismatch");
    RewardBreakdown r;
    if (mode == RewardMode::cumulative) {
        for (const auto& slot : volumes)
            for (double v : slot) r.volume_term += v;
    } else {
        for (double v : volumes.back()) r.volume_term += v;
    }
    r.volume_term *= volume_scale;

    const std::size_t k = coverage.front().size();
    for (std::size_t node = 0; node < k; ++node) {
        for (const auto& slot : coverage) {
            if (slot[node]) {
                r.coverage_bonus += omega;  // min(1, sum of indicators)
                break;
            }
        }
    }
    r.oob_penalty = out_of_bounds ? oob_penalty : 0.0;
    return r;
}

void EnvConfig::validate() const {
    channel.validate();
    if (limits.n_slots < 1) throw std::invalid_argument("env: n_slots must be >= 1");
    if (!(limits.v_min <= limits.v_max)) throw std::invalid_argument("env: v_min must be <= v_max");
    if (!(limits.slot_duration > 0.0)) throw std::invalid_argument("env: slot duration must be > 0");
    if (!region.contains(start_x, start_y))
        throw std::invalid_argument("env: start position outside region");
    if (space.distance_levels.empty() || space.heading_levels.empty() || space.power_levels_w.empty())
        throw std::invalid_argument("env: empty action levels");
    if (space.n_nodes < 1) throw std::invalid_argument("env: need >= 1 node");
    for (double p : space.power_levels_w)
        if (p < 0.0 || p > link.p_max + 1e-12)
            throw std::invalid_argument("env: power level outside [0, p_max]");
    if (!nodes.empty() && static_cast<int>(nodes.size()) != space.n_nodes)
        throw std::invalid_argument("env: explicit node list size mismatch");
    for (const auto& n : nodes)
        if (!region.contains(n.x, n.y)) throw std::invalid_argument("env: node outside region");
    if ((beam_mode == BeamformerMode::codebook_action || beam_mode == BeamformerMode::fixed_codeword) &&
        space.codebook_size < 1)
        throw std::invalid_argument("env: codebook mode requires codebook_size >= 1");
}

Environment::Environment(const EnvConfig& cfg, std::uint64_t run_seed)
    : cfg_(cfg), base_(run_seed) {
    cfg_.validate();
    if (cfg_.space.codebook_size > 0)
        codebook_ = beam::build_dft_codebook(cfg_.channel.n_antennas, cfg_.space.codebook_size);

    if (!cfg_.nodes.empty()) {
        nodes_ = cfg_.nodes;
        for (std::size_t k = 0; k < nodes_.size(); ++k) nodes_[k].id = static_cast<int>(k);  // positional ids
    } else {
        RngStream place = RngStream(cfg_.node_seed).substream(0x6e6f6465);  // "node"
        nodes_.resize(static_cast<std::size_t>(cfg_.n_nodes));
        for (int k = 0; k < cfg_.n_nodes; ++k) {
            nodes_[static_cast<std::size_t>(k)] = {k, place.uniform(0.0, cfg_.region.x_max),
                                                   place.uniform(0.0, cfg_.region.y_max)};
        }
    }
    reset(0);
}

double Environment::volume_scale() const {
    return cfg_.volume_scale > 0.0
               ? cfg_.volume_scale
               : 1.0 / (cfg_.limits.slot_duration * cfg_.link.bandwidth);
}

int Environment::observation_size() const {
    const int k = cfg_.space.n_nodes;
    if (cfg_.obs_mode == ObsMode::compact) return 3 + 4 * k;
    return 3 + 2 * k + 2 * cfg_.channel.n_antennas * k;
}

Observation Environment::encode() const {
    const int k = cfg_.space.n_nodes;
    Observation o(observation_size());
    int at = 0;
    o(at++) = uav_.x / cfg_.region.x_max;
    o(at++) = uav_.y / cfg_.region.y_max;
    for (const auto& n : nodes_) {
        o(at++) = n.x / cfg_.region.x_max;
        o(at++) = n.y / cfg_.region.y_max;
    }
    if (cfg_.obs_mode == ObsMode::compact) {
        const double diag = std::hypot(cfg_.region.x_max, cfg_.region.y_max);
        for (int j = 0; j < k; ++j) {
            const double g = last_channel_.columns.col(j).squaredNorm();
            o(at++) = (10.0 * std::log10(g + 1e-30) + 100.0) / 50.0;
            o(at++) = scenario::distance_3d(uav_, nodes_[static_cast<std::size_t>(j)]) / diag;
        }
    } else {
        const double scale = 1.0 / std::sqrt(cfg_.channel.pathloss_ref);
        for (int j = 0; j < k; ++j)
            for (int t = 0; t < cfg_.channel.n_antennas; ++t) {
                o(at++) = last_channel_.columns(t, j).real() * scale;
                o(at++) = last_channel_.columns(t, j).imag() * scale;
            }
    }
    o(at++) = static_cast<double>(slot_) / cfg_.limits.n_slots;  // fraction elapsed
    return o;
}

Observation Environment::reset(int episode_index) {
    episode_ = episode_index;
    slot_ = 0;
    uav_ = scenario::UavState{cfg_.start_x, cfg_.start_y, cfg_.altitude, 0.0, 0.0, 0};
    volume_hist_.clear();
    coverage_hist_.clear();
    reports_.clear();
    node_volumes_.assign(static_cast<std::size_t>(cfg_.space.n_nodes), 0.0);
    banked_rate_.assign(static_cast<std::size_t>(cfg_.space.n_nodes), 0.0);
    // observation-only channel at the start position (slot tag 0)
    last_channel_ = channel::channel_matrix(
        uav_, nodes_, cfg_.channel,
        base_.substream(0x6368616e, static_cast<std::uint64_t>(episode_), 0));
    return encode();
}

std::vector<std::uint8_t> Environment::feasible_mask() const {
    return scenario::feasible_action_mask(uav_, cfg_.space.distance_levels, cfg_.space.heading_levels,
                                          cfg_.limits);
}

StepResult Environment::step(const FactoredAction& action) {
    if (done()) throw std::logic_error("env: step after episode end");
    if (static_cast<int>(action.power_index.size()) != cfg_.space.n_nodes)
        throw std::invalid_argument("env: power index count mismatch");

    const int n = slot_ + 1;  // slot being executed
    StepResult res;

    const double dist = cfg_.space.distance_levels.at(static_cast<std::size_t>(action.distance_index));
    const double head = cfg_.space.heading_levels.at(static_cast<std::size_t>(action.heading_index));
    auto adv = scenario::advance_uav(uav_, dist, head, cfg_.limits, cfg_.region);
    uav_ = adv.state;
    res.out_of_bounds = adv.out_of_bounds;

    last_channel_ = channel::channel_matrix(
        uav_, nodes_, cfg_.channel,
        base_.substream(0x6368616e, static_cast<std::uint64_t>(episode_), static_cast<std::uint64_t>(n)));

    res.scheduled_ids = scenario::scheduled_set(uav_, nodes_, cfg_.coverage);

    const int k = cfg_.space.n_nodes;
    link::SlotLinkReport report;
    report.slot = n;
    report.sinr.assign(static_cast<std::size_t>(k), 0.0);
    report.rate_bps_hz.assign(static_cast<std::size_t>(k), 0.0);
    report.volume_bits.assign(static_cast<std::size_t>(k), 0.0);
    report.power_w.assign(static_cast<std::size_t>(k), 0.0);
    report.scheduled.assign(static_cast<std::size_t>(k), 0);
    for (int j = 0; j < k; ++j)
        report.power_w[static_cast<std::size_t>(j)] =
            cfg_.space.power_levels_w.at(static_cast<std::size_t>(action.power_index[static_cast<std::size_t>(j)]));

    if (!res.scheduled_ids.empty()) {
        beam::BeamInstance ins;
        ins.noise_power = cfg_.link.noise_power;
        ins.channels.resize(cfg_.channel.n_antennas, static_cast<Eigen::Index>(res.scheduled_ids.size()));
        for (std::size_t c = 0; c < res.scheduled_ids.size(); ++c) {
            const int id = res.scheduled_ids[c];
            ins.node_ids.push_back(id);
            ins.powers.push_back(report.power_w[static_cast<std::size_t>(id)]);
            ins.channels.col(static_cast<Eigen::Index>(c)) = last_channel_.columns.col(id);
        }

        std::vector<CVec> ws(res.scheduled_ids.size());
        std::vector<double> rates(res.scheduled_ids.size(), 0.0);
        switch (cfg_.beam_mode) {
            case BeamformerMode::sca: {
                if (cfg_.fairness_floor) {
                    const double target = cfg_.link.volume_threshold /
                                          (cfg_.limits.slot_duration * cfg_.link.bandwidth);
                    for (std::size_t c = 0; c < res.scheduled_ids.size(); ++c)
                        ins.rate_floors.push_back(std::max(
                            0.0, target - banked_rate_[static_cast<std::size_t>(res.scheduled_ids[c])]));
                }
                auto set = beam::sca_optimize(ins, cfg_.sca);
                res.floor_infeasible = set.floor_infeasible;
                for (std::size_t c = 0; c < set.beams.size(); ++c) {
                    ws[c] = set.beams[c].w;
                    rates[c] = set.beams[c].rate_bps_hz;
                }
                break;
            }
            case BeamformerMode::mmse_oracle: {
                auto set = beam::mmse_beamformers(ins);
                for (std::size_t c = 0; c < set.beams.size(); ++c) {
                    ws[c] = set.beams[c].w;
                    rates[c] = set.beams[c].rate_bps_hz;
                }
                break;
            }
            case BeamformerMode::codebook_action:
            case BeamformerMode::fixed_codeword: {
                for (std::size_t c = 0; c < res.scheduled_ids.size(); ++c) {
                    int idx = cfg_.fixed_codeword;
                    if (cfg_.beam_mode == BeamformerMode::codebook_action)
                        idx = action.beam_index.at(static_cast<std::size_t>(res.scheduled_ids[c]));
                    ws[c] = codebook_.words.at(static_cast<std::size_t>(idx));
                    rates[c] = link::rate(
                        link::sinr(ws[c], ins.channels, ins.powers, static_cast<int>(c), ins.noise_power));
                }
                break;
            }
        }

        for (std::size_t c = 0; c < res.scheduled_ids.size(); ++c) {
            const auto id = static_cast<std::size_t>(res.scheduled_ids[c]);
            const double r = rates[c];
            const double v =
                link::slot_volume(r, true, cfg_.limits.slot_duration, cfg_.link.bandwidth);
            report.sinr[id] = std::exp2(r) - 1.0;
            report.rate_bps_hz[id] = r;
            report.volume_bits[id] = v;
            report.scheduled[id] = 1;
            node_volumes_[id] += v;
            banked_rate_[id] += r;
        }
    }

    std::vector<std::uint8_t> covered(static_cast<std::size_t>(k), 0);
    for (int id : res.scheduled_ids) covered[static_cast<std::size_t>(id)] = 1;
    volume_hist_.push_back(report.volume_bits);
    coverage_hist_.push_back(covered);
    reports_.push_back(report);

    res.breakdown = compute_reward(volume_hist_, coverage_hist_, res.out_of_bounds, cfg_.omega,
                                   cfg_.oob_penalty, volume_scale(), cfg_.reward_mode);
    res.reward = res.breakdown.total();
    slot_ = n;
    res.done = done();
    res.report = std::move(report);
    res.uav = uav_;
    res.obs = encode();
    return res;
}

}  // namespace uavdc::env
