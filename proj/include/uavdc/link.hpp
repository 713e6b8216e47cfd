#pragma once

#include <cstdint>
#include <vector>

#include "uavdc/common.hpp"

namespace uavdc::link {

struct LinkParams {
    double bandwidth = 80e6;        // Hz
    double noise_power = 1e-13;     // sigma^2, watts (-100 dBm)
    double p_max = 0.1;             // watts (20 dBm)
    double volume_threshold = 1e6;  // D_th, bits
};

// Per-slot outcome for all K nodes (unscheduled entries are zero).
struct SlotLinkReport {
    int slot = 0;
    std::vector<double> sinr;
    std::vector<double> rate_bps_hz;
    std::vector<double> volume_bits;
    std::vector<double> power_w;
    std::vector<std::uint8_t> scheduled;
};

// SINR of column `target` of h_sched under receive vector w. h_sched holds the
// channels of the scheduled set only; powers_sched aligns with its columns.
double sinr(const CVec& w, const CMat& h_sched, const std::vector<double>& powers_sched,
            int target, double noise_power);

double rate(double sinr_value);  // log2(1 + sinr), bits/s/Hz

// tau * B * rate if scheduled, else 0.
double slot_volume(double rate_bps_hz, bool scheduled, double tau, double bandwidth);

double sdc(const std::vector<SlotLinkReport>& reports);

// Per-node: total collected volume >= D_th.
std::vector<bool> fairness_satisfied(const std::vector<SlotLinkReport>& reports, double volume_threshold,
                                     int n_nodes);

// (sum D)^2 / (K * sum D^2); all-zero totals define the index as 1.
double jain_index(const std::vector<double>& totals);

// SDC / total transmit energy (sum of scheduled powers * tau). Throws
// std::domain_error when no energy was spent.
double energy_efficiency(const std::vector<SlotLinkReport>& reports, double tau);

}  // namespace uavdc::link
